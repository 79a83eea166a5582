// Wire types for the baseline service API.  Sample metadata deliberately
// carries no true label; the service only reveals truth via /results after
// the session is complete.

export type Gender = "male" | "female";

export interface ExaminerProfile {
  examiner_id?: string;
  gender?: Gender | "undisclosed";
  age_bracket?: string;
  education_level?: string;
}

export interface SampleMeta {
  index: number;
  language: string;
  image_url: string;
}

export interface SessionStart {
  session_id: string;
  state: "open" | "complete";
  answered: number;
  total: number;
  samples: SampleMeta[];
}

export interface GuessProgress {
  answered: number;
  total: number;
  state: "open" | "complete";
}

export interface LanguageResult {
  correct: number;
  total: number;
  accuracy: number;
}

export interface SessionResults {
  session_id: string;
  per_language: Record<string, LanguageResult>;
  overall: LanguageResult;
}

export interface LanguageStats {
  mean_accuracy: number;
  std_dev: number;
  examiners: number;
}

export interface MethodStats {
  avg: number;
  std_dev: number;
  min: number;
  max: number;
}

export interface AggregateStats {
  sessions_complete: number;
  per_language: Record<string, LanguageStats>;
  by_examiner_gender: Record<string, Record<string, LanguageStats>>;
  by_age_bracket: Record<string, Record<string, LanguageStats>>;
  by_education_level: Record<string, Record<string, LanguageStats>>;
  model?: Record<string, Record<string, MethodStats>>;
}

export interface ConflictDetail {
  message: string;
  answered_indices: number[];
  state: "open" | "complete";
}
