import type {
  AggregateStats,
  ConflictDetail,
  ExaminerProfile,
  Gender,
  GuessProgress,
  SessionResults,
  SessionStart,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly detail: unknown = null,
  ) {
    super(message);
    this.name = "ApiError";
  }

  get isConflict(): boolean {
    return this.status === 409;
  }

  conflictDetail(): ConflictDetail | null {
    if (!this.isConflict) return null;
    const d = this.detail as ConflictDetail | null;
    return d && Array.isArray(d.answered_indices) ? d : null;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client over the baseline service's JSON API. */
export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
    private readonly base: string = "",
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`, 0);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON body; keep null
    }
    if (!response.ok) {
      const detail =
        body && typeof body === "object" && "detail" in body
          ? (body as { detail: unknown }).detail
          : body;
      const message =
        typeof detail === "string" ? detail : `request failed (${response.status})`;
      throw new ApiError(message, response.status, detail);
    }
    return body as T;
  }

  createSession(profile: ExaminerProfile): Promise<SessionStart> {
    return this.request<SessionStart>("/api/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(profile),
    });
  }

  submitGuess(
    sessionId: string,
    index: number,
    guess: Gender,
  ): Promise<GuessProgress> {
    return this.request<GuessProgress>(`/api/sessions/${sessionId}/guesses`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ index, guess }),
    });
  }

  results(sessionId: string): Promise<SessionResults> {
    return this.request<SessionResults>(`/api/sessions/${sessionId}/results`);
  }

  stats(): Promise<AggregateStats> {
    return this.request<AggregateStats>("/api/stats");
  }
}
