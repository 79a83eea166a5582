import type { Gender, SampleMeta, SessionStart } from "./types.js";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const ACTIVE_KEY = "graphodex/active-session";
const sessionKey = (id: string) => `graphodex/session/${id}`;

interface PersistedState {
  session_id: string;
  total: number;
  samples: SampleMeta[];
  answered: Record<string, Gender | null>;
}

/**
 * Client-side session state: which samples exist, which are answered, and
 * where the examiner currently is.  Persisted per session id so a reload
 * resumes at the first unanswered sample.  Never holds a true label.
 */
export class UiSessionState {
  readonly sessionId: string;
  readonly total: number;
  readonly samples: SampleMeta[];
  // null marks answers known only from a service resync (choice unknown).
  private answered: Map<number, Gender | null>;

  constructor(
    sessionId: string,
    total: number,
    samples: SampleMeta[],
    answered?: Map<number, Gender | null>,
  ) {
    this.sessionId = sessionId;
    this.total = total;
    this.samples = [...samples].sort((a, b) => a.index - b.index);
    this.answered = answered ?? new Map();
  }

  static fromStart(start: SessionStart): UiSessionState {
    return new UiSessionState(start.session_id, start.total, start.samples);
  }

  get answeredCount(): number {
    return this.answered.size;
  }

  get complete(): boolean {
    return this.answeredCount >= this.total;
  }

  /** First unanswered sample index; total when the session is complete. */
  get currentIndex(): number {
    for (const sample of this.samples) {
      if (!this.answered.has(sample.index)) return sample.index;
    }
    return this.total;
  }

  get currentSample(): SampleMeta | null {
    const idx = this.currentIndex;
    return this.samples.find((s) => s.index === idx) ?? null;
  }

  isAnswered(index: number): boolean {
    return this.answered.has(index);
  }

  markAnswered(index: number, choice: Gender): void {
    if (this.answered.has(index)) {
      throw new Error(`sample ${index} already answered`);
    }
    this.answered.set(index, choice);
  }

  /** Absorb the service's record of answered indices after a conflict. */
  resync(answeredIndices: number[]): void {
    for (const index of answeredIndices) {
      if (!this.answered.has(index)) this.answered.set(index, null);
    }
  }

  // -- persistence -----------------------------------------------------------

  save(storage: StorageLike): void {
    const persisted: PersistedState = {
      session_id: this.sessionId,
      total: this.total,
      samples: this.samples,
      answered: Object.fromEntries(
        [...this.answered.entries()].map(([k, v]) => [String(k), v]),
      ),
    };
    storage.setItem(sessionKey(this.sessionId), JSON.stringify(persisted));
    storage.setItem(ACTIVE_KEY, this.sessionId);
  }

  static resume(storage: StorageLike): UiSessionState | null {
    const active = storage.getItem(ACTIVE_KEY);
    if (!active) return null;
    const raw = storage.getItem(sessionKey(active));
    if (!raw) return null;
    let parsed: PersistedState;
    try {
      parsed = JSON.parse(raw) as PersistedState;
    } catch {
      return null;
    }
    if (!parsed.session_id || !Array.isArray(parsed.samples)) return null;
    const answered = new Map<number, Gender | null>(
      Object.entries(parsed.answered ?? {}).map(([k, v]) => [Number(k), v]),
    );
    return new UiSessionState(parsed.session_id, parsed.total, parsed.samples, answered);
  }

  clear(storage: StorageLike): void {
    storage.removeItem(sessionKey(this.sessionId));
    const active = storage.getItem(ACTIVE_KEY);
    if (active === this.sessionId) storage.removeItem(ACTIVE_KEY);
  }
}
