import { describe, expect, it } from "vitest";

import { UiSessionState, type StorageLike } from "../src/state.js";
import type { SessionStart } from "../src/types.js";

function fakeStorage(): StorageLike {
  const map = new Map<string, string>();
  return {
    getItem: (k) => map.get(k) ?? null,
    setItem: (k, v) => void map.set(k, v),
    removeItem: (k) => void map.delete(k),
  };
}

function start(n = 6): SessionStart {
  return {
    session_id: "s1",
    state: "open",
    answered: 0,
    total: n,
    samples: Array.from({ length: n }, (_, i) => ({
      index: i,
      language: i % 2 === 0 ? "HE" : "EN",
      image_url: `/api/sessions/s1/samples/${i}`,
    })),
  };
}

describe("UiSessionState", () => {
  it("starts at the first sample", () => {
    const s = UiSessionState.fromStart(start());
    expect(s.currentIndex).toBe(0);
    expect(s.answeredCount).toBe(0);
    expect(s.complete).toBe(false);
    expect(s.currentSample?.image_url).toBe("/api/sessions/s1/samples/0");
  });

  it("advances to the next unanswered sample per guess", () => {
    const s = UiSessionState.fromStart(start());
    s.markAnswered(0, "male");
    expect(s.currentIndex).toBe(1);
    s.markAnswered(1, "female");
    expect(s.currentIndex).toBe(2);
    expect(s.answeredCount).toBe(2);
  });

  it("current index never exceeds the answered count", () => {
    const s = UiSessionState.fromStart(start());
    for (let i = 0; i < 6; i++) {
      expect(s.currentIndex).toBeLessThanOrEqual(s.answeredCount);
      s.markAnswered(i, "male");
    }
    expect(s.complete).toBe(true);
    expect(s.currentIndex).toBe(6);
    expect(s.currentSample).toBeNull();
  });

  it("rejects double answers locally", () => {
    const s = UiSessionState.fromStart(start());
    s.markAnswered(0, "male");
    expect(() => s.markAnswered(0, "female")).toThrow(/already answered/);
  });

  it("persists and resumes at the first unanswered sample", () => {
    const storage = fakeStorage();
    const s = UiSessionState.fromStart(start());
    s.markAnswered(0, "male");
    s.markAnswered(1, "female");
    s.save(storage);

    const resumed = UiSessionState.resume(storage);
    expect(resumed).not.toBeNull();
    expect(resumed!.sessionId).toBe("s1");
    expect(resumed!.answeredCount).toBe(2);
    expect(resumed!.currentIndex).toBe(2);
  });

  it("resumes to null when nothing was saved", () => {
    expect(UiSessionState.resume(fakeStorage())).toBeNull();
  });

  it("survives corrupted persistence gracefully", () => {
    const storage = fakeStorage();
    storage.setItem("graphodex/active-session", "s1");
    storage.setItem("graphodex/session/s1", "{not json");
    expect(UiSessionState.resume(storage)).toBeNull();
  });

  it("resyncs answered indices from the service after a conflict", () => {
    const s = UiSessionState.fromStart(start());
    s.markAnswered(0, "male");
    s.resync([0, 1, 2]);
    expect(s.answeredCount).toBe(3);
    expect(s.currentIndex).toBe(3);
    // local record of our own answer is preserved
    expect(s.isAnswered(0)).toBe(true);
  });

  it("clear removes the persisted session and active pointer", () => {
    const storage = fakeStorage();
    const s = UiSessionState.fromStart(start());
    s.save(storage);
    s.clear(storage);
    expect(UiSessionState.resume(storage)).toBeNull();
  });

  it("never persists anything that looks like a true label", () => {
    const storage = fakeStorage();
    const s = UiSessionState.fromStart(start());
    s.markAnswered(0, "female");
    s.save(storage);
    const raw = storage.getItem("graphodex/session/s1")!;
    expect(raw).not.toContain("true_gender");
    expect(raw).not.toContain("truth");
  });

  it("orders samples by index even if the service shuffled the payload", () => {
    const payload = start();
    payload.samples.reverse();
    const s = UiSessionState.fromStart(payload);
    expect(s.currentIndex).toBe(0);
    expect(s.samples.map((x) => x.index)).toEqual([0, 1, 2, 3, 4, 5]);
  });
});
