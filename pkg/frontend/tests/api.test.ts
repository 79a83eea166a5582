import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function fakeFetch(routes: Record<string, (init?: RequestInit) => Response>) {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const fn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const handler = routes[`${init?.method ?? "GET"} ${url}`];
    if (!handler) return jsonResponse(404, { detail: "no route" });
    return handler(init);
  };
  return { fn, calls };
}

describe("ApiClient", () => {
  it("creates a session with the posted profile", async () => {
    const { fn, calls } = fakeFetch({
      "POST /api/sessions": () =>
        jsonResponse(200, {
          session_id: "abc",
          state: "open",
          answered: 0,
          total: 30,
          samples: [],
        }),
    });
    const client = new ApiClient(fn);
    const session = await client.createSession({ gender: "female" });
    expect(session.session_id).toBe("abc");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ gender: "female" });
  });

  it("submits guesses and returns progress", async () => {
    const { fn } = fakeFetch({
      "POST /api/sessions/abc/guesses": () =>
        jsonResponse(200, { answered: 1, total: 30, state: "open" }),
    });
    const progress = await new ApiClient(fn).submitGuess("abc", 0, "male");
    expect(progress.answered).toBe(1);
  });

  it("maps 409 conflicts to ApiError with resync detail", async () => {
    const { fn } = fakeFetch({
      "POST /api/sessions/abc/guesses": () =>
        jsonResponse(409, {
          detail: {
            message: "sample 0 was already answered",
            answered_indices: [0, 4],
            state: "open",
          },
        }),
    });
    const err = await new ApiClient(fn)
      .submitGuess("abc", 0, "male")
      .catch((e) => e as ApiError);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.isConflict).toBe(true);
    expect(err.conflictDetail()?.answered_indices).toEqual([0, 4]);
  });

  it("fetches results and stats", async () => {
    const { fn } = fakeFetch({
      "GET /api/sessions/abc/results": () =>
        jsonResponse(200, {
          session_id: "abc",
          per_language: { HE: { correct: 9, total: 15, accuracy: 0.6 } },
          overall: { correct: 9, total: 30, accuracy: 0.3 },
        }),
      "GET /api/stats": () =>
        jsonResponse(200, {
          sessions_complete: 2,
          per_language: { HE: { mean_accuracy: 0.66, std_dev: 0.13, examiners: 2 } },
          by_examiner_gender: {},
          by_age_bracket: {},
          by_education_level: {},
        }),
    });
    const client = new ApiClient(fn);
    const results = await client.results("abc");
    expect(results.per_language.HE.correct).toBe(9);
    const stats = await client.stats();
    expect(stats.sessions_complete).toBe(2);
  });

  it("wraps network failures as status 0", async () => {
    const client = new ApiClient(async () => {
      throw new TypeError("connection refused");
    });
    const err = await client.stats().catch((e) => e as ApiError);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(0);
    expect(err.isConflict).toBe(false);
  });

  it("uses a plain string detail as the error message", async () => {
    const { fn } = fakeFetch({
      "GET /api/sessions/nope/results": () =>
        jsonResponse(404, { detail: "unknown session 'nope'" }),
    });
    const err = await new ApiClient(fn).results("nope").catch((e) => e as ApiError);
    expect(err.status).toBe(404);
    expect(err.message).toContain("unknown session");
  });
});
