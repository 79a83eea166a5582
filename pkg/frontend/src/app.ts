import { ApiClient, ApiError } from "./api.js";
import { UiSessionState } from "./state.js";
import type { AggregateStats, Gender, SessionResults } from "./types.js";

const api = new ApiClient();
const storage = window.localStorage;

let state: UiSessionState | null = null;
let guessInFlight = false; // debounce: one request per click
let retryAction: (() => Promise<void>) | null = null;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function show(screen: "profile" | "sample" | "results"): void {
  for (const name of ["profile", "sample", "results"]) {
    $(`${name}-screen`).hidden = name !== screen;
  }
}

function banner(message: string | null, retry?: () => Promise<void>): void {
  const el = $("error-banner");
  if (!message) {
    el.hidden = true;
    retryAction = null;
    return;
  }
  $("error-message").textContent = message;
  retryAction = retry ?? null;
  ($("retry-button") as HTMLButtonElement).hidden = !retry;
  el.hidden = false;
}

function renderSample(): void {
  if (!state) return;
  const sample = state.currentSample;
  if (!sample) return;
  $("progress").textContent = `${state.answeredCount + 1} / ${state.total}`;
  const img = $("sample-image") as HTMLImageElement;
  img.src = sample.image_url;
  show("sample");
}

function pct(x: number): string {
  return `${(100 * x).toFixed(1)}%`;
}

function modelIntraAccuracy(stats: AggregateStats, language: string): number | null {
  const model = stats.model;
  if (!model) return null;
  const entry = model[`${language}->${language}`];
  return entry ? entry.majority_vote.avg : null;
}

function renderResults(results: SessionResults, stats: AggregateStats | null): void {
  const rows: string[] = [];
  for (const [language, r] of Object.entries(results.per_language)) {
    const human = stats?.per_language?.[language];
    const model = stats ? modelIntraAccuracy(stats, language) : null;
    rows.push(
      `<tr><td>${language}</td><td>${r.correct} / ${r.total}</td>` +
        `<td>${pct(r.accuracy)}</td>` +
        `<td>${human ? pct(human.mean_accuracy) : "–"}</td>` +
        `<td>${model !== null ? pct(model) : "–"}</td></tr>`,
    );
  }
  $("results-body").innerHTML = rows.join("");
  $("overall-score").textContent =
    `${results.overall.correct} / ${results.overall.total} (${pct(results.overall.accuracy)})`;
  show("results");
}

async function showResults(): Promise<void> {
  if (!state) return;
  const results = await api.results(state.sessionId);
  let stats: AggregateStats | null = null;
  try {
    stats = await api.stats();
  } catch {
    // comparison is optional; results alone are still shown
  }
  state.clear(storage);
  renderResults(results, stats);
}

async function start(): Promise<void> {
  const profile = {
    gender: ($("profile-gender") as HTMLSelectElement).value as Gender | "undisclosed",
    age_bracket: ($("profile-age") as HTMLSelectElement).value,
    education_level: ($("profile-education") as HTMLSelectElement).value,
  };
  banner(null);
  try {
    const started = await api.createSession(profile);
    state = UiSessionState.fromStart(started);
    state.save(storage);
    renderSample();
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      banner("The study is not accepting sessions right now (sample pool too small).");
    } else {
      banner("Cannot reach the study service.", start);
    }
  }
}

async function guess(choice: Gender): Promise<void> {
  if (!state || guessInFlight) return;
  const sample = state.currentSample;
  if (!sample) return;
  guessInFlight = true;
  setGuessButtonsEnabled(false);
  banner(null);
  try {
    const progress = await api.submitGuess(state.sessionId, sample.index, choice);
    state.markAnswered(sample.index, choice);
    state.save(storage);
    if (progress.state === "complete" || state.complete) {
      await showResults();
    } else {
      renderSample();
    }
  } catch (err) {
    if (err instanceof ApiError && err.isConflict) {
      const detail = err.conflictDetail();
      if (detail) {
        state.resync(detail.answered_indices);
        state.save(storage);
        if (detail.state === "complete" || state.complete) {
          await showResults();
          return;
        }
      }
      renderSample();
    } else {
      banner("Could not submit the guess.", () => guess(choice));
    }
  } finally {
    guessInFlight = false;
    setGuessButtonsEnabled(true);
  }
}

function setGuessButtonsEnabled(enabled: boolean): void {
  ($("guess-male") as HTMLButtonElement).disabled = !enabled;
  ($("guess-female") as HTMLButtonElement).disabled = !enabled;
}

function init(): void {
  $("start-button").addEventListener("click", () => void start());
  $("guess-male").addEventListener("click", () => void guess("male"));
  $("guess-female").addEventListener("click", () => void guess("female"));
  $("retry-button").addEventListener("click", () => {
    const action = retryAction;
    banner(null);
    if (action) void action();
  });
  $("restart-button").addEventListener("click", () => {
    show("profile");
  });

  const resumed = UiSessionState.resume(storage);
  if (resumed && !resumed.complete) {
    state = resumed;
    renderSample();
  } else {
    show("profile");
  }
}

document.addEventListener("DOMContentLoaded", init);
