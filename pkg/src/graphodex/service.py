"""HTTP service for the human-examiner baseline study.

All state lives in an append-only newline-delimited JSON event log; the
in-memory store is just a replay of that log, so restarting the service
(or replaying the log elsewhere) reproduces every session result and
aggregate statistic exactly.  True labels never leave the server before a
session is complete.

Note: no ``from __future__ import annotations`` here; FastAPI must resolve
the request-model annotations of the locally defined endpoint functions at
runtime.
"""

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from graphodex import imaging
from graphodex.errors import (
    CapacityError,
    DataError,
    StateError,
    UsageError,
)
from graphodex.patching import FormRecord, GENDERS, LANGUAGES

SAMPLES_PER_LANGUAGE = 15
SESSION_SIZE = 2 * SAMPLES_PER_LANGUAGE


@dataclass(frozen=True)
class ExaminerProfile:
    examiner_id: str
    gender: str = "undisclosed"  # male | female | undisclosed
    age_bracket: str = ""
    education_level: str = ""

    def __post_init__(self):
        if self.gender not in (*GENDERS, "undisclosed"):
            raise UsageError(f"unknown examiner gender {self.gender!r}")


@dataclass(frozen=True)
class SampleRef:
    index: int
    form_id: str
    language: str
    true_gender: str


@dataclass
class Session:
    session_id: str
    examiner: ExaminerProfile
    samples: tuple[SampleRef, ...]
    guesses: dict[int, str] = field(default_factory=dict)

    @property
    def state(self) -> str:
        return "complete" if len(self.guesses) == len(self.samples) else "open"

    def per_language_results(self) -> dict[str, dict]:
        out = {}
        for lang in LANGUAGES:
            refs = [s for s in self.samples if s.language == lang]
            correct = sum(
                1 for s in refs if self.guesses.get(s.index) == s.true_gender
            )
            out[lang] = {
                "correct": correct,
                "total": len(refs),
                "accuracy": correct / len(refs) if refs else 0.0,
            }
        return out


class EventLog:
    """Append-only NDJSON log with serialized, durable writes."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, event: dict) -> None:
        line = json.dumps(event, sort_keys=True) + "\n"
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())

    def read_all(self) -> list[dict]:
        if not self.path.exists():
            return []
        events = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                events.append(json.loads(line))
        return events

    def rotate(self, archive_path: str | Path) -> None:
        """Atomically move the current log aside and start a fresh one."""
        with self._lock:
            if self.path.exists():
                os.replace(self.path, archive_path)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class BaselineStore:
    """Sessions and statistics, reconstructed from (and persisted to) the log."""

    def __init__(
        self,
        pool: list[FormRecord],
        log: EventLog,
        rng: np.random.Generator | None = None,
    ):
        self.pool = list(pool)
        self._by_form = {r.form_id: r for r in pool}
        self.log = log
        self.rng = rng if rng is not None else np.random.default_rng()
        self._lock = threading.Lock()
        self.sessions: dict[str, Session] = {}
        for event in log.read_all():
            self._apply(event)

    # -- event replay ------------------------------------------------------

    def _apply(self, event: dict) -> None:
        if event["type"] == "session_created":
            samples = tuple(
                SampleRef(
                    index=s["index"],
                    form_id=s["form_id"],
                    language=s["language"],
                    true_gender=s["true_gender"],
                )
                for s in event["samples"]
            )
            profile = ExaminerProfile(**event["examiner"])
            self.sessions[event["session_id"]] = Session(
                session_id=event["session_id"], examiner=profile, samples=samples
            )
        elif event["type"] == "guess":
            session = self.sessions[event["session_id"]]
            session.guesses[event["index"]] = event["guess"]
        else:
            raise DataError(f"unknown event type {event['type']!r}")

    @classmethod
    def replay(cls, pool: list[FormRecord], events: list[dict]) -> "BaselineStore":
        """Rebuild a store from raw events without touching any file."""
        store = cls.__new__(cls)
        store.pool = list(pool)
        store._by_form = {r.form_id: r for r in pool}
        store.log = None
        store.rng = np.random.default_rng()
        store._lock = threading.Lock()
        store.sessions = {}
        for event in events:
            store._apply(event)
        return store

    # -- operations --------------------------------------------------------

    def create_session(self, profile: ExaminerProfile) -> Session:
        """Draw 15 forms per language without replacement, shuffled together."""
        with self._lock:
            chosen: list[FormRecord] = []
            for lang in LANGUAGES:
                candidates = [r for r in self.pool if r.language == lang]
                if len(candidates) < SAMPLES_PER_LANGUAGE:
                    raise CapacityError(
                        f"sample pool has only {len(candidates)} {lang} forms; "
                        f"{SAMPLES_PER_LANGUAGE} needed"
                    )
                picks = self.rng.choice(
                    len(candidates), size=SAMPLES_PER_LANGUAGE, replace=False
                )
                chosen.extend(candidates[i] for i in picks)
            order = self.rng.permutation(len(chosen))
            samples = tuple(
                SampleRef(
                    index=i,
                    form_id=chosen[j].form_id,
                    language=chosen[j].language,
                    true_gender=chosen[j].gender,
                )
                for i, j in enumerate(order)
            )
            session_id = self.rng.bytes(16).hex()
            event = {
                "type": "session_created",
                "session_id": session_id,
                "examiner": {
                    "examiner_id": profile.examiner_id,
                    "gender": profile.gender,
                    "age_bracket": profile.age_bracket,
                    "education_level": profile.education_level,
                },
                "samples": [
                    {
                        "index": s.index,
                        "form_id": s.form_id,
                        "language": s.language,
                        "true_gender": s.true_gender,
                    }
                    for s in samples
                ],
                "ts": _now(),
            }
            if self.log is not None:
                self.log.append(event)  # persisted before the response
            self._apply(event)
            return self.sessions[session_id]

    def get_session(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise DataError(f"unknown session {session_id!r}") from None

    def sample_image(self, session_id: str, index: int) -> bytes:
        session = self.get_session(session_id)
        if not 0 <= index < len(session.samples):
            raise DataError(f"sample index {index} out of range")
        record = self._by_form[session.samples[index].form_id]
        gray = imaging.load_form_image(record.image_path)
        region = imaging.extract_text_region(gray)
        return imaging.encode_png(region)

    def submit_guess(self, session_id: str, index: int, guess: str) -> dict:
        if guess not in GENDERS:
            raise UsageError(f"guess must be one of {GENDERS}, got {guess!r}")
        with self._lock:
            session = self.get_session(session_id)
            if not 0 <= index < len(session.samples):
                raise DataError(f"sample index {index} out of range")
            if session.state == "complete":
                raise StateError(f"session {session_id} is already complete")
            if index in session.guesses:
                raise StateError(f"sample {index} was already answered")
            sample = session.samples[index]
            event = {
                "type": "guess",
                "session_id": session_id,
                "index": index,
                "guess": guess,
                "true_gender": sample.true_gender,
                "ts": _now(),
            }
            if self.log is not None:
                self.log.append(event)
            self._apply(event)
            return {
                "answered": len(session.guesses),
                "total": len(session.samples),
                "state": session.state,
            }

    def session_results(self, session_id: str) -> dict:
        session = self.get_session(session_id)
        if session.state != "complete":
            raise StateError(
                f"session {session_id} has answered "
                f"{len(session.guesses)}/{len(session.samples)} samples"
            )
        per_language = session.per_language_results()
        overall_correct = sum(r["correct"] for r in per_language.values())
        overall_total = sum(r["total"] for r in per_language.values())
        return {
            "session_id": session_id,
            "per_language": per_language,
            "overall": {
                "correct": overall_correct,
                "total": overall_total,
                "accuracy": overall_correct / overall_total if overall_total else 0.0,
            },
        }

    def aggregate_stats(self) -> dict:
        """Mean/std of per-examiner accuracy by language, with breakdowns."""
        complete = sorted(
            (s for s in self.sessions.values() if s.state == "complete"),
            key=lambda s: s.session_id,
        )
        stats: dict = {
            "sessions_complete": len(complete),
            "per_language": {},
            "by_examiner_gender": {},
            "by_age_bracket": {},
            "by_education_level": {},
        }
        if not complete:
            return stats

        def lang_stats(sessions) -> dict:
            out = {}
            for lang in LANGUAGES:
                scores = [
                    s.per_language_results()[lang]["accuracy"] for s in sessions
                ]
                arr = np.asarray(scores)
                out[lang] = {
                    "mean_accuracy": float(arr.mean()),
                    "std_dev": float(arr.std()),
                    "examiners": len(scores),
                }
            return out

        stats["per_language"] = lang_stats(complete)
        for key, attr in (
            ("by_examiner_gender", "gender"),
            ("by_age_bracket", "age_bracket"),
            ("by_education_level", "education_level"),
        ):
            buckets: dict[str, list[Session]] = {}
            for s in complete:
                value = getattr(s.examiner, attr) or "unspecified"
                buckets.setdefault(value, []).append(s)
            stats[key] = {v: lang_stats(members) for v, members in sorted(buckets.items())}
        return stats


def create_app(
    store: BaselineStore,
    ui_dir: str | Path | None = None,
    model_stats: dict | None = None,
):
    """Build the FastAPI app exposing the examiner-study API."""
    from fastapi import FastAPI, HTTPException, Response
    from fastapi.staticfiles import StaticFiles
    from pydantic import BaseModel, Field

    app = FastAPI(title="graphodex examiner baseline")

    class ProfileIn(BaseModel):
        examiner_id: str = ""
        gender: str = "undisclosed"
        age_bracket: str = ""
        education_level: str = ""

    class GuessIn(BaseModel):
        index: int = Field(ge=0)
        guess: str

    def _http(exc: Exception, status: int) -> HTTPException:
        return HTTPException(status_code=status, detail=str(exc))

    @app.post("/api/sessions")
    def post_session(profile: ProfileIn):
        examiner_id = profile.examiner_id or f"examiner-{store.rng.bytes(6).hex()}"
        try:
            session = store.create_session(
                ExaminerProfile(
                    examiner_id=examiner_id,
                    gender=profile.gender,
                    age_bracket=profile.age_bracket,
                    education_level=profile.education_level,
                )
            )
        except CapacityError as exc:
            raise _http(exc, 409)
        except UsageError as exc:
            raise _http(exc, 422)
        return {
            "session_id": session.session_id,
            "state": session.state,
            "answered": 0,
            "total": len(session.samples),
            "samples": [
                {
                    "index": s.index,
                    "language": s.language,
                    "image_url": f"/api/sessions/{session.session_id}/samples/{s.index}",
                }
                for s in session.samples
            ],
        }

    @app.get("/api/sessions/{session_id}/samples/{index}")
    def get_sample(session_id: str, index: int):
        try:
            png = store.sample_image(session_id, index)
        except DataError as exc:
            raise _http(exc, 404)
        return Response(content=png, media_type="image/png")

    @app.post("/api/sessions/{session_id}/guesses")
    def post_guess(session_id: str, guess: GuessIn):
        try:
            return store.submit_guess(session_id, guess.index, guess.guess)
        except StateError as exc:
            session = store.get_session(session_id)
            raise HTTPException(
                status_code=409,
                detail={
                    "message": str(exc),
                    "answered_indices": sorted(session.guesses),
                    "state": session.state,
                },
            )
        except UsageError as exc:
            raise _http(exc, 422)
        except DataError as exc:
            raise _http(exc, 404)

    @app.get("/api/sessions/{session_id}/results")
    def get_results(session_id: str):
        try:
            return store.session_results(session_id)
        except StateError as exc:
            raise _http(exc, 409)
        except DataError as exc:
            raise _http(exc, 404)

    @app.get("/api/stats")
    def get_stats():
        stats = store.aggregate_stats()
        if model_stats:
            stats["model"] = model_stats
        return stats

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/")
        def index():
            return Response(
                content="<html><body><h1>graphodex baseline service</h1>"
                "<p>The examiner UI bundle is not built. See the API under "
                "<code>/api</code>.</p></body></html>",
                media_type="text/html",
            )

    return app
