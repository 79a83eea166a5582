"""Combine per-patch probabilities into one form-level gender decision."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from graphodex.errors import DataError, UsageError

METHODS = ("majority_vote", "average_softmax")


@dataclass(frozen=True)
class FormPrediction:
    form_id: str
    method: str
    positive_votes: int
    mean_p_female: float
    decision: str  # "male" | "female"


def _validate(p_females) -> np.ndarray:
    p = np.asarray(p_females, dtype=np.float64)
    if p.size == 0:
        raise DataError("cannot aggregate an empty prediction list")
    return p.ravel()


def majority_vote(p_females, form_id: str = "") -> FormPrediction:
    """Decide by counting patches whose female probability exceeds 0.5.

    A patch at exactly 0.5 counts as male (strict inequality).  An exact
    vote tie falls back to the average-softmax rule.
    """
    p = _validate(p_females)
    votes = int((p > 0.5).sum())
    mean = math.fsum(p) / p.size  # correctly rounded arithmetic mean
    against = p.size - votes
    if votes > against:
        decision = "female"
    elif votes < against:
        decision = "male"
    else:
        decision = "female" if mean > 0.5 else "male"
    return FormPrediction(form_id, "majority_vote", votes, mean, decision)


def average_softmax(p_females, form_id: str = "") -> FormPrediction:
    """Decide by the mean female probability over all patches (female iff > 0.5)."""
    p = _validate(p_females)
    mean = math.fsum(p) / p.size  # correctly rounded arithmetic mean
    decision = "female" if mean > 0.5 else "male"
    return FormPrediction(form_id, "average_softmax", int((p > 0.5).sum()), mean, decision)


def classify_form(network, patches: Sequence, method: str) -> FormPrediction:
    """Run the classifier over one form's patches and apply a measure.

    ``patches`` is a sequence of :class:`graphodex.patching.Patch`; they
    must all come from the same form.
    """
    if method not in METHODS:
        raise UsageError(f"unknown aggregation method {method!r}")
    if not patches:
        raise DataError("cannot classify a form with no patches")
    form_ids = {p.form_id for p in patches}
    if len(form_ids) != 1:
        raise UsageError(f"patches span multiple forms: {sorted(form_ids)}")
    pixels = np.stack([p.pixels for p in patches])
    probs = network.predict_proba(pixels)
    fn = majority_vote if method == "majority_vote" else average_softmax
    return fn(probs[:, 1], form_id=form_ids.pop())
