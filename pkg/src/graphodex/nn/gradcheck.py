"""Verification of analytic gradients against central finite differences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from graphodex.errors import UsageError

# Below this infinity norm both gradients are treated as zero and the
# relative error is undefined.
_ZERO_NORM = 1e-12


def numerical_gradient(
    f: Callable[[], float], x: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. array ``x``.

    ``x`` is perturbed in place (and restored), so ``f`` must read the very
    same array.  The step is relative: ``step * max(1, |x_i|)`` per element.
    """
    if x.dtype != np.float64:
        raise UsageError("numerical_gradient requires float64 arrays")
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        h = step * max(1.0, abs(orig))
        x[idx] = orig + h
        f_plus = f()
        x[idx] = orig - h
        f_minus = f()
        x[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
        it.iternext()
    return grad


@dataclass(frozen=True)
class GradCheckEntry:
    name: str
    rel_error: float | None
    status: str  # "ok" | "flagged" | "skipped"


@dataclass(frozen=True)
class GradCheckReport:
    tolerance: float
    entries: tuple[GradCheckEntry, ...]

    @property
    def flagged(self) -> list[str]:
        return [e.name for e in self.entries if e.status == "flagged"]

    @property
    def skipped(self) -> list[str]:
        return [e.name for e in self.entries if e.status == "skipped"]

    @property
    def max_rel_error(self) -> float:
        errs = [e.rel_error for e in self.entries if e.rel_error is not None]
        return max(errs) if errs else 0.0

    @property
    def passed(self) -> bool:
        return not self.flagged


def check_gradients(
    params: dict[str, np.ndarray],
    loss_fn: Callable[[], float],
    analytic: dict[str, np.ndarray],
    tolerance: float = 1e-4,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare ``analytic`` gradients against finite differences of ``loss_fn``.

    A parameter whose analytic and numerical gradients are both numerically
    zero has no defined relative error and is reported as skipped rather
    than failed.
    """
    entries = []
    for name in sorted(params):
        num = numerical_gradient(loss_fn, params[name], step=step)
        ana = analytic[name]
        denom = max(np.abs(ana).max(initial=0.0), np.abs(num).max(initial=0.0))
        if denom < _ZERO_NORM:
            entries.append(GradCheckEntry(name, None, "skipped"))
            continue
        rel = float(np.abs(ana - num).max() / denom)
        status = "flagged" if rel > tolerance else "ok"
        entries.append(GradCheckEntry(name, rel, status))
    return GradCheckReport(tolerance=tolerance, entries=tuple(entries))


def gradient_check(network, inputs, labels, tolerance: float = 1e-4) -> GradCheckReport:
    """Check a network's analytic parameter gradients on one batch.

    The network must be in its deterministic 64-bit configuration: dropout
    is bypassed (inference-mode forward) and float32 networks are rejected
    because finite differences lose too much precision there.
    """
    if network.dtype != np.float64:
        raise UsageError("gradient_check requires a float64 network")
    inputs = np.asarray(inputs, dtype=np.float64)
    _, analytic = network.loss_and_grads(inputs, labels, train=False)
    return check_gradients(
        network.params,
        lambda: network.loss(inputs, labels),
        analytic,
        tolerance=tolerance,
    )
