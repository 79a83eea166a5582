"""Adadelta: learning-rate-free adaptive updates from decaying accumulators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from graphodex.errors import ShapeError, UsageError


@dataclass
class AdadeltaState:
    """Running E[g^2] and E[dx^2] per parameter, plus the decay constants."""

    accum_grad_sq: dict[str, np.ndarray]
    accum_update_sq: dict[str, np.ndarray]
    rho: float = 0.95
    epsilon: float = 1e-6

    @classmethod
    def for_params(
        cls, params: dict[str, np.ndarray], rho: float = 0.95, epsilon: float = 1e-6
    ) -> "AdadeltaState":
        if not 0.0 < rho < 1.0:
            raise UsageError(f"rho must lie in (0, 1), got {rho}")
        if epsilon <= 0.0:
            raise UsageError(f"epsilon must be positive, got {epsilon}")
        return cls(
            accum_grad_sq={k: np.zeros_like(v) for k, v in params.items()},
            accum_update_sq={k: np.zeros_like(v) for k, v in params.items()},
            rho=rho,
            epsilon=epsilon,
        )


def adadelta_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdadeltaState,
) -> dict[str, np.ndarray]:
    """Apply one Adadelta update in place and return ``params``.

    Per element: E[g^2] <- rho*E[g^2] + (1-rho)*g^2,
    dx = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g,
    E[dx^2] <- rho*E[dx^2] + (1-rho)*dx^2, x <- x + dx.
    """
    rho, eps = state.rho, state.epsilon
    for name in sorted(params):
        p = params[name]
        if name not in grads:
            raise UsageError(f"missing gradient for parameter {name!r}")
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name!r} shape {p.shape}"
            )
        eg2 = state.accum_grad_sq[name]
        edx2 = state.accum_update_sq[name]
        dt = p.dtype.type
        eg2 *= dt(rho)
        eg2 += dt(1.0 - rho) * g * g
        dx = -np.sqrt(edx2 + dt(eps)) / np.sqrt(eg2 + dt(eps)) * g
        edx2 *= dt(rho)
        edx2 += dt(1.0 - rho) * dx * dx
        p += dx
    return params
