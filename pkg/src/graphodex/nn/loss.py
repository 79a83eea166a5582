"""Binary cross entropy on the positive-class probability."""

from __future__ import annotations

import numpy as np

from graphodex.errors import UsageError

# Probabilities are clamped symmetrically to [BCE_CLAMP, 1 - BCE_CLAMP]
# before the log; the gradient is evaluated at the clamped value.
BCE_CLAMP = 1e-7


def bce_loss(p, y) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(loss, d_p)`` for probability ``p`` and target ``y`` in {0, 1}.

    Works elementwise on arrays; scalars in give scalars out.
    loss = -(y*ln(p) + (1-y)*ln(1-p)), d_p = (p - y) / (p * (1 - p)).
    """
    p = np.asarray(p)
    if not np.issubdtype(p.dtype, np.floating):
        p = p.astype(np.float64)
    y = np.asarray(y)
    if not np.isin(y, (0, 1)).all():
        raise UsageError("bce_loss targets must be 0 or 1")
    y = y.astype(p.dtype)
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    d_p = (pc - y) / (pc * (1.0 - pc))
    return loss, d_p
