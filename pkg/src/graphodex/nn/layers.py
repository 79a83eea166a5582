"""Forward and backward passes for every layer the patch classifier uses.

Spatial tensors are laid out height x width x channels, with an optional
leading batch axis; both forms are accepted and the batch axis is stripped
again on return.  Backward passes are exact analytic gradients of the
forward maps and are verified against central finite differences in the
test suite.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from graphodex.errors import NumericError, ShapeError, UsageError


def _as_batch(x: np.ndarray, ndim: int, what: str) -> tuple[np.ndarray, bool]:
    """Promote a single sample to a one-element batch; report whether we did."""
    if x.ndim == ndim:
        return x[None], True
    if x.ndim == ndim + 1:
        return x, False
    raise ShapeError(f"{what}: expected {ndim} or {ndim + 1} dims, got shape {x.shape}")


def _same_padding(k: int) -> tuple[int, int]:
    # For stride 1, pad so the output keeps the input's spatial size.
    return (k - 1) // 2, k // 2


def conv2d_forward(
    x: np.ndarray,
    kernels: np.ndarray,
    bias: np.ndarray,
    padding: str = "same",
) -> np.ndarray:
    """Stride-1 cross-correlation plus per-filter bias.

    ``x`` is (H, W, C) or (N, H, W, C); ``kernels`` is (kh, kw, C, F);
    ``bias`` is (F,).  ``same`` keeps the spatial size (zero-padded border),
    ``valid`` shrinks it by the kernel extent minus one.
    """
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    bias = np.asarray(bias)
    xb, squeeze = _as_batch(x, 3, "conv2d input")
    if kernels.ndim != 4:
        raise ShapeError(f"kernels must be (kh, kw, C, F), got shape {kernels.shape}")
    kh, kw, cin, nf = kernels.shape
    if xb.shape[-1] != cin:
        raise ShapeError(
            f"input has {xb.shape[-1]} channels but kernels expect {cin}"
        )
    if bias.shape != (nf,):
        raise ShapeError(f"bias must be ({nf},), got shape {bias.shape}")
    for name, arr in (("input", xb), ("kernels", kernels), ("bias", bias)):
        if not np.isfinite(arr).all():
            raise NumericError(f"non-finite values in conv2d {name}")
    xp = _pad_input(xb, kh, kw, padding)
    if xp.shape[1] < kh or xp.shape[2] < kw:
        raise ShapeError(
            f"input {xb.shape[1]}x{xb.shape[2]} smaller than kernel {kh}x{kw}"
        )
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # (N, Ho, Wo, C, kh, kw)
    out = np.tensordot(win, kernels, axes=([3, 4, 5], [2, 0, 1]))
    out = (out + bias).astype(x.dtype, copy=False)
    return out[0] if squeeze else out


def _pad_input(xb: np.ndarray, kh: int, kw: int, padding: str) -> np.ndarray:
    if padding == "same":
        pt, pb = _same_padding(kh)
        pl, pr = _same_padding(kw)
        return np.pad(xb, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    if padding == "valid":
        return xb
    raise UsageError(f"padding must be 'same' or 'valid', got {padding!r}")


def conv2d_backward(
    x: np.ndarray,
    kernels: np.ndarray,
    d_output: np.ndarray,
    padding: str = "same",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of :func:`conv2d_forward` w.r.t. input, kernels, and bias."""
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    d_output = np.asarray(d_output)
    xb, squeeze = _as_batch(x, 3, "conv2d input")
    db, dsq = _as_batch(d_output, 3, "conv2d d_output")
    if squeeze != dsq:
        raise ShapeError("input and d_output must agree on the batch axis")
    kh, kw, cin, nf = kernels.shape
    xp = _pad_input(xb, kh, kw, padding)
    ho, wo = xp.shape[1] - kh + 1, xp.shape[2] - kw + 1
    if db.shape != (xb.shape[0], ho, wo, nf):
        raise ShapeError(
            f"d_output shape {d_output.shape} does not match forward output "
            f"({ho}, {wo}, {nf})"
        )

    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    d_bias = db.sum(axis=(0, 1, 2)).astype(x.dtype, copy=False)
    d_kernels = np.tensordot(win, db, axes=([0, 1, 2], [0, 1, 2]))  # (C, kh, kw, F)
    d_kernels = d_kernels.transpose(1, 2, 0, 3).astype(x.dtype, copy=False)

    # d_input is the full correlation of d_output with the spatially flipped
    # kernels, with the in/out channel axes swapped; forward padding is then
    # cropped away.
    k_flip = kernels[::-1, ::-1].transpose(0, 1, 3, 2)  # (kh, kw, F, C)
    dp = np.pad(db, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
    win2 = sliding_window_view(dp, (kh, kw), axis=(1, 2))
    d_xp = np.tensordot(win2, k_flip, axes=([3, 4, 5], [2, 0, 1]))
    if padding == "same":
        pt, pb = _same_padding(kh)
        pl, pr = _same_padding(kw)
        d_xp = d_xp[:, pt : d_xp.shape[1] - pb, pl : d_xp.shape[2] - pr]
    d_input = d_xp.astype(x.dtype, copy=False)
    if squeeze:
        return d_input[0], d_kernels, d_bias
    return d_input, d_kernels, d_bias


def relu(x: np.ndarray, d_output: np.ndarray | None = None) -> np.ndarray:
    """Elementwise max(0, x); with ``d_output`` given, the masked gradient."""
    x = np.asarray(x)
    if d_output is None:
        return np.maximum(x, 0)
    d_output = np.asarray(d_output)
    if d_output.shape != x.shape:
        raise ShapeError("relu d_output shape must match input shape")
    return np.where(x > 0, d_output, 0).astype(d_output.dtype, copy=False)


def _pool_windows(xb: np.ndarray) -> np.ndarray:
    n, h, w, c = xb.shape
    win = xb.reshape(n, h // 2, 2, w // 2, 2, c)
    # Window elements end up in row-major scan order, so argmax resolves
    # ties toward the first-scanned element.
    return win.transpose(0, 1, 3, 2, 4, 5).reshape(n, h // 2, w // 2, 4, c)


def maxpool2(x: np.ndarray, d_output: np.ndarray | None = None) -> np.ndarray:
    """Non-overlapping 2x2 max pooling; with ``d_output``, the routed gradient.

    The backward pass sends each window's gradient solely to that window's
    max element (first in scan order on ties).
    """
    x = np.asarray(x)
    xb, squeeze = _as_batch(x, 3, "maxpool2 input")
    n, h, w, c = xb.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 requires even spatial dims, got {h}x{w}")
    win = _pool_windows(xb)
    if d_output is None:
        out = win.max(axis=3)
        return out[0] if squeeze else out
    d_output = np.asarray(d_output)
    db, dsq = _as_batch(d_output, 3, "maxpool2 d_output")
    if db.shape != (n, h // 2, w // 2, c):
        raise ShapeError(
            f"maxpool2 d_output shape {d_output.shape} does not match "
            f"pooled shape ({h // 2}, {w // 2}, {c})"
        )
    idx = win.argmax(axis=3)
    grad_win = np.zeros_like(win)
    np.put_along_axis(grad_win, idx[:, :, :, None, :], db[:, :, :, None, :], axis=3)
    d_x = (
        grad_win.reshape(n, h // 2, w // 2, 2, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, h, w, c)
    )
    return d_x[0] if squeeze else d_x


def dropout(
    x: np.ndarray,
    rate: float,
    mode: str,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout.  Returns ``(output, mask)``.

    In train mode each unit is zeroed independently with probability
    ``rate`` and survivors are scaled by 1/(1-rate), so inference is a pure
    identity.  The returned mask already carries the scaling; the exact
    backward pass is ``d_output * mask``.
    """
    x = np.asarray(x)
    if not 0.0 <= rate < 1.0:
        raise UsageError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in ("train", "infer"):
        raise UsageError(f"dropout mode must be 'train' or 'infer', got {mode!r}")
    if mode == "infer" or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise UsageError("train-mode dropout requires a seeded rng")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map ``x @ weights + bias`` for (n,) or (N, n) inputs."""
    x = np.asarray(x)
    weights = np.asarray(weights)
    bias = np.asarray(bias)
    if weights.ndim != 2:
        raise ShapeError(f"weights must be 2-D, got shape {weights.shape}")
    if x.shape[-1] != weights.shape[0]:
        raise ShapeError(
            f"input width {x.shape[-1]} does not match weights rows {weights.shape[0]}"
        )
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"bias must be ({weights.shape[1]},), got {bias.shape}")
    return x @ weights + bias


def dense_backward(
    x: np.ndarray, weights: np.ndarray, d_output: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of :func:`dense` w.r.t. input, weights, and bias."""
    x = np.asarray(x)
    weights = np.asarray(weights)
    d_output = np.asarray(d_output)
    if d_output.shape[-1] != weights.shape[1]:
        raise ShapeError(
            f"d_output width {d_output.shape[-1]} does not match weights "
            f"cols {weights.shape[1]}"
        )
    if d_output.ndim != x.ndim:
        raise ShapeError("input and d_output must agree on the batch axis")
    d_input = d_output @ weights.T
    if x.ndim == 1:
        d_weights = np.outer(x, d_output)
        d_bias = d_output.copy()
    else:
        d_weights = x.T @ d_output
        d_bias = d_output.sum(axis=0)
    return d_input, d_weights, d_bias


def softmax(logits: np.ndarray, d_output: np.ndarray | None = None) -> np.ndarray:
    """Exp-normalization over the last axis, max-subtracted for stability.

    With ``d_output`` given, returns the gradient w.r.t. the logits
    (the Jacobian-vector product ``p * (d - <d, p>)`` per row).
    """
    logits = np.asarray(logits)
    if logits.shape[-1] < 2:
        raise ShapeError("softmax needs at least two classes")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)
    if d_output is None:
        return p
    d_output = np.asarray(d_output)
    if d_output.shape != logits.shape:
        raise ShapeError("softmax d_output shape must match logits shape")
    inner = (d_output * p).sum(axis=-1, keepdims=True)
    return (p * (d_output - inner)).astype(d_output.dtype, copy=False)
