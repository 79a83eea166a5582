"""The patch classifier: network assembly, training, and checkpoints.

Layer stack (fixed order, sizes configurable):
conv-conv-pool-drop / conv-conv-pool-drop / flatten-dense-drop-dense-softmax,
with a ReLU after every conv and after the hidden dense layer.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from graphodex.errors import (
    CheckpointError,
    CorruptCheckpointError,
    DataError,
    NumericError,
    ShapeError,
    UsageError,
)
from graphodex.nn import (
    AdadeltaState,
    adadelta_step,
    bce_loss,
    conv2d_backward,
    conv2d_forward,
    dense,
    dense_backward,
    dropout,
    maxpool2,
    relu,
    softmax,
)

CHECKPOINT_MAGIC = b"GDXM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ArchConfig:
    """Sizes for the fixed conv-conv-pool x2 + dense stack."""

    conv_filters: tuple[int, int, int, int] = (64, 128, 64, 128)
    kernel_size: int = 3
    dense_units: int = 128
    output_classes: int = 2
    dropout_rates: tuple[float, float, float] = (0.4, 0.6, 0.5)
    padding: str = "same"
    input_hw: tuple[int, int] = (100, 100)
    input_channels: int = 1

    def __post_init__(self):
        if len(self.conv_filters) != 4 or any(f < 1 for f in self.conv_filters):
            raise UsageError("conv_filters must be four positive filter counts")
        if len(self.dropout_rates) != 3 or not all(
            0.0 <= r < 1.0 for r in self.dropout_rates
        ):
            raise UsageError("dropout_rates must be three rates in [0, 1)")
        if self.padding not in ("same", "valid"):
            raise UsageError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if self.output_classes != 2:
            raise UsageError("the classifier head is binary: output_classes must be 2")
        if self.dense_units < 1 or self.kernel_size < 1:
            raise UsageError("dense_units and kernel_size must be positive")
        self.feature_hw()  # validate pooling arithmetic eagerly

    def feature_hw(self) -> tuple[int, int]:
        """Spatial size after the two conv blocks (each ends in a 2x2 pool)."""
        h, w = self.input_hw
        shrink = 0 if self.padding == "same" else self.kernel_size - 1
        for _ in range(2):
            h -= 2 * shrink
            w -= 2 * shrink
            if h < 2 or w < 2 or h % 2 or w % 2:
                raise UsageError(
                    f"input {self.input_hw} incompatible with two 2x2 pools "
                    f"under {self.padding} padding"
                )
            h //= 2
            w //= 2
        return h, w

    @property
    def flatten_size(self) -> int:
        h, w = self.feature_hw()
        return h * w * self.conv_filters[3]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(
            conv_filters=tuple(d["conv_filters"]),
            kernel_size=d["kernel_size"],
            dense_units=d["dense_units"],
            output_classes=d["output_classes"],
            dropout_rates=tuple(d["dropout_rates"]),
            padding=d["padding"],
            input_hw=tuple(d["input_hw"]),
            input_channels=d["input_channels"],
        )


@dataclass(frozen=True)
class Hyper:
    """Training hyper-parameters."""

    epochs: int = 20
    batch_size: int = 32
    rho: float = 0.95
    epsilon: float = 1e-6
    seed: int = 42

    def __post_init__(self):
        if self.epochs < 1:
            raise UsageError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise UsageError(f"batch_size must be at least 1, got {self.batch_size}")


@dataclass
class TrainHistory:
    """Per-epoch metrics; lengths equal the epochs actually run."""

    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_accuracy: list[float | None] = field(default_factory=list)

    @property
    def best_val_epoch(self) -> int | None:
        scores = [a for a in self.val_accuracy if a is not None]
        if not scores:
            return None
        best = max(scores)
        return next(i for i, a in enumerate(self.val_accuracy) if a == best)

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "train_accuracy": self.train_accuracy,
            "val_accuracy": self.val_accuracy,
            "best_val_epoch": self.best_val_epoch,
        }


def _param_shapes(arch: ArchConfig) -> dict[str, tuple[int, ...]]:
    k = arch.kernel_size
    f1, f2, f3, f4 = arch.conv_filters
    cin = arch.input_channels
    return {
        "conv1_w": (k, k, cin, f1),
        "conv1_b": (f1,),
        "conv2_w": (k, k, f1, f2),
        "conv2_b": (f2,),
        "conv3_w": (k, k, f2, f3),
        "conv3_b": (f3,),
        "conv4_w": (k, k, f3, f4),
        "conv4_b": (f4,),
        "fc_w": (arch.flatten_size, arch.dense_units),
        "fc_b": (arch.dense_units,),
        "out_w": (arch.dense_units, arch.output_classes),
        "out_b": (arch.output_classes,),
    }


class Network:
    """Parameters plus optimizer state for one classifier instance."""

    def __init__(
        self,
        arch: ArchConfig,
        params: dict[str, np.ndarray],
        opt_state: AdadeltaState | None = None,
    ):
        self.arch = arch
        self.params = params
        self.opt_state = opt_state or AdadeltaState.for_params(params)
        expected = _param_shapes(arch)
        for name, shape in expected.items():
            if name not in params or params[name].shape != shape:
                raise ShapeError(f"parameter {name!r} missing or mis-shaped")

    @property
    def dtype(self) -> np.dtype:
        return self.params["conv1_w"].dtype

    def _prep_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None, :, :, None]
        elif x.ndim == 3:
            x = x[:, :, :, None]
        elif x.ndim != 4:
            raise ShapeError(f"expected patch batch, got shape {x.shape}")
        h, w = self.arch.input_hw
        if x.shape[1:] != (h, w, self.arch.input_channels):
            raise ShapeError(
                f"patch shape {x.shape[1:]} does not match network input "
                f"({h}, {w}, {self.arch.input_channels})"
            )
        return x

    def forward(
        self,
        x: np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
        want_cache: bool = False,
    ):
        x = self._prep_input(x)
        p = self.params
        mode = "train" if train else "infer"
        r1, r2, r3 = self.arch.dropout_rates
        pad = self.arch.padding

        z1 = conv2d_forward(x, p["conv1_w"], p["conv1_b"], pad)
        a1 = relu(z1)
        z2 = conv2d_forward(a1, p["conv2_w"], p["conv2_b"], pad)
        a2 = relu(z2)
        p1 = maxpool2(a2)
        d1, m1 = dropout(p1, r1, mode, rng)
        z3 = conv2d_forward(d1, p["conv3_w"], p["conv3_b"], pad)
        a3 = relu(z3)
        z4 = conv2d_forward(a3, p["conv4_w"], p["conv4_b"], pad)
        a4 = relu(z4)
        p2 = maxpool2(a4)
        d2, m2 = dropout(p2, r2, mode, rng)
        flat = d2.reshape(d2.shape[0], -1)
        zf = dense(flat, p["fc_w"], p["fc_b"])
        af = relu(zf)
        df, m3 = dropout(af, r3, mode, rng)
        logits = dense(df, p["out_w"], p["out_b"])
        probs = softmax(logits)
        if not want_cache:
            return probs
        cache = dict(
            x=x, z1=z1, a1=a1, z2=z2, a2=a2, d1=d1, m1=m1,
            z3=z3, a3=a3, z4=z4, a4=a4, d2=d2, m2=m2,
            flat=flat, zf=zf, df=df, m3=m3, probs=probs,
        )
        return probs, cache

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Deterministic (N, 2) class probabilities, dropout bypassed."""
        return self.forward(x, train=False)

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        probs = self.forward(x, train=False)
        losses, _ = bce_loss(probs[:, 1], np.asarray(y))
        return float(losses.mean())

    def loss_and_grads(
        self,
        x: np.ndarray,
        y: np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean BCE over the batch and its gradients w.r.t. every parameter."""
        y = np.asarray(y)
        probs, c = self.forward(x, train=train, rng=rng, want_cache=True)
        n = probs.shape[0]
        losses, d_p = bce_loss(probs[:, 1], y)
        loss = float(losses.mean())

        d_probs = np.zeros_like(probs)
        d_probs[:, 1] = d_p / n
        # softmax backward needs the logits only through probs: p*(d - <d,p>)
        inner = (d_probs * probs).sum(axis=-1, keepdims=True)
        d_logits = probs * (d_probs - inner)

        p = self.params
        pad = self.arch.padding
        grads: dict[str, np.ndarray] = {}
        d_df, grads["out_w"], grads["out_b"] = dense_backward(c["df"], p["out_w"], d_logits)
        d_af = d_df * c["m3"]
        d_zf = relu(c["zf"], d_af)
        d_flat, grads["fc_w"], grads["fc_b"] = dense_backward(c["flat"], p["fc_w"], d_zf)
        d_d2 = d_flat.reshape(c["d2"].shape)
        d_p2 = d_d2 * c["m2"]
        d_a4 = maxpool2(c["a4"], d_p2)
        d_z4 = relu(c["z4"], d_a4)
        d_a3, grads["conv4_w"], grads["conv4_b"] = conv2d_backward(
            c["a3"], p["conv4_w"], d_z4, pad
        )
        d_z3 = relu(c["z3"], d_a3)
        d_d1, grads["conv3_w"], grads["conv3_b"] = conv2d_backward(
            c["d1"], p["conv3_w"], d_z3, pad
        )
        d_p1 = d_d1 * c["m1"]
        d_a2 = maxpool2(c["a2"], d_p1)
        d_z2 = relu(c["z2"], d_a2)
        d_a1, grads["conv2_w"], grads["conv2_b"] = conv2d_backward(
            c["a1"], p["conv2_w"], d_z2, pad
        )
        d_z1 = relu(c["z1"], d_a1)
        _, grads["conv1_w"], grads["conv1_b"] = conv2d_backward(
            c["x"], p["conv1_w"], d_z1, pad
        )
        return loss, grads


def build_network(
    arch: ArchConfig, seed: int, dtype=np.float32
) -> Network:
    """He-initialized network: fan-in-scaled normal conv/dense weights,
    zero biases."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(arch).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[:-1]))
            scale = np.sqrt(2.0 / fan_in)
            params[name] = (rng.standard_normal(shape) * scale).astype(dtype)
    return Network(arch, params)


def predict_patch(network: Network, patch: np.ndarray) -> tuple[float, float]:
    """Softmax pair ``(p_male, p_female)`` for one patch, dropout bypassed."""
    probs = network.predict_proba(np.asarray(patch)[None, ...])
    return float(probs[0, 0]), float(probs[0, 1])


def _accuracy(network: Network, x: np.ndarray, y: np.ndarray, batch: int) -> float:
    correct = 0
    for i in range(0, len(x), batch):
        probs = network.predict_proba(x[i : i + batch])
        correct += int(((probs[:, 1] > 0.5).astype(np.uint8) == y[i : i + batch]).sum())
    return correct / len(x)


def train(
    network: Network,
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray | None,
    val_y: np.ndarray | None,
    hyper: Hyper,
) -> TrainHistory:
    """Minibatch Adadelta training; the network is updated in place.

    Per epoch: seed-deterministic shuffle, forward/backward per minibatch,
    one optimizer step per minibatch.  Dropout is active only here; the
    recorded train/validation accuracies are computed in inference mode
    after each epoch.
    """
    train_x = np.asarray(train_x)
    train_y = np.asarray(train_y)
    if train_x.shape[0] == 0:
        raise DataError("training set is empty")
    if train_x.shape[0] != train_y.shape[0]:
        raise ShapeError("training patches and labels disagree in length")
    has_val = val_x is not None and len(val_x) > 0
    network.opt_state.rho = hyper.rho
    network.opt_state.epsilon = hyper.epsilon
    rng = np.random.default_rng(hyper.seed)
    history = TrainHistory()
    for epoch in range(hyper.epochs):
        order = rng.permutation(train_x.shape[0])
        batch_losses = []
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            loss, grads = network.loss_and_grads(
                train_x[idx], train_y[idx], train=True, rng=rng
            )
            if not np.isfinite(loss):
                raise NumericError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch {start // hyper.batch_size}"
                )
            adadelta_step(network.params, grads, network.opt_state)
            batch_losses.append(loss)
        history.train_loss.append(float(np.mean(batch_losses)))
        history.train_accuracy.append(
            _accuracy(network, train_x, train_y, hyper.batch_size)
        )
        history.val_accuracy.append(
            _accuracy(network, val_x, val_y, hyper.batch_size) if has_val else None
        )
    return history


def _write_tensor(fh, arr: np.ndarray) -> None:
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CorruptCheckpointError("checkpoint truncated")
    return buf


def _read_tensor(fh, expected_shape: tuple[int, ...]) -> np.ndarray:
    (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
    shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
    if shape != expected_shape:
        raise CorruptCheckpointError(
            f"tensor shape {shape} does not match descriptor {expected_shape}"
        )
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4")
    return data.reshape(shape).copy()


def save_checkpoint(network: Network, path: str | Path, meta: dict | None = None) -> None:
    """Write a self-describing binary checkpoint (params + optimizer state).

    Only float32 networks can be checkpointed; the on-disk format stores
    32-bit little-endian tensors.
    """
    if network.dtype != np.float32:
        raise UsageError("checkpoints store float32 tensors; cast the network first")
    names = sorted(network.params)
    header = {
        "arch": network.arch.to_dict(),
        "optimizer": {"rho": network.opt_state.rho, "epsilon": network.opt_state.epsilon},
        "tensors": names,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<H", CHECKPOINT_VERSION))
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for name in names:
        _write_tensor(buf, network.params[name])
    for name in names:
        _write_tensor(buf, network.opt_state.accum_grad_sq[name])
    for name in names:
        _write_tensor(buf, network.opt_state.accum_update_sq[name])
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(
    path: str | Path, expected_arch: ArchConfig | None = None
) -> tuple[Network, dict]:
    """Read a checkpoint back, bit-exact.  Returns ``(network, meta)``."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    fh = io.BytesIO(raw)
    if _read_exact(fh, 4) != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{path} is not a checkpoint (bad magic)")
    (version,) = struct.unpack("<H", _read_exact(fh, 2))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<I", _read_exact(fh, 4))
    try:
        header = json.loads(_read_exact(fh, hlen).decode("utf-8"))
        arch = ArchConfig.from_dict(header["arch"])
        names = list(header["tensors"])
        opt = header["optimizer"]
    except (ValueError, KeyError, UsageError) as exc:
        raise CorruptCheckpointError(f"{path}: malformed header ({exc})") from exc
    if expected_arch is not None and arch != expected_arch:
        raise CheckpointError(
            f"{path}: checkpoint architecture {arch} does not match "
            f"requested {expected_arch}"
        )
    shapes = _param_shapes(arch)
    if sorted(names) != sorted(shapes):
        raise CorruptCheckpointError(f"{path}: unexpected tensor list")
    params = {n: _read_tensor(fh, shapes[n]) for n in names}
    state = AdadeltaState(
        accum_grad_sq={n: _read_tensor(fh, shapes[n]) for n in names},
        accum_update_sq={n: _read_tensor(fh, shapes[n]) for n in names},
        rho=float(opt["rho"]),
        epsilon=float(opt["epsilon"]),
    )
    if fh.read(1):
        raise CorruptCheckpointError(f"{path}: trailing bytes after tensors")
    return Network(arch, params, state), header.get("meta", {})
