"""Random patch sampling, ink-ratio filtering, and balanced dataset assembly."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from graphodex import imaging
from graphodex.errors import (
    BalanceError,
    DataError,
    GraphodexError,
    ImageIOError,
    ShapeError,
    SparseFormError,
    UsageError,
)

LANGUAGES = ("HE", "EN")
GENDERS = ("male", "female")

# Label convention everywhere: male=0, female=1 (female is the positive class).
LABELS = {"male": 0, "female": 1}

MANIFEST_COLUMNS = ("form_id", "image_path", "language", "gender")


def child_rng(seed: int, *tokens) -> np.random.Generator:
    """Derive an independent, reproducible stream from a seed and tokens.

    Token hashing goes through sha256 so the stream does not depend on
    Python's per-process hash salt.
    """
    digest = hashlib.sha256(repr(tokens).encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng([seed, *words])


@dataclass(frozen=True)
class PatchSpec:
    """How patches are drawn from a form.

    ``patch_height`` x ``patch_width`` is the source-resolution size; the
    emitted patch is that region box-downscaled by ``downscale_factor``.
    """

    count: int = 200
    patch_height: int = 400
    patch_width: int = 400
    downscale_factor: int = 4
    min_ink_ratio: float = 0.02
    attempt_factor: int = 50

    def __post_init__(self):
        if self.count < 1:
            raise UsageError("patch count must be at least 1")
        if self.patch_height % self.downscale_factor or self.patch_width % self.downscale_factor:
            raise UsageError(
                f"patch size {self.patch_height}x{self.patch_width} not divisible "
                f"by downscale factor {self.downscale_factor}"
            )
        if not 0.0 <= self.min_ink_ratio <= 1.0:
            raise UsageError("min_ink_ratio must lie in [0, 1]")

    @property
    def shape(self) -> str:
        return "square" if self.patch_height == self.patch_width else "rectangle"

    @property
    def out_hw(self) -> tuple[int, int]:
        return (
            self.patch_height // self.downscale_factor,
            self.patch_width // self.downscale_factor,
        )

    @classmethod
    def rectangle_default(cls, **kw) -> "PatchSpec":
        # Line-sized alternative to the default square patches.
        return cls(patch_height=150, patch_width=500, downscale_factor=5, **kw)


@dataclass(frozen=True)
class FormRecord:
    """One handwriting sample: image reference, language, and writer labels."""

    form_id: str
    image_path: str
    language: str
    gender: str
    writer_id: str | None = None
    demographics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise DataError(f"form {self.form_id}: unknown language {self.language!r}")
        if self.gender not in GENDERS:
            raise DataError(f"form {self.form_id}: unknown gender {self.gender!r}")

    @property
    def label(self) -> int:
        return LABELS[self.gender]


@dataclass(frozen=True)
class Patch:
    """A downscaled grayscale tile with values in [0, 1]."""

    pixels: np.ndarray
    form_id: str
    origin: tuple[int, int]  # (x, y) top-left in source coordinates


def load_manifest(path: str | Path) -> list[FormRecord]:
    """Read a manifest CSV; image paths resolve relative to the manifest."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"cannot read manifest {path}: {exc}") from exc
    reader = csv.DictReader(text.splitlines())
    fields = reader.fieldnames or []
    missing = [c for c in MANIFEST_COLUMNS if c not in fields]
    if missing:
        raise DataError(f"manifest {path} missing columns: {', '.join(missing)}")
    records: list[FormRecord] = []
    seen: set[str] = set()
    for row in reader:
        form_id = (row["form_id"] or "").strip()
        if not form_id:
            raise DataError(f"manifest {path}: empty form_id")
        if form_id in seen:
            raise DataError(f"manifest {path}: duplicate form_id {form_id!r}")
        seen.add(form_id)
        image_path = (row["image_path"] or "").strip()
        if not Path(image_path).is_absolute():
            image_path = str(path.parent / image_path)
        extras = {
            k: v
            for k, v in row.items()
            if k not in MANIFEST_COLUMNS and k != "writer_id" and v not in (None, "")
        }
        records.append(
            FormRecord(
                form_id=form_id,
                image_path=image_path,
                language=(row["language"] or "").strip().upper(),
                gender=(row["gender"] or "").strip().lower(),
                writer_id=(row.get("writer_id") or "").strip() or None,
                demographics=extras,
            )
        )
    return records


def write_manifest(records: list[FormRecord], path: str | Path) -> None:
    """Write a manifest CSV with a writer_id column when any record has one."""
    path = Path(path)
    with_writers = any(r.writer_id for r in records)
    extra_keys = sorted({k for r in records for k in r.demographics})
    header = list(MANIFEST_COLUMNS) + (["writer_id"] if with_writers else []) + extra_keys
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in records:
            row = [r.form_id, r.image_path, r.language, r.gender]
            if with_writers:
                row.append(r.writer_id or "")
            row.extend(r.demographics.get(k, "") for k in extra_keys)
            writer.writerow(row)


def ink_ratio(patch_region: np.ndarray) -> float:
    """Ink pixel fraction of a binary region."""
    patch_region = np.asarray(patch_region)
    if patch_region.size == 0:
        raise ShapeError("ink_ratio of an empty region is undefined")
    return float(np.count_nonzero(patch_region)) / patch_region.size


def sample_patches(
    gray: np.ndarray,
    mask: np.ndarray,
    spec: PatchSpec,
    rng: np.random.Generator,
    form_id: str = "",
) -> list[Patch]:
    """Draw uniform random patch origins, keeping only sufficiently inked ones.

    Overlaps are allowed.  The ink ratio is evaluated on the binary mask at
    source resolution, before downscaling.  Raises SparseFormError when the
    attempt budget runs out before ``spec.count`` valid patches are found.
    """
    gray = np.asarray(gray)
    mask = np.asarray(mask)
    if gray.shape != mask.shape:
        raise ShapeError("gray image and ink mask must have identical shapes")
    h, w = gray.shape
    ph, pw = spec.patch_height, spec.patch_width
    if h < ph or w < pw:
        raise ShapeError(
            f"form {form_id or '?'}: image {h}x{w} smaller than patch {ph}x{pw}"
        )
    # Summed-area table makes each candidate's ink count O(1).
    sat = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(mask, axis=0), axis=1, out=sat[1:, 1:])
    area = ph * pw
    patches: list[Patch] = []
    budget = spec.attempt_factor * spec.count
    for _ in range(budget):
        if len(patches) == spec.count:
            break
        y = int(rng.integers(0, h - ph + 1))
        x = int(rng.integers(0, w - pw + 1))
        ink = sat[y + ph, x + pw] - sat[y, x + pw] - sat[y + ph, x] + sat[y, x]
        if ink / area < spec.min_ink_ratio:
            continue
        tile = imaging.downscale(gray[y : y + ph, x : x + pw], spec.downscale_factor)
        pixels = (tile / np.float32(255.0)).astype(np.float32)
        patches.append(Patch(pixels=pixels, form_id=form_id, origin=(x, y)))
    if len(patches) < spec.count:
        raise SparseFormError(
            f"form {form_id or '?'}: only {len(patches)}/{spec.count} patches "
            f"reached ink ratio {spec.min_ink_ratio} within {budget} attempts"
        )
    return patches


def balance_forms(
    forms: list[FormRecord],
    rng: np.random.Generator,
    by_writer: bool = False,
) -> list[FormRecord]:
    """Randomly drop surplus majority-gender forms until counts are equal.

    With ``by_writer`` set, whole writers are removed at a time so a
    writer's forms never get split; each writer's forms must then share one
    gender.
    """
    counts = {g: sum(1 for f in forms if f.gender == g) for g in GENDERS}
    if min(counts.values()) == 0:
        raise BalanceError(
            f"cannot balance: {counts['male']} male vs {counts['female']} female forms"
        )
    groups: dict[str, list[FormRecord]] = {}
    for f in forms:
        key = (f.writer_id or f.form_id) if by_writer else f.form_id
        groups.setdefault(key, []).append(f)
    if by_writer:
        for key, members in groups.items():
            if len({m.gender for m in members}) != 1:
                raise BalanceError(f"writer {key!r} has forms with mixed genders")
    if counts["male"] == counts["female"]:
        return list(forms)
    majority = "male" if counts["male"] > counts["female"] else "female"
    surplus = abs(counts["male"] - counts["female"])
    groups = {k: v for k, v in groups.items() if v[0].gender == majority}

    order = rng.permutation(sorted(groups))
    removed: set[str] = set()
    remaining = surplus
    for key in order:
        size = len(groups[key])
        if size <= remaining:
            removed.update(f.form_id for f in groups[key])
            remaining -= size
        if remaining == 0:
            break
    if remaining:
        raise BalanceError(
            f"cannot balance exactly: {remaining} surplus {majority} forms left "
            "after removing whole groups"
        )
    return [f for f in forms if f.form_id not in removed]


@dataclass
class FormPatches:
    record: FormRecord
    patches: np.ndarray  # (n, h, w) float32 in [0, 1]
    origins: np.ndarray  # (n, 2) int32, columns (x, y)


@dataclass
class PatchDataset:
    """Per-form patch stacks with labels, grouping preserved."""

    spec: PatchSpec
    seed: int
    forms: list[FormPatches]

    def __post_init__(self):
        self._by_id = {fp.record.form_id: fp for fp in self.forms}

    def __len__(self) -> int:
        return len(self.forms)

    @property
    def total_patches(self) -> int:
        return sum(fp.patches.shape[0] for fp in self.forms)

    def form(self, form_id: str) -> FormPatches:
        return self._by_id[form_id]

    def stack(self, form_ids) -> tuple[np.ndarray, np.ndarray]:
        """Concatenate the given forms' patches with per-patch gender labels."""
        parts, labels = [], []
        for fid in form_ids:
            fp = self._by_id[fid]
            parts.append(fp.patches)
            labels.append(np.full(fp.patches.shape[0], fp.record.label, dtype=np.uint8))
        if not parts:
            raise DataError("no forms selected")
        return np.concatenate(parts), np.concatenate(labels)


def build_form_patches(
    record: FormRecord,
    spec: PatchSpec,
    seed: int,
    crop_margin: int = imaging.DEFAULT_CROP_MARGIN,
) -> FormPatches:
    """Load, crop, binarize, and sample one form.

    The rng derives from (seed, form_id), so results do not depend on
    processing order.  Failures are re-raised with the form named.
    """
    try:
        gray = imaging.load_form_image(record.image_path)
        mask = imaging.binarize(gray)
        y0, y1, x0, x1 = imaging.ink_bbox(mask, crop_margin)
        region, region_mask = gray[y0:y1, x0:x1], mask[y0:y1, x0:x1]
        patches = sample_patches(
            region,
            region_mask,
            spec,
            child_rng(seed, "patches", record.form_id),
            form_id=record.form_id,
        )
    except GraphodexError as exc:
        if record.form_id in str(exc):
            raise
        raise type(exc)(f"form {record.form_id}: {exc}") from exc
    return FormPatches(
        record=record,
        patches=np.stack([p.pixels for p in patches]),
        origins=np.array([p.origin for p in patches], dtype=np.int32),
    )


def build_patch_dataset(
    manifest: list[FormRecord],
    spec: PatchSpec,
    seed: int,
    crop_margin: int = imaging.DEFAULT_CROP_MARGIN,
) -> PatchDataset:
    """Build per-form patch stacks for a whole manifest."""
    if not manifest:
        raise DataError("manifest is empty")
    forms = [build_form_patches(r, spec, seed, crop_margin) for r in manifest]
    return PatchDataset(spec=spec, seed=seed, forms=forms)
