"""Turn a scanned form into a normalized grayscale text region plus ink mask.

A ``GrayImage`` is a 2-D uint8 array (row-major luminance), a
``BinaryImage`` a bool array of the same shape with ink marked True.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from graphodex.errors import EmptyFormError, ImageFormatError, ImageIOError, ShapeError

GrayImage = np.ndarray
BinaryImage = np.ndarray

# Rec. 601 luma weights, fixed so ingestion is bit-reproducible.
_LUMA = np.array([0.299, 0.587, 0.114])

_SUPPORTED_MODES = {"L", "LA", "P", "RGB", "RGBA"}

DEFAULT_CROP_MARGIN = 16


def load_form_image(path: str | Path) -> GrayImage:
    """Load an 8-bit PNG/JPEG as grayscale.

    Color inputs are converted via Rec. 601 weights and rounded to the
    nearest integer; grayscale inputs pass through pixel-identical.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode not in _SUPPORTED_MODES:
                raise ImageFormatError(
                    f"{path}: unsupported image mode {img.mode!r} (8-bit only)"
                )
            if img.mode == "L":
                return np.asarray(img, dtype=np.uint8)
            if img.mode == "LA":
                return np.asarray(img.convert("L"), dtype=np.uint8)
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a supported raster image") from exc
    except OSError as exc:
        raise ImageIOError(f"{path}: {exc}") from exc
    luma = rgb @ _LUMA
    return np.floor(luma + 0.5).astype(np.uint8)


def encode_png(img: GrayImage) -> bytes:
    """Serialize a grayscale image as PNG bytes."""
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: GrayImage, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(img))


def otsu_threshold(img: GrayImage) -> int:
    """Gray level T maximizing between-class variance; ink is ``pixel < T``.

    Returns 0 (no ink) when the histogram cannot be split, e.g. for a
    constant image.
    """
    img = np.asarray(img)
    hist = np.bincount(img.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    if total == 0:
        raise ShapeError("cannot threshold an empty image")
    levels = np.arange(256, dtype=np.float64)
    weight = np.cumsum(hist)
    moment = np.cumsum(hist * levels)
    w0 = weight[:-1]  # class 0 = levels < T for T in 1..255
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return 0
    with np.errstate(invalid="ignore", divide="ignore"):
        mu0 = moment[:-1] / w0
        mu1 = (moment[-1] - moment[:-1]) / w1
        between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -np.inf)
    return int(between.argmax()) + 1


def binarize(img: GrayImage) -> BinaryImage:
    """Global Otsu binarization: pixels strictly below the threshold are ink."""
    return np.asarray(img) < otsu_threshold(img)


def ink_bbox(mask: BinaryImage, margin: int = 0) -> tuple[int, int, int, int]:
    """Bounding box (y0, y1, x0, x1) of ink pixels, grown by ``margin`` and
    clipped to the image."""
    mask = np.asarray(mask)
    rows = mask.any(axis=1)
    cols = mask.any(axis=0)
    if not rows.any():
        raise EmptyFormError("no ink pixels found on the page")
    y0, y1 = np.flatnonzero(rows)[[0, -1]]
    x0, x1 = np.flatnonzero(cols)[[0, -1]]
    h, w = mask.shape
    return (
        max(0, int(y0) - margin),
        min(h, int(y1) + 1 + margin),
        max(0, int(x0) - margin),
        min(w, int(x1) + 1 + margin),
    )


def extract_text_region(img: GrayImage, margin: int = DEFAULT_CROP_MARGIN) -> GrayImage:
    """Crop to the ink bounding box (per :func:`binarize`) plus margin."""
    img = np.asarray(img)
    if img.size == 0:
        raise ShapeError("cannot crop an empty image")
    y0, y1, x0, x1 = ink_bbox(binarize(img), margin)
    return img[y0:y1, x0:x1]


def downscale(img: GrayImage, factor: int) -> GrayImage:
    """Box-average downscaling by an integer factor, rounded to nearest."""
    img = np.asarray(img)
    if factor < 1:
        raise ShapeError(f"downscale factor must be positive, got {factor}")
    h, w = img.shape
    if h % factor or w % factor:
        raise ShapeError(
            f"image {h}x{w} not divisible by downscale factor {factor}"
        )
    blocks = img.reshape(h // factor, factor, w // factor, factor)
    means = blocks.mean(axis=(1, 3), dtype=np.float64)
    return np.floor(means + 0.5).astype(np.uint8)
