"""Procedural two-script corpus for end-to-end verification.

Each synthetic writer contributes one page per language.  The two scripts
differ in stroke geometry (smooth connected waves vs. short angular
segments); the two gender classes differ in writer-level properties that
carry across scripts: stroke thickness and slant.  That makes the corpus
learnable by the patch classifier while keeping the language/gender factors
independent, mirroring the real experimental design.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from graphodex import imaging
from graphodex.errors import IOFailure, UsageError
from graphodex.patching import FormRecord, child_rng, write_manifest

# Writer-level style by gender: (stroke radius, slant, waviness multiplier).
_STYLE = {
    "male": {"radius": 2.5, "slant": 0.12, "wave": 0.9},
    "female": {"radius": 0.7, "slant": -0.12, "wave": 1.15},
}


def _writer_style(gender: str, rng: np.random.Generator) -> dict:
    base = _STYLE[gender]
    return {
        "radius": base["radius"] + rng.uniform(-0.12, 0.12),
        "slant": base["slant"] + rng.uniform(-0.03, 0.03),
        "wave": base["wave"] * rng.uniform(0.9, 1.1),
    }


def _stamp(canvas: np.ndarray, xs: np.ndarray, ys: np.ndarray, radius: float,
           shade: np.ndarray) -> None:
    r = int(np.ceil(radius))
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    inside = (dy * dy + dx * dx) <= radius * radius + 0.26
    offsets = np.stack([dy[inside], dx[inside]], axis=1)
    px = np.round(xs).astype(np.int64)
    py = np.round(ys).astype(np.int64)
    h, w = canvas.shape
    for oy, ox in offsets:
        yy, xx = py + oy, px + ox
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        canvas[yy[ok], xx[ok]] = np.minimum(canvas[yy[ok], xx[ok]], shade[ok])


def _wave_line(rng, x0, x1, y0, style, spacing) -> tuple[np.ndarray, np.ndarray]:
    """Connected cursive-like line: a sum of two sines with word gaps."""
    xs = np.arange(x0, x1, 0.8)
    amp = style["wave"] * spacing * 0.18
    lam1 = spacing * (1.1 + rng.uniform(-0.2, 0.2))
    lam2 = spacing * 0.42
    ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
    ys = (
        y0
        + amp * np.sin(2 * np.pi * xs / lam1 + ph1)
        + 0.45 * amp * np.sin(2 * np.pi * xs / lam2 + ph2)
        + style["slant"] * (xs - x0)
    )
    # Word gaps: drop a few stretches of the line.
    keep = np.ones(xs.shape, dtype=bool)
    n_gaps = max(1, int((x1 - x0) / (spacing * 4)))
    for _ in range(n_gaps):
        g0 = rng.uniform(x0, x1 - spacing)
        sel = (xs >= g0) & (xs < g0 + spacing * 0.55)
        keep[sel] = False
    return xs[keep], ys[keep]


def _block_line(rng, x0, x1, y0, style, spacing) -> tuple[np.ndarray, np.ndarray]:
    """Angular script line: per-letter clusters of short straight segments."""
    size = spacing * 0.62
    xs_all, ys_all = [], []
    x = x0
    while x + size < x1:
        n_strokes = int(rng.integers(2, 5))
        for _ in range(n_strokes):
            if rng.random() < 0.55:  # mostly vertical/horizontal bars
                vertical = rng.random() < 0.6
                if vertical:
                    sx = x + rng.uniform(0, size)
                    a = np.array([sx, y0 - size * rng.uniform(0.4, 1.0)])
                    b = np.array([sx + style["slant"] * size, y0])
                else:
                    sy = y0 - rng.uniform(0, size)
                    a = np.array([x, sy])
                    b = np.array([x + size * rng.uniform(0.5, 1.0), sy])
            else:
                a = np.array([x + rng.uniform(0, size), y0 - rng.uniform(0, size)])
                b = np.array([x + rng.uniform(0, size), y0 - rng.uniform(0, size)])
            steps = max(2, int(np.hypot(*(b - a)) / 0.8))
            t = np.linspace(0, 1, steps)
            xs_all.append(a[0] + (b[0] - a[0]) * t)
            ys_all.append(a[1] + (b[1] - a[1]) * t)
        x += size * rng.uniform(1.15, 1.5)
        if rng.random() < 0.22:  # word gap
            x += size * 0.9
    if not xs_all:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs_all), np.concatenate(ys_all)


def render_form(
    language: str,
    style: dict,
    rng: np.random.Generator,
    page_hw: tuple[int, int] = (1200, 900),
) -> np.ndarray:
    """Draw one synthetic handwriting page as a grayscale uint8 array."""
    h, w = page_hw
    canvas = np.clip(rng.normal(246.0, 2.5, size=(h, w)), 232, 255)
    margin_y, margin_x = int(h * 0.07), int(w * 0.08)
    spacing = max(14, h // 22)
    # Pen width tracks line spacing so ink coverage stays resolution-independent.
    radius = style["radius"] * spacing / 25.0
    for y0 in range(margin_y + spacing, h - margin_y, spacing):
        if language == "EN":
            xs, ys = _wave_line(rng, margin_x, w - margin_x, y0, style, spacing)
        else:
            xs, ys = _block_line(rng, margin_x, w - margin_x, y0, style, spacing)
        if xs.size == 0:
            continue
        shade = 30.0 + 35.0 * rng.random(xs.shape)
        _stamp(canvas, xs, ys, radius, shade)
    return np.round(canvas).astype(np.uint8)


def generate_corpus(
    out_dir: str | Path,
    forms_per_class: int = 20,
    seed: int = 42,
    page_hw: tuple[int, int] = (1200, 900),
) -> tuple[list[FormRecord], Path]:
    """Write ``2 * forms_per_class`` labeled pages plus a manifest.

    ``forms_per_class`` counts forms per gender and must be even: each
    writer contributes one form per language.  Returns the records and the
    manifest path.
    """
    if forms_per_class < 2 or forms_per_class % 2:
        raise UsageError("forms_per_class must be an even number >= 2")
    out_dir = Path(out_dir)
    images = out_dir / "images"
    try:
        images.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {images}: {exc}") from exc

    writers_per_gender = forms_per_class // 2
    total_writers = 2 * writers_per_gender
    # Shuffle the id/gender assignment so ids carry no gender signal.
    genders = ["male"] * writers_per_gender + ["female"] * writers_per_gender
    order = child_rng(seed, "writer-order").permutation(total_writers)
    records: list[FormRecord] = []
    for slot, gi in enumerate(order):
        writer_id = f"w{slot + 1:03d}"
        gender = genders[gi]
        style = _writer_style(gender, child_rng(seed, "writer-style", writer_id))
        for language in ("HE", "EN"):
            form_id = f"{writer_id}_{language.lower()}"
            page = render_form(
                language, style, child_rng(seed, "form", form_id), page_hw
            )
            rel = f"images/{form_id}.png"
            imaging.save_png(page, out_dir / rel)
            records.append(
                FormRecord(
                    form_id=form_id,
                    image_path=rel,
                    language=language,
                    gender=gender,
                    writer_id=writer_id,
                )
            )
    manifest_path = out_dir / "manifest.csv"
    write_manifest(records, manifest_path)
    # Re-anchor paths the way load_manifest would resolve them.
    resolved = [
        FormRecord(
            form_id=r.form_id,
            image_path=str(out_dir / r.image_path),
            language=r.language,
            gender=r.gender,
            writer_id=r.writer_id,
        )
        for r in records
    ]
    return resolved, manifest_path
