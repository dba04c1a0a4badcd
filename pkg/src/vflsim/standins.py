"""Self-contained dataset generators for fully offline runs.

Two generators produce files in the same formats the loaders consume, then
read them back through those loaders:

  digits  28x28 grayscale glyph images (classes 0-9) rendered from bundled
          vector fonts with per-sample affine distortion, blur, and noise,
          stored as an IDX image/label pair.

  credit  a credit-card default table with the 23 standard feature columns
          (limit, demographics, six monthly repayment statuses, six bill
          amounts, six payment amounts) and a binary label, stored as CSV.
          Default risk loads on two observable signals, one concentrated in
          the repayment-status columns and one in the payment-behavior
          columns, so vertical splits of the table carry genuinely
          complementary information.

Generation is a pure function of (n, seed); files are cached under the
directory named by the VFLSIM_DATA_DIR environment variable.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .datasets import (
    CREDIT_FEATURES,
    CREDIT_LABEL,
    Table,
    load_csv,
    load_idx_pair,
    write_csv,
    write_idx,
)
from .errors import GenerationError
from .seeding import rng_for

CACHE_ENV = "VFLSIM_DATA_DIR"

IMAGE_SIDE = 28
_RENDER_SIDE = 64

# Distortion ranges for the digit renderer. Tuned so that a narrow vertical
# band of the image is ambiguous while the full image stays classifiable.
_FONT_SIZE = (34, 52)
_ROTATION = 0.22  # radians
_SHEAR = 0.22
_TRANSLATE_X = 12.0  # horizontal jitter at render scale (64), ~5 final
_TRANSLATE_Y = 4.0  # vertical jitter, milder: bands span the full height
_X_SCALE = (0.72, 1.18)  # horizontal stretch, decorrelates strokes from columns
_BLUR_MAX = 0.8
_INTENSITY = (0.75, 1.0)
_NOISE_SD = 0.05

# Bumped whenever generation constants change, so cached files regenerate.
_DIGITS_VERSION = 5
_CREDIT_VERSION = 6

_FONT_FILES = (
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSans-Oblique.ttf",
    "DejaVuSansMono.ttf",
    "DejaVuSansMono-Bold.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSerif-Bold.ttf",
    "DejaVuSerif-Italic.ttf",
)

# Credit label model: risk = intercept + weights . (status score, behavior
# score) + noise. The intercept is solved so the mean default rate matches
# _DEFAULT_RATE. Weights are calibrated against the boosted-tree reference
# models (full table vs payment-behavior columns alone).
_DEFAULT_RATE = 0.2212
_INS_WEIGHT = 1.05
_BANK_WEIGHT = 0.85
_NOISE_SD_CREDIT = 0.72
_SHARED_LOADING = 0.62


def cache_dir() -> Path:
    root = os.environ.get(CACHE_ENV)
    path = Path(root) if root else Path.home() / ".cache" / "vflsim"
    path.mkdir(parents=True, exist_ok=True)
    return path


_FONT_CACHE: dict[tuple[int, int], object] = {}
_FONT_PATHS: list[Path] | None = None


def _font_paths() -> list[Path]:
    global _FONT_PATHS
    if _FONT_PATHS is None:
        import matplotlib

        ttf_dir = Path(matplotlib.get_data_path()) / "fonts" / "ttf"
        found = [ttf_dir / name for name in _FONT_FILES if (ttf_dir / name).exists()]
        if not found:
            raise GenerationError(f"no usable vector fonts under {ttf_dir}")
        _FONT_PATHS = found
    return _FONT_PATHS


def _font(index: int, size: int):
    key = (index, size)
    font = _FONT_CACHE.get(key)
    if font is None:
        from PIL import ImageFont

        font = ImageFont.truetype(str(_font_paths()[index]), size)
        _FONT_CACHE[key] = font
    return font


def _render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    from PIL import Image, ImageDraw, ImageFilter

    font = _font(
        int(rng.integers(len(_font_paths()))),
        int(rng.integers(_FONT_SIZE[0], _FONT_SIZE[1] + 1)),
    )
    img = Image.new("L", (_RENDER_SIDE, _RENDER_SIDE), 0)
    draw = ImageDraw.Draw(img)
    text = str(digit)
    left, top, right, bottom = draw.textbbox((0, 0), text, font=font)
    draw.text(
        (
            (_RENDER_SIDE - (right - left)) / 2.0 - left,
            (_RENDER_SIDE - (bottom - top)) / 2.0 - top,
        ),
        text,
        fill=255,
        font=font,
    )

    theta = rng.uniform(-_ROTATION, _ROTATION)
    shear = rng.uniform(-_SHEAR, _SHEAR)
    tx = rng.uniform(-_TRANSLATE_X, _TRANSLATE_X)
    ty = rng.uniform(-_TRANSLATE_Y, _TRANSLATE_Y)
    c = _RENDER_SIDE / 2.0
    recenter = np.array([[1, 0, -c], [0, 1, -c], [0, 0, 1.0]])
    rot = np.array(
        [
            [np.cos(theta), -np.sin(theta), 0],
            [np.sin(theta), np.cos(theta), 0],
            [0, 0, 1.0],
        ]
    )
    sx = rng.uniform(*_X_SCALE)
    sh = np.array([[sx, shear, 0], [0, 1, 0], [0, 0, 1.0]])
    place = np.array([[1, 0, c + tx], [0, 1, c + ty], [0, 0, 1.0]])
    forward = place @ sh @ rot @ recenter
    inverse = np.linalg.inv(forward)
    img = img.transform(
        (_RENDER_SIDE, _RENDER_SIDE),
        Image.AFFINE,
        tuple(inverse[:2].ravel()),
        resample=Image.BILINEAR,
    )
    blur = rng.uniform(0.0, _BLUR_MAX)
    if blur > 0.05:
        img = img.filter(ImageFilter.GaussianBlur(radius=blur))
    img = img.resize((IMAGE_SIDE, IMAGE_SIDE), Image.LANCZOS)

    pixels = np.asarray(img, dtype=np.float64) / 255.0
    pixels *= rng.uniform(*_INTENSITY)
    pixels += rng.normal(0.0, _NOISE_SD, size=pixels.shape)
    return (np.clip(pixels, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def generate_digit_images(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Render n distorted glyph images with balanced class counts."""
    rng = rng_for(seed, "digits")
    labels = np.arange(n, dtype=np.int64) % 10
    rng.shuffle(labels)
    images = np.empty((n, IMAGE_SIDE, IMAGE_SIDE), dtype=np.uint8)
    for i in range(n):
        images[i] = _render_digit(int(labels[i]), rng)
    return images, labels


def digit_table(n: int, seed: int) -> Table:
    """Digit images as a flat Table, generated once and cached as IDX files."""
    base = cache_dir() / f"digits-v{_DIGITS_VERSION}-n{n}-s{seed}"
    images_path = base.with_name(base.name + "-images.idx")
    labels_path = base.with_name(base.name + "-labels.idx")
    if not images_path.exists() or not labels_path.exists():
        images, labels = generate_digit_images(n, seed)
        write_idx(images, images_path)
        write_idx(labels.astype(np.uint8), labels_path)
    table = load_idx_pair(images_path, labels_path)
    table.class_count = 10
    return table


def _status_columns(rng: np.random.Generator, n: int, distress: np.ndarray):
    """Six monthly repayment statuses, most recent first, AR(1) in time."""
    months = 6
    latent = np.empty((n, months))
    drift = 0.9 * distress
    latent[:, months - 1] = drift + rng.normal(0.0, 1.0, n)
    for t in range(months - 2, -1, -1):
        latent[:, t] = 0.65 * latent[:, t + 1] + 0.35 * drift + rng.normal(0.0, 0.75, n)
    status = np.empty((n, months), dtype=np.int64)
    status[latent < -1.15] = -2
    status[(latent >= -1.15) & (latent < -0.25)] = -1
    status[(latent >= -0.25) & (latent < 1.05)] = 0
    over = latent >= 1.05
    status[over] = np.minimum(1 + np.floor(latent[over] - 1.05).astype(np.int64), 8)
    return status


def generate_credit_frame(n: int, seed: int) -> Table:
    """Draw the full credit table with a calibrated default-rate label."""
    rng = rng_for(seed, "credit")
    distress = rng.normal(0.0, 1.0, n)

    limit_bal = 10000.0 * np.clip(
        np.round(np.exp(rng.normal(2.45, 0.85, n))), 1, 100
    )
    sex = rng.choice([1.0, 2.0], size=n, p=[0.4, 0.6])
    education = rng.choice([1.0, 2.0, 3.0, 4.0], size=n, p=[0.35, 0.47, 0.16, 0.02])
    marriage = rng.choice([1.0, 2.0, 3.0], size=n, p=[0.455, 0.532, 0.013])
    age = np.clip(np.round(np.exp(rng.normal(3.55, 0.25, n))), 21, 79)

    ins_latent = _SHARED_LOADING * distress + np.sqrt(
        1.0 - _SHARED_LOADING**2
    ) * rng.normal(0.0, 1.0, n)
    status = _status_columns(rng, n, ins_latent)

    bank_latent = _SHARED_LOADING * distress + np.sqrt(
        1.0 - _SHARED_LOADING**2
    ) * rng.normal(0.0, 1.0, n)
    months = 6
    base_util = np.clip(
        0.45 + 0.22 * bank_latent + rng.normal(0.0, 0.25, n), 0.01, 1.2
    )
    util = np.empty((n, months))
    util[:, months - 1] = base_util + rng.normal(0.0, 0.08, n)
    for t in range(months - 2, -1, -1):
        util[:, t] = np.clip(
            0.85 * util[:, t + 1] + 0.04 * bank_latent + rng.normal(0.0, 0.07, n),
            -0.05,
            1.5,
        )
    bills = np.round(limit_bal[:, None] * util)
    pay_ratio = np.clip(
        1.0 / (1.0 + np.exp(1.8 * bank_latent - 0.4))[:, None]
        * np.exp(rng.normal(0.0, 0.6, (n, months))),
        0.0,
        1.5,
    )
    payments = np.round(np.maximum(bills, 0.0) * pay_ratio * 0.12)

    recency = np.array([3.0, 2.0, 1.4, 1.0, 0.7, 0.5])
    ins_score = (status * recency).sum(axis=1)
    ins_score = (ins_score - ins_score.mean()) / max(ins_score.std(), 1e-9)

    paid_frac = payments.sum(axis=1) / np.maximum(np.abs(bills).sum(axis=1), 1.0)
    recent_util = util[:, 2:].mean(axis=1)
    bank_score = 1.1 * recent_util - 2.2 * paid_frac
    bank_score = (bank_score - bank_score.mean()) / max(bank_score.std(), 1e-9)

    eta = (
        _INS_WEIGHT * ins_score
        + _BANK_WEIGHT * bank_score
        + rng.normal(0.0, _NOISE_SD_CREDIT, n)
    )
    lo, hi = -10.0, 10.0
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if np.mean(1.0 / (1.0 + np.exp(-(eta + mid)))) < _DEFAULT_RATE:
            lo = mid
        else:
            hi = mid
    prob = 1.0 / (1.0 + np.exp(-(eta + (lo + hi) / 2.0)))
    labels = (rng.uniform(size=n) < prob).astype(np.int64)

    columns = {
        "LIMIT_BAL": limit_bal,
        "SEX": sex,
        "EDUCATION": education,
        "MARRIAGE": marriage,
        "AGE": age,
        "PAY_0": status[:, 0].astype(np.float64),
        "PAY_2": status[:, 1].astype(np.float64),
        "PAY_3": status[:, 2].astype(np.float64),
        "PAY_4": status[:, 3].astype(np.float64),
        "PAY_5": status[:, 4].astype(np.float64),
        "PAY_6": status[:, 5].astype(np.float64),
        "BILL_AMT1": bills[:, 0],
        "BILL_AMT2": bills[:, 1],
        "BILL_AMT3": bills[:, 2],
        "BILL_AMT4": bills[:, 3],
        "BILL_AMT5": bills[:, 4],
        "BILL_AMT6": bills[:, 5],
        "PAY_AMT1": payments[:, 0],
        "PAY_AMT2": payments[:, 1],
        "PAY_AMT3": payments[:, 2],
        "PAY_AMT4": payments[:, 3],
        "PAY_AMT5": payments[:, 4],
        "PAY_AMT6": payments[:, 5],
    }
    features = np.column_stack([columns[name] for name in CREDIT_FEATURES])
    return Table(features, labels, CREDIT_FEATURES, class_count=2)


def credit_table(n: int, seed: int) -> Table:
    """Credit table generated once, cached as CSV, and read back through the loader."""
    path = cache_dir() / f"credit-v{_CREDIT_VERSION}-n{n}-s{seed}.csv"
    if not path.exists():
        write_csv(generate_credit_frame(n, seed), path, CREDIT_LABEL)
    table = load_csv(path, CREDIT_LABEL)
    table.class_count = 2
    return table
