"""USPS-format dataset ingestion, filtering, and a synthetic stand-in generator.

Record format (one sample per line): a label token followed by 256 feature
values in [-1, 1], whitespace-separated. Labels 1..10 denote digits with
10 standing for digit 0. Features map to intensities via (v + 1) / 2.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .spike_core import PixelImage

N_FEATURES = 256
IMAGE_SIDE = 16


class DatasetFormatError(ValueError):
    """A record does not follow the documented USPS text format."""


class UnknownLabelError(DatasetFormatError):
    """A record's label token is outside the 1..10 source convention."""


@dataclass(frozen=True)
class DatasetConfig:
    train_path: str
    test_path: str
    classes: tuple[int, ...] = (1, 5, 7, 9)
    train_limit_per_class: int | None = None
    test_limit_per_class: int | None = None
    split_seed: int = 0

    def __post_init__(self) -> None:
        cls = tuple(sorted(set(int(c) for c in self.classes)))
        if not cls or any(c < 0 or c > 9 for c in cls):
            raise ValueError("classes must be a nonempty subset of digits 0..9")
        object.__setattr__(self, "classes", cls)

    def class_index(self, digit: int) -> int:
        return self.classes.index(digit)


def _parse_line(line: str, lineno: int, path: str):
    tokens = line.split()
    if len(tokens) != 1 + N_FEATURES:
        raise DatasetFormatError(
            f"{path}:{lineno}: expected label + {N_FEATURES} features, got {len(tokens)} tokens"
        )
    try:
        raw_label = float(tokens[0])
        feats = np.array(tokens[1:], dtype=np.float64)
    except ValueError as exc:
        raise DatasetFormatError(f"{path}:{lineno}: non-numeric token ({exc})") from exc
    label = int(raw_label)
    if label != raw_label or not 1 <= label <= 10:
        raise UnknownLabelError(f"{path}:{lineno}: label {tokens[0]!r} outside 1..10")
    if feats.min() < -1.0 - 1e-9 or feats.max() > 1.0 + 1e-9:
        raise DatasetFormatError(f"{path}:{lineno}: feature outside [-1, 1]")
    intensities = np.clip((feats + 1.0) / 2.0, 0.0, 1.0)
    return label % 10, intensities


def read_records(path: str) -> list[tuple[int, np.ndarray]]:
    """All (digit, intensities) records of one file, in file order."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset file not found: {path}")
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(_parse_line(line, lineno, path))
    return records


def _select(records, cfg: DatasetConfig, limit: int | None) -> list[PixelImage]:
    by_class: dict[int, list[int]] = {c: [] for c in cfg.classes}
    for idx, (digit, _) in enumerate(records):
        if digit in by_class:
            by_class[digit].append(idx)
    keep: list[int] = []
    rng = np.random.default_rng(cfg.split_seed)
    for digit in cfg.classes:
        idxs = by_class[digit]
        if limit is not None and len(idxs) > limit:
            chosen = rng.choice(len(idxs), size=limit, replace=False)
            idxs = [idxs[i] for i in sorted(chosen)]
        keep.extend(idxs)
    keep.sort()  # preserve source file order
    return [
        PixelImage(records[i][1], cfg.class_index(records[i][0]), source_index=i)
        for i in keep
    ]


def load_usps(cfg: DatasetConfig) -> tuple[list[PixelImage], list[PixelImage]]:
    """Train and test images, filtered to cfg.classes with contiguous labels.

    Class labels are remapped to 0..len(classes)-1 in ascending digit order.
    The source train/test partition is preserved; per-class limits subsample
    deterministically from cfg.split_seed while keeping file order.
    """
    train = _select(read_records(cfg.train_path), cfg, cfg.train_limit_per_class)
    test = _select(read_records(cfg.test_path), cfg, cfg.test_limit_per_class)
    return train, test


# 5x7 digit glyphs for the synthetic stand-in data (rows top to bottom).
_GLYPHS = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("01110", "10001", "00001", "00110", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}


def synthesize_digit_image(digit: int, rng: np.random.Generator) -> np.ndarray:
    """One 256-vector of intensities in [0, 1] resembling a scanned digit.

    A fixed glyph is upscaled onto a 16x16 canvas, then randomly blurred,
    rotated, shifted, contrast-scaled and noised so that intra-class variation
    is comparable to scanned handwriting.
    """
    glyph = np.array([[ch == "1" for ch in row] for row in _GLYPHS[digit]], dtype=np.float64)
    img = np.zeros((IMAGE_SIDE, IMAGE_SIDE))
    block = np.kron(glyph, np.ones((2, 2)))  # 14 x 10
    img[1:15, 3:13] = block
    img = ndimage.gaussian_filter(img, sigma=rng.uniform(0.5, 0.9))
    img = ndimage.rotate(img, angle=rng.uniform(-10.0, 10.0), reshape=False, order=1)
    img = ndimage.shift(img, shift=(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)), order=1)
    peak = img.max()
    if peak > 0:
        img = img / peak
    img *= rng.uniform(0.7, 1.0)
    img += rng.normal(0.0, 0.10, size=img.shape)
    return np.clip(img, 0.0, 1.0).reshape(-1)


def write_synthetic_usps(
    train_path: str,
    test_path: str,
    classes=(1, 5, 7, 9),
    n_train_per_class: int = 100,
    n_test_per_class: int = 50,
    seed: int = 0,
) -> None:
    """Write synthetic digit files in the documented USPS record format."""
    rng = np.random.default_rng(seed)
    for path, n_per_class in ((train_path, n_train_per_class), (test_path, n_test_per_class)):
        rows = []
        for digit in classes:
            for _ in range(n_per_class):
                rows.append((digit, synthesize_digit_image(digit, rng)))
        order = rng.permutation(len(rows))
        with open(path, "w") as fh:
            for i in order:
                digit, intensities = rows[i]
                label = 10 if digit == 0 else digit
                feats = 2.0 * intensities - 1.0
                fh.write(str(label) + " " + " ".join(f"{v:.4f}" for v in feats) + "\n")
