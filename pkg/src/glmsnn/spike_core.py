"""Core spike-train data types shared by encoders, the neuron model, and attacks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SpikeTrain:
    """Immutable binary raster: rows are neurons, columns are time samples.

    Entries are 0/1 stored as uint8, so single-entry access is O(1). Time is
    0-based in code; text dumps and CLI output use 1-based sample indices.
    """

    __slots__ = ("_data",)

    def __init__(self, data) -> None:
        arr = np.asarray(data)
        if arr.ndim != 2:
            raise ValueError(f"spike raster must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"spike raster must be non-empty, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("spike raster entries must all be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def zeros(cls, num_neurons: int, horizon: int) -> "SpikeTrain":
        return cls(np.zeros((num_neurons, horizon), dtype=np.uint8))

    @property
    def data(self) -> np.ndarray:
        """Read-only uint8 array of shape (num_neurons, horizon)."""
        return self._data

    @property
    def num_neurons(self) -> int:
        return self._data.shape[0]

    @property
    def horizon(self) -> int:
        return self._data.shape[1]

    def spike_count(self) -> int:
        return int(self._data.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return self._data.shape == other._data.shape and bool(
            (self._data == other._data).all()
        )

    def __hash__(self) -> int:
        return hash((self._data.shape, self._data.tobytes()))

    def __repr__(self) -> str:
        return (
            f"SpikeTrain(num_neurons={self.num_neurons}, horizon={self.horizon}, "
            f"spikes={self.spike_count()})"
        )

    def to_text(self) -> str:
        """Raster text format: first line "N T", then N lines of T '0'/'1' chars."""
        lines = [f"{self.num_neurons} {self.horizon}"]
        for row in self._data:
            lines.append("".join("1" if v else "0" for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SpikeTrain":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty raster text")
        head = lines[0].split()
        if len(head) != 2:
            raise ValueError(f"raster header must be 'N T', got {lines[0]!r}")
        n, t = int(head[0]), int(head[1])
        if len(lines) != n + 1:
            raise ValueError(f"expected {n} raster rows, got {len(lines) - 1}")
        rows = []
        for ln in lines[1:]:
            if len(ln) != t or set(ln) - {"0", "1"}:
                raise ValueError(f"bad raster row {ln!r} (want {t} chars of 0/1)")
            rows.append([1 if ch == "1" else 0 for ch in ln])
        return cls(np.array(rows, dtype=np.uint8))


@dataclass(frozen=True)
class PixelImage:
    """Flattened grayscale image with intensities in [0, 1] and a class label.

    ``source_index`` is the record's position in the raw data file; encoders key
    their random streams on it so that class filtering and encoding commute.
    """

    intensities: np.ndarray
    label: int
    source_index: int = 0

    def __post_init__(self) -> None:
        arr = np.asarray(self.intensities, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("intensities must be a flat vector")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "intensities", arr)


@dataclass(frozen=True)
class LabeledExample:
    """An encoded input raster together with its class index."""

    input: SpikeTrain
    label: int

    def __post_init__(self) -> None:
        if self.label < 0:
            raise ValueError(f"label must be a nonnegative class index, got {self.label}")


def hamming_distance(a: SpikeTrain, b: SpikeTrain) -> int:
    """Number of (neuron, time) positions where the two rasters differ."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    return int((a.data != b.data).sum())


def apply_perturbation(x: SpikeTrain, p) -> SpikeTrain:
    """Entrywise sum of a raster and a signed perturbation matrix.

    ``p`` has entries in {-1, 0, +1}; the sum must stay binary (no removal of an
    absent spike, no duplicate add), otherwise the perturbation is illegal for
    this input and a ValueError is raised.
    """
    p = np.asarray(p)
    if p.shape != x.data.shape:
        raise ValueError(f"perturbation shape {p.shape} != raster shape {x.data.shape}")
    if not np.isin(p, (-1, 0, 1)).all():
        raise ValueError("perturbation entries must be -1, 0, or +1")
    out = x.data.astype(np.int16) + p.astype(np.int16)
    if not np.isin(out, (0, 1)).all():
        raise ValueError("perturbation drives an entry outside {0, 1}")
    return SpikeTrain(out.astype(np.uint8))
