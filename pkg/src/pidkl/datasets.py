"""Datasets, input standardization, and CSV/JSON persistence.

CSV layout is ``x_0,...,x_{d-1},y`` (UTF-8, one sample per line) with a
companion ``*.meta.json`` holding domain bounds and provenance.  Floats
are written with ``repr`` so files round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError


@dataclass
class Dataset:
    """Inputs, outputs, and the raw-coordinate box the inputs live in."""

    x: np.ndarray  # (N, d)
    y: np.ndarray  # (N,)
    domain_bounds: np.ndarray  # (d, 2) [lo, hi] per dimension

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        self.domain_bounds = np.asarray(self.domain_bounds, dtype=np.float64)
        if self.x.shape[0] != self.y.shape[0]:
            raise DimensionMismatch(
                f"{self.x.shape[0]} inputs vs {self.y.shape[0]} outputs"
            )
        if self.x.shape[0] < 1:
            raise DimensionMismatch("dataset needs at least one sample")
        if self.domain_bounds.shape != (self.x.shape[1], 2):
            raise DimensionMismatch(
                f"domain_bounds shape {self.domain_bounds.shape} does not match "
                f"input dim {self.x.shape[1]}"
            )
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise DimensionMismatch("dataset contains non-finite entries")
        lo, hi = self.domain_bounds[:, 0], self.domain_bounds[:, 1]
        if np.any(self.x < lo - 1e-12) or np.any(self.x > hi + 1e-12):
            raise DimensionMismatch("inputs fall outside the declared domain bounds")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @staticmethod
    def from_arrays(x, y, domain_bounds=None) -> "Dataset":
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if domain_bounds is None:
            domain_bounds = np.stack([x.min(axis=0), x.max(axis=0)], axis=1)
        return Dataset(x=x, y=y, domain_bounds=domain_bounds)


@dataclass
class Standardizer:
    """Affine map to model coordinates: (x - center) / scale.

    Fit from the domain bounds so the whole box maps into [-1, 1]; kernels,
    the feature network, and virtual points all operate in these
    coordinates, and jets seeded in raw coordinates chain through the map
    automatically.  Degenerate dimensions get scale 1.
    """

    center: np.ndarray
    scale: np.ndarray

    @staticmethod
    def from_bounds(domain_bounds) -> "Standardizer":
        b = np.asarray(domain_bounds, dtype=np.float64)
        center = 0.5 * (b[:, 0] + b[:, 1])
        scale = 0.5 * (b[:, 1] - b[:, 0])
        scale = np.where(scale > 1e-12, scale, 1.0)
        return Standardizer(center=center, scale=scale)

    @staticmethod
    def from_data(x) -> "Standardizer":
        """Zero-mean / unit-variance variant (classic z-scoring)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        center = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 1e-12, scale, 1.0)
        return Standardizer(center=center, scale=scale)

    @staticmethod
    def identity(dim: int) -> "Standardizer":
        return Standardizer(center=np.zeros(dim), scale=np.ones(dim))

    def transform(self, x):
        return (x - self.center) / self.scale

    def inverse(self, z):
        return z * self.scale + self.center

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "scale": self.scale.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "Standardizer":
        return Standardizer(
            center=np.asarray(d["center"], dtype=np.float64),
            scale=np.asarray(d["scale"], dtype=np.float64),
        )


def write_dataset(data: Dataset, path, metadata: dict | None = None) -> None:
    """Write ``path`` (CSV) and ``path + '.meta.json'``."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{i}" for i in range(data.dim)] + ["y"])
        for row, yv in zip(data.x, data.y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(yv))])
    meta = {"domain_bounds": data.domain_bounds.tolist(), "n": data.n, "dim": data.dim}
    if metadata:
        meta.update(metadata)
    meta_path = path.with_name(path.name + ".meta.json")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", "utf-8")


def read_dataset(path) -> Dataset:
    """Read a CSV written by :func:`write_dataset` (metadata optional)."""
    path = Path(path)
    try:
        with path.open("r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
    except (OSError, ValueError, StopIteration) as exc:
        raise ParseError(f"cannot read dataset {path}: {exc}") from exc
    if not header or header[-1] != "y" or len(header) < 2:
        raise ParseError(f"{path}: expected header x_0,...,y")
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise ParseError(f"{path}: ragged rows")
    bounds = None
    meta_path = path.with_name(path.name + ".meta.json")
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad metadata {meta_path}: {exc}") from exc
        if "domain_bounds" in meta:
            bounds = np.asarray(meta["domain_bounds"], dtype=np.float64)
    return Dataset.from_arrays(arr[:, :-1], arr[:, -1], bounds)
