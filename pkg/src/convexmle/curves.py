"""Evaluation grids and the CDF curve container."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError

def make_grid(points, support=None) -> np.ndarray:
    """Validate a strictly increasing, finite grid (inside ``support`` if given)."""
    g = np.asarray(points, dtype=float).ravel()
    if g.size == 0:
        raise DomainError("grid is empty")
    if not np.all(np.isfinite(g)):
        raise DomainError("grid points must be finite")
    if g.size > 1 and not np.all(np.diff(g) > 0):
        raise DomainError("grid must be strictly increasing")
    if support is not None and not np.all(support.contains(g)):
        raise DomainError(f"grid leaves the parameter support {support}")
    return g


def parse_grid(spec: str, support=None) -> np.ndarray:
    """Parse ``lo:hi:steps`` into an equispaced grid of ``steps`` points."""
    try:
        lo, hi, steps = spec.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError as exc:
        raise DomainError(f"grid must look like lo:hi:steps, got {spec!r}") from exc
    if steps < 1 or not lo <= hi:
        raise DomainError(f"bad grid specification {spec!r}")
    return make_grid(np.linspace(lo, hi, steps), support)


@dataclass
class Curve:
    """Values on a grid, labelled by how they were made."""

    grid: np.ndarray
    values: np.ndarray
    method: str
    metadata: dict = field(default_factory=dict)
    #: human-readable warnings (saturation, clipping, dropped replicates, ...)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape:
            raise DomainError("grid and values differ in length")

    def __len__(self):
        return self.grid.size

    def sup_distance(self, other: "Curve") -> float:
        if not np.array_equal(self.grid, other.grid):
            raise DomainError("curves live on different grids")
        return float(np.max(np.abs(self.values - other.values)))

    def to_csv(self, path=None) -> str:
        """Write ``z,value,method`` rows; floats use round-trip ``repr`` formatting."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["z", "value", "method"])
        for z, v in zip(self.grid, self.values):
            w.writerow([repr(float(z)), repr(float(v)), self.method])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        grid = [float(r["z"]) for r in rows]
        values = [float(r["value"]) for r in rows]
        method = rows[0]["method"] if rows else ""
        return cls(np.array(grid), np.array(values), method)


class CdfCurve(Curve):
    """Distribution-function values on a grid."""


class DensityCurve(Curve):
    """Density values on a grid."""


def empirical_cdf(samples, grid) -> np.ndarray:
    """Fraction of ``samples`` at or below each grid point."""
    s = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(s, np.asarray(grid, dtype=float), side="right") / s.size


def quantile_grid(samples, points: int = 201, lo_q: float = 0.001, hi_q: float = 0.999) -> np.ndarray:
    """Equispaced grid between two empirical quantiles of ``samples``."""
    a, b = np.quantile(np.asarray(samples, dtype=float), [lo_q, hi_q])
    if a == b:
        return make_grid([a])
    return make_grid(np.linspace(a, b, points))
