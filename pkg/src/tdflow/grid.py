"""Uniform cell-centred grids carrying a density (cell averages)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidStateError, PreconditionError

MASS_TOL = 1e-10


@dataclass(frozen=True)
class GridDensity:
    """Density on ``[x_min, x_max]`` split into ``M`` equal cells.

    ``rho`` holds cell averages; the mass ``sum(rho) * dx`` should be one.
    """

    x_min: float
    x_max: float
    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float).reshape(-1)
        if not self.x_max > self.x_min:
            raise PreconditionError("grid needs x_max > x_min")
        if rho.size < 2:
            raise PreconditionError("grid needs at least two cells")
        if not np.all(np.isfinite(rho)):
            raise InvalidStateError("density has non-finite values")
        if np.any(rho < 0):
            raise InvalidStateError("density must be nonnegative")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def M(self) -> int:
        return self.rho.size

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.M

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.M + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def mass(self) -> float:
        return float(self.rho.sum() * self.dx)

    def check_mass(self, tol: float = MASS_TOL) -> None:
        if abs(self.mass - 1.0) > tol:
            raise InvalidStateError(f"mass {self.mass!r} differs from 1 by more than {tol:g}")

    def moments(self) -> tuple[float, float]:
        """Mean and variance (cell-average quadrature, with the uniform in-cell variance)."""
        x = self.centers
        w = self.rho * self.dx
        m = float(np.dot(w, x) / w.sum())
        var = float(np.dot(w, (x - m) ** 2) / w.sum()) + self.dx ** 2 / 12.0
        return m, var

    @classmethod
    def from_function(cls, fn, x_min: float, x_max: float, M: int,
                      normalize: bool = True) -> "GridDensity":
        """Sample ``fn`` at cell centres, optionally renormalizing to unit mass."""
        e = np.linspace(x_min, x_max, M + 1)
        c = 0.5 * (e[:-1] + e[1:])
        rho = np.maximum(np.asarray(fn(c), dtype=float), 0.0)
        if normalize:
            total = rho.sum() * (x_max - x_min) / M
            if total <= 0:
                raise PreconditionError("density has zero mass")
            rho = rho / total
        return cls(x_min, x_max, rho)

    @classmethod
    def gaussian(cls, mean: float, var: float, x_min: float, x_max: float, M: int) -> "GridDensity":
        """Exact cell averages of a normal density, renormalized on the grid."""
        from scipy.stats import norm

        e = np.linspace(x_min, x_max, M + 1)
        cdf = norm.cdf(e, loc=mean, scale=np.sqrt(var))
        mass = np.diff(cdf)
        dx = (x_max - x_min) / M
        return cls(x_min, x_max, mass / mass.sum() / dx)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "rho"])
            for x, r in zip(self.centers, self.rho):
                w.writerow([repr(float(x)), repr(float(r))])

    @classmethod
    def from_csv(cls, path) -> "GridDensity":
        rows = list(csv.reader(Path(path).open()))
        if rows[0] != ["x", "rho"]:
            raise InvalidStateError("density CSV must have header x,rho")
        x = np.array([float(r[0]) for r in rows[1:]])
        rho = np.array([float(r[1]) for r in rows[1:]])
        dx = x[1] - x[0]
        return cls(float(x[0] - dx / 2), float(x[-1] + dx / 2), rho)
