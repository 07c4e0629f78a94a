"""One-dimensional distributions stored as a CDF on a support grid.

Two interpolation modes are supported:

``atomic``
    The law puts mass ``cdf[k] - cdf[k-1]`` on ``support[k]``. The CDF is a
    right-continuous step function.
``continuous``
    The CDF is the piecewise-linear interpolant of ``(support, cdf)``, zero
    below the first grid point and one above the last. A positive
    ``cdf[0]`` is an atom at the lower end of the grid.

Quantiles always use the left-continuous generalized inverse
``inf{y : F(y) >= u}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ATOMIC = "atomic"
CONTINUOUS = "continuous"
_MODES = (ATOMIC, CONTINUOUS)

# Relative tolerance used when deciding that two cumulative values coincide.
_FLAT_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class Dist1D:
    """A probability law on the real line.

    Parameters
    ----------
    support : array_like, shape (m,)
        Strictly increasing grid.
    cdf : array_like, shape (m,)
        Nondecreasing values in [0, 1] with ``cdf[-1] == 1``.
    mode : {"atomic", "continuous"}
    """

    support: np.ndarray
    cdf: np.ndarray
    mode: str = ATOMIC

    def __post_init__(self):
        support = np.array(self.support, dtype=float).ravel()
        cdf = np.array(self.cdf, dtype=float).ravel()
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if support.size == 0 or support.size != cdf.size:
            raise ValueError("support and cdf must be nonempty and of equal length")
        if not np.all(np.isfinite(support)) or not np.all(np.isfinite(cdf)):
            raise ValueError("support and cdf must be finite")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(np.diff(cdf) < 0):
            raise ValueError("cdf must be nondecreasing")
        if cdf[0] < 0 or cdf[-1] != 1.0:
            raise ValueError("cdf values must lie in [0, 1] and end at exactly 1")
        support.setflags(write=False)
        cdf.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "cdf", cdf)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_samples(cls, values, weights=None) -> "Dist1D":
        """Atomic law putting normalized ``weights`` on ``values``.

        Duplicate values are merged.
        """
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("cannot build a distribution from no samples")
        if weights is None:
            weights = np.ones_like(values)
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape != values.shape:
            raise ValueError("values and weights must have equal length")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        total = weights.sum()
        if not total > 0:
            raise ValueError("weights must sum to a positive number")
        atoms, inverse = np.unique(values, return_inverse=True)
        mass = np.bincount(inverse, weights=weights, minlength=atoms.size)
        keep = mass > 0
        return cls.from_masses(atoms[keep], mass[keep] / total)

    @classmethod
    def from_masses(cls, atoms, masses) -> "Dist1D":
        """Atomic law from sorted distinct atoms and their masses."""
        masses = np.asarray(masses, dtype=float)
        cdf = np.cumsum(masses) / masses.sum()
        cdf[-1] = 1.0
        return cls(np.asarray(atoms, dtype=float), np.minimum(cdf, 1.0), ATOMIC)

    @classmethod
    def point_mass(cls, value: float) -> "Dist1D":
        return cls(np.array([float(value)]), np.array([1.0]), ATOMIC)

    @classmethod
    def from_grid(cls, grid, cdf_values, mode: str = CONTINUOUS) -> "Dist1D":
        """Law from (possibly noisy) CDF values on a grid.

        Values are clipped to [0, 1], monotonized by a running maximum and the
        last value is set to 1. Grid points that carry no information (a
        repeated zero at the bottom, or anything after the CDF first reaches
        one) are trimmed so that the reported support is tight.
        """
        grid = np.asarray(grid, dtype=float).ravel()
        F = np.clip(np.asarray(cdf_values, dtype=float).ravel(), 0.0, 1.0)
        if grid.size != F.size or grid.size == 0:
            raise ValueError("grid and cdf_values must be nonempty and of equal length")
        F = np.maximum.accumulate(F)
        F[-1] = 1.0
        top = int(np.argmax(F >= 1.0 - _FLAT_TOL))
        F[top:] = 1.0
        grid, F = grid[: top + 1], F[: top + 1]
        if mode == ATOMIC:
            keep = np.diff(np.concatenate([[0.0], F])) > 0
            return cls(grid[keep], F[keep], ATOMIC)
        bottom = int(np.sum(F <= 0.0)) - 1
        if bottom > 0:
            grid, F = grid[bottom:], F[bottom:]
        return cls(grid, F, mode)

    # -- evaluation ------------------------------------------------------

    @property
    def is_atomic(self) -> bool:
        return self.mode == ATOMIC

    @property
    def lower(self) -> float:
        return float(self.support[0])

    @property
    def upper(self) -> float:
        return float(self.support[-1])

    @property
    def masses(self) -> np.ndarray:
        """Atom masses (atomic mode) or per-grid-cell masses (continuous)."""
        return np.diff(self.cdf, prepend=0.0)

    def cdf_at(self, y):
        """P(Y <= y); scalar in, scalar out."""
        y_arr = np.asarray(y, dtype=float)
        if self.mode == ATOMIC:
            idx = np.searchsorted(self.support, y_arr, side="right") - 1
            out = np.where(idx >= 0, self.cdf[np.clip(idx, 0, None)], 0.0)
        else:
            out = np.interp(y_arr, self.support, self.cdf, left=0.0, right=1.0)
            # np.interp uses `left` strictly below support[0]; keep the atom.
            out = np.where(y_arr >= self.support[0], np.maximum(out, self.cdf[0]), 0.0)
        return out if out.ndim else float(out)

    def cdf_left(self, y):
        """P(Y < y), the left limit of the CDF."""
        y_arr = np.asarray(y, dtype=float)
        if self.mode == ATOMIC:
            idx = np.searchsorted(self.support, y_arr, side="left") - 1
            out = np.where(idx >= 0, self.cdf[np.clip(idx, 0, None)], 0.0)
        else:
            out = np.where(y_arr > self.support[0], self.cdf_at(y_arr), 0.0)
        return out if out.ndim else float(out)

    def quantile_at(self, u):
        """Left-continuous generalized inverse ``inf{y : F(y) >= u}``."""
        u_arr = np.asarray(u, dtype=float)
        if np.any((u_arr < 0) | (u_arr > 1)) or np.any(np.isnan(u_arr)):
            raise ValueError("quantile levels must lie in [0, 1]")
        k = np.searchsorted(self.cdf, u_arr, side="left")
        k = np.minimum(k, self.support.size - 1)
        if self.mode == ATOMIC:
            out = self.support[k]
        else:
            prev = np.maximum(k - 1, 0)
            f0, f1 = self.cdf[prev], self.cdf[k]
            y0, y1 = self.support[prev], self.support[k]
            with np.errstate(divide="ignore", invalid="ignore"):
                frac = np.where(f1 > f0, (u_arr - f0) / (f1 - f0), 1.0)
            out = np.where(k == 0, self.support[0], y0 + np.clip(frac, 0.0, 1.0) * (y1 - y0))
        return out if np.ndim(out) else float(out)

    def density_at(self, y, step: float | None = None, floor: float = 0.0):
        """Central-difference density ``(F(y+s) - F(y-s)) / 2s``.

        The default step is the mean grid spacing (or 1e-3 for a single atom).
        """
        if step is None:
            step = self.grid_step
        y_arr = np.asarray(y, dtype=float)
        out = (self.cdf_at(y_arr + step) - self.cdf_at(y_arr - step)) / (2.0 * step)
        out = np.maximum(out, floor)
        return out if np.ndim(out) else float(out)

    @property
    def grid_step(self) -> float:
        if self.support.size < 2:
            return 1e-3
        return float((self.support[-1] - self.support[0]) / (self.support.size - 1))

    def mean(self) -> float:
        if self.mode == ATOMIC:
            return float(np.dot(self.support, self.masses))
        mid = np.concatenate([[self.support[0]], 0.5 * (self.support[1:] + self.support[:-1])])
        return float(np.dot(mid, self.masses))

    def shift(self, c: float) -> "Dist1D":
        return Dist1D(self.support + c, self.cdf, self.mode)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {"support": self.support.tolist(), "cdf": self.cdf.tolist(), "mode": self.mode}

    @classmethod
    def from_dict(cls, d: dict) -> "Dist1D":
        return cls(np.asarray(d["support"]), np.asarray(d["cdf"]), d.get("mode", ATOMIC))

    def __repr__(self):
        return (f"Dist1D(mode={self.mode!r}, n={self.support.size}, "
                f"range=[{self.lower:.4g}, {self.upper:.4g}])")


def from_samples(values, weights=None) -> Dist1D:
    return Dist1D.from_samples(values, weights)


def cdf_at(d: Dist1D, y):
    return d.cdf_at(y)


def quantile_at(d: Dist1D, u):
    return d.quantile_at(u)


def default_grid(values, n_points: int = 512, pad: float = 0.05) -> np.ndarray:
    """Evenly spaced grid over the range of ``values`` padded by ``pad``.

    A degenerate range is widened to unit half-width around the value.
    """
    values = np.asarray(values, dtype=float)
    lo, hi = float(np.min(values)), float(np.max(values))
    width = hi - lo
    if width <= 0:
        width = 2.0
        lo, hi = lo - 1.0, hi + 1.0
        return np.linspace(lo, hi, n_points)
    return np.linspace(lo - pad * width, hi + pad * width, n_points)


def midpoint_grid(n: int) -> np.ndarray:
    """Midpoints ``(j + 1/2) / n`` of a uniform partition of (0, 1)."""
    if n < 2:
        raise ValueError("quadrature needs at least 2 points")
    return (np.arange(n) + 0.5) / n


def discretize(cdf_fn, grid) -> Dist1D:
    """Continuous-mode law from an analytic CDF sampled on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    return Dist1D.from_grid(grid, cdf_fn(grid), CONTINUOUS)
