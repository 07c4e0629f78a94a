"""Uncertainty quantification: bootstrap sup-norm bands and HulC intervals."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conservative import conservative_curve
from .counterfactual import plugin_cdf_field
from .data import Dataset
from .nuisance import fit_kernel_cond_cdf

MIN_BOOT = 100


@dataclass(frozen=True)
class PipelineConfig:
    """Settings of the plugin curve pipeline rerun on every resample."""

    a_grid: tuple
    h: float | None = None
    nu: float | None = None
    n_y: int = 512
    treatment: str = "auto"

    def fit_field(self, data: Dataset):
        nuis = fit_kernel_cond_cdf(data, h=self.h, nu=self.nu, treatment=self.treatment)
        return plugin_cdf_field(data, nuis, np.asarray(self.a_grid), n_y=self.n_y)

    def curve(self, data: Dataset, anchor) -> np.ndarray:
        return conservative_curve(self.fit_field(data), *anchor).values


@dataclass(frozen=True, eq=False)
class Band:
    """Simultaneous band ``center +/- half_width`` over ``a_grid``.

    ``sup_devs`` holds the sup-norm deviation of each kept replicate, so the
    band can be recomputed at other levels without refitting.
    """

    a_grid: np.ndarray
    center: np.ndarray
    half_width: float
    alpha: float
    n_boot: int
    sup_devs: np.ndarray
    dropped: int = 0
    seed: int | None = None

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.half_width

    def at_level(self, alpha: float) -> "Band":
        return Band(self.a_grid, self.center, float(np.quantile(self.sup_devs, 1.0 - alpha)),
                    alpha, self.n_boot, self.sup_devs, self.dropped, self.seed)

    def rows(self):
        return list(zip(self.a_grid.tolist(), self.center.tolist(),
                        self.lo.tolist(), self.hi.tolist()))


def bootstrap_band(data: Dataset, config: PipelineConfig, anchor, n_boot: int = 200,
                   alpha: float = 0.1, seed: int = 0, n_jobs: int = 1,
                   max_drop_frac: float = 0.05, curve_fn=None) -> Band:
    """Pairs bootstrap band for a conservative curve.

    Each replicate resamples rows with replacement, reruns the pipeline and
    records ``sup_a |curve* - curve|``. Replicates get independent streams
    spawned from ``seed``, so results do not depend on ``n_jobs``.
    Replicates whose fit raises are dropped; more than ``max_drop_frac`` of
    them dropped is an error.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if n_boot < MIN_BOOT:
        raise ValueError(f"n_boot must be at least {MIN_BOOT}")
    curve_fn = curve_fn or (lambda d: config.curve(d, anchor))
    center = np.asarray(curve_fn(data), dtype=float)
    streams = np.random.SeedSequence(seed).spawn(n_boot)

    def one(ss):
        idx = np.random.default_rng(ss).integers(0, data.n, data.n)
        try:
            rep = np.asarray(curve_fn(data.subset(idx)), dtype=float)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError):
            return None
        if not np.all(np.isfinite(rep)):
            return None
        return float(np.max(np.abs(rep - center)))

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            sups = list(pool.map(one, streams))
    else:
        sups = [one(ss) for ss in streams]
    kept = np.array([s for s in sups if s is not None])
    dropped = n_boot - kept.size
    if dropped > max_drop_frac * n_boot:
        raise RuntimeError(f"{dropped} of {n_boot} bootstrap replicates failed")
    a_grid = np.asarray(config.a_grid, dtype=float)
    return Band(a_grid, center, float(np.quantile(kept, 1.0 - alpha)), alpha, n_boot,
                kept, dropped, seed)


@dataclass(frozen=True)
class HulcInterval:
    lo: float
    hi: float
    n_groups: int
    alpha: float
    estimates: tuple
    seed: int | None = None

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "B": self.n_groups, "alpha": self.alpha,
                "estimates": list(self.estimates), "seed": self.seed}


def hulc_groups(alpha: float) -> int:
    """Smallest B with 2^(1-B) <= alpha, i.e. ``ceil(log2(2 / alpha))``.

    For a median-unbiased estimator the range of B independent estimates
    misses the truth with probability exactly ``2^(1-B)``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    B = math.ceil(math.log2(2.0 / alpha) - 1e-12)
    return max(B, 2)


def hulc_interval(data: Dataset, estimator, alpha: float = 0.05, seed: int = 0,
                  min_group_rows: int = 20) -> HulcInterval:
    """Convex hull of estimates on B disjoint random groups of rows.

    ``estimator`` maps a :class:`Dataset` to a float.
    """
    B = hulc_groups(alpha)
    if data.n < min_group_rows * B:
        raise ValueError(f"HulC with B={B} groups needs at least {min_group_rows * B} rows, "
                         f"got {data.n}")
    groups = data.split(seed, B)
    est = tuple(float(estimator(data.subset(g))) for g in groups)
    return HulcInterval(min(est), max(est), B, alpha, est, seed)
