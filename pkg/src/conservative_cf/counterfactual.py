"""Counterfactual CDF families F_a(y) and their influence functions.

All influence functions returned here are centered (mean zero at the truth):
the estimand is subtracted, so one-step estimators are "plugin + mean of the
estimated influence function".
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import Dataset
from .dist1d import CONTINUOUS, Dist1D, default_grid
from .nuisance import PROPENSITY_FLOOR, fit_kernel_cond_cdf, rule_of_thumb

DENSITY_FLOOR = 1e-4
# propensity clip used by the default nuisances of the cross-fitted one-step estimators
ONE_STEP_FLOOR = 0.05
PROVENANCES = ("plugin", "one_step", "dr_learner", "oracle")


@dataclass(frozen=True, eq=False)
class CdfField:
    """A family of laws ``{F_a : a in a_grid}`` with treatment weights ``Pi``.

    ``law_fn``, when present, evaluates the estimator at arbitrary treatment
    values (a list of laws for an array of ``a``); without it, off-grid laws
    are linear CDF interpolations between neighbouring grid laws.
    """

    a_grid: np.ndarray
    laws: tuple
    pi_weights: np.ndarray
    provenance: str = "plugin"
    law_fn: Callable | None = None
    flags: tuple = ()

    def __post_init__(self):
        a_grid = np.asarray(self.a_grid, dtype=float).ravel()
        w = np.asarray(self.pi_weights, dtype=float).ravel()
        laws = tuple(self.laws)
        if a_grid.size == 0 or len(laws) != a_grid.size or w.size != a_grid.size:
            raise ValueError("need one law and one weight per grid point")
        if np.any(np.diff(a_grid) <= 0):
            raise ValueError("a_grid must be strictly increasing")
        if np.any(w < 0) or not w.sum() > 0:
            raise ValueError("pi_weights must be nonnegative with positive total")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "a_grid", a_grid)
        object.__setattr__(self, "pi_weights", w / w.sum())
        object.__setattr__(self, "laws", laws)

    def __len__(self):
        return self.a_grid.size

    def index_of(self, a: float) -> int | None:
        hit = np.nonzero(np.isclose(self.a_grid, a, rtol=0.0, atol=1e-12))[0]
        return int(hit[0]) if hit.size else None

    def law_at(self, a: float) -> Dist1D:
        return self.laws_at([a])[0]

    def laws_at(self, a_values) -> list[Dist1D]:
        a_values = np.atleast_1d(np.asarray(a_values, dtype=float))
        out: list = [None] * a_values.size
        missing = []
        for k, a in enumerate(a_values):
            idx = self.index_of(a)
            if idx is not None:
                out[k] = self.laws[idx]
            else:
                missing.append(k)
        if missing:
            if self.law_fn is not None:
                for k, law in zip(missing, self.law_fn(a_values[missing])):
                    out[k] = law
            else:
                for k in missing:
                    out[k] = self._interpolate(a_values[k])
        return out

    def _interpolate(self, a: float) -> Dist1D:
        g = self.a_grid
        if a <= g[0]:
            return self.laws[0]
        if a >= g[-1]:
            return self.laws[-1]
        j = int(np.searchsorted(g, a))
        lam = (a - g[j - 1]) / (g[j] - g[j - 1])
        P, Q = self.laws[j - 1], self.laws[j]
        ys = np.union1d(P.support, Q.support)
        F = (1 - lam) * np.asarray(P.cdf_at(ys)) + lam * np.asarray(Q.cdf_at(ys))
        mode = CONTINUOUS if CONTINUOUS in (P.mode, Q.mode) else P.mode
        return Dist1D.from_grid(ys, F, mode)

    def quantiles(self, u) -> np.ndarray:
        """Quantile matrix, shape ``(len(a_grid), len(u))``."""
        u = np.asarray(u, dtype=float)
        return np.vstack([law.quantile_at(u) for law in self.laws])

    def mean_curve(self) -> np.ndarray:
        return np.array([law.mean() for law in self.laws])

    def covers(self, a: float) -> bool:
        return self.a_grid[0] <= a <= self.a_grid[-1]

    def with_weights(self, pi_weights) -> "CdfField":
        return CdfField(self.a_grid, self.laws, pi_weights, self.provenance,
                        self.law_fn, self.flags)

    def to_dict(self) -> dict:
        return {
            "a_grid": self.a_grid.tolist(),
            "pi_weights": self.pi_weights.tolist(),
            "provenance": self.provenance,
            "laws": [law.to_dict() for law in self.laws],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CdfField":
        return cls(np.asarray(d["a_grid"]), [Dist1D.from_dict(x) for x in d["laws"]],
                   np.asarray(d["pi_weights"]), d.get("provenance", "plugin"))


# ---------------------------------------------------------------------------
# plugin estimator
# ---------------------------------------------------------------------------

def _plugin_matrix(nuis, a_values, y_grid, x_rows) -> np.ndarray:
    if hasattr(nuis, "plugin_cdf"):
        return nuis.plugin_cdf(a_values, y_grid, x_rows=x_rows)
    return np.vstack([nuis.cond_cdf(y_grid, x_rows, np.full(len(x_rows), a)).mean(axis=0)
                      for a in np.atleast_1d(a_values)])


def treatment_weights(data: Dataset, a_grid, discrete: bool, nuis=None) -> np.ndarray:
    """Discretized treatment law on ``a_grid``.

    Relative frequencies for a discrete treatment; otherwise a kernel density
    of A evaluated on the grid and normalized.
    """
    a_grid = np.asarray(a_grid, dtype=float)
    if discrete:
        w = np.array([np.sum(data.a == a) for a in a_grid], dtype=float)
    else:
        if nuis is not None and hasattr(nuis, "marg_density") and not getattr(nuis, "discrete", False):
            w = np.asarray(nuis.marg_density(a_grid), dtype=float)
        else:
            bw = rule_of_thumb(data.a)
            z = (a_grid[:, None] - data.a[None, :]) / bw
            w = np.exp(-0.5 * z * z).mean(axis=1)
        # grid spacing turns a density into cell masses on uneven grids
        if a_grid.size > 1:
            w = w * np.gradient(a_grid)
    if not w.sum() > 0:
        w = np.ones_like(a_grid)
    return w / w.sum()


def plugin_cdf_field(data: Dataset, nuis, a_grid, y_grid=None, n_y: int = 512,
                     discrete: bool | None = None) -> CdfField:
    """F_a(y) = n^-1 sum_i F(y | X_i, a) on the grids.

    Each law is monotonized and returned in continuous mode; the field keeps
    an evaluator so that laws at off-grid treatments (e.g. observed A_i) are
    computed exactly rather than interpolated.
    """
    a_grid = np.asarray(a_grid, dtype=float)
    if a_grid.size == 0:
        raise ValueError("a_grid must be nonempty")
    y_grid = default_grid(data.y, n_y) if y_grid is None else np.asarray(y_grid, dtype=float)
    if discrete is None:
        discrete = bool(getattr(nuis, "discrete", data.is_discrete()))
    x_rows = data.x

    def law_fn(a_values, chunk: int = 256):
        laws = []
        a_values = np.atleast_1d(a_values)
        for s in range(0, a_values.size, chunk):
            F = _plugin_matrix(nuis, a_values[s:s + chunk], y_grid, x_rows)
            laws.extend(Dist1D.from_grid(y_grid, row) for row in F)
        return laws

    laws = law_fn(a_grid)
    w = treatment_weights(data, a_grid, discrete, nuis)
    return CdfField(a_grid, laws, w, "plugin", law_fn)


# ---------------------------------------------------------------------------
# influence functions
# ---------------------------------------------------------------------------

def _rows(z):
    """Accept a Dataset or an ``(x, a, y)`` triple."""
    if isinstance(z, Dataset):
        return z.x, z.a, z.y
    x, a, y = z
    x = np.asarray(x, dtype=float)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if x.ndim == 1:
        x = x.reshape(a.size, -1)
    return x, a, np.atleast_1d(np.asarray(y, dtype=float))


def eif_cdf(z, a: float, y, nuis, f_a_y=None, return_flags: bool = False):
    """Centered influence function of F_a(y) for a discrete treatment.

    ``F(y|X,a) + 1{A=a} (1{Y<=y} - F(y|X,a)) / pi(a|X) - F_a(y)``.

    Parameters
    ----------
    z : Dataset or (x, a_obs, y_obs)
    a : treatment level
    y : scalar or array of outcome values
    nuis : fitted nuisance
    f_a_y : the estimand at ``y`` (scalar or array like ``y``); when omitted
        the influence function is returned uncentered.

    Returns
    -------
    ndarray of shape ``(n,)`` for scalar ``y`` else ``(n, len(y))``.
    """
    x, a_obs, y_obs = _rows(z)
    scalar = np.ndim(y) == 0
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    Fx = nuis.cond_cdf(y_arr, x, np.full(a_obs.size, a))
    pi = np.asarray(nuis.propensity(np.full(a_obs.size, a), x), dtype=float)
    floor = getattr(nuis, "floor", 0.0)
    at_floor = pi <= floor
    ind = (a_obs == a).astype(float)
    phi = Fx + (ind / pi)[:, None] * ((y_obs[:, None] <= y_arr[None, :]) - Fx)
    if f_a_y is not None:
        phi = phi - np.atleast_1d(np.asarray(f_a_y, dtype=float))[None, :]
    if scalar:
        phi = phi[:, 0]
    return (phi, at_floor) if return_flags else phi


def eif_transport(z, a: float, b: float, y: float, nuis, field: CdfField,
                  density_floor: float = DENSITY_FLOOR, density_step=None,
                  return_flags: bool = False):
    """Influence function of the transport map T_{a,b}(y) = F_b^-1(F_a(y)).

    ``(phi_{F_a(y)} - phi_{F_b(t)}) / p_b(t)`` with ``t = T_{a,b}(y)``.
    """
    Fa, Fb = field.law_at(a), field.law_at(b)
    u = float(Fa.cdf_at(y))
    t = float(Fb.quantile_at(u))
    p_raw = float(Fb.density_at(t, density_step))
    p = max(p_raw, density_floor)
    phi_a = eif_cdf(z, a, y, nuis, u)
    phi_b = eif_cdf(z, b, t, nuis, float(Fb.cdf_at(t)))
    out = (phi_a - phi_b) / p
    return (out, p_raw <= density_floor) if return_flags else out


def eif_barycenter_cdf(z, y: float, nuis, field: CdfField, bary: Dist1D,
                       density_floor: float = DENSITY_FLOOR, density_step=None,
                       return_flags: bool = False):
    """Influence function of the barycenter CDF G(y), discrete treatment.

    With ``u = G(y)`` and ``Q_k = F_k^-1``::

        g(y) * [ sum_k w_k phi_k(Q_k(u)) / p_k(Q_k(u)) + G^-1(u) - Q_A(u) ]

    where ``phi_k`` is the centered influence function of F_k and the middle
    term accounts for estimating the treatment weights.
    """
    x, a_obs, y_obs = _rows(z)
    u = float(np.clip(bary.cdf_at(y), 0.0, 1.0))
    g_raw = float(bary.density_at(y, density_step))
    g = max(g_raw, density_floor)
    w = field.pi_weights
    q = np.array([law.quantile_at(u) for law in field.laws])
    ginv = float(w @ q)
    idx = np.array([field.index_of(a) for a in a_obs], dtype=object)
    if any(i is None for i in idx):
        raise ValueError("every observed treatment must be a level of the field")
    idx = idx.astype(int)
    inner = np.zeros(a_obs.size)
    flagged = g_raw <= density_floor
    for k, (a, law) in enumerate(zip(field.a_grid, field.laws)):
        p_raw = float(law.density_at(q[k], density_step))
        flagged |= p_raw <= density_floor
        phi = eif_cdf((x, a_obs, y_obs), a, q[k], nuis, float(law.cdf_at(q[k])))
        inner += w[k] * phi / max(p_raw, density_floor)
    out = g * (inner + ginv - q[idx])
    return (out, flagged) if return_flags else out


# ---------------------------------------------------------------------------
# one-step (discrete A) and DR-learner (continuous A)
# ---------------------------------------------------------------------------

def _default_nuisance(h, nu, treatment, floor=PROPENSITY_FLOOR):
    def fit(train: Dataset):
        return fit_kernel_cond_cdf(train, h=h, nu=nu, treatment=treatment, floor=floor)
    return fit


def one_step_cdf_discrete(data: Dataset, a: float, y_grid=None, nuisance_fn=None,
                          h=None, seed=0, min_level_rows: int = 5) -> Dist1D:
    """Cross-fitted one-step estimator of F_a on ``y_grid``.

    Nuisances are fit on one half; on the other half the estimator is the
    plugin average plus the mean centered influence function (equivalently
    the AIPW average). The halves are then swapped and the two estimates
    averaged.
    """
    y_grid = default_grid(data.y) if y_grid is None else np.asarray(y_grid, dtype=float)
    nuisance_fn = nuisance_fn or _default_nuisance(h, None, "discrete", ONE_STEP_FLOOR)
    folds = data.split(seed, 2)
    estimates = []
    for k in range(2):
        train, ev = data.subset(folds[1 - k]), data.subset(folds[k])
        if np.sum(ev.a == a) < min_level_rows:
            raise ValueError(f"fewer than {min_level_rows} evaluation rows with A={a}; "
                             "cannot form the one-step estimator")
        nuis = nuisance_fn(train)
        plug = _plugin_matrix(nuis, [a], y_grid, ev.x)[0]
        phi = eif_cdf(ev, a, y_grid, nuis, plug)
        estimates.append(plug + phi.mean(axis=0))
    F = np.mean(estimates, axis=0)
    return Dist1D.from_grid(y_grid, F)


def one_step_cdf_field(data: Dataset, y_grid=None, nuisance_fn=None, h=None, seed=0) -> CdfField:
    levels = data.levels()
    y_grid = default_grid(data.y) if y_grid is None else np.asarray(y_grid, dtype=float)
    laws = [one_step_cdf_discrete(data, a, y_grid, nuisance_fn, h, seed) for a in levels]
    return CdfField(levels, laws, treatment_weights(data, levels, True), "one_step")


def local_linear_smoother(a_obs, a_grid, bandwidth: float, min_points: float = 3.0):
    """Linear smoother matrix S with ``fit(a_grid) = S @ responses``.

    Gaussian local-linear weights. Where the window holds fewer than
    ``min_points`` effective observations (or the local design is singular)
    the bandwidth is doubled until it does; those grid points are reported.
    """
    a_obs = np.asarray(a_obs, dtype=float)
    a_grid = np.asarray(a_grid, dtype=float)
    S = np.zeros((a_grid.size, a_obs.size))
    widened = []
    for k, a0 in enumerate(a_grid):
        bw = bandwidth
        for _ in range(60):
            d = a_obs - a0
            w = np.exp(-0.5 * (d / bw) ** 2)
            s0, s1, s2 = w.sum(), w @ d, w @ (d * d)
            det = s0 * s2 - s1 * s1
            ess = s0 ** 2 / max(np.sum(w * w), 1e-300)
            if ess >= min_points and det > 1e-12 * max(s0 * s2, 1e-300):
                break
            bw *= 2.0
        if bw != bandwidth:
            widened.append(float(a0))
        S[k] = w * (s2 - s1 * d) / det
    return S, widened


def dr_learner_cdf(data: Dataset, a_grid, y_grid=None, bandwidth=None, nuisance_fn=None,
                   h=None, nu=None, seed=0) -> CdfField:
    """DR-learner for a continuous treatment.

    Pseudo-outcomes (cross-fitted over two folds)::

        (1{Y <= y} - F(y|X, A)) / (pi(A|X) / pi(A)) + P_n{ F(y | X, a) }|_{a=A}

    are regressed on A by local-linear smoothing and evaluated on ``a_grid``.
    """
    a_grid = np.asarray(a_grid, dtype=float)
    y_grid = default_grid(data.y) if y_grid is None else np.asarray(y_grid, dtype=float)
    nuisance_fn = nuisance_fn or _default_nuisance(h, nu, "continuous")
    folds = data.split(seed, 2)
    pseudo = np.empty((data.n, y_grid.size))
    for k in range(2):
        tr_idx, ev_idx = folds[1 - k], folds[k]
        train, ev = data.subset(tr_idx), data.subset(ev_idx)
        nuis = nuisance_fn(train)
        Fx = nuis.cond_cdf(y_grid, ev.x, ev.a)
        ratio = np.asarray(nuis.propensity(ev.a, ev.x)) / np.asarray(nuis.marg_density(ev.a))
        m = _plugin_matrix(nuis, ev.a, y_grid, ev.x)
        pseudo[ev_idx] = ((ev.y[:, None] <= y_grid[None, :]) - Fx) / ratio[:, None] + m
    bw = rule_of_thumb(data.a) if bandwidth is None else float(bandwidth)
    S, widened = local_linear_smoother(data.a, a_grid, bw)
    F = S @ pseudo
    laws = [Dist1D.from_grid(y_grid, row) for row in F]
    flags = ()
    if widened:
        msg = f"smoother window widened at {len(widened)} grid point(s)"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        flags = (msg,)
    return CdfField(a_grid, laws, treatment_weights(data, a_grid, False), "dr_learner",
                    flags=flags)


def dr_pseudo_outcomes(data: Dataset, y_grid, nuis) -> np.ndarray:
    """Pseudo-outcomes for all rows using one fitted nuisance (no cross-fitting)."""
    y_grid = np.asarray(y_grid, dtype=float)
    Fx = nuis.cond_cdf(y_grid, data.x, data.a)
    ratio = np.asarray(nuis.propensity(data.a, data.x)) / np.asarray(nuis.marg_density(data.a))
    m = _plugin_matrix(nuis, data.a, y_grid, data.x)
    return ((data.y[:, None] <= y_grid[None, :]) - Fx) / ratio[:, None] + m
