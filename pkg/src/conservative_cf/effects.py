"""Effect summaries of a counterfactual field.

quadratic   sum_{k,l} w_k w_l W2^2(F_k, F_l): the smallest mean squared change
            between two independent treatment draws over all couplings.
contrast    sum_k w_k W2^2(F_k, F_{a0}).
differential  sum_k w_k int (dQ_a(u)/da)^2 du, the local version.
infinitesimal D^2(a) = int (dF_a/da (y) / p_a(y))^2 dF_a(y).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .counterfactual import (DENSITY_FLOOR, ONE_STEP_FLOOR, CdfField, _plugin_matrix, _rows,
                             eif_cdf, treatment_weights)
from .data import Dataset
from .dist1d import ATOMIC, Dist1D, default_grid, midpoint_grid
from .nuisance import fit_kernel_cond_cdf
from .transport import DEFAULT_NQUAD, conservative_psi_lower_binary

KINDS = ("quadratic", "contrast", "differential", "infinitesimal_profile")


@dataclass(frozen=True)
class EffectEstimate:
    value: float
    kind: str
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown effect kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"value": float(self.value), "kind": self.kind, "method": self.method,
                "diagnostics": self.diagnostics}


def pairwise_sq_w2(laws, n_quad: int = DEFAULT_NQUAD) -> np.ndarray:
    """Matrix of squared W2 distances; exact for atomic laws."""
    K = len(laws)
    if all(law.mode == ATOMIC for law in laws) and K > 8:
        # quantiles are constant between the merged CDF levels of all laws
        levels = np.unique(np.concatenate([[0.0]] + [law.cdf for law in laws]))
        du = np.diff(levels)
        mid = np.clip(levels[:-1] + du / 2, 0.0, 1.0)
        Q = np.vstack([law.quantile_at(mid) for law in laws])
        sq = (Q * Q) @ du
        d = sq[:, None] + sq[None, :] - 2.0 * (Q * du) @ Q.T
        np.fill_diagonal(d, 0.0)
        return np.maximum(d, 0.0)
    if all(law.mode == ATOMIC for law in laws):
        d = np.zeros((K, K))
        for k in range(K):
            for l in range(k + 1, K):
                d[k, l] = d[l, k] = conservative_psi_lower_binary(laws[k], laws[l])
        return d
    u = midpoint_grid(n_quad)
    Q = np.vstack([law.quantile_at(u) for law in laws])
    return np.vstack([np.mean((Q[k] - Q) ** 2, axis=1) for k in range(K)])


def quadratic_effect_plugin(field: CdfField, n_quad: int = DEFAULT_NQUAD,
                            u_statistic_n: int | None = None) -> EffectEstimate:
    """Plugin value of the quadratic effect.

    For a binary field this is ``2 w0 w1 W2^2(F_0, F_1)``. Passing
    ``u_statistic_n`` rescales by ``n / (n - 1)``, turning the V-statistic
    over observed treatment frequencies into the U-statistic.
    """
    d = pairwise_sq_w2(field.laws, n_quad)
    w = field.pi_weights
    psi = float(w @ d @ w)
    if u_statistic_n is not None:
        psi *= u_statistic_n / (u_statistic_n - 1.0)
    return EffectEstimate(psi, "quadratic", "plugin", {"n_quad": n_quad})


def contrast_effect(field: CdfField, a0: float, n_quad: int = DEFAULT_NQUAD) -> EffectEstimate:
    ref = field.law_at(a0)
    d = pairwise_sq_w2(list(field.laws) + [ref], n_quad)[-1, :-1]
    return EffectEstimate(float(field.pi_weights @ d), "contrast", "plugin",
                          {"a0": float(a0), "n_quad": n_quad})


def _quantile_derivative(field: CdfField, u: np.ndarray, fd_step) -> np.ndarray:
    if fd_step is None:
        if field.a_grid.size < 3:
            raise ValueError("differential effect needs at least 3 grid points")
        return np.gradient(field.quantiles(u), field.a_grid, axis=0)
    up = field.laws_at(field.a_grid + fd_step)
    dn = field.laws_at(field.a_grid - fd_step)
    return np.vstack([(p.quantile_at(u) - m.quantile_at(u)) / (2.0 * fd_step)
                      for p, m in zip(up, dn)])


def differential_effect_plugin(field: CdfField, n_quad: int = DEFAULT_NQUAD,
                               fd_step: float | None = None) -> EffectEstimate:
    """``sum_k w_k int (dQ_a(u)/da)^2 du`` by central differences in ``a``.

    Without ``fd_step`` the derivative is taken along the grid (one-sided at
    the two ends); with it, laws at ``a +/- fd_step`` are requested from the
    field.
    """
    u = midpoint_grid(n_quad)
    dQ = _quantile_derivative(field, u, fd_step)
    per_a = np.mean(dQ * dQ, axis=1)
    return EffectEstimate(float(field.pi_weights @ per_a), "differential", "plugin",
                          {"n_quad": n_quad, "per_a": per_a.tolist()})


def infinitesimal_effect(field: CdfField, a: float, fd_step: float | None = None,
                         n_quad: int = DEFAULT_NQUAD, density_floor: float = DENSITY_FLOOR,
                         density_step: float | None = None) -> float:
    """``D^2(a) = int (dF_a/da / p_a)^2 dF_a`` evaluated at ``y = Q_a(u)``.

    The derivative in ``a`` is a central difference with step ``fd_step``
    (default: the field's grid spacing) and the density a central difference
    of the CDF, floored at ``density_floor``.
    """
    if fd_step is None:
        fd_step = float(np.min(np.diff(field.a_grid))) if field.a_grid.size > 1 else 1e-2
    P, up, dn = field.laws_at([a, a + fd_step, a - fd_step])
    u = midpoint_grid(n_quad)
    y = P.quantile_at(u)
    dF = (np.asarray(up.cdf_at(y)) - np.asarray(dn.cdf_at(y))) / (2.0 * fd_step)
    p = np.maximum(P.density_at(y, density_step), density_floor)
    return float(np.mean((dF / p) ** 2))


def infinitesimal_profile(field: CdfField, fd_step: float | None = None,
                          n_quad: int = DEFAULT_NQUAD) -> EffectEstimate:
    vals = np.array([infinitesimal_effect(field, a, fd_step, n_quad) for a in field.a_grid])
    return EffectEstimate(float(field.pi_weights @ vals), "infinitesimal_profile", "plugin",
                          {"a_grid": field.a_grid.tolist(), "values": vals.tolist()})


def velocity_field(field: CdfField, a: float, y, fd_step: float | None = None):
    """Velocity ``d/db T_{a,b}(y)`` at ``b = a`` with ``T_{a,b} = Q_b o F_a``."""
    if fd_step is None:
        fd_step = float(np.min(np.diff(field.a_grid))) if field.a_grid.size > 1 else 1e-2
    P, up, dn = field.laws_at([a, a + fd_step, a - fd_step])
    u = np.clip(P.cdf_at(np.asarray(y, dtype=float)), 0.0, 1.0)
    return (up.quantile_at(u) - dn.quantile_at(u)) / (2.0 * fd_step)


# ---------------------------------------------------------------------------
# influence function and one-step estimator (discrete treatment)
# ---------------------------------------------------------------------------

def eif_quadratic(z, field: CdfField, nuis, n_quad: int = DEFAULT_NQUAD,
                  density_floor: float = DENSITY_FLOOR, density_step=None,
                  integrate: str = "u", return_parts: bool = False):
    """Centered influence function of the quadratic effect.

    With ``d_kl = W2^2(F_k, F_l)``, ``Qbar = sum_k w_k Q_k`` and
    ``g_k(u) = phi_k(Q_k(u)) / p_k(Q_k(u))``::

        2 sum_l w_l d_{A,l} - 2 psi - 4 sum_k w_k int (Q_k - Qbar) g_k du

    The first two terms come from the treatment weights and the last from
    the marginal laws (``phi_k`` is the centered influence function of
    ``F_k``).

    ``integrate="u"`` uses the quantile form with difference-quotient
    densities floored at ``density_floor``. ``"y"`` evaluates the last
    integral after the substitution ``u = F_k(y)``, i.e. as
    ``int (y - Qbar(F_k(y))) phi_k(y) dy`` over each law's grid, which needs
    no density. With step-function plugin CDFs the density-smoothed
    ``"u"`` form gives a less skewed one-step estimate.

    Returns
    -------
    ndarray (n,), or ``(phi, weight_part, marginal_part, psi)`` with
    ``return_parts``.
    """
    x, a_obs, y_obs = _rows(z)
    w = field.pi_weights
    u = midpoint_grid(n_quad)
    Q = field.quantiles(u)
    d = np.vstack([np.mean((Q[k] - Q) ** 2, axis=1) for k in range(len(w))])
    psi = float(w @ d @ w)
    idx = [field.index_of(a) for a in a_obs]
    if any(i is None for i in idx):
        raise ValueError("every observed treatment must be a level of the field")
    weight_part = 2.0 * (d @ w)[np.asarray(idx, dtype=int)] - 2.0 * psi
    qbar = w @ Q
    marginal = np.zeros(a_obs.size)
    if integrate not in ("u", "y"):
        raise ValueError("integrate must be 'u' or 'y'")
    by_y = integrate == "y"
    for k, (a, law) in enumerate(zip(field.a_grid, field.laws)):
        if by_y:
            # substitute u = F_k(y): the Jacobian cancels the density
            ys = law.support
            lag = ys - w @ field.quantiles(np.clip(law.cdf_at(ys), 0.0, 1.0))
            phi = eif_cdf((x, a_obs, y_obs), a, ys, nuis, law.cdf_at(ys))
            marginal += w[k] * np.trapezoid(phi * lag[None, :], ys, axis=1)
        else:
            p = np.maximum(law.density_at(Q[k], density_step), density_floor)
            phi = eif_cdf((x, a_obs, y_obs), a, Q[k], nuis, law.cdf_at(Q[k]))
            marginal += w[k] * np.mean(phi * ((Q[k] - qbar) / p)[None, :], axis=1)
    marginal *= -4.0
    out = weight_part + marginal
    if return_parts:
        return out, weight_part, marginal, psi
    return out


def quadratic_effect_onestep(data: Dataset, nuisance_fn=None, h=None, y_grid=None,
                             n_y: int = 512, n_quad: int = DEFAULT_NQUAD, seed=0,
                             density_step=None, integrate: str = "u",
                             propensity_floor: float = ONE_STEP_FLOOR,
                             min_n: int = 40) -> EffectEstimate:
    """Cross-fitted one-step estimator of the quadratic effect (discrete A).

    On each half the nuisances (and plugin laws) come from the other half;
    the estimate is the U-statistic over the evaluation half's treatments
    plus the mean marginal correction. The two halves are averaged.

    The default kernel nuisances clip the propensity at ``propensity_floor``;
    covariate values beyond the training range otherwise receive inverse
    weights near the 1e-3 clip and dominate the correction term.
    """
    if data.n < min_n:
        raise ValueError(f"one-step estimator needs at least {min_n} rows, got {data.n}")
    if not data.is_discrete():
        raise ValueError("the quadratic one-step estimator needs a discrete treatment; "
                         "no efficient influence function exists for a continuous one")
    levels = data.levels()
    y_grid = default_grid(data.y, n_y) if y_grid is None else np.asarray(y_grid, dtype=float)
    if nuisance_fn is None:
        def nuisance_fn(train):
            return fit_kernel_cond_cdf(train, h=h, treatment="discrete",
                                       floor=propensity_floor)
    folds = data.split(seed, 2)
    halves, eif_means, eif_sds = [], [], []
    for k in range(2):
        train, ev = data.subset(folds[1 - k]), data.subset(folds[k])
        nuis = nuisance_fn(train)
        F = _plugin_matrix(nuis, levels, y_grid, train.x)
        laws = [Dist1D.from_grid(y_grid, row) for row in F]
        w_ev = treatment_weights(ev, levels, True)
        fld = CdfField(levels, laws, w_ev, "one_step")
        phi, _, marginal, psi_v = eif_quadratic(ev, fld, nuis, n_quad,
                                                density_step=density_step, integrate=integrate,
                                                return_parts=True)
        psi_u = psi_v * ev.n / (ev.n - 1.0)
        halves.append(psi_u + float(np.mean(marginal)))
        eif_means.append(float(np.mean(phi)))
        eif_sds.append(float(np.std(phi, ddof=1)))
    value = float(np.mean(halves))
    se = float(np.mean(eif_sds)) / np.sqrt(data.n)
    flags = []
    if value <= 2.0 * se:
        flags.append("estimate within two standard errors of zero; at a null effect "
                     "the estimator is not asymptotically normal")
    return EffectEstimate(value, "quadratic", "one_step",
                          {"halves": halves, "eif_mean": float(np.mean(eif_means)),
                           "se": se, "flags": flags})
