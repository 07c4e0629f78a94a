"""Kernel estimators of the nuisance functions.

* conditional outcome CDF  F(y | x, a)   (Nadaraya-Watson, Gaussian product kernel)
* propensity density       pi(a | x)     (kernel conditional density; a mass
                                          function when the treatment is discrete)
* marginal treatment density pi(a)

Any object exposing ``cond_cdf``, ``propensity`` and ``marg_density`` with the
signatures of :class:`KernelNuisance` can be used wherever a fitted nuisance is
expected; the tests plug in exact (oracle) nuisances this way.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset

PROPENSITY_FLOOR = 1e-3
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def rule_of_thumb(values) -> float:
    """Silverman-type bandwidth 1.06 * sd * n^(-1/5)."""
    values = np.asarray(values, dtype=float)
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    if not sd > 0:
        sd = 1.0
    return 1.06 * sd * values.size ** (-0.2)


def _as_rows(x, d: int) -> np.ndarray:
    """Query covariates as an ``(nq, d)`` array; ``d = 0`` needs 2-d input."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[1] == d:
        return x
    if d == 0:
        raise ValueError("without covariates pass x with shape (nq, 0)")
    return x.reshape(-1, d)


class FallbackWarning(RuntimeWarning):
    """A kernel denominator vanished and the global estimate was used."""


@dataclass(frozen=True, eq=False)
class KernelNuisance:
    """Fitted kernel nuisances.

    Parameters
    ----------
    data : Dataset
        Training rows.
    h : ndarray, shape (d,)
        Covariate bandwidths.
    nu : float
        Treatment bandwidth (unused when ``discrete``).
    discrete : bool
        Match treatments exactly instead of smoothing over them.
    floor : float
        Lower clip for propensity and marginal treatment density values.
    """

    data: Dataset
    h: np.ndarray
    nu: float
    discrete: bool = False
    floor: float = PROPENSITY_FLOOR

    def __post_init__(self):
        h = np.broadcast_to(np.asarray(self.h, dtype=float), (self.data.d,)).copy()
        if np.any(h <= 0) or not self.nu > 0:
            raise ValueError("bandwidths must be positive")
        object.__setattr__(self, "h", h)
        order = np.argsort(self.data.y, kind="stable")
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "_y_sorted", self.data.y[order])

    # -- kernels (log domain) ---------------------------------------------

    def _log_kx(self, xq) -> np.ndarray:
        X = self.data.x
        xq = _as_rows(xq, X.shape[1])
        if X.shape[1] == 0:
            return np.zeros((xq.shape[0], X.shape[0]))
        z = (xq[:, None, :] - X[None, :, :]) / self.h
        return -0.5 * np.einsum("ijk,ijk->ij", z, z)

    def _log_ka(self, aq) -> np.ndarray:
        """Log treatment kernel, normalized as a density in ``a`` (continuous)."""
        aq = np.atleast_1d(np.asarray(aq, dtype=float))
        A = self.data.a
        if self.discrete:
            return np.where(aq[:, None] == A[None, :], 0.0, -np.inf)
        z = (aq[:, None] - A[None, :]) / self.nu
        return -0.5 * z * z - _LOG_SQRT_2PI - np.log(self.nu)

    def _ecdf_rows(self, W: np.ndarray, y) -> np.ndarray:
        """Rows of ``W`` (weights over training points) -> weighted CDFs on ``y``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        cum = np.cumsum(W[:, self._order], axis=1)
        cum /= cum[:, -1:]  # exact 1 at the top despite summation roundoff
        idx = np.searchsorted(self._y_sorted, y, side="right")
        out = np.zeros((W.shape[0], y.size))
        hit = idx > 0
        out[:, hit] = cum[:, idx[hit] - 1]
        return out

    def _global_weights(self) -> np.ndarray:
        return np.full(self.data.n, 1.0 / self.data.n)

    def nw_weights(self, xq, aq) -> tuple[np.ndarray, np.ndarray]:
        """Normalized Nadaraya-Watson weights for paired queries ``(x_i, a_i)``.

        Returns the ``(nq, n)`` weight matrix and a boolean mask of queries for
        which every kernel weight vanished (those fall back to uniform weights).
        """
        xq = _as_rows(xq, self.data.d)
        aq = np.broadcast_to(np.atleast_1d(np.asarray(aq, dtype=float)), (xq.shape[0],))
        logw = self._log_kx(xq) + self._log_ka(aq)
        m = logw.max(axis=1, keepdims=True)
        bad = ~np.isfinite(m[:, 0])
        W = np.exp(logw - np.where(bad[:, None], 0.0, m))
        W[bad] = self._global_weights()
        W /= W.sum(axis=1, keepdims=True)
        return W, bad

    # -- public evaluators -------------------------------------------------

    def cond_cdf(self, y, x, a, return_flags: bool = False):
        """F(y | x_i, a_i) for paired query rows; shape ``(nq, len(y))``.

        Monotone in ``y`` (running maximum, a no-op for nonnegative weights).
        """
        W, bad = self.nw_weights(x, a)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        order = np.argsort(y, kind="stable")
        F = self._ecdf_rows(W, y[order])
        F = np.clip(np.maximum.accumulate(F, axis=1), 0.0, 1.0)
        out = np.empty_like(F)
        out[:, order] = F
        if bad.any():
            warnings.warn(f"{int(bad.sum())} query point(s) had no kernel mass; "
                          "used the global empirical CDF", FallbackWarning, stacklevel=2)
        return (out, bad) if return_flags else out

    def propensity(self, a, x) -> np.ndarray:
        """pi(a_i | x_i) for paired rows, clipped below at ``floor``.

        A density for continuous treatments and a mass function for discrete
        ones.
        """
        xq = _as_rows(x, self.data.d)
        aq = np.broadcast_to(np.atleast_1d(np.asarray(a, dtype=float)), (xq.shape[0],))
        lkx = self._log_kx(xq)
        m = lkx.max(axis=1, keepdims=True)
        kx = np.exp(lkx - m)
        ka = np.exp(self._log_ka(aq))
        num = np.sum(kx * ka, axis=1)
        den = np.sum(kx, axis=1)
        out = num / den
        return np.maximum(out, self.floor)

    def marg_density(self, a) -> np.ndarray:
        """Kernel density (or relative frequency) of the treatment, clipped."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        vals = np.exp(self._log_ka(a)).mean(axis=1)
        return np.maximum(vals, self.floor)

    def plugin_cdf(self, a_values, y_grid, x_rows=None, return_flags: bool = False):
        """Average of F(y | x_i, a) over covariate rows, for each ``a``.

        Returns an array of shape ``(len(a_values), len(y_grid))``. The
        default rows are the training covariates.
        """
        X = self.data.x if x_rows is None else _as_rows(x_rows, self.data.d)
        a_values = np.atleast_1d(np.asarray(a_values, dtype=float))
        lkx = self._log_kx(X)
        kx = np.exp(lkx - lkx.max(axis=1, keepdims=True))
        lka = self._log_ka(a_values)
        ma = lka.max(axis=1, keepdims=True)
        no_match = ~np.isfinite(ma[:, 0])
        ka = np.exp(lka - np.where(no_match[:, None], 0.0, ma))
        D = kx @ ka.T  # (n_x, n_a)
        zero = D <= 0
        R = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, D))
        omega = ka.T * (kx.T @ R)  # (n, n_a)
        # rows whose denominator underflowed: recompute in the log domain
        for i, k in zip(*np.nonzero(zero)):
            if no_match[k]:
                continue
            logw = lkx[i] + lka[k]
            mk = logw.max()
            w = np.exp(logw - mk)
            omega[:, k] += w / w.sum()
            zero[i, k] = False
        n_fallback = zero.sum(axis=0)
        omega += n_fallback[None, :] / self.data.n
        F = self._ecdf_rows(omega.T / X.shape[0], y_grid)
        F = np.clip(np.maximum.accumulate(F, axis=1), 0.0, 1.0)
        flagged = n_fallback > 0
        if flagged.any():
            warnings.warn(f"{int(n_fallback.sum())} (row, a) pair(s) had no kernel mass; "
                          "used the global empirical CDF", FallbackWarning, stacklevel=2)
        return (F, flagged) if return_flags else F

    @property
    def bandwidths(self) -> dict:
        return {"h": self.h.tolist(), "nu": float(self.nu)}


def _resolve_treatment(data: Dataset, treatment: str) -> bool:
    if treatment == "auto":
        return data.is_discrete()
    if treatment not in ("discrete", "continuous"):
        raise ValueError("treatment must be 'auto', 'discrete' or 'continuous'")
    return treatment == "discrete"


def fit_kernel_cond_cdf(data: Dataset, h=None, nu=None, treatment: str = "auto",
                        floor: float = PROPENSITY_FLOOR) -> KernelNuisance:
    """Fit the kernel nuisances.

    ``h`` (scalar or per covariate) and ``nu`` default to the rule of thumb
    computed per dimension.
    """
    if data.n < 2:
        raise ValueError("need at least two rows to fit nuisances")
    if h is None:
        h = [rule_of_thumb(data.x[:, k]) for k in range(data.d)] if data.d else []
    if nu is None:
        nu = rule_of_thumb(data.a)
    return KernelNuisance(data, np.asarray(h, dtype=float), float(nu),
                          discrete=_resolve_treatment(data, treatment), floor=floor)


def fit_propensity(data: Dataset, h=None, nu=None, treatment: str = "auto",
                   floor: float = PROPENSITY_FLOOR) -> KernelNuisance:
    """Same fit as :func:`fit_kernel_cond_cdf`; named for the propensity use."""
    return fit_kernel_cond_cdf(data, h, nu, treatment, floor)
