"""One-dimensional optimal transport and Frechet-Hoeffding type bounds.

Everything here works on :class:`~conservative_cf.dist1d.Dist1D` marginals.
Pairs of atomic laws are handled exactly through the north-west corner
(comonotone) construction; anything involving a continuous-mode law is
integrated over ``u`` with a midpoint rule that excludes ``u in {0, 1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dist1d import ATOMIC, CONTINUOUS, Dist1D, midpoint_grid

DEFAULT_NQUAD = 1024
ORDER_TOL = 1e-9


# ---------------------------------------------------------------------------
# couplings
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint law of two atomic marginals as a dense mass matrix.

    ``mass[i, j]`` is the probability of ``(row_marginal.support[i],
    col_marginal.support[j])``.
    """

    row_marginal: Dist1D
    col_marginal: Dist1D
    mass: np.ndarray
    atol: float = 1e-12

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        m, n = self.row_marginal.support.size, self.col_marginal.support.size
        if mass.shape != (m, n):
            raise ValueError(f"mass has shape {mass.shape}, expected {(m, n)}")
        if np.any(mass < -self.atol):
            raise ValueError("coupling mass must be nonnegative")
        if np.max(np.abs(mass.sum(1) - self.row_marginal.masses)) > self.atol:
            raise ValueError("row sums do not match the row marginal")
        if np.max(np.abs(mass.sum(0) - self.col_marginal.masses)) > self.atol:
            raise ValueError("column sums do not match the column marginal")
        mass = np.maximum(mass, 0.0)
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @property
    def rows(self) -> np.ndarray:
        return self.row_marginal.support

    @property
    def cols(self) -> np.ndarray:
        return self.col_marginal.support

    def expect(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        """E[fn(Y0, Y1)] under the coupling."""
        return float(np.sum(self.mass * fn(self.rows[:, None], self.cols[None, :])))

    def sq_cost(self) -> float:
        return self.expect(lambda x, y: (y - x) ** 2)

    def covariance(self) -> float:
        m0 = self.row_marginal.mean()
        m1 = self.col_marginal.mean()
        return self.expect(lambda x, y: x * y) - m0 * m1

    def joint_cdf(self, y0: float, y1: float) -> float:
        """P(Y0 <= y0, Y1 <= y1)."""
        return float(self.mass[self.rows <= y0][:, self.cols <= y1].sum())

    def difference_cdf(self, t: float) -> float:
        """P(Y1 - Y0 <= t)."""
        diff = self.cols[None, :] - self.rows[:, None]
        return float(self.mass[diff <= t].sum())

    def transition(self) -> np.ndarray:
        """Row-normalized conditional law of the column given the row."""
        rs = self.mass.sum(1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rs > 0, self.mass / rs, 0.0)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows.tolist(),
            "cols": self.cols.tolist(),
            "mass": self.mass.tolist(),
        }


def _require_atomic(*dists: Dist1D):
    for d in dists:
        if d.mode != ATOMIC:
            raise ValueError("this operation needs atomic marginals")


def comonotone_coupling(P: Dist1D, Q: Dist1D) -> Coupling:
    """Quantile coupling ``(P^-1(U), Q^-1(U))`` by the north-west corner rule."""
    _require_atomic(P, Q)
    levels = np.union1d(P.cdf, Q.cdf)
    levels = levels[levels > 0]
    mass = np.diff(levels, prepend=0.0)
    i = np.searchsorted(P.cdf, levels, side="left")
    j = np.searchsorted(Q.cdf, levels, side="left")
    i = np.minimum(i, P.support.size - 1)
    j = np.minimum(j, Q.support.size - 1)
    M = np.zeros((P.support.size, Q.support.size))
    np.add.at(M, (i, j), mass)
    return Coupling(P, Q, M)


def _reflect(P: Dist1D) -> Dist1D:
    return Dist1D.from_masses(-P.support[::-1], P.masses[::-1])


def antitone_coupling(P: Dist1D, Q: Dist1D) -> Coupling:
    """Coupling ``(P^-1(1-U), Q^-1(U))``."""
    _require_atomic(P, Q)
    flipped = comonotone_coupling(_reflect(P), Q)
    return Coupling(P, Q, flipped.mass[::-1])


# ---------------------------------------------------------------------------
# maps, distances, quantile integrals
# ---------------------------------------------------------------------------

def ot_map_1d(P: Dist1D, Q: Dist1D, y):
    """Monotone transport map ``Q^-1(F_P(y))``."""
    return Q.quantile_at(np.clip(P.cdf_at(y), 0.0, 1.0))


def antitone_map(F0: Dist1D, F1: Dist1D, y):
    """Decreasing rearrangement ``F1^-1(1 - F0(y))``."""
    return F1.quantile_at(np.clip(1.0 - np.asarray(F0.cdf_at(y)), 0.0, 1.0))


def quantile_matrix(dists: Sequence[Dist1D], u: np.ndarray) -> np.ndarray:
    return np.vstack([d.quantile_at(u) for d in dists])


def _quantile_integral(P: Dist1D, Q: Dist1D, fn, n_quad: int) -> float:
    """``int_0^1 fn(P^-1(u), Q^-1(u)) du``; exact when both are atomic."""
    if P.mode == ATOMIC and Q.mode == ATOMIC:
        return comonotone_coupling(P, Q).expect(fn)
    u = midpoint_grid(n_quad)
    return float(np.mean(fn(P.quantile_at(u), Q.quantile_at(u))))


def w2_distance(P: Dist1D, Q: Dist1D, n_quad: int = DEFAULT_NQUAD) -> float:
    """2-Wasserstein distance between two laws on the line."""
    val = _quantile_integral(P, Q, lambda x, y: (x - y) ** 2, n_quad)
    return float(np.sqrt(max(val, 0.0)))


def conservative_psi_lower_binary(F0: Dist1D, F1: Dist1D, n_quad: int = DEFAULT_NQUAD) -> float:
    """Smallest E[(Y(1) - Y(0))^2] over couplings of the two marginals."""
    return max(_quantile_integral(F0, F1, lambda x, y: (y - x) ** 2, n_quad), 0.0)


def covariance_bounds(F0: Dist1D, F1: Dist1D, n_quad: int = DEFAULT_NQUAD) -> tuple[float, float]:
    """Sharp lower/upper bounds on Cov(Y(0), Y(1)).

    The upper bound is attained by the comonotone coupling and the lower one
    by the antitone coupling.
    """
    if F0.mode == ATOMIC and F1.mode == ATOMIC:
        return (antitone_coupling(F0, F1).covariance(),
                comonotone_coupling(F0, F1).covariance())
    u = midpoint_grid(n_quad)
    q0 = F0.quantile_at(u)
    q1 = F1.quantile_at(u)
    mu0, mu1 = q0.mean(), q1.mean()
    hi = float(np.mean(q1 * q0) - mu0 * mu1)
    lo = float(np.mean(q1 * q0[::-1]) - mu0 * mu1)
    return lo, hi


# ---------------------------------------------------------------------------
# Frechet-Hoeffding bounds
# ---------------------------------------------------------------------------

def fh_cdf_bounds(F0: Dist1D, F1: Dist1D, y0: float, y1: float) -> tuple[float, float]:
    """Bounds ``(L, U)`` on the joint CDF P(Y(0) <= y0, Y(1) <= y1)."""
    a, b = F0.cdf_at(y0), F1.cdf_at(y1)
    return max(a + b - 1.0, 0.0), min(a, b)


def _refine(points: np.ndarray, factor: int) -> np.ndarray:
    points = np.unique(points)
    if points.size < 2 or factor <= 1:
        return points
    steps = np.linspace(0.0, 1.0, factor + 1)[:-1]
    fine = points[:-1, None] + steps[None, :] * np.diff(points)[:, None]
    return np.concatenate([fine.ravel(), points[-1:]])


def default_z_grid(F0: Dist1D, F1: Dist1D, t: float = 0.0, refine: int = 4) -> np.ndarray:
    """Union of the F1 support and the F0 support shifted by ``t``, refined."""
    pts = np.union1d(F1.support, F0.support + t)
    pts = _refine(pts, refine)
    span = max(pts[-1] - pts[0], 1.0)
    return np.concatenate([[pts[0] - span], pts, [pts[-1] + span]])


def fh_difference_cdf_bounds(F0: Dist1D, F1: Dist1D, t, z_grid=None) -> tuple:
    """Bounds on G(t) = P(Y(1) - Y(0) <= t) over all couplings.

    The supremum for the lower bound uses the left limit ``F0((z - t)-)``,
    which is what makes the bound sharp when the marginals have atoms (for
    continuous marginals the two coincide). Sup and inf are taken over
    ``z_grid``; the default grid contains every breakpoint, so for atomic
    laws the grid values are the exact extrema.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    lo = np.empty_like(t_arr)
    hi = np.empty_like(t_arr)
    for k, tk in enumerate(t_arr):
        z = default_z_grid(F0, F1, tk) if z_grid is None else np.asarray(z_grid, dtype=float)
        if z.size == 0:
            raise ValueError("z_grid must be nonempty")
        f1 = F1.cdf_at(z)
        lo[k] = max(float(np.max(f1 - F0.cdf_left(z - tk))), 0.0)
        hi[k] = 1.0 + min(float(np.min(f1 - F0.cdf_at(z - tk))), 0.0)
    if np.ndim(t) == 0:
        return float(lo[0]), float(hi[0])
    return lo, hi


# ---------------------------------------------------------------------------
# barycenters and Markov chains
# ---------------------------------------------------------------------------

def barycenter(dists: Sequence[Dist1D], weights=None, u_grid=None) -> Dist1D:
    """Wasserstein barycenter: the law whose quantile function is the
    weighted average of the input quantile functions.

    Atomic inputs give an exact atomic barycenter. Otherwise the quantile
    average is taken on ``u_grid`` (default: 1024 midpoints plus the two
    endpoints, which are finite for grid-supported laws) and returned as a
    continuous-mode law.
    """
    dists = list(dists)
    if not dists:
        raise ValueError("barycenter of an empty family")
    w = np.full(len(dists), 1.0 / len(dists)) if weights is None else np.asarray(weights, float)
    if w.shape != (len(dists),) or np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-9):
        raise ValueError("weights must be nonnegative, one per law, and sum to 1")
    w = w / w.sum()
    if all(d.mode == ATOMIC for d in dists):
        levels = np.unique(np.concatenate([d.cdf for d in dists]))
        levels = levels[levels > 0]
        mass = np.diff(levels, prepend=0.0)
        vals = sum(wk * d.quantile_at(levels) for wk, d in zip(w, dists))
        return Dist1D.from_samples(vals, mass)
    if u_grid is None:
        u_grid = np.concatenate([[0.0], midpoint_grid(DEFAULT_NQUAD), [1.0]])
    u = np.asarray(u_grid, dtype=float)
    vals = w @ quantile_matrix(dists, u)
    return _law_from_quantiles(vals, u)


def _law_from_quantiles(vals: np.ndarray, u: np.ndarray) -> Dist1D:
    """Continuous-mode law from nondecreasing quantile values on levels ``u``."""
    vals = np.maximum.accumulate(vals)
    support, last = np.unique(vals[::-1], return_index=True)
    # for repeated values keep the largest level
    cdf = u[::-1][last]
    if support.size == 1:
        return Dist1D.point_mass(float(support[0]))
    cdf = cdf.copy()
    cdf[-1] = 1.0
    return Dist1D.from_grid(support, cdf, CONTINUOUS)


def markov_chain_coupling(dists: Sequence[Dist1D]) -> list[Coupling]:
    """Consecutive comonotone couplings of an ordered list of atomic laws.

    Composing the transitions gives a Markov chain whose one-dimensional
    marginals are the inputs.
    """
    dists = list(dists)
    if len(dists) < 2:
        raise ValueError("a chain needs at least two marginals")
    return [comonotone_coupling(P, Q) for P, Q in zip(dists[:-1], dists[1:])]


def chain_marginals(chain: Sequence[Coupling]) -> list[np.ndarray]:
    """Propagate the first row marginal through the chain's transitions."""
    w = chain[0].row_marginal.masses
    out = [w]
    for c in chain:
        w = w @ c.transition()
        out.append(w)
    return out


def sample_chain_paths(chain: Sequence[Coupling], n: int, rng) -> np.ndarray:
    """Draw ``n`` index paths (shape ``(n, len(chain) + 1)``) from the chain."""
    rng = np.random.default_rng(rng)
    first = chain[0].row_marginal.masses
    idx = rng.choice(first.size, size=n, p=first / first.sum())
    paths = [idx]
    for c in chain:
        cum = np.cumsum(c.transition(), axis=1)
        r = rng.random(n)
        nxt = (r[:, None] > cum[idx]).sum(1)
        idx = np.minimum(nxt, cum.shape[1] - 1)
        paths.append(idx)
    return np.column_stack(paths)


# ---------------------------------------------------------------------------
# maximal effect under monotonicity Y(1) >= Y(0)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MonotoneMaxLaw:
    """Maximizer of E[(Y(1) - Y(0))^2] over couplings with Y(1) >= Y(0).

    The law is described on a grid ``z`` that contains every breakpoint of
    both marginals. Mass present in both marginals stays put; the excess
    ``(p0 - p1)^+`` at ``x`` jumps to ``jump_map(x)``, the first point to the
    right where ``D = F0 - F1`` drops strictly below ``D(x)``.

    Attributes
    ----------
    theta : float
        Total staying mass ``int min(p0, p1)``.
    coupling : Coupling
        The joint law on the grid, from differencing :meth:`joint_cdf`.
    value : float
        E[(Y(1) - Y(0))^2] under ``coupling``.
    flags : list of str
        Non-fatal diagnostics (flat positive stretches of ``D`` make the
        strict-inequality infimum sensitive to the grid).
    """

    F0: Dist1D
    F1: Dist1D
    z: np.ndarray
    D: np.ndarray
    theta: float
    coupling: Coupling
    value: float
    flags: list = field(default_factory=list)

    def _D_at(self, x):
        return np.asarray(self.F0.cdf_at(x)) - np.asarray(self.F1.cdf_at(x))

    def jump_map(self, x: float) -> float:
        """``inf{y >= x : D(y) < D(x)}``; returns ``x`` when the set is empty."""
        x = float(x)
        dx = float(self._D_at(x))
        tol = 1e-12
        ahead = np.nonzero((self.z >= x) & (self.D < dx - tol))[0]
        if ahead.size == 0:
            return x
        k = int(ahead[0])
        if self.F0.mode == ATOMIC and self.F1.mode == ATOMIC:
            return float(self.z[k])
        left = max(x, float(self.z[k - 1])) if k > 0 else x
        d_left = float(self._D_at(left))
        d_right = float(self.D[k])
        if d_left <= dx - tol or d_left == d_right:
            return left
        frac = (d_left - dx) / (d_left - d_right)
        return left + frac * (float(self.z[k]) - left)

    def stay_prob(self, x: float) -> float:
        """Probability that Y(1) = Y(0) given Y(0) = x."""
        p0, p1 = self._cell_masses(x)
        return 1.0 if p0 <= 0 else min(p0, p1) / p0

    def _cell_masses(self, x: float) -> tuple[float, float]:
        if self.F0.mode == ATOMIC and self.F1.mode == ATOMIC:
            return (float(self.F0.cdf_at(x) - self.F0.cdf_left(x)),
                    float(self.F1.cdf_at(x) - self.F1.cdf_left(x)))
        k = int(np.clip(np.searchsorted(self.z, x, side="right"), 1, self.z.size - 1))
        lo, hi = self.z[k - 1], self.z[k]
        return (float(self.F0.cdf_at(hi) - self.F0.cdf_at(lo)),
                float(self.F1.cdf_at(hi) - self.F1.cdf_at(lo)))

    def cond_mean(self, x: float) -> float:
        """E[Y(1) | Y(0) = x] = s(x) x + (1 - s(x)) T(x)."""
        s = self.stay_prob(x)
        return s * float(x) + (1.0 - s) * self.jump_map(x)

    def joint_cdf(self, x: float, y: float) -> float:
        """F*(x, y) = P(Y(0) <= x, Y(1) <= y)."""
        if y <= x:
            return float(self.F1.cdf_at(y))
        inside = self.D[(self.z >= x) & (self.z <= y)]
        ends = self._D_at(np.array([x, y]))
        m = float(np.min(np.concatenate([inside, ends])))
        return float(self.F0.cdf_at(x)) - m


def check_stochastic_order(F0: Dist1D, F1: Dist1D, grid=None, tol: float = ORDER_TOL):
    """Raise ``ValueError`` unless F0(y) >= F1(y) on the grid."""
    z = np.union1d(F0.support, F1.support) if grid is None else np.asarray(grid)
    gap = np.asarray(F0.cdf_at(z)) - np.asarray(F1.cdf_at(z))
    bad = z[gap < -tol]
    if bad.size:
        shown = ", ".join(f"{v:.6g}" for v in bad[:10])
        more = "" if bad.size <= 10 else f" (+{bad.size - 10} more)"
        raise ValueError(f"stochastic ordering F0 >= F1 violated at y = {shown}{more}")


def nutz_max_monotone(F0: Dist1D, F1: Dist1D) -> MonotoneMaxLaw:
    """Maximal quadratic effect among couplings supported on {Y(1) >= Y(0)}.

    The joint CDF is F1(y) for y <= x and F0(x) - inf_{z in [x, y]} (F0(z) -
    F1(z)) for y > x. It is evaluated on the union of both grids, where the
    infimum is exact for atomic and piecewise-linear CDFs, and differenced
    into a mass matrix.
    """
    z = np.union1d(F0.support, F1.support)
    check_stochastic_order(F0, F1, z)
    f0 = np.asarray(F0.cdf_at(z))
    f1 = np.asarray(F1.cdf_at(z))
    D = np.maximum(f0 - f1, 0.0)
    # running minima of D over index windows [i, j]
    n = z.size
    win_min = np.full((n, n), np.inf)
    for i in range(n):
        win_min[i, i:] = np.minimum.accumulate(D[i:])
    Fs = np.where(z[None, :] <= z[:, None], f1[None, :], f0[:, None] - win_min)
    Fs = np.clip(Fs, 0.0, 1.0)
    mass = np.diff(np.diff(Fs, axis=0, prepend=0.0), axis=1, prepend=0.0)
    mass = np.where(np.abs(mass) < 1e-15, 0.0, mass)
    P0 = Dist1D.from_grid(z, f0, ATOMIC)
    P1 = Dist1D.from_grid(z, f1, ATOMIC)
    rows = np.searchsorted(z, P0.support)
    cols = np.searchsorted(z, P1.support)
    M = mass[np.ix_(rows, cols)]
    coupling = Coupling(P0, P1, M, atol=1e-9)
    value = coupling.sq_cost()
    theta = float(np.sum(np.minimum(np.diff(f0, prepend=0.0), np.diff(f1, prepend=0.0))))
    flags = []
    flat = (D[1:] == D[:-1]) & (D[1:] > 1e-12)
    if F0.mode != ATOMIC and np.any(flat):
        flags.append("flat stretch of F0 - F1 at a positive level; jump targets "
                     "there depend on the strict-inequality grid infimum")
    return MonotoneMaxLaw(F0=F0, F1=F1, z=z, D=D, theta=theta, coupling=coupling,
                          value=value, flags=flags)
