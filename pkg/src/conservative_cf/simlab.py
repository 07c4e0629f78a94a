"""Simulation designs with known truth, and brute-force coupling oracles.

The oracles deliberately avoid the quantile constructions used in
:mod:`conservative_cf.transport`: they enumerate permutations or solve the
transportation linear program directly, so agreement between the two is a
genuine check.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog
from scipy.special import ndtr

from .counterfactual import CdfField
from .data import Dataset
from .dist1d import Dist1D
from .transport import Coupling

ENUM_MAX_ATOMS = 8
LP_MAX_ATOMS = 200
CS_TOL = 1e-9


# ---------------------------------------------------------------------------
# data-generating processes
# ---------------------------------------------------------------------------

def hirano_truth(a):
    """E[Y(a)] = a + E[S exp(-a S)] with S ~ Gamma(2, 1), i.e. a + 2 / (1 + a)^3."""
    a = np.asarray(a, dtype=float)
    return a + 2.0 / (1.0 + a) ** 3


def gen_hirano(n: int, seed=0, propensity: str = "rate"):
    """X1, X2 ~ Exp(1); A ~ Exponential with rate (or mean) X1 + X2;
    Y = A + S exp(-A S) + N(0, 1) with S = X1 + X2.

    Returns ``(Dataset, truth)`` where ``truth(a) = E[Y(a)]``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if propensity not in ("rate", "mean"):
        raise ValueError("propensity must be 'rate' or 'mean'")
    rng = np.random.default_rng(seed)
    x = rng.exponential(1.0, size=(n, 2))
    s = x.sum(axis=1)
    scale = 1.0 / s if propensity == "rate" else s
    a = rng.exponential(scale)
    y = a + s * np.exp(-a * s) + rng.standard_normal(n)
    return Dataset(x, a, y), hirano_truth


def hirano_cond_cdf(y, x, a):
    """Exact F(y | x, a) for the Hirano design, shape ``(len(x), len(y))``."""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    a = np.asarray(a, dtype=float)
    s = x.sum(axis=1)
    m = a + s * np.exp(-a * s)
    return ndtr(np.atleast_1d(y)[None, :] - m[:, None])


def hirano_propensity(a, x, propensity: str = "rate"):
    s = np.asarray(x, dtype=float).reshape(-1, 2).sum(axis=1)
    rate = s if propensity == "rate" else 1.0 / s
    return rate * np.exp(-rate * np.asarray(a, dtype=float))


def gen_two_lines(n: int, a_range=(1.0, 2.0), seed=0) -> Dataset:
    """Half the units follow Y(a) = a - 1, the other half Y(a) = 1 - a.

    No covariates and no noise; A is uniform on ``a_range``.
    """
    lo, hi = map(float, a_range)
    if not hi > lo:
        raise ValueError("a_range must be nondegenerate")
    rng = np.random.default_rng(seed)
    sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    a = rng.uniform(lo, hi, n)
    return Dataset(np.empty((n, 0)), a, sign * (a - 1.0))


def gen_location_gauss(n: int, seed=0, confounding: float = 0.5):
    """X ~ N(0,1), A = c X + N(0,1), Y = A + X + N(0,1); so Y(a) ~ N(a, 2)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    a = confounding * x + rng.standard_normal(n)
    y = a + x + rng.standard_normal(n)
    return Dataset(x[:, None], a, y), (lambda t: np.asarray(t, dtype=float))


@dataclass(frozen=True)
class BinaryGaussDesign:
    """Randomized binary treatment: X ~ N(0,1), A ~ Bernoulli(p),
    Y = mu_A + beta_A X + sigma_A eps.

    Each counterfactual law is N(mu_a, beta_a^2 + sigma_a^2), so the quadratic
    effect has the closed form ``2 w0 w1 [(mu1 - mu0)^2 + (s1 - s0)^2]``.
    """

    mu: tuple = (0.0, 1.0)
    beta: tuple = (1.0, 1.0)
    sigma: tuple = (1.0, 0.5)
    p: float = 0.5

    @property
    def sd(self) -> np.ndarray:
        return np.hypot(self.beta, self.sigma)

    @property
    def weights(self) -> np.ndarray:
        return np.array([1.0 - self.p, self.p])

    @property
    def psi(self) -> float:
        w0, w1 = self.weights
        s0, s1 = self.sd
        return 2.0 * w0 * w1 * ((self.mu[1] - self.mu[0]) ** 2 + (s1 - s0) ** 2)

    def sample(self, n: int, seed=0) -> Dataset:
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(n)
        a = (rng.random(n) < self.p).astype(float)
        k = a.astype(int)
        mu, beta, sigma = (np.asarray(v, dtype=float)[k] for v in (self.mu, self.beta, self.sigma))
        y = mu + beta * x + sigma * rng.standard_normal(n)
        return Dataset(x[:, None], a, y)

    def marginal_cdf(self, a: int, y):
        return ndtr((np.asarray(y, dtype=float) - self.mu[int(a)]) / self.sd[int(a)])

    def true_field(self, n_grid: int = 8001, width: float = 9.0) -> CdfField:
        laws = []
        for a in (0, 1):
            grid = np.linspace(self.mu[a] - width * self.sd[a], self.mu[a] + width * self.sd[a],
                               n_grid)
            laws.append(Dist1D.from_grid(grid, self.marginal_cdf(a, grid)))
        return CdfField(np.array([0.0, 1.0]), laws, self.weights, "oracle")

    def oracle(self) -> "BinaryGaussOracle":
        return BinaryGaussOracle(self)


@dataclass(frozen=True)
class BinaryGaussOracle:
    """Exact nuisances of :class:`BinaryGaussDesign` in the fitted-nuisance interface."""

    design: BinaryGaussDesign
    discrete: bool = True
    floor: float = 0.0

    def cond_cdf(self, y, x, a):
        x = np.asarray(x, dtype=float).ravel()
        k = np.broadcast_to(np.asarray(a, dtype=int), x.shape)
        d = self.design
        mu = np.asarray(d.mu)[k] + np.asarray(d.beta)[k] * x
        return ndtr((np.atleast_1d(y)[None, :] - mu[:, None]) / np.asarray(d.sigma)[k][:, None])

    def propensity(self, a, x):
        x = np.asarray(x, dtype=float).ravel()
        a = np.broadcast_to(np.asarray(a, dtype=float), x.shape)
        return np.where(a == 1.0, self.design.p, 1.0 - self.design.p)

    def marg_density(self, a):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return np.where(a == 1.0, self.design.p, 1.0 - self.design.p)


@dataclass(frozen=True)
class DgpSpec:
    kind: str
    n: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("hirano", "two_lines", "location_gauss", "binary_gauss"):
            raise ValueError(f"unknown design {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be positive")


def simulate(spec: DgpSpec, truth_grid=None) -> tuple[Dataset, dict]:
    """Draw a dataset and a JSON-ready description of the known truth."""
    p = dict(spec.params)
    if spec.kind == "hirano":
        data, truth = gen_hirano(spec.n, spec.seed, p.get("propensity", "rate"))
        grid = np.linspace(0.0, 3.0, 31) if truth_grid is None else np.asarray(truth_grid)
        info = {"estimand": "E[Y(a)]", "formula": "a + 2/(1+a)^3",
                "a": grid.tolist(), "value": truth(grid).tolist()}
    elif spec.kind == "two_lines":
        a_range = tuple(p.get("a_range", (1.0, 2.0)))
        data = gen_two_lines(spec.n, a_range, spec.seed)
        info = {"estimand": "Y(a) per unit", "formula": "a - 1 or 1 - a, probability 1/2 each",
                "a_range": list(a_range)}
    elif spec.kind == "location_gauss":
        data, _ = gen_location_gauss(spec.n, spec.seed, p.get("confounding", 0.5))
        info = {"estimand": "law of Y(a)", "formula": "N(a, 2)",
                "infinitesimal_effect": 1.0, "differential_effect": 1.0}
    else:
        design = BinaryGaussDesign(**p)
        data = design.sample(spec.n, spec.seed)
        info = {"estimand": "quadratic effect", "value": design.psi,
                "design": {"mu": list(design.mu), "beta": list(design.beta),
                           "sigma": list(design.sigma), "p": design.p}}
    info["kind"] = spec.kind
    info["n"] = spec.n
    info["seed"] = spec.seed
    return data, info


# ---------------------------------------------------------------------------
# transportation LP oracle
# ---------------------------------------------------------------------------

def _masses(d: Dist1D) -> np.ndarray:
    if not d.is_atomic:
        raise ValueError("oracles need atomic marginals")
    return d.masses


def _peel(cells, r, c):
    """Solve a forest-supported transportation plan exactly by leaf peeling.

    Returns the masses on ``cells`` or None if ``cells`` contain a cycle.
    """
    m = len(r)
    r = np.array(r, dtype=float)
    c = np.array(c, dtype=float)
    remaining = list(range(len(cells)))
    out = np.zeros(len(cells))
    while remaining:
        deg = {}
        for t in remaining:
            i, j = cells[t]
            deg[i] = deg.get(i, 0) + 1
            deg[m + j] = deg.get(m + j, 0) + 1
        for t in remaining:
            i, j = cells[t]
            if deg[i] == 1:
                out[t] = r[i]
                break
            if deg[m + j] == 1:
                out[t] = c[j]
                break
        else:
            return None
        r[i] -= out[t]
        c[j] -= out[t]
        remaining.remove(t)
    return out


def _solve_lp(P: Dist1D, Q: Dist1D, cost: np.ndarray, allowed: np.ndarray, maximize: bool):
    r, c = _masses(P), _masses(Q)
    m, n = cost.shape
    if max(m, n) > LP_MAX_ATOMS:
        raise ValueError(f"LP oracle limited to {LP_MAX_ATOMS} atoms per marginal")
    sign = -1.0 if maximize else 1.0
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    bounds = [(0.0, None if ok else 0.0) for ok in allowed.ravel()]
    res = linprog(sign * cost.ravel(), A_eq=A_eq, b_eq=np.concatenate([r, c]),
                  bounds=bounds, method="highs")
    if res.status != 0:
        raise ValueError(f"transportation LP failed: {res.message}")
    x = res.x.reshape(m, n)
    # duals: reduced costs must be >= 0 on allowed cells and vanish on the support
    y = res.eqlin.marginals
    reduced = sign * cost - (y[:m, None] + y[None, m:])
    scale = max(1.0, float(np.max(np.abs(cost))))
    if np.any(reduced[allowed] < -CS_TOL * scale) or \
            abs(float(np.sum(reduced * x))) > CS_TOL * scale:
        raise RuntimeError("transportation LP optimality certificate failed")
    cells = [tuple(ij) for ij in np.argwhere(x > 1e-13)]
    exact = _peel(cells, r, c)
    mass = np.zeros((m, n))
    if exact is not None and np.all(exact >= -1e-15):
        for (i, j), v in zip(cells, exact):
            mass[i, j] = max(v, 0.0)
        coupling = Coupling(P, Q, mass)
    else:
        coupling = Coupling(P, Q, np.maximum(x, 0.0), atol=1e-9)
    return coupling, float(np.sum(coupling.mass * cost))


def _sq_cost(P: Dist1D, Q: Dist1D) -> np.ndarray:
    return (Q.support[None, :] - P.support[:, None]) ** 2


def brute_force_min_coupling(P: Dist1D, Q: Dist1D, mode: str = "auto"):
    """Exact minimizer of E(Y1 - Y0)^2 over couplings of two atomic laws.

    ``mode="enumerate"`` scans all permutation matchings (equal-weight
    marginals of the same size, at most 8 atoms); ``mode="lp"`` solves the
    transportation LP. ``auto`` enumerates when it can.
    """
    r, c = _masses(P), _masses(Q)
    equal = r.size == c.size and np.allclose(r, 1.0 / r.size, rtol=0, atol=1e-12) \
        and np.allclose(c, 1.0 / c.size, rtol=0, atol=1e-12)
    if mode == "auto":
        mode = "enumerate" if equal and r.size <= ENUM_MAX_ATOMS else "lp"
    if mode == "enumerate":
        if not equal:
            raise ValueError("enumeration needs equal-weight marginals of equal size")
        if r.size > ENUM_MAX_ATOMS:
            raise ValueError(f"enumeration limited to {ENUM_MAX_ATOMS} atoms")
        return _enumerate_min(P, Q)
    if mode != "lp":
        raise ValueError("mode must be 'auto', 'enumerate' or 'lp'")
    cost = _sq_cost(P, Q)
    return _solve_lp(P, Q, cost, np.ones_like(cost, dtype=bool), maximize=False)


def _enumerate_min(P: Dist1D, Q: Dist1D):
    k = P.support.size
    cost = _sq_cost(P, Q)
    perms = np.array(list(itertools.permutations(range(k))))
    totals = cost[np.arange(k)[None, :], perms].sum(axis=1)
    best = int(np.argmin(totals))
    mass = np.zeros((k, k))
    mass[np.arange(k), perms[best]] = 1.0 / k
    # rebuild from the marginals' own masses so sums match to the last bit
    mass = np.where(mass > 0, P.masses[:, None], 0.0)
    coupling = Coupling(P, Q, mass)
    return coupling, float(totals[best] / k)


def brute_force_max_monotone(P: Dist1D, Q: Dist1D):
    """Maximize E(Y1 - Y0)^2 over couplings with Y1 >= Y0 (LP)."""
    cost = _sq_cost(P, Q)
    allowed = Q.support[None, :] >= P.support[:, None]
    fp = np.asarray(P.cdf_at(np.union1d(P.support, Q.support)))
    fq = np.asarray(Q.cdf_at(np.union1d(P.support, Q.support)))
    if np.any(fp < fq - 1e-9):
        raise ValueError("stochastic ordering P >= Q (as CDFs) is violated")
    return _solve_lp(P, Q, cost, allowed, maximize=True)


def brute_force_max_coupling(P: Dist1D, Q: Dist1D):
    """Maximize E(Y1 - Y0)^2 over all couplings (LP)."""
    cost = _sq_cost(P, Q)
    return _solve_lp(P, Q, cost, np.ones_like(cost, dtype=bool), maximize=True)


# ---------------------------------------------------------------------------
# vertex enumeration of the transportation polytope
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _spanning_tree_maps(m: int, n: int):
    """Every spanning tree of K_{m,n} with the linear map (r, c) -> cell masses.

    Returns ``(cells, maps)`` with shapes ``(T, m+n-1, 2)`` and
    ``(T, m+n-1, m+n)``.
    """
    all_cells = [(i, j) for i in range(m) for j in range(n)]
    size = m + n - 1
    cells_out, maps_out = [], []
    for combo in itertools.combinations(range(m * n), size):
        cells = [all_cells[t] for t in combo]
        # union-find cycle check
        parent = list(range(m + n))

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        ok = True
        for i, j in cells:
            ri, rj = find(i), find(m + j)
            if ri == rj:
                ok = False
                break
            parent[ri] = rj
        if not ok:
            continue
        # symbolic peel: residual of each node as a vector over (r, c)
        resid = np.eye(m + n)
        remaining = list(range(size))
        M = np.zeros((size, m + n))
        while remaining:
            deg = np.zeros(m + n, dtype=int)
            for t in remaining:
                i, j = cells[t]
                deg[i] += 1
                deg[m + j] += 1
            for t in remaining:
                i, j = cells[t]
                if deg[i] == 1:
                    M[t] = resid[i]
                    break
                if deg[m + j] == 1:
                    M[t] = resid[m + j]
                    break
            resid[i] -= M[t]
            resid[m + j] -= M[t]
            remaining.remove(t)
        cells_out.append(cells)
        maps_out.append(M)
    return np.array(cells_out), np.array(maps_out)


def transportation_vertices(P: Dist1D, Q: Dist1D, tol: float = 1e-12) -> list[Coupling]:
    """All vertices of the set of couplings of two small atomic laws.

    Each vertex is a basic feasible solution: its support lies in a spanning
    tree of the bipartite graph, where the plan is determined by the
    marginals. Enumerating spanning trees therefore reaches every vertex.
    """
    r, c = _masses(P), _masses(Q)
    m, n = r.size, c.size
    if m * n > 20:
        raise ValueError("vertex enumeration limited to m * n <= 20 cells")
    if m == 1 or n == 1:
        return [Coupling(P, Q, np.outer(r, c))]
    cells, maps = _spanning_tree_maps(m, n)
    vals = maps @ np.concatenate([r, c])  # (T, m+n-1)
    feasible = np.all(vals >= -tol, axis=1)
    out, seen = [], set()
    for t in np.nonzero(feasible)[0]:
        mass = np.zeros((m, n))
        mass[cells[t][:, 0], cells[t][:, 1]] = np.maximum(vals[t], 0.0)
        key = tuple(np.round(mass.ravel(), 12))
        if key in seen:
            continue
        seen.add(key)
        out.append(Coupling(P, Q, mass, atol=1e-12))
    return out


# ---------------------------------------------------------------------------
# multi-marginal enumeration
# ---------------------------------------------------------------------------

def _equal_weight_atoms(d) -> np.ndarray:
    if isinstance(d, Dist1D):
        mass = d.masses
        k = int(round(1.0 / mass[0]))
        if not np.allclose(mass, 1.0 / k, atol=1e-12):
            raise ValueError("multi-marginal oracle needs equal-weight atoms")
        return d.support.copy()
    return np.sort(np.asarray(d, dtype=float).ravel())


def multimarginal_min_coupling(dists, pair_weights=None):
    """Exhaustive minimizer of ``sum_{a<b} w_ab E(Y_a - Y_b)^2`` over matchings.

    Parameters
    ----------
    dists : sequence of Dist1D or arrays
        At most 4 marginals, each with the same number (at most 5) of
        equal-weight atoms. Arrays may repeat values.
    pair_weights : (k, k) array, optional
        Defaults to all ones.

    Returns
    -------
    assignment : ndarray (k, n_atoms)
        ``assignment[:, i]`` lists the atom index of each marginal on path
        ``i``; paths follow the sorted atoms of the first marginal.
    value : float
    """
    atoms = [_equal_weight_atoms(d) for d in dists]
    k = len(atoms)
    if k < 2 or k > 4:
        raise ValueError("need between 2 and 4 marginals")
    size = atoms[0].size
    if any(a.size != size for a in atoms) or size > 5:
        raise ValueError("marginals must share a common number (<= 5) of atoms")
    W = np.ones((k, k)) if pair_weights is None else np.asarray(pair_weights, dtype=float)
    perms = np.array(list(itertools.permutations(range(size))))
    ident = np.arange(size)
    # choices[m]: candidate index orders for marginal m (the first one is fixed)
    choices = [ident[None, :]] + [perms] * (k - 1)
    total = np.zeros(tuple(len(ch) for ch in choices))
    for a in range(k):
        for b in range(a + 1, k):
            va = atoms[a][choices[a]]  # (Pa, size)
            vb = atoms[b][choices[b]]
            tab = ((va[:, None, :] - vb[None, :, :]) ** 2).sum(axis=2) * W[a, b] / size
            shape = [1] * k
            shape[a], shape[b] = tab.shape
            total = total + tab.reshape(shape)
    best = np.unravel_index(int(np.argmin(total)), total.shape)
    assignment = np.vstack([choices[m][best[m]] for m in range(k)])
    return assignment, float(total[best])


def assignment_values(dists, assignment) -> np.ndarray:
    """Atom values along each path of a multi-marginal assignment."""
    atoms = [_equal_weight_atoms(d) for d in dists]
    return np.vstack([atoms[m][assignment[m]] for m in range(len(atoms))])
