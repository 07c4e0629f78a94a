import itertools

import numpy as np
import pytest

from conservative_cf.conservative import conservative_curve
from conservative_cf.counterfactual import CdfField
from conservative_cf.dist1d import Dist1D, from_samples
from conservative_cf.simlab import (BinaryGaussDesign, DgpSpec, assignment_values,
                                    brute_force_max_coupling, brute_force_max_monotone,
                                    brute_force_min_coupling, gen_hirano, gen_location_gauss,
                                    gen_two_lines, hirano_truth, multimarginal_min_coupling,
                                    simulate, transportation_vertices)
from conservative_cf.transport import (antitone_coupling, conservative_psi_lower_binary,
                                       nutz_max_monotone)


def random_law(rng, k, equal=False):
    return from_samples(rng.normal(size=k), None if equal else rng.uniform(0.2, 1.0, k))


class TestHirano:
    def test_truth_values(self):
        assert hirano_truth(0.0) == 2.0
        assert hirano_truth(1.0) == 1.25

    def test_monte_carlo_identity(self):
        rng = np.random.default_rng(0)
        n = 1_000_000
        s = rng.exponential(size=(n, 2)).sum(axis=1)
        eps = rng.standard_normal(n)
        for a in (0.5, 1.0, 2.0):
            y = a + s * np.exp(-a * s) + eps
            se = y.std(ddof=1) / np.sqrt(n)
            assert abs(y.mean() - hirano_truth(a)) <= 3 * se

    def test_deterministic_and_parameterizations(self):
        d1, _ = gen_hirano(50, seed=3)
        d2, _ = gen_hirano(50, seed=3)
        assert d1.to_csv() == d2.to_csv()
        rate, _ = gen_hirano(20_000, seed=1, propensity="rate")
        mean, _ = gen_hirano(20_000, seed=1, propensity="mean")
        # E[A] = E[1/S] = 1 under the rate reading and E[S] = 2 under the mean reading
        assert rate.a.mean() == pytest.approx(1.0, abs=0.1)
        assert mean.a.mean() == pytest.approx(2.0, abs=0.1)
        with pytest.raises(ValueError):
            gen_hirano(10, propensity="shape")


class TestTwoLines:
    def test_mean_zero_and_support(self):
        d = gen_two_lines(20_000, seed=0)
        assert abs(d.y.mean()) <= 3 * d.y.std(ddof=1) / np.sqrt(d.n)
        assert np.all(np.isclose(d.y, d.a - 1) | np.isclose(d.y, 1 - d.a))
        assert d.d == 0 and np.all((d.a >= 1) & (d.a <= 2))

    def test_curve_follows_unit_line(self):
        a_grid = np.linspace(1, 2, 11)
        field = CdfField(a_grid, [from_samples([a - 1, 1 - a]) for a in a_grid], np.ones(11))
        d = gen_two_lines(20, seed=1)
        for a, y in zip(d.a, d.y):
            k = int(np.argmin(np.abs(a_grid - a)))
            if abs(y) < 1e-12:
                continue
            c = conservative_curve(field, a_grid[k], y * (a_grid[k] - 1) / (a - 1))
            expect = np.sign(y) * (a_grid - 1)
            np.testing.assert_allclose(c.values, expect, atol=1e-12)

    def test_rejects_degenerate_range(self):
        with pytest.raises(ValueError):
            gen_two_lines(10, (1.0, 1.0))


def test_location_gauss_marginal():
    d, truth = gen_location_gauss(50_000, seed=0)
    # Y(a) ~ N(a, 2); regression of Y on A is confounded but E[Y - A - X] = 0
    assert np.mean(d.y - d.a - d.x[:, 0]) == pytest.approx(0.0, abs=0.02)
    assert truth(1.5) == 1.5


def test_binary_design_truth():
    design = BinaryGaussDesign()
    assert design.psi == pytest.approx(2 * 0.25 * (1 + (np.hypot(1, 0.5) - np.sqrt(2)) ** 2))
    field = design.true_field()
    assert conservative_psi_lower_binary(*field.laws) * 2 * 0.25 == pytest.approx(design.psi,
                                                                                rel=1e-3)


class TestSimulate:
    @pytest.mark.parametrize("kind", ["hirano", "two_lines", "location_gauss", "binary_gauss"])
    def test_kinds(self, kind):
        data, info = simulate(DgpSpec(kind, 30, seed=2))
        assert data.n == 30 and info["kind"] == kind and info["seed"] == 2

    def test_validation(self):
        with pytest.raises(ValueError):
            DgpSpec("spiral", 10)
        with pytest.raises(ValueError):
            DgpSpec("hirano", 0)


class TestMinCoupling:
    def test_equal_marginals_diagonal(self):
        P = from_samples([0, 1, 2, 5])
        c, v = brute_force_min_coupling(P, P)
        np.testing.assert_allclose(c.mass, np.diag(P.masses))
        assert v == 0.0

    def test_sorted_matching_wins(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            P, Q = random_law(rng, 5, True), random_law(rng, 5, True)
            c, _ = brute_force_min_coupling(P, Q, mode="enumerate")
            np.testing.assert_allclose(c.mass, np.eye(5) / 5)

    def test_enumeration_and_lp_agree(self):
        rng = np.random.default_rng(1)
        for k in range(1, 8):
            P, Q = random_law(rng, k, True), random_law(rng, k, True)
            _, v1 = brute_force_min_coupling(P, Q, mode="enumerate")
            _, v2 = brute_force_min_coupling(P, Q, mode="lp")
            assert v1 == pytest.approx(v2, abs=1e-9)
            assert v1 == pytest.approx(conservative_psi_lower_binary(P, Q), abs=1e-9)

    def test_marginals_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            P, Q = random_law(rng, 6), random_law(rng, 9)
            c, _ = brute_force_min_coupling(P, Q)
            np.testing.assert_allclose(c.mass.sum(1), P.masses, atol=1e-15)
            np.testing.assert_allclose(c.mass.sum(0), Q.masses, atol=1e-15)

    def test_limits_and_modes(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError):
            brute_force_min_coupling(random_law(rng, 9, True), random_law(rng, 9, True),
                                     mode="enumerate")
        with pytest.raises(ValueError):
            brute_force_min_coupling(random_law(rng, 3), random_law(rng, 3), mode="enumerate")
        with pytest.raises(ValueError):
            brute_force_min_coupling(random_law(rng, 3), random_law(rng, 3), mode="simplex")
        big = from_samples(np.arange(201.0))
        with pytest.raises(ValueError):
            brute_force_min_coupling(big, big, mode="lp")


class TestMaxCouplings:
    def test_identical_monotone_is_diagonal(self):
        P = from_samples([0, 1, 3])
        c, v = brute_force_max_monotone(P, P)
        assert v == 0.0
        np.testing.assert_allclose(c.mass, np.diag(P.masses))

    def test_monotone_respects_order(self):
        P, Q = from_samples([0, 1, 2]), from_samples([1, 2, 4])
        c, _ = brute_force_max_monotone(P, Q)
        assert np.all(c.mass[Q.support[None, :] < P.support[:, None]] == 0)
        with pytest.raises(ValueError):
            brute_force_max_monotone(Q, P)

    def test_uniform_shift_matches_closed_form(self):
        k = 60
        P = from_samples((np.arange(k) + 0.5) / k)
        Q = from_samples(0.5 + (np.arange(k) + 0.5) / k)
        _, v = brute_force_max_monotone(P, Q)
        assert v == pytest.approx(nutz_max_monotone(P, Q).value, rel=1e-6)

    def test_unconstrained_matches_antitone(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            P, Q = random_law(rng, 7), random_law(rng, 5)
            _, v = brute_force_max_coupling(P, Q)
            assert v == pytest.approx(antitone_coupling(P, Q).sq_cost(), abs=1e-9)


class TestVertices:
    def test_equal_weight_vertices_are_permutations(self):
        P = from_samples([0, 1, 2])
        verts = transportation_vertices(P, from_samples([5, 6, 7]))
        assert len(verts) == 6
        for v in verts:
            assert sorted((v.mass * 3).round(12).ravel().tolist()) == [0] * 6 + [1] * 3

    def test_lp_optimum_is_a_vertex(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            P, Q = random_law(rng, 4), random_law(rng, 4)
            verts = transportation_vertices(P, Q)
            costs = [v.sq_cost() for v in verts]
            _, vmin = brute_force_min_coupling(P, Q, mode="lp")
            _, vmax = brute_force_max_coupling(P, Q)
            assert min(costs) == pytest.approx(vmin, abs=1e-9)
            assert max(costs) == pytest.approx(vmax, abs=1e-9)

    def test_degenerate_and_limits(self):
        P = Dist1D.point_mass(0.0)
        assert len(transportation_vertices(P, from_samples([1, 2]))) == 1
        with pytest.raises(ValueError):
            transportation_vertices(from_samples(np.arange(5.0)), from_samples(np.arange(5.0)))


class TestMultimarginal:
    def test_two_marginals_reduce(self):
        rng = np.random.default_rng(6)
        P, Q = random_law(rng, 5, True), random_law(rng, 5, True)
        _, v = multimarginal_min_coupling([P, Q])
        assert v == pytest.approx(brute_force_min_coupling(P, Q)[1], abs=1e-12)

    def test_shifted_copies(self):
        base = np.array([0.0, 0.3, 1.1, 2.0])
        shifts = [0.0, 0.5, 2.0]
        assignment, v = multimarginal_min_coupling([base + s for s in shifts])
        np.testing.assert_array_equal(assignment, np.tile(np.arange(4), (3, 1)))
        expect = sum((shifts[a] - shifts[b]) ** 2 for a, b in itertools.combinations(range(3), 2))
        assert v == pytest.approx(expect)

    def test_two_lines_right_of_crossing(self):
        grid = [1.25, 1.5, 2.0]
        dists = [[a - 1, 1 - a] for a in grid]
        assignment, _ = multimarginal_min_coupling(dists)
        paths = assignment_values(dists, assignment).T
        lines = {tuple(np.array(grid) - 1), tuple(1 - np.array(grid))}
        assert {tuple(p) for p in paths} == lines

    def test_two_lines_across_crossing_prefers_kink(self):
        grid = [0.5, 1.0, 1.5]
        dists = [[a - 1, 1 - a] for a in grid]
        assignment, _ = multimarginal_min_coupling(dists)
        paths = {tuple(p) for p in assignment_values(dists, assignment).T}
        assert paths == {(-0.5, 0.0, -0.5), (0.5, 0.0, 0.5)}

    def test_limits(self):
        with pytest.raises(ValueError):
            multimarginal_min_coupling([[0.0, 1.0]])
        with pytest.raises(ValueError):
            multimarginal_min_coupling([np.arange(6.0)] * 2)
        with pytest.raises(ValueError):
            multimarginal_min_coupling([from_samples([0, 1], [1, 2])] * 2)
