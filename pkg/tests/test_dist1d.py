import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conservative_cf.dist1d import (ATOMIC, CONTINUOUS, Dist1D, default_grid, from_samples,
                                    midpoint_grid)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
# atoms on a dyadic lattice so shifts cannot merge neighbouring atoms
lattice = st.integers(-800, 800).map(lambda k: k / 16.0)


@st.composite
def atomic_laws(draw, max_atoms=8):
    vals = draw(st.lists(lattice, min_size=1, max_size=max_atoms))
    w = draw(st.lists(st.floats(0.01, 5.0), min_size=len(vals), max_size=len(vals)))
    return Dist1D.from_samples(vals, w)


def uniform(lo, hi):
    return Dist1D(np.array([lo, hi]), np.array([0.0, 1.0]), CONTINUOUS)


class TestFromSamples:
    def test_two_equal_atoms(self):
        d = from_samples([1, 0], [1, 1])
        np.testing.assert_array_equal(d.support, [0, 1])
        np.testing.assert_array_equal(d.cdf, [0.5, 1.0])

    def test_point_mass(self):
        d = from_samples([3], [2])
        assert d.support.tolist() == [3.0] and d.cdf.tolist() == [1.0]

    def test_duplicates_merge(self):
        d = from_samples([0, 0, 1], [1, 1, 2])
        np.testing.assert_array_equal(d.support, [0, 1])
        np.testing.assert_array_equal(d.cdf, [0.5, 1.0])

    @pytest.mark.parametrize("values,weights", [([], []), ([1.0], [-1.0]), ([1, 2], [0, 0])])
    def test_rejects_bad_input(self, values, weights):
        with pytest.raises(ValueError):
            from_samples(values, weights)

    @given(st.lists(finite, min_size=1, max_size=30))
    def test_reproduces_empirical_cdf_at_atoms(self, vals):
        d = from_samples(vals)
        vals = np.asarray(vals)
        for y in d.support:
            assert d.cdf_at(y) == pytest.approx(np.mean(vals <= y), abs=1e-12)


class TestCdfAt:
    def test_right_continuity_at_atom(self):
        assert Dist1D.point_mass(3.0).cdf_at(3.0) == 1.0

    def test_between_atoms(self):
        assert from_samples([0, 1]).cdf_at(0.5) == 0.5

    def test_continuous_interpolation(self):
        assert uniform(0, 1).cdf_at(0.25) == 0.25

    def test_outside_support(self):
        d = uniform(0, 1)
        assert d.cdf_at(-1.0) == 0.0 and d.cdf_at(2.0) == 1.0

    def test_left_limit(self):
        d = from_samples([0, 1])
        assert d.cdf_left(1.0) == 0.5 and d.cdf_left(0.0) == 0.0

    def test_vectorized_shape(self):
        assert uniform(0, 1).cdf_at(np.zeros((2, 3))).shape == (2, 3)


class TestQuantileAt:
    def test_uniform_median(self):
        assert uniform(0, 2).quantile_at(0.5) == 1.0

    def test_generalized_inverse_at_atom_boundary(self):
        assert from_samples([0, 1]).quantile_at(0.5) == 0.0

    @given(atomic_laws())
    def test_top_level_is_max_support(self, d):
        assert d.quantile_at(1.0) == d.upper

    @pytest.mark.parametrize("u", [-0.1, 1.1, np.nan])
    def test_rejects_out_of_range(self, u):
        with pytest.raises(ValueError):
            uniform(0, 1).quantile_at(u)

    @given(atomic_laws(), st.floats(0, 1, exclude_min=True), finite)
    def test_galois_property(self, d, u, y):
        # u = 0 maps to the lowest atom by convention, not to -inf
        assert (d.quantile_at(u) <= y) == (u <= d.cdf_at(y))

    @given(atomic_laws(), st.lists(st.floats(0, 1), min_size=2, max_size=20))
    def test_quantile_monotone(self, d, us):
        us = np.sort(us)
        assert np.all(np.diff(d.quantile_at(us)) >= 0)

    def test_continuous_round_trip_on_grid(self):
        grid = np.linspace(-3, 3, 101)
        d = Dist1D.from_grid(grid, 1 / (1 + np.exp(-grid)))
        inner = grid[1:-1]
        np.testing.assert_allclose(d.quantile_at(d.cdf_at(inner)), inner, atol=1e-9)


class TestFromGrid:
    def test_monotonizes_and_terminates_at_one(self):
        d = Dist1D.from_grid([0, 1, 2, 3], [0.1, 0.05, 0.7, 0.9])
        assert np.all(np.diff(d.cdf) >= 0) and d.cdf[-1] == 1.0

    def test_trims_after_reaching_one(self):
        d = Dist1D.from_grid([0, 1, 2, 3], [0.0, 1.0, 1.0, 1.0])
        assert d.upper == 1.0

    def test_keeps_last_leading_zero(self):
        d = Dist1D.from_grid([0, 1, 2, 3], [0.0, 0.0, 0.5, 1.0])
        assert d.lower == 1.0 and d.cdf_at(1.5) == 0.25

    def test_atomic_mode_keeps_positive_increments(self):
        d = Dist1D.from_grid([0, 1, 2], [0.5, 0.5, 1.0], ATOMIC)
        np.testing.assert_array_equal(d.support, [0, 2])

    def test_validation(self):
        with pytest.raises(ValueError):
            Dist1D(np.array([1.0, 0.0]), np.array([0.5, 1.0]))
        with pytest.raises(ValueError):
            Dist1D(np.array([0.0, 1.0]), np.array([0.5, 0.9]))
        with pytest.raises(ValueError):
            Dist1D(np.array([0.0]), np.array([1.0]), "smooth")


def test_mean_and_density():
    d = uniform(0, 2)
    assert d.mean() == pytest.approx(1.0)
    assert d.density_at(1.0, step=0.1) == pytest.approx(0.5)
    assert from_samples([1, 2, 6]).mean() == pytest.approx(3.0)


def test_serialization_round_trip():
    d = from_samples([0.3, 1.2, 5.0], [1, 2, 3])
    e = Dist1D.from_dict(d.to_dict())
    np.testing.assert_array_equal(d.support, e.support)
    np.testing.assert_array_equal(d.cdf, e.cdf)


def test_immutable():
    d = from_samples([0, 1])
    with pytest.raises(ValueError):
        d.support[0] = 5.0


def test_grids():
    g = default_grid([0.0, 10.0], 11, pad=0.1)
    assert g[0] == -1.0 and g[-1] == 11.0 and g.size == 11
    assert default_grid([2.0, 2.0], 5).tolist() == [1.0, 1.5, 2.0, 2.5, 3.0]
    np.testing.assert_allclose(midpoint_grid(4), [0.125, 0.375, 0.625, 0.875])
    with pytest.raises(ValueError):
        midpoint_grid(1)


@settings(max_examples=50)
@given(atomic_laws(), finite)
def test_shift_equivariance(d, c):
    s = d.shift(c)
    u = np.linspace(0, 1, 11)
    np.testing.assert_allclose(s.quantile_at(u), d.quantile_at(u) + c, atol=1e-9)
