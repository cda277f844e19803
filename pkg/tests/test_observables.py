import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdflux import SimOutput, bv_norm, convergence_order, evacuation_time, relative_l1_error
from crowdflux.errors import ConfigurationError
from crowdflux.observables import sample_reference


def _output(mass, dt=0.5, threshold=1e-3):
    mass = np.asarray(mass, dtype=float)
    t = np.arange(mass.size) * dt
    return SimOutput(t, np.zeros((mass.size, 1)), np.zeros(mass.size), mass, threshold=threshold)


class TestEvacuation:
    def test_zero_datum(self):
        assert evacuation_time(_output([0.0, 0.0])) == 0.0

    def test_first_crossing(self):
        assert evacuation_time(_output([3.0, 1.0, 1e-3, 0.0])) == 1.0

    def test_never(self):
        assert evacuation_time(_output([3.0, 2.0])) is None

    @given(st.lists(st.floats(0, 4), min_size=2, max_size=30), st.floats(1e-4, 1.0), st.floats(1e-4, 1.0))
    def test_nonincreasing_in_threshold(self, mass, a, b):
        mass = np.sort(mass)[::-1]
        lo, hi = min(a, b), max(a, b)
        t_lo, t_hi = evacuation_time(_output(mass), lo), evacuation_time(_output(mass), hi)
        if t_lo is not None:
            assert t_hi is not None and t_hi <= t_lo


class TestL1:
    def test_identical(self):
        ref = np.linspace(0.1, 1.0, 40)
        assert relative_l1_error(ref, sample_reference(ref, 8)) == 0.0

    def test_constant_fields(self):
        assert relative_l1_error(np.full(20, 0.5), np.full(4, 0.55)) == pytest.approx(0.1)

    def test_odd_ratio_picks_centre_cell(self):
        ref = np.arange(9.0)
        assert sample_reference(ref, 3) == pytest.approx([1.0, 4.0, 7.0])

    def test_even_ratio_averages_straddling_cells(self):
        ref = np.arange(8.0)
        assert sample_reference(ref, 2) == pytest.approx([1.5, 5.5])

    def test_incompatible(self):
        with pytest.raises(ConfigurationError):
            relative_l1_error(np.ones(10), np.ones(3))

    @given(st.integers(1, 5), st.integers(1, 6))
    def test_linear_field_sampled_exactly(self, n, r):
        # a linear profile's cell averages equal its centre values at any resolution
        fine_c = (np.arange(n * r) + 0.5) / (n * r)
        coarse_c = (np.arange(n) + 0.5) / n
        assert sample_reference(2.0 * fine_c + 1.0, n) == pytest.approx(2.0 * coarse_c + 1.0)


class TestOrder:
    def test_first_order(self):
        assert convergence_order([(0.1, 0.4), (0.05, 0.2), (0.025, 0.1)]) == pytest.approx(1.0)

    def test_constant(self):
        assert convergence_order([(0.1, 0.3), (0.05, 0.3), (0.025, 0.3)]) == pytest.approx(0.0, abs=1e-12)

    def test_drops_nonpositive(self):
        assert convergence_order([(0.1, 0.4), (0.05, 0.0), (0.025, 0.1)]) == pytest.approx(1.0)

    def test_too_few(self):
        with pytest.raises(ValueError):
            convergence_order([(0.1, 0.4), (0.05, 0.0)])

    @given(st.floats(0.2, 3.0), st.floats(1e-3, 10.0))
    def test_recovers_power_law(self, order, c):
        h = np.array([0.1, 0.05, 0.025, 0.0125])
        assert convergence_order(zip(h, c * h**order)) == pytest.approx(order, rel=1e-9)


class TestBV:
    def test_constant(self):
        assert bv_norm([0.2] * 5) == 0.0

    def test_arithmetic(self):
        assert bv_norm([0.2, 0.1, 0.2]) == pytest.approx(0.2)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.integers(0, 10))
    def test_constant_tail(self, q, k):
        assert bv_norm(q + [q[-1]] * k) == pytest.approx(bv_norm(q))
