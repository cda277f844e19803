import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdflux import InitialDatum, SnapWarning, WeightFunction, build_grid, locate_interface, make_site, project_datum
from crowdflux import weighted_average
from crowdflux.errors import ConfigurationError


@pytest.mark.parametrize("dx, n", [(5e-3, 1400), (3.5e-4, 20000), (7 / 625, 625)])
def test_cell_counts(dx, n):
    assert build_grid(-6.0, 1.0, dx).n_cells == n


def test_non_integral_division():
    with pytest.raises(ConfigurationError):
        build_grid(0.0, 1.0, 0.3)


def test_geometry(grid):
    assert grid.interfaces.size == grid.n_cells + 1
    assert grid.interfaces[0] == -6.0 and grid.interfaces[-1] == pytest.approx(1.0)
    assert grid.centers[0] == pytest.approx(-6.0 + 2.5e-3)


class TestLocate:
    def test_exit(self, grid):
        i = locate_interface(grid, 0.0)
        assert i == 1200
        assert grid.interface_position(i) == pytest.approx(0.0, abs=1e-12)

    def test_obstacle_on_mesh(self, grid):
        i = locate_interface(grid, -1.72)
        assert i == 856
        assert grid.interface_position(i) == pytest.approx(-1.72, abs=1e-12)

    def test_left_boundary(self, grid):
        assert locate_interface(grid, -6.0) == 0

    def test_tie_goes_left(self):
        g = build_grid(0.0, 1.0, 0.25)
        assert locate_interface(g, 0.125) == 0
        assert locate_interface(g, 0.375) == 1

    @pytest.mark.parametrize("x", [-6.1, 1.01])
    def test_outside(self, grid, x):
        with pytest.raises(ConfigurationError):
            locate_interface(grid, x)

    @given(x=st.floats(-6.0, 1.0))
    def test_nearest(self, grid, x):
        i = locate_interface(grid, x)
        d = np.abs(grid.interfaces - x)
        assert d[i] <= d.min() + 1e-12


class TestProjection:
    def test_base_mass(self, grid):
        rho = project_datum(grid, InitialDatum.block(-5.75, -2.0))
        assert grid.dx * rho.sum() == pytest.approx(3.75, abs=1e-12)
        assert set(np.unique(rho)) == {0.0, 1.0}

    def test_scaled_mass(self, grid):
        rho = project_datum(grid, InitialDatum.block(-5.75, -2.0, 0.8))
        assert grid.dx * rho.sum() == pytest.approx(3.0, abs=1e-12)

    def test_empty(self, grid):
        assert not project_datum(grid, InitialDatum(())).any()

    def test_partial_cell(self):
        g = build_grid(0.0, 1.0, 0.25)
        rho = project_datum(g, InitialDatum.block(0.1, 0.3, 1.0))
        assert rho == pytest.approx([0.6, 0.2, 0.0, 0.0])

    @given(
        edges=st.lists(st.floats(-6.0, 1.0), min_size=2, max_size=8, unique=True),
        levels=st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4),
    )
    def test_random_blocks_keep_mass(self, grid, edges, levels):
        edges = sorted(edges)
        blocks = tuple(
            (a, b, levels[k % 4]) for k, (a, b) in enumerate(zip(edges[::2], edges[1::2])) if b > a
        )
        datum = InitialDatum(blocks)
        rho = project_datum(grid, datum)
        assert grid.dx * rho.sum() == pytest.approx(datum.mass, abs=1e-12)
        assert rho.min() >= 0.0 and rho.max() <= 1.0 + 1e-15


class TestSite:
    def test_exit_window(self, grid, validation_p):
        site = make_site(grid, 0.0, validation_p)
        assert site.interface_index == 1200 and site.exit_cell == 1199
        # weight support [-1, 0] covers cells 1000..1199
        assert site.weight_first_cell == 1000
        w = site.cell_weights(grid)
        assert w.size == 200
        assert w == pytest.approx(2.0 * (1.0 + grid.centers[1000:1200]))

    def test_snap_warning(self, validation_p):
        g = build_grid(-6.0, 1.0, 7 / 625)
        with warnings.catch_warnings():
            warnings.simplefilter("error", SnapWarning)
            with pytest.raises(SnapWarning):
                make_site(g, 0.0, validation_p)

    def test_no_warning_for_small_snap(self, grid, validation_p):
        with warnings.catch_warnings():
            warnings.simplefilter("error", SnapWarning)
            site = make_site(grid, 0.0004, validation_p)
        assert site.interface_index == 1200

    def test_weight_follows_snapped_interface(self, validation_p):
        g = build_grid(-6.0, 1.0, 7 / 625)
        site = make_site(g, 0.0, validation_p)
        assert site.weight.anchor == pytest.approx(g.interface_position(site.interface_index))


class TestWeightedAverage:
    def test_full_density_is_exact(self, grid, validation_p):
        site = make_site(grid, 0.0, validation_p)
        # the midpoint rule integrates the affine ramp exactly
        assert weighted_average(grid, site, np.ones(grid.n_cells)) == pytest.approx(1.0, abs=1e-13)

    def test_zero(self, grid, validation_p):
        site = make_site(grid, 0.0, validation_p)
        assert weighted_average(grid, site, np.zeros(grid.n_cells)) == 0.0

    def test_half(self, grid, validation_p):
        site = make_site(grid, 0.0, validation_p)
        assert weighted_average(grid, site, np.full(grid.n_cells, 0.5)) == pytest.approx(0.5, abs=1e-13)

    def test_only_upstream_counts(self, grid, validation_p):
        site = make_site(grid, 0.0, validation_p)
        rho = np.zeros(grid.n_cells)
        rho[1200:] = 1.0
        rho[:1000] = 1.0
        assert weighted_average(grid, site, rho) == 0.0

    def test_narrow_support(self, grid, validation_p):
        site = make_site(grid, -1.72, validation_p, WeightFunction(0.5))
        assert weighted_average(grid, site, np.ones(grid.n_cells)) == pytest.approx(1.0, abs=1e-12)
