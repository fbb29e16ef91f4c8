import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shortpulse.errors import GridError
from shortpulse.nullgrid import MAX_RATIO, REGION_I, REGION_II, REGION_III, build_grid, cone_area, extract_cone


@pytest.fixture(scope="module")
def grid():
    return build_grid(0.05, ubar_max=6.0)


def test_mirror_symmetry_puts_initial_slice_on_nodes(grid):
    x = grid.x
    i, jj = grid.initial_nodes()
    np.testing.assert_allclose(grid.u[i] + grid.ubar[jj], 1.0, atol=1e-13)
    lo = x <= 1.0 + grid.delta + 1e-12
    np.testing.assert_allclose(np.sort(1.0 - x[lo]), x[lo], atol=1e-12)


def test_spacing_and_grading(grid):
    d = np.diff(grid.x)
    assert np.all(d > 0)
    assert np.max(d[1:] / d[:-1]) <= MAX_RATIO + 1e-9
    assert np.max(1 / (d[1:] / d[:-1])) <= MAX_RATIO + 1e-9
    for lo, hi, target in grid.bands:
        sel = (grid.x >= lo - 1e-12) & (grid.x <= hi + 1e-12)
        assert np.diff(grid.x[sel]).max() <= target * (1 + 1e-9)


def test_refinement_is_nested():
    g0 = build_grid(0.05, ubar_max=4.0)
    g1 = build_grid(0.05, ubar_max=4.0, refine=1)
    np.testing.assert_allclose(g1.x[::2][: len(g0.x)], g0.x, atol=1e-13)
    assert g1.h_fine == pytest.approx(g0.h_fine / 2)


def test_regions(grid):
    assert grid.region(-0.01) == REGION_III
    assert grid.region(0.0) == REGION_II and grid.region(0.05) == REGION_II
    assert grid.region(0.06) == REGION_I
    tags = grid.region_tags()
    assert tags.shape == grid.shape


def test_admissible_mask(grid):
    t, r = grid.t_r()
    adm = grid.admissible()
    assert np.all(t[adm] >= 1 - 1e-12) and np.all(r[adm] >= -1e-12)
    assert not np.any(adm & (t < 1 - 1e-9))


def test_bad_parameters():
    with pytest.raises(GridError):
        build_grid(0.3)
    with pytest.raises(GridError):
        build_grid(0.05, h_fine=0.05 / 16)
    with pytest.raises(GridError):
        build_grid(0.05, ubar_max=1.5)


def test_summary_and_hash(grid):
    s = grid.summary()
    assert s["n_u"] == grid.n_u and s["hash"] == build_grid(0.05, ubar_max=6.0).node_hash()


@pytest.mark.parametrize("kind,value,lo,hi", [("outgoing", 0.05, None, 5.0), ("incoming", 3.0, None, 2.0),
                                               ("slice", 4.0, None, None)])
def test_cone_weights_integrate_area(grid, kind, value, lo, hi):
    c = extract_cone(grid, kind, value, lower=lo, upper=hi)
    p = c.param
    exact = cone_area(kind, value, p.min(), p.max())
    assert np.sum(c.weights) == pytest.approx(exact, rel=1e-3)


def test_unknown_kind(grid):
    with pytest.raises(GridError):
        extract_cone(grid, "spacelike", 1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 2.5), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_linear_functions_sample_exactly(u0, a, b):
    # two-point linear interpolation reproduces affine functions of (u, ubar)
    g = build_grid(0.05, ubar_max=6.0)
    uu, bb = np.meshgrid(g.u, g.ubar, indexing="ij")
    f = 1.0 + a * uu + b * bb
    c = extract_cone(g, "outgoing", u0, upper=5.5)
    if len(c):
        np.testing.assert_allclose(c.sample(f), 1.0 + a * c.u + b * c.ubar, atol=1e-12)
    s = extract_cone(g, "slice", 1.0 + 2 * u0)
    if len(s):
        np.testing.assert_allclose(s.sample(f), 1.0 + a * s.u + b * s.ubar, atol=1e-12)
