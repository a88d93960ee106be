import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hexmask import lengthscale as ls
from hexmask import maskfield
from hexmask.hexgrid import build_grid
from hexmask.skeleton import skeletonize
from helpers import central_difference, normwise_error


def one_cell(grid, cid):
    s = np.zeros(grid.n_cells, dtype=bool)
    s[cid] = True
    return s


def centre(grid):
    return grid.cell_id(grid.n_rows // 2, grid.n_cols // 2)


def field(rho, rho_min=1e-3):
    return maskfield.DensityField(np.asarray(rho, dtype=float), rho_min)


@pytest.mark.parametrize("kw", [dict(min_ls=0, max_ls=1), dict(min_ls=2, max_ls=1), dict(min_ls=1, max_ls=2, p=0), dict(min_ls=1, max_ls=2, p=1.5)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        ls.LengthScaleSpec(**kw)


def test_small_min_ls_gives_skeleton_only():
    g = build_grid(10, 10, 1.0)
    skel = np.random.default_rng(0).random(g.n_cells) < 0.2
    reg = ls.build_regions(g, skel, ls.LengthScaleSpec(0.5 * g.pitch, 3.0))
    assert np.array_equal(reg.r_min, skel)


def test_large_max_ls_empties_r_max():
    g = build_grid(10, 8, 1.0)
    diag = np.hypot(*np.ptp(g.centroids, axis=0))
    reg = ls.build_regions(g, one_cell(g, 0), ls.LengthScaleSpec(1.0, diag + 1))
    assert not reg.r_max.any()


def test_two_pitch_disk_around_one_cell():
    g = build_grid(15, 15, 1.0)
    c = centre(g)
    reg = ls.build_regions(g, one_cell(g, c), ls.LengthScaleSpec(2 * g.pitch, 5.0))
    d = np.hypot(*(g.centroids - g.centroids[c]).T)
    expect = d <= 2 * g.pitch + 1e-9
    assert np.array_equal(reg.r_min, expect)
    # the cell, its 6 neighbors and all 12 cells of the second ring
    assert reg.r_min.sum() == 19
    assert reg.r_min[[j for j in g.neighbor_table[c] if j >= 0]].all()


def test_empty_skeleton():
    g = build_grid(5, 5, 1.0)
    reg = ls.build_regions(g, np.zeros(g.n_cells, dtype=bool), ls.LengthScaleSpec(1, 2))
    assert not reg.r_min.any() and reg.r_max.all()


def test_brute_force_membership():
    g = build_grid(12, 9, 0.7)
    rng = np.random.default_rng(4)
    skel = rng.random(g.n_cells) < 0.05
    skel[5] = True
    spec = ls.LengthScaleSpec(1.5, 3.2)
    reg = ls.build_regions(g, skel, spec)
    pts = g.centroids
    for i in range(g.n_cells):
        d = min(np.hypot(*(pts[i] - pts[j])) for j in np.flatnonzero(skel))
        assert reg.r_min[i] == (d <= spec.min_ls + 1e-9)
        assert reg.r_max[i] == (d > spec.max_ls + 1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), a=st.floats(0.1, 5), b=st.floats(0.1, 5))
def test_regions_disjoint_and_cover_skeleton(seed, a, b):
    g = build_grid(10, 10, 1.0)
    skel = np.random.default_rng(seed).random(g.n_cells) < 0.1
    reg = ls.build_regions(g, skel, ls.LengthScaleSpec(min(a, b), max(a, b)))
    assert not (reg.r_min & reg.r_max).any()
    assert reg.r_min[skel].all()


def test_single_cell_contributions():
    reg = ls.Regions(np.array([True, False]), np.array([False, False]))
    f = field([0.4, 1.0])
    assert ls.g_min(f, reg, ls.LengthScaleSpec(1, 2, p=1)) == pytest.approx(0.6)
    assert ls.g_min(f, reg, ls.LengthScaleSpec(1, 2, p=2)) == pytest.approx(0.36)


def test_zero_on_satisfied_regions():
    n = 30
    rng = np.random.default_rng(1)
    r_min = rng.random(n) < 0.5
    reg = ls.Regions(r_min, ~r_min)
    rho = np.where(r_min, 1 - 1e-12, 1e-3)
    for p in (1, 2):
        spec = ls.LengthScaleSpec(1, 2, p)
        assert ls.g_min(field(rho), reg, spec) == pytest.approx(0, abs=1e-10)
        assert ls.g_max(field(rho), reg, spec) == 0.0


def test_odd_power_terms_are_clamped():
    reg = ls.Regions(np.array([True, False]), np.array([False, True]))
    f = field([1.0 + 1e-9, 1e-3 - 1e-9])
    spec = ls.LengthScaleSpec(1, 2, 1)
    assert ls.g_min(f, reg, spec) == 0.0
    assert ls.g_max(f, reg, spec) == 0.0


@pytest.mark.parametrize("p", [1, 2])
def test_non_negative_random(p):
    rng = np.random.default_rng(p)
    spec = ls.LengthScaleSpec(1, 2, p)
    for _ in range(200):
        n = 40
        r_min = rng.random(n) < 0.4
        reg = ls.Regions(r_min, ~r_min & (rng.random(n) < 0.5))
        f = field(rng.uniform(1e-3, 1.0, n))
        assert ls.g_min(f, reg, spec) >= 0
        assert ls.g_max(f, reg, spec) >= 0


@pytest.mark.parametrize("p", [1, 2])
def test_monotone_response(p):
    rng = np.random.default_rng(7)
    n = 20
    r_min = rng.random(n) < 0.5
    reg = ls.Regions(r_min, ~r_min)
    spec = ls.LengthScaleSpec(1, 2, p)
    rho = rng.uniform(0.01, 0.9, n)
    for i in range(n):
        up = rho.copy()
        up[i] += 0.05
        if r_min[i]:
            assert ls.g_min(field(up), reg, spec) <= ls.g_min(field(rho), reg, spec)
        else:
            assert ls.g_max(field(up), reg, spec) >= ls.g_max(field(rho), reg, spec)


def test_p1_density_gradient_is_indicator():
    rng = np.random.default_rng(2)
    r_min = rng.random(25) < 0.5
    reg = ls.Regions(r_min, ~r_min)
    d_min, d_max = ls.density_gradients(field(rng.uniform(0.1, 0.9, 25)), reg, ls.LengthScaleSpec(1, 2, 1))
    assert np.array_equal(d_min, -r_min.astype(float))
    assert np.array_equal(d_max, (~r_min).astype(float))


def _setup(seed, p):
    g = build_grid(12, 8, 1.0)
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = g.bounds
    params = np.column_stack(
        [rng.uniform(xmin, xmax, 6), rng.uniform(ymin, ymax, 6), rng.uniform(1, 3, 6), rng.uniform(1, 3, 6), rng.uniform(-3, 3, 6)]
    )
    masks = maskfield.MaskSet(params, alpha=6.0, eta=3.0)
    fld = maskfield.evaluate_field(g, masks)
    spec = ls.LengthScaleSpec(1.5, 3.0, p)
    reg = ls.build_regions(g, skeletonize(g, fld.binary()), spec)
    return g, masks, spec, reg


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("seed", range(4))
def test_frozen_region_gradient_finite_differences(seed, p):
    g, masks, spec, reg = _setup(seed, p)
    fld = maskfield.evaluate_field(g, masks)
    gmin_grad, gmax_grad = ls.lengthscale_gradient(fld, reg, spec, masks, g.centroids)
    x0 = masks.vector

    def values(x):
        f = maskfield.evaluate_field(g, masks.with_vector(x))
        return np.array([ls.g_min(f, reg, spec), ls.g_max(f, reg, spec)])

    num = np.array([central_difference(values, x0, i, 1e-6 * max(1, abs(x0[i]))) for i in range(x0.size)])
    assert normwise_error(gmin_grad, num[:, 0]) < 1e-4
    assert normwise_error(gmax_grad, num[:, 1]) < 1e-4


def test_empty_r_max_gives_zero_gradient():
    g, masks, spec, reg = _setup(0, 1)
    reg = ls.Regions(reg.r_min, np.zeros(g.n_cells, dtype=bool))
    _, gmax_grad = ls.lengthscale_gradient(maskfield.evaluate_field(g, masks), reg, spec, masks, g.centroids)
    assert not gmax_grad.any()


def test_violations_and_labels():
    reg = ls.Regions(np.array([True, True, False, False]), np.array([False, False, True, True]))
    v = ls.violations(np.array([0.2, 0.9, 0.7, 0.1]), reg)
    assert v.min_cells.tolist() == [0] and v.max_cells.tolist() == [2]
    assert (v.n_min, v.n_max) == (1, 1)
    assert ls.region_labels(reg).tolist() == ["r_min", "r_min", "r_max", "r_max"]
    text = ls.regions_csv(reg)
    assert text.splitlines()[0] == "id,region" and text.splitlines()[3] == "2,r_max"
