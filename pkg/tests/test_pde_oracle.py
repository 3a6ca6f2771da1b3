import csv

import numpy as np
import pytest

from bismutlab.catalog import brownian, bump, coordinate, make_model, ornstein_uhlenbeck, square
from bismutlab.field_model import AugmentationSpec, Kind, PerturbationSchedule
from bismutlab.mc_semigroup import estimate_semigroup
from bismutlab.pde_oracle import (PDEError, base_coefficients, centered_domain, convergence_ratio, default_domain,
                                  oracle_compare, solve_extended, solve_parabolic, u_axis_bounds)


def _bm():
    return base_coefficients(brownian())[0]


def test_bm_square():
    g = solve_parabolic(_bm(), square(), [(-8, 8)], 400, 1.0)
    assert 0.995 <= g.value_at(0.0) <= 1.005


def test_ou_mean():
    coeffs, _ = base_coefficients(ornstein_uhlenbeck())
    g = solve_parabolic(coeffs, coordinate(), [(-8, 8)], 401, 1.0)
    assert abs(g.value_at(1.0) - np.exp(-1)) < 1e-3


def test_t_zero_returns_data():
    g = solve_parabolic(_bm(), bump(), [(-4, 4)], 41, 0.0)
    assert np.array_equal(g.values, bump()(g.axes[0][:, None]))


def test_girsanov_extended():
    c = 0.5
    spec = AugmentationSpec(Kind.GIRSANOV, brownian(), PerturbationSchedule.constant(c))
    F = lambda p: p[:, 1] * p[:, 0]
    g = solve_extended(spec, F, [(-8, 8)], (161, 161), 1.0, n_time=200)
    assert abs(g.value_at([0.0, 1.0]) - c) < 1e-3


def test_ibp_extended():
    c = 0.5
    spec = AugmentationSpec(Kind.IBP, brownian(), PerturbationSchedule.constant(c))
    F = lambda p: p[:, 1] * p[:, 0] ** 2
    g = solve_extended(spec, F, [(-8, 8)], (161, 81), 1.0, n_time=200)
    for x in (0.0, 1.0):
        assert abs(g.value_at([x, 0.0]) - 2 * c * x) < 1e-3


def test_u_independent_data_integrates_out():
    spec = AugmentationSpec(Kind.GIRSANOV, make_model("ou"), PerturbationSchedule.constant(0.5))
    f = bump()
    # u-range wide enough that the frozen u-boundary data cannot leak to u = 1
    ext = solve_extended(spec, lambda p: f(p[:, :1]), [(-6, 6), (-8, 30)], (121, 77), 1.0, n_time=100,
                         richardson=False)
    base = solve_parabolic(base_coefficients(make_model("ou"))[0], f, [(-6, 6)], 121, 1.0, n_time=100,
                           richardson=False)
    for x in (-0.5, 0.0, 0.7):
        assert abs(ext.value_at([x, 1.0]) - base.value_at(x)) < 1e-6


def test_u_axis_bounds():
    g = AugmentationSpec(Kind.GIRSANOV, brownian(), PerturbationSchedule.constant(0.5))
    assert u_axis_bounds(g, 1.0) == pytest.approx((-np.exp(2), np.exp(2)))
    i = AugmentationSpec(Kind.IBP, brownian(), PerturbationSchedule.constant(0.5))
    assert u_axis_bounds(i, 4.0) == pytest.approx((-4.0, 4.0))


# properties ---------------------------------------------------------------------

@pytest.mark.parametrize("name", ["bm", "ou", "gbm", "poly"])
def test_maximum_principle(name):
    f = bump(0.3)
    coeffs, _ = base_coefficients(make_model(name))
    g = solve_parabolic(coeffs, f, [(-5, 5)], 201, 1.0)
    fv = f(g.axes[0][:, None])
    assert g.values.min() >= fv.min() - 1e-10
    assert g.values.max() <= fv.max() + 1e-10


def test_semigroup_property():
    coeffs, _ = base_coefficients(ornstein_uhlenbeck())
    dom, n = [(-6, 6)], 241
    full = solve_parabolic(coeffs, bump(), dom, n, 1.0, n_time=200)
    half = solve_parabolic(coeffs, bump(), dom, n, 0.5, n_time=100)
    twice = solve_parabolic(coeffs, half.values, dom, n, 0.5, n_time=100, t0=0.5)
    for x in (-1.0, 0.0, 0.5, 1.5):
        assert abs(twice.value_at(x) - full.value_at(x)) <= 2 * full.budget_at(x) + 1e-12


def test_time_dependent_schedule_matches_constant_limit():
    vfs = ornstein_uhlenbeck()
    const = PerturbationSchedule.constant(0.3)
    c1, td1 = base_coefficients(vfs, const, 1.0)
    assert not td1
    g1 = solve_parabolic(c1, bump(), [(-6, 6)], 121, 1.0, time_dependent=td1)
    g2 = solve_parabolic(c1, bump(), [(-6, 6)], 121, 1.0, time_dependent=True)
    assert abs(g1.value_at(0.2) - g2.value_at(0.2)) < 1e-13


@pytest.mark.parametrize("name", ["bm", "ou", "gbm", "poly"])
def test_mesh_halving_ratio(name):
    vfs = make_model(name)
    x = 0.5
    coeffs, _ = base_coefficients(vfs)
    dom = centered_domain(default_domain(vfs, x, 1.0), [x])
    r = convergence_ratio(coeffs, bump(), dom, 81, 1.0, x)
    assert 3.2 <= r <= 4.8


def test_budget_shrinks_with_resolution():
    coeffs, _ = base_coefficients(ornstein_uhlenbeck())
    b = [solve_parabolic(coeffs, bump(), [(-6, 6)], n, 1.0).budget_at(0.0) for n in (41, 81, 161)]
    assert b[0] > b[1] > b[2]


# comparison ------------------------------------------------------------------------

def test_compare_matching_bm():
    g = solve_parabolic(_bm(), bump(), [(-8, 8)], 401, 1.0)
    mc = estimate_semigroup(brownian(), bump(), 0.0, 1.0, 100_000, seed=3)
    assert oracle_compare(g, 0.0, mc).passed


def test_coarse_mesh_budget_dominates():
    """On a 20-node mesh the Richardson budget swamps the MC error bar, so the
    comparison says little; refinement makes the MC part dominant."""
    f = bump(0.5)
    mc = estimate_semigroup(brownian(), f, 0.0, 1.0, 400_000, seed=4)
    coarse = oracle_compare(solve_parabolic(_bm(), f, [(-8, 8)], 20, 1.0), 0.0, mc)
    fine = oracle_compare(solve_parabolic(_bm(), f, [(-8, 8)], 801, 1.0), 0.0, mc)
    assert coarse.budget > 10 * coarse.mc_part
    assert coarse.difference > fine.tolerance
    assert fine.budget < fine.mc_part and fine.passed


def test_compare_wrong_model_fails():
    coeffs, _ = base_coefficients(ornstein_uhlenbeck())
    g = solve_parabolic(coeffs, bump(), [(-8, 8)], 401, 1.0)
    mc = estimate_semigroup(brownian(), bump(), 0.0, 1.0, 100_000, seed=5)
    assert not oracle_compare(g, 0.0, mc).passed


# errors and export --------------------------------------------------------------------

def test_outside_domain():
    g = solve_parabolic(_bm(), bump(), [(-2, 2)], 41, 0.5)
    with pytest.raises(ValueError):
        g.value_at(3.0)


def test_errors():
    with pytest.raises(PDEError):
        solve_parabolic(_bm(), bump(), [(-1, 1)] * 3, 5, 1.0)
    with pytest.raises(PDEError):
        solve_parabolic(_bm(), bump(), [(-1, 1)], 2, 1.0)
    with pytest.raises(PDEError):
        base_coefficients(make_model("degenerate2d"))


def test_peclet_warning():
    coeffs, _ = base_coefficients(ornstein_uhlenbeck(a=20.0, sigma=0.1))
    with pytest.warns(RuntimeWarning, match="Peclet"):
        solve_parabolic(coeffs, bump(), [(-2, 2)], 21, 0.1, richardson=False)


def test_grid_csv(tmp_path):
    g = solve_parabolic(_bm(), bump(), [(-2, 2)], 11, 0.5)
    g.to_csv(tmp_path / "g.csv")
    rows = list(csv.reader(open(tmp_path / "g.csv")))
    assert rows[0] == ["x", "value"] and len(rows) == 12
    spec = AugmentationSpec(Kind.IBP, brownian(), PerturbationSchedule.constant(1.0))
    e = solve_extended(spec, lambda p: p[:, 1], [(-2, 2)], (5, 7), 0.5)
    e.to_csv(tmp_path / "e.csv")
    rows = list(csv.reader(open(tmp_path / "e.csv")))
    assert rows[0] == ["x", "u", "value"] and len(rows) == 36
