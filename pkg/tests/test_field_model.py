import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bismutlab.catalog import (bump, brownian, constant, coordinate, geometric, make_model, ornstein_uhlenbeck,
                               parse_schedule, polynomial, square)
from bismutlab.field_model import (AugmentationSpec, AugmentedSystem, BaseSystem, Kind, ModelError,
                                   PerturbationSchedule, StateFeedbackSchedule, TestFunction, VectorFieldSet,
                                   apply_generator, augmented_dim, as_points, ellipticity_exact, ellipticity_margin,
                                   ito_drift, sphere_directions)
from bismutlab.sde_engine import BLOCK, TimeGrid, block_noise


def _const(v):
    v = np.asarray(v, dtype=float)
    return lambda x: np.broadcast_to(v, x.shape).copy()


def _zero(d):
    return lambda x: np.zeros((x.shape[0], d, d))


# construction ---------------------------------------------------------------

def test_wrong_jacobian_rejected():
    with pytest.raises(ModelError, match="finite differences"):
        VectorFieldSet(1, [lambda x: -x, _const([1.0])], [lambda x: np.ones((x.shape[0], 1, 1)), _zero(1)])


def test_length_mismatch_rejected():
    with pytest.raises(ModelError):
        VectorFieldSet(1, [lambda x: -x, _const([1.0])], [_zero(1)])


def test_bad_output_shape_rejected():
    with pytest.raises(ModelError):
        VectorFieldSet(2, [lambda x: np.zeros((x.shape[0], 3)), _const([1.0, 0.0])], [_zero(2), _zero(2)])


def test_as_points_shapes():
    assert as_points(0.5, 1).shape == (1, 1)
    assert as_points(0.5, 2).shape == (1, 2)
    assert as_points([1.0, 2.0], 2).shape == (1, 2)
    assert as_points([1.0, 2.0, 3.0], 1).shape == (3, 1)
    with pytest.raises(ModelError):
        as_points(np.zeros((3, 2)), 1)


# Ito drift and generator ---------------------------------------------------------

def test_ito_drift_examples():
    assert ito_drift(brownian(), 0.7) == pytest.approx([0.0])
    assert ito_drift(geometric(mu=0.0, sigma=1.0), 0.8) == pytest.approx([0.4])
    assert ito_drift(ornstein_uhlenbeck(), 0.3) == pytest.approx([-0.3])


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 2), st.floats(-5, 5))
def test_ito_drift_gbm_property(mu, sigma, x):
    assert ito_drift(geometric(mu, sigma), x)[0] == pytest.approx((mu + 0.5 * sigma**2) * x, abs=1e-12)


def test_generator_examples():
    assert apply_generator(brownian(), square(), 0.3) == pytest.approx(1.0)
    assert apply_generator(ornstein_uhlenbeck(), coordinate(), 0.6) == pytest.approx(-0.6)
    for m in ("bm", "ou", "gbm", "poly"):
        assert apply_generator(make_model(m), constant(), 0.4) == pytest.approx(0.0, abs=1e-12)


def test_generator_fd_fallback_and_refusal():
    f = TestFunction("cos", lambda x: np.cos(x[:, 0]))
    x = 0.4
    exact = -0.5 * np.cos(x)
    assert apply_generator(brownian(), f, x) == pytest.approx(exact, rel=1e-5)
    with pytest.raises(ModelError):
        apply_generator(brownian(), f, x, allow_fd=False)


@pytest.mark.parametrize("name", ["bm", "ou", "gbm", "poly"])
def test_short_time_generator_consistency(name):
    """(P_dt f - f)/dt of one Euler step (Gauss-Hermite in the noise) tends to Lf
    at rate O(dt)."""
    vfs = make_model(name)
    f = bump(0.2)
    x = np.array([[0.3]])
    z, w = np.polynomial.hermite_e.hermegauss(40)
    w = w / w.sum()
    lf = apply_generator(vfs, f, x)
    errs = []
    for dt in (1e-2, 5e-3):
        sysm = BaseSystem(vfs)
        st_ = {"x": np.repeat(x, len(z), axis=0)}
        nxt = sysm.step(0.0, dt, st_, np.sqrt(dt) * z[:, None])
        est = (np.sum(w * f(nxt["x"])) - f(x)[0]) / dt
        errs.append(abs(est - lf))
    assert errs[1] < 0.6 * errs[0] + 1e-9
    assert errs[1] < 0.05 * max(1.0, abs(lf))


# ellipticity ------------------------------------------------------------------------

def test_sphere_directions_unit_and_axes():
    for d in (1, 2, 3, 4):
        xi = sphere_directions(d, 64)
        assert np.allclose(np.linalg.norm(xi, axis=1), 1.0)
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            assert np.any(np.all(np.isclose(xi, e), axis=1))
    assert np.array_equal(sphere_directions(3, 64), sphere_directions(3, 64))


def test_ellipticity_examples():
    assert ellipticity_margin(brownian(), 2.0) == pytest.approx(1.0)
    two = VectorFieldSet(2, [_const([0, 0]), _const([1, 0]), _const([0, 1])], [_zero(2)] * 3)
    assert ellipticity_margin(two, [0.0, 0.0]) == pytest.approx(1.0)
    assert ellipticity_exact(two, [0.0, 0.0]) == pytest.approx(1.0)
    degenerate = make_model("degenerate2d")
    assert ellipticity_margin(degenerate, [0.0, 0.0]) == 0.0
    assert ellipticity_exact(degenerate, [0.0, 0.0]) == 0.0


# schedules ---------------------------------------------------------------------------

def test_schedules():
    c = PerturbationSchedule.constant(0.5)
    assert c(0.3) == pytest.approx([0.5]) and c.bound == 0.5
    s = parse_schedule("sin")
    assert s(0.25) == pytest.approx([1.0]) and s.bound == 1.0
    assert parse_schedule(1)(0.0) == pytest.approx([1.0])
    with pytest.raises(ModelError):
        parse_schedule("cube")


def test_schedule_required():
    with pytest.raises(ModelError):
        AugmentationSpec(Kind.GIRSANOV, brownian())
    with pytest.raises(ModelError):
        AugmentationSpec(Kind.JACOBIAN, brownian(), PerturbationSchedule.constant(1.0))
    spec = AugmentationSpec(Kind.BISMUT_FEEDBACK, brownian())
    assert isinstance(spec.schedule, StateFeedbackSchedule)


# augmentations ------------------------------------------------------------------------

def _state(system, x, **kw):
    return system.initial_state(x, 1, **kw)


def test_girsanov_layout_on_bm():
    c = 0.7
    sysm = AugmentedSystem(AugmentationSpec(Kind.GIRSANOV, brownian(), PerturbationSchedule.constant(c)))
    st_ = _state(sysm, 0.2, u0=1.5)
    assert sysm.layout.names == ("x", "u")
    assert augmented_dim(sysm.spec) == 2
    drift = sysm.drift(0.0, st_)
    diff = sysm.diffusion(0.0, st_)
    assert drift["x"][0, 0] == 0.0 and drift["u"][0] == 0.0
    assert diff["x"][0, 0, 0] == 1.0 and diff["u"][0, 0] == pytest.approx(c * 1.5)


def test_jacobian_layout_on_ou():
    sysm = AugmentedSystem(AugmentationSpec(Kind.JACOBIAN, ornstein_uhlenbeck()))
    st_ = _state(sysm, 0.3)
    assert sysm.drift(0.0, st_)["U"][0, 0, 0] == pytest.approx(-1.0)
    assert np.all(sysm.diffusion(0.0, st_)["U"] == 0.0)
    assert augmented_dim(sysm.spec) == 2


def test_malliavin_on_bm_dv_is_dt():
    sysm = AugmentedSystem(AugmentationSpec(Kind.MALLIAVIN, brownian()))
    st_ = _state(sysm, 0.0)
    assert sysm.drift(0.0, st_)["V"][0, 0, 0] == pytest.approx(1.0)
    assert sysm.layout.names == ("x", "U", "V")
    assert augmented_dim(sysm.spec) == 3


def test_ibp_and_bismut_layouts():
    ibp = AugmentedSystem(AugmentationSpec(Kind.IBP, brownian(), PerturbationSchedule.constant(0.5)))
    st_ = _state(ibp, 1.0)
    assert st_["u"][0] == 0.0 and ibp.diffusion(0.0, st_)["u"][0, 0] == 0.5
    bis = AugmentedSystem(AugmentationSpec(Kind.BISMUT_FEEDBACK, make_model("degenerate2d")))
    assert bis.layout.shape("u") == (2,)
    assert augmented_dim(bis.spec) == 2 + 4 + 2


@pytest.mark.parametrize("kind", list(Kind))
def test_projection_reproduces_base(kind):
    vfs = polynomial([[0.0, -1.0, 0.0, -0.1], [1.0, 0.0, 0.1]])
    sched = None
    if kind in (Kind.GIRSANOV, Kind.IBP):
        sched = PerturbationSchedule.constant(0.4)
    sysm = AugmentedSystem(AugmentationSpec(kind, vfs, sched))
    base = BaseSystem(vfs)
    x = np.linspace(-1, 1, 7)[:, None]
    st_ = sysm.initial_state(0.0, 7)
    st_["x"] = x.copy()
    assert np.array_equal(sysm.drift(0.0, st_)["x"], base.drift(0.0, {"x": x})["x"])
    assert np.array_equal(sysm.diffusion(0.0, st_)["x"], base.diffusion(0.0, {"x": x})["x"])
    dw = next(block_noise(3, 0, 1, 1))[:7] * 0.1
    assert np.array_equal(sysm.step(0.0, 0.01, st_, dw)["x"], base.step(0.0, 0.01, {"x": x}, dw)["x"])


def test_girsanov_linear_in_u_pathwise():
    sysm = AugmentedSystem(AugmentationSpec(Kind.GIRSANOV, ornstein_uhlenbeck(), PerturbationSchedule.sine()))
    grid = TimeGrid(1.0, 32)
    out = []
    for lam in (1.0, 3.0):
        st_ = sysm.initial_state(0.2, BLOCK, u0=lam)
        for k, z in enumerate(block_noise(5, 0, grid.n_steps, 1)):
            st_ = sysm.step(k * grid.step, grid.step, st_, z * np.sqrt(grid.step))
        out.append(st_["u"])
    np.testing.assert_allclose(out[1], 3.0 * out[0], rtol=1e-13)


def test_malliavin_increment_psd():
    vfs = make_model("degenerate2d")
    sysm = AugmentedSystem(AugmentationSpec(Kind.MALLIAVIN, vfs))
    st_ = sysm.initial_state([0.0, 0.0], 100)
    for k, z in enumerate(block_noise(1, 0, 20, 1)):
        new = sysm.step(k * 0.05, 0.05, st_, z[:100] * np.sqrt(0.05))
        inc = new["V"] - st_["V"]
        assert np.allclose(inc, np.swapaxes(inc, 1, 2))
        assert np.linalg.eigvalsh(inc).min() >= -1e-12
        st_ = new


def test_ito_correction_is_drift_difference():
    vfs = geometric(0.1, 0.5)
    sysm = AugmentedSystem(AugmentationSpec(Kind.JACOBIAN, vfs))
    st_ = _state(sysm, 1.3)
    corr = sysm.ito_correction(0.0, st_)
    assert corr["x"][0, 0] == pytest.approx(0.5 * 0.25 * 1.3)
    assert corr["U"][0, 0, 0] == pytest.approx(0.5 * 0.25)


def test_nonaffine_drift_jacobian_matches_fd():
    vfs = polynomial([[0.0, -1.0, 0.0, -0.1], [1.0, 0.0, 0.1]])
    x = np.array([[0.7]])
    h = 1e-5
    fd = (ito_drift(vfs, x + h) - ito_drift(vfs, x - h)) / (2 * h)
    assert vfs.ito_drift_jacobian(x)[0, 0, 0] == pytest.approx(fd[0, 0], rel=1e-6)
