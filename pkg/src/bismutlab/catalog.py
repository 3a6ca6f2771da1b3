"""Built-in models addressable by name, and the test-function dictionary."""
from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as P

from .field_model import ModelError, PerturbationSchedule, TestFunction, VectorFieldSet

DEFAULT_PARAMS = {
    "bm": {"dim": 1},
    "ou": {"a": 1.0, "sigma": 1.0},
    "gbm": {"mu": 0.0, "sigma": 0.5},
    "poly": {"fields": [[0.0, -1.0, 0.0, -0.1], [1.0, 0.0, 0.1]]},
}
CONTROL_MODELS = ("degenerate2d",)


def _const(vec):
    vec = np.asarray(vec, dtype=float)
    return lambda x: np.broadcast_to(vec, x.shape).copy()


def _zero_jac(d):
    return lambda x: np.zeros((x.shape[0], d, d))


def _linear(M):
    M = np.asarray(M, dtype=float)
    return (lambda x: x @ M.T), (lambda x: np.broadcast_to(M, (x.shape[0],) + M.shape).copy())


def brownian(dim: int = 1) -> VectorFieldSet:
    fields = [_const(np.zeros(dim))] + [_const(e) for e in np.eye(dim)]
    return VectorFieldSet(dim, fields, [_zero_jac(dim)] * (dim + 1), name="bm", affine=True)


def ornstein_uhlenbeck(a: float = 1.0, sigma: float = 1.0) -> VectorFieldSet:
    f0, j0 = _linear([[-a]])
    return VectorFieldSet(1, [f0, _const([sigma])], [j0, _zero_jac(1)],
                          name=f"ou(a={a:g},sigma={sigma:g})", affine=True)


def geometric(mu: float = 0.0, sigma: float = 0.5) -> VectorFieldSet:
    f0, j0 = _linear([[mu]])
    f1, j1 = _linear([[sigma]])
    return VectorFieldSet(1, [f0, f1], [j0, j1], name=f"gbm(mu={mu:g},sigma={sigma:g})", affine=True)


def polynomial(fields) -> VectorFieldSet:
    """Scalar model with ``X_i(x) = sum_k c_ik x^k`` (coefficients lowest first)."""
    coeffs = [np.asarray(c, dtype=float) for c in fields]
    if len(coeffs) < 2:
        raise ModelError("poly needs a drift and at least one diffusion field")

    def make(c):
        dc = P.polyder(c) if len(c) > 1 else np.zeros(1)
        return (lambda x: P.polyval(x, c)), (lambda x: P.polyval(x, dc)[..., None])

    pairs = [make(c) for c in coeffs]
    affine = all(len(np.trim_zeros(c, "b")) <= 2 for c in coeffs)
    return VectorFieldSet(1, [p[0] for p in pairs], [p[1] for p in pairs], name="poly", affine=affine)


def degenerate2d() -> VectorFieldSet:
    """Negative control: one noise along ``e_1`` in the plane."""
    return VectorFieldSet(2, [_const([0.0, 0.0]), _const([1.0, 0.0])], [_zero_jac(2)] * 2,
                          name="degenerate2d", affine=True)


def make_model(name: str, params: dict | None = None) -> VectorFieldSet:
    params = dict(params or {})
    if name == "bm":
        return brownian(**{**DEFAULT_PARAMS["bm"], **params})
    if name == "ou":
        return ornstein_uhlenbeck(**{**DEFAULT_PARAMS["ou"], **params})
    if name == "gbm":
        return geometric(**{**DEFAULT_PARAMS["gbm"], **params})
    if name == "poly":
        return polynomial(**{**DEFAULT_PARAMS["poly"], **params})
    if name == "degenerate2d":
        return degenerate2d(**params)
    raise ModelError(f"unknown model {name!r}; known: {', '.join(list(DEFAULT_PARAMS) + list(CONTROL_MODELS))}")


def model_names():
    return tuple(DEFAULT_PARAMS)


# test functions ------------------------------------------------------------

def constant(c: float = 1.0, dim: int = 1) -> TestFunction:
    return TestFunction(
        f"const({c:g})",
        lambda x: np.full(x.shape[0], float(c)),
        lambda x: np.zeros_like(x),
        lambda x: np.zeros(x.shape + (x.shape[1],)),
    )


def coordinate(k: int = 0) -> TestFunction:
    def grad(x):
        g = np.zeros_like(x)
        g[:, k] = 1.0
        return g

    return TestFunction(f"x{k}" if k else "x", lambda x: x[:, k].copy(), grad,
                        lambda x: np.zeros(x.shape + (x.shape[1],)), bounded=False)


def square(k: int = 0) -> TestFunction:
    def grad(x):
        g = np.zeros_like(x)
        g[:, k] = 2 * x[:, k]
        return g

    def hess(x):
        H = np.zeros(x.shape + (x.shape[1],))
        H[:, k, k] = 2.0
        return H

    return TestFunction(f"x{k}^2" if k else "x^2", lambda x: x[:, k] ** 2, grad, hess, bounded=False)


def bump(center: float = 0.5, k: int = 0) -> TestFunction:
    """``exp(-(x_k - center)^2)``."""

    def val(x):
        return np.exp(-((x[:, k] - center) ** 2))

    def grad(x):
        g = np.zeros_like(x)
        g[:, k] = -2 * (x[:, k] - center) * val(x)
        return g

    def hess(x):
        H = np.zeros(x.shape + (x.shape[1],))
        z = x[:, k] - center
        H[:, k, k] = (4 * z * z - 2) * val(x)
        return H

    return TestFunction(f"bump({center:g})", val, grad, hess)


def parse_test_function(name: str) -> TestFunction:
    """Parse ``1``, ``x``, ``x^2`` or ``bump`` / ``bump(c)``."""
    name = str(name).strip()
    if name in ("1", "const", "constant"):
        return constant()
    if name == "x":
        return coordinate()
    if name in ("x^2", "x2", "x**2"):
        return square()
    if name.startswith("bump"):
        inner = name[4:].strip("()")
        return bump(float(inner)) if inner else bump()
    raise ModelError(f"unknown test function {name!r}")


DICTIONARY = ("1", "x", "x^2", "bump")


def parse_schedule(h, m: int = 1) -> PerturbationSchedule:
    """A number gives a constant schedule, ``"sin"`` the unit sine schedule
    ``sin(2 pi t)``; schedules pass through unchanged."""
    if isinstance(h, PerturbationSchedule):
        return h
    if isinstance(h, str):
        key = h.strip().lower()
        if key in ("sin", "sine"):
            return PerturbationSchedule.sine(m=m)
        try:
            h = float(key)
        except ValueError:
            raise ModelError(f"unknown schedule {h!r}") from None
    if isinstance(h, (int, float)) and not isinstance(h, bool):
        return PerturbationSchedule.constant(float(h), m)
    raise ModelError(f"unknown schedule {h!r}")


def gaussian_marginal(vfs: VectorFieldSet, x, t: float):
    """Mean and variance of ``x_t`` for a scalar model with affine drift and
    constant diffusion fields (the Gaussian class)."""
    if vfs.dim != 1 or not vfs.affine:
        raise ModelError("exact marginal needs a scalar affine model")
    pts = np.array([[0.0], [1.0]])
    for j in vfs.jacobians[1:]:
        if np.any(np.asarray(j(pts)) != 0):
            raise ModelError("exact marginal needs constant diffusion fields")
    beta = float(vfs.jacobians[0](pts[:1])[0, 0, 0])
    alpha = float(vfs.fields[0](pts[:1])[0, 0])
    s2 = float(np.sum(vfs.diffusion_matrix(pts[:1])[0] ** 2))
    x = float(np.atleast_1d(x)[0])
    if abs(beta) < 1e-12:
        return x + alpha * t, s2 * t
    g = np.exp(beta * t)
    return g * x + alpha * (g - 1) / beta, s2 * (g * g - 1) / (2 * beta)
