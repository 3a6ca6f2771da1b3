"""Vector fields, the Hörmander-form generator and the lifted field systems.

All maps are vectorised over a leading path axis: a field takes points of
shape ``(n, d)`` and returns ``(n, d)``, a Jacobian returns ``(n, d, d)``.

Every lift is canonicalised as an Itô SDE (drift plus one diffusion column
per noise).  The Stratonovich correction of the base system,
``Y = X_0 + 1/2 sum_i DX_i X_i``, needs only first derivatives of the
fields; the Jacobian of ``Y`` (needed for the flow ``U``) is assembled from
the supplied Jacobians with a directional difference of ``DX_i`` along
``X_i``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Field = Callable[[np.ndarray], np.ndarray]


class ModelError(ValueError):
    """Raised for inconsistent model or augmentation definitions."""


def as_points(x, dim: int) -> np.ndarray:
    """Return ``x`` as a float array of shape ``(n, dim)``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = np.full((1, dim), float(arr))
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.shape[0] == dim else arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ModelError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return arr


def _check_points_default(dim: int) -> np.ndarray:
    rng = np.random.default_rng(20061101)
    return rng.standard_normal((6, dim))


@dataclass(frozen=True)
class VectorFieldSet:
    """Driving fields ``X_0..X_m`` on ``R^d`` with closed-form Jacobians.

    ``fields[0]`` is the drift field of the Hörmander form (not the Itô
    drift); ``fields[1:]`` are the diffusion fields.

    Parameters
    ----------
    dim : int
    fields, jacobians : sequence of callables, length ``m + 1``
    name : str, optional
    check_points : array of shape (k, dim), optional
        Points where Jacobians are compared with central differences of the
        fields.  Pass an empty array to skip the check.
    affine : bool
        Declares every field affine, which lets the engine skip the
        second-derivative term in the Jacobian of the Itô drift.
    """

    dim: int
    fields: tuple
    jacobians: tuple
    name: str = "custom"
    check_points: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    affine: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "jacobians", tuple(self.jacobians))
        if self.dim < 1:
            raise ModelError("dim must be positive")
        if len(self.fields) != len(self.jacobians):
            raise ModelError("fields and jacobians must have the same length")
        if len(self.fields) < 2:
            raise ModelError("need a drift field and at least one diffusion field")
        pts = self.check_points
        if pts is None:
            pts = _check_points_default(self.dim)
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        if len(pts):
            self._check_shapes(pts)
            self._check_jacobians(pts)

    @property
    def num_noise(self) -> int:
        return len(self.fields) - 1

    def _check_shapes(self, pts):
        n, d = pts.shape
        for i, (f, jac) in enumerate(zip(self.fields, self.jacobians)):
            if np.shape(f(pts)) != (n, d):
                raise ModelError(f"field {i} returned shape {np.shape(f(pts))}, expected {(n, d)}")
            if np.shape(jac(pts)) != (n, d, d):
                raise ModelError(f"jacobian {i} returned wrong shape {np.shape(jac(pts))}")

    def _check_jacobians(self, pts, rtol=1e-5):
        d = self.dim
        for i, (f, jac) in enumerate(zip(self.fields, self.jacobians)):
            exact = jac(pts)
            fd = np.empty_like(exact)
            for k in range(d):
                step = 1e-6 * (1.0 + np.abs(pts[:, k]))
                e = np.zeros_like(pts)
                e[:, k] = step
                fd[:, :, k] = (f(pts + e) - f(pts - e)) / (2 * step[:, None])
            scale = max(1.0, float(np.max(np.abs(exact))))
            if np.max(np.abs(exact - fd)) > rtol * scale:
                raise ModelError(f"jacobian {i} disagrees with finite differences of field {i}")

    # evaluation helpers -------------------------------------------------

    def diffusion_matrix(self, x: np.ndarray) -> np.ndarray:
        """Columns ``X_1..X_m`` stacked: shape ``(n, d, m)``."""
        return np.stack([f(x) for f in self.fields[1:]], axis=-1)

    def diffusion_jacobians(self, x: np.ndarray) -> np.ndarray:
        """``DX_1..DX_m`` stacked: shape ``(m, n, d, d)``."""
        return np.stack([j(x) for j in self.jacobians[1:]], axis=0)

    def ito_drift_jacobian(self, x: np.ndarray) -> np.ndarray:
        """Jacobian of the Itô drift ``Y``: ``DX_0 + 1/2 sum_i (D^2X_i[X_i] + DX_i DX_i)``."""
        out = self.jacobians[0](x).copy()
        for f, jac in zip(self.fields[1:], self.jacobians[1:]):
            J = jac(x)
            out += 0.5 * _mm(J, J)
            if not self.affine:
                v = f(x)
                eps = 1e-5 * (1.0 + np.max(np.abs(x), axis=1, keepdims=True))
                out += 0.5 * (jac(x + eps * v) - jac(x - eps * v)) / (2 * eps[..., None])
        return out


def ito_drift(vfs: VectorFieldSet, x) -> np.ndarray:
    """Itô drift ``Y(x) = X_0(x) + 1/2 sum_i DX_i(x) X_i(x)``.

    Accepts a single point (returns ``(d,)``) or a batch ``(n, d)``.
    """
    single = np.ndim(x) <= 1
    pts = as_points(x, vfs.dim)
    y = vfs.fields[0](pts).copy()
    for f, jac in zip(vfs.fields[1:], vfs.jacobians[1:]):
        y += 0.5 * np.einsum("nij,nj->ni", jac(pts), f(pts))
    return y[0] if single else y


@dataclass(frozen=True)
class TestFunction:
    """Scalar test function with optional closed-form derivatives.

    ``value`` maps ``(n, d) -> (n,)``, ``grad`` maps to ``(n, d)`` and
    ``hess`` to ``(n, d, d)``.
    """

    __test__ = False

    name: str
    value: Callable
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    bounded: bool = True

    def __call__(self, x):
        return self.value(x)


def _fd_grad(f, x):
    n, d = x.shape
    g = np.empty((n, d))
    for k in range(d):
        h = 1e-4 * (1.0 + np.abs(x[:, k]))
        e = np.zeros_like(x)
        e[:, k] = h
        g[:, k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _fd_hess(f, x):
    n, d = x.shape
    H = np.empty((n, d, d))
    h = 1e-4 * (1.0 + np.max(np.abs(x), axis=1))
    f0 = f(x)
    for j in range(d):
        for k in range(d):
            ej = np.zeros_like(x)
            ek = np.zeros_like(x)
            ej[:, j] = h
            ek[:, k] = h
            if j == k:
                H[:, j, j] = (f(x + ej) - 2 * f0 + f(x - ej)) / h**2
            else:
                H[:, j, k] = (f(x + ej + ek) - f(x + ej - ek) - f(x - ej + ek) + f(x - ej - ek)) / (4 * h**2)
    return H


def apply_generator(vfs: VectorFieldSet, f: TestFunction, x, allow_fd: bool = True):
    """Evaluate ``Lf`` in the expanded form

    ``<X_0, Df> + 1/2 sum <DX_i X_i, Df> + 1/2 sum <X_i, D^2 f X_i>``.

    Missing derivatives of ``f`` fall back to central differences with step
    ``1e-4 (1 + |x|)`` unless ``allow_fd`` is false.
    """
    single = np.ndim(x) <= 1
    pts = as_points(x, vfs.dim)
    if (f.grad is None or f.hess is None) and not allow_fd:
        raise ModelError(f"test function {f.name!r} has no closed-form derivatives and finite differences are disabled")
    g = f.grad(pts) if f.grad is not None else _fd_grad(f.value, pts)
    H = f.hess(pts) if f.hess is not None else _fd_hess(f.value, pts)
    out = np.einsum("ni,ni->n", ito_drift(vfs, pts), g)
    for fi in vfs.fields[1:]:
        v = fi(pts)
        out += 0.5 * np.einsum("ni,nij,nj->n", v, H, v)
    return float(out[0]) if single else out


# ellipticity ---------------------------------------------------------------

def sphere_directions(dim: int, n: int) -> np.ndarray:
    """Deterministic, roughly uniform unit directions including ``±e_k``."""
    axes = np.concatenate([np.eye(dim), -np.eye(dim)])
    if dim == 1:
        return axes
    n_extra = max(n - 2 * dim, 0)
    if dim == 2:
        ang = np.pi * (np.arange(n_extra) + 0.5) / max(n_extra, 1) * 2.0
        extra = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    elif dim == 3:
        k = np.arange(n_extra) + 0.5
        z = 1 - 2 * k / max(n_extra, 1)
        r = np.sqrt(np.clip(1 - z * z, 0, None))
        phi = np.pi * (3 - np.sqrt(5)) * k
        extra = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    else:
        from scipy.stats import norm, qmc

        m = max(int(np.ceil(np.log2(max(n_extra, 1)))), 0)
        u = qmc.Sobol(dim, scramble=True, seed=0).random_base2(m)[:n_extra]
        g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
        extra = g / np.linalg.norm(g, axis=1, keepdims=True)
    return np.concatenate([axes, extra[:n_extra]])


def ellipticity_margin(vfs: VectorFieldSet, x, n_dirs: int = 64) -> float:
    """Min over sampled unit ``xi`` of ``sum_i <X_i(x), xi>^2``."""
    n_dirs = max(n_dirs, 2 * vfs.dim)
    xi = sphere_directions(vfs.dim, n_dirs)
    B = vfs.diffusion_matrix(as_points(x, vfs.dim))[0]  # (d, m)
    vals = np.sum((xi @ B) ** 2, axis=1)
    return max(float(np.min(vals)), 0.0)


def ellipticity_exact(vfs: VectorFieldSet, x) -> float:
    """Smallest eigenvalue of ``sum_i X_i X_i^T`` (``d <= 3``)."""
    if vfs.dim > 3:
        raise ModelError("exact ellipticity is provided for d <= 3 only")
    B = vfs.diffusion_matrix(as_points(x, vfs.dim))[0]
    return max(float(np.linalg.eigvalsh(B @ B.T)[0]), 0.0)


# schedules -----------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationSchedule:
    """State-independent perturbation ``t -> h_t`` in ``R^m``."""

    h: Callable[[float], np.ndarray]
    bound: float
    name: str = "h"

    def __call__(self, t: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.h(t), dtype=float))

    @classmethod
    def constant(cls, c, m: int = 1):
        c_arr = np.broadcast_to(np.asarray(c, dtype=float), (m,)).copy()
        return cls(lambda t: c_arr, float(np.max(np.abs(c_arr))), name=f"const({float(c_arr[0]):g})")

    @classmethod
    def sine(cls, amplitude: float = 1.0, omega: float = 2 * np.pi, m: int = 1):
        return cls(lambda t: np.full(m, amplitude * np.sin(omega * t)), abs(amplitude),
                   name=f"sin({amplitude:g},{omega:g})")


@dataclass(frozen=True)
class StateFeedbackSchedule:
    """State-dependent coefficients for the perturbation ``<phi(x), h>^i X_i``.

    ``phi(x, W)`` receives points ``(n, d)`` and the inverse flow ``W = U^{-1}``
    ``(n, d, d)`` and returns an array ``(n, out_dim, m)``: column ``i``
    drives the lifted coordinate along noise ``i``.
    """

    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    out_dim: int
    growth_exponent: float = 0.0
    name: str = "phi"

    @classmethod
    def bismut(cls, vfs: VectorFieldSet):
        """The choice ``phi = (U^{-1} X_i)^T`` that yields a vector weight."""

        def phi(x, W):
            return _mm(W, vfs.diffusion_matrix(x))

        return cls(phi, vfs.dim, growth_exponent=0.0, name="bismut")


# augmentations -------------------------------------------------------------

class Kind(enum.Enum):
    GIRSANOV = "girsanov"
    IBP = "ibp"
    JACOBIAN = "jacobian"
    MALLIAVIN = "malliavin"
    BISMUT_FEEDBACK = "bismut_feedback"


_NEEDS_SCHEDULE = {Kind.GIRSANOV, Kind.IBP, Kind.BISMUT_FEEDBACK}


@dataclass(frozen=True)
class AugmentationSpec:
    """Which lift to build.

    ``with_covariance`` adds the Malliavin blocks ``V`` and ``K`` to a
    ``BISMUT_FEEDBACK`` lift so both sides of the Bismut identity come from
    one ensemble.  ``with_variation`` adds to a ``MALLIAVIN`` lift the matrix
    ``K`` solving the inhomogeneous linear equation whose variation-of-
    constants solution is ``U_t (K_0 + int U_s^{-1} Y_s ds)``; started from
    ``K_0 = 0`` it equals ``U_t V_t``.
    """

    kind: Kind
    base: VectorFieldSet
    schedule: object = None
    with_covariance: bool = False
    with_variation: bool = False

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in _NEEDS_SCHEDULE and self.schedule is None:
            if kind is Kind.BISMUT_FEEDBACK:
                object.__setattr__(self, "schedule", StateFeedbackSchedule.bismut(self.base))
            else:
                raise ModelError(f"{kind.name} augmentation needs a perturbation schedule")
        if kind not in _NEEDS_SCHEDULE and self.schedule is not None:
            raise ModelError(f"{kind.name} augmentation takes no schedule")
        if kind in (Kind.GIRSANOV, Kind.IBP) and not isinstance(self.schedule, PerturbationSchedule):
            raise ModelError(f"{kind.name} needs a PerturbationSchedule")
        if kind is Kind.BISMUT_FEEDBACK and not isinstance(self.schedule, StateFeedbackSchedule):
            raise ModelError("BISMUT_FEEDBACK needs a StateFeedbackSchedule")
        if self.with_covariance and kind is not Kind.BISMUT_FEEDBACK:
            raise ModelError("with_covariance applies to BISMUT_FEEDBACK only")
        if self.with_variation and kind is not Kind.MALLIAVIN:
            raise ModelError("with_variation applies to MALLIAVIN only")


@dataclass(frozen=True)
class Layout:
    """Ordered named blocks of the augmented state.

    ``aux`` blocks (the co-simulated inverse flow ``W``) are carried by the
    engine but are not coordinates of the lifted system.
    """

    blocks: tuple  # of (name, shape)
    aux: tuple = ()

    @property
    def names(self):
        return tuple(name for name, _ in self.blocks)

    @property
    def dim(self) -> int:
        return int(sum(np.prod(shape, dtype=int) for _, shape in self.blocks))

    def shape(self, name):
        for n, s in self.blocks + self.aux:
            if n == name:
                return s
        raise KeyError(name)

    def component_labels(self):
        labels = []
        for name, shape in self.blocks:
            for idx in np.ndindex(*shape):
                labels.append(f"{name}[{','.join(map(str, idx))}]" if idx else name)
        return labels

    def flatten(self, state: dict) -> np.ndarray:
        n = state[self.blocks[0][0]].shape[0]
        return np.concatenate([state[name].reshape(n, -1) for name, _ in self.blocks], axis=1)


def _mm(A, B):
    """Batched product of small matrices; plain broadcasting when the inner
    dimension is 1 (much faster than matmul on stacks of 1x1 blocks)."""
    if A.shape[-1] == 1:
        return A * B
    return A @ B


class BaseSystem:
    """The base Itô system, optionally with a deterministic drift perturbation
    ``sum_i h_t^i X_i``.
    """

    def __init__(self, vfs: VectorFieldSet, perturbation: Optional[PerturbationSchedule] = None):
        self.vfs = vfs
        self.perturbation = perturbation
        self.layout = Layout(blocks=(("x", (vfs.dim,)),))

    @property
    def num_noise(self):
        return self.vfs.num_noise

    def initial_state(self, x, n: int) -> dict:
        x0 = as_points(x, self.vfs.dim)[0]
        return {"x": np.broadcast_to(x0, (n, self.vfs.dim)).copy()}

    def _x_drift(self, t, x):
        y = ito_drift(self.vfs, x)
        if self.perturbation is not None:
            y = y + self.vfs.diffusion_matrix(x) @ self.perturbation(t)
        return y

    def drift(self, t, state) -> dict:
        return {"x": self._x_drift(t, state["x"])}

    def diffusion(self, t, state) -> dict:
        """Per-noise diffusion columns; each block has a trailing noise axis."""
        return {"x": self.vfs.diffusion_matrix(state["x"])}

    def _x_step(self, t, dt, x, dw, B):
        return x + self._x_drift(t, x) * dt + np.einsum("nim,nm->ni", B, dw)

    def step(self, t, dt, state, dw) -> dict:
        x = state["x"]
        B = self.vfs.diffusion_matrix(x)
        return {"x": self._x_step(t, dt, x, dw, B)}

    def lipschitz_estimate(self, x) -> float:
        pts = as_points(x, self.vfs.dim)
        return float(np.linalg.norm(self.vfs.ito_drift_jacobian(pts)[0], 2))


class AugmentedSystem(BaseSystem):
    """Executable Itô form of a lift described by an :class:`AugmentationSpec`.

    Blocks and their Itô dynamics (``A = DY``, ``B_i = DX_i``, ``W = U^{-1}``):

    ``x``  dx = Y dt + sum X_i dw^i
    ``u``  GIRSANOV: du = sum h^i u dw^i (advanced multiplicatively);
           IBP: du = sum h^i dw^i;  BISMUT_FEEDBACK: du = sum phi_i(x, W) dw^i
    ``U``  dU = A U dt + sum B_i U dw^i
    ``W``  dW = -W (A - sum B_i B_i) dt - sum W B_i dw^i, stepped as
           ``W (I - dM + dM^2)`` with ``dM`` the increment driving ``U``
    ``V``  dV = sum (W X_i)(W X_i)^T dt
    ``K``  dK = (A K + sum X_i (W X_i)^T) dt + sum B_i K dw^i
    """

    def __init__(self, spec: AugmentationSpec):
        super().__init__(spec.base)
        self.spec = spec
        d = spec.base.dim
        kind = spec.kind
        blocks = [("x", (d,))]
        aux = ()
        if kind in (Kind.JACOBIAN, Kind.MALLIAVIN, Kind.BISMUT_FEEDBACK):
            blocks.append(("U", (d, d)))
            aux = (("W", (d, d)),)
        if kind is Kind.MALLIAVIN or spec.with_covariance:
            blocks.append(("V", (d, d)))
        if spec.with_variation or spec.with_covariance:
            blocks.append(("K", (d, d)))
        if kind in (Kind.GIRSANOV, Kind.IBP):
            blocks.append(("u", ()))
        elif kind is Kind.BISMUT_FEEDBACK:
            out = spec.schedule.out_dim
            blocks.append(("u", (out,) if out > 1 or spec.schedule.name == "bismut" else ()))
        self.layout = Layout(blocks=tuple(blocks), aux=aux)
        self._has_flow = "U" in self.layout.names

    @property
    def kind(self):
        return self.spec.kind

    def initial_state(self, x, n: int, u0=None, U0=None, V0=None, K0=None) -> dict:
        d = self.vfs.dim
        state = super().initial_state(x, n)
        if self._has_flow:
            U = np.eye(d) if U0 is None else np.asarray(U0, dtype=float).reshape(d, d)
            state["U"] = np.broadcast_to(U, (n, d, d)).copy()
            state["W"] = np.broadcast_to(np.linalg.inv(U), (n, d, d)).copy()
        if "V" in self.layout.names:
            V = np.zeros((d, d)) if V0 is None else np.asarray(V0, dtype=float).reshape(d, d)
            state["V"] = np.broadcast_to(V, (n, d, d)).copy()
        if "K" in self.layout.names:
            K = np.zeros((d, d)) if K0 is None else np.asarray(K0, dtype=float).reshape(d, d)
            state["K"] = np.broadcast_to(K, (n, d, d)).copy()
        if "u" in self.layout.names:
            shape = self.layout.shape("u")
            if u0 is None:
                u0 = 1.0 if self.kind is Kind.GIRSANOV else 0.0
            state["u"] = np.broadcast_to(np.asarray(u0, dtype=float), (n,) + shape).copy()
        return state

    def drift(self, t, state) -> dict:
        x = state["x"]
        out = {"x": ito_drift(self.vfs, x)}
        if self._has_flow:
            A = self.vfs.ito_drift_jacobian(x)
            Bs = self.vfs.diffusion_jacobians(x)
            out["U"] = _mm(A, state["U"])
            out["W"] = -_mm(state["W"], A - np.einsum("mnij,mnjk->nik", Bs, Bs))
        if "V" in self.layout.names or "K" in self.layout.names:
            WX = _mm(state["W"], self.vfs.diffusion_matrix(x))  # (n, d, m)
            if "V" in self.layout.names:
                out["V"] = _mm(WX, np.swapaxes(WX, 1, 2))
            if "K" in self.layout.names:
                out["K"] = _mm(A, state["K"]) + _mm(self.vfs.diffusion_matrix(x), np.swapaxes(WX, 1, 2))
        if "u" in self.layout.names:
            out["u"] = np.zeros_like(state["u"])
        return out

    def ito_correction(self, t, state) -> dict:
        """Drift added when passing from the Stratonovich form of the lift to
        its Itô form (zero for the ``V`` and ``u`` blocks)."""
        x = state["x"]
        out = {"x": ito_drift(self.vfs, x) - self.vfs.fields[0](x)}
        if self._has_flow:
            corr = self.vfs.ito_drift_jacobian(x) - self.vfs.jacobians[0](x)
            out["U"] = _mm(corr, state["U"])
            if "K" in self.layout.names:
                out["K"] = _mm(corr, state["K"])
        return out

    def diffusion(self, t, state) -> dict:
        x = state["x"]
        m = self.num_noise
        B = self.vfs.diffusion_matrix(x)
        out = {"x": B}
        if self._has_flow:
            Bs = self.vfs.diffusion_jacobians(x)
            out["U"] = np.einsum("mnij,njk->nikm", Bs, state["U"])
            out["W"] = -np.einsum("nij,mnjk->nikm", state["W"], Bs)
        if "V" in self.layout.names:
            out["V"] = np.zeros(state["V"].shape + (m,))
        if "K" in self.layout.names:
            out["K"] = np.einsum("mnij,njk->nikm", self.vfs.diffusion_jacobians(x), state["K"])
        if "u" in self.layout.names:
            out["u"] = self._u_diffusion(t, state)
        return out

    def _u_diffusion(self, t, state):
        kind = self.kind
        u = state["u"]
        if kind is Kind.GIRSANOV:
            return u[:, None] * self.spec.schedule(t)[None, :]
        if kind is Kind.IBP:
            return np.broadcast_to(self.spec.schedule(t), (u.shape[0], self.num_noise)).copy()
        coeff = self.spec.schedule.phi(state["x"], state["W"])  # (n, out, m)
        return coeff if u.ndim == 2 else coeff[:, 0, :]

    def step(self, t, dt, state, dw) -> dict:
        x = state["x"]
        B = self.vfs.diffusion_matrix(x)
        new = {"x": self._x_step(t, dt, x, dw, B)}
        names = self.layout.names
        if self._has_flow:
            A = self.vfs.ito_drift_jacobian(x)
            Bs = self.vfs.diffusion_jacobians(x)
            noise = np.einsum("mnij,nm->nij", Bs, dw)  # sum_i B_i dw^i
            U, W = state["U"], state["W"]
            dM = A * dt + noise
            new["U"] = U + _mm(dM, U)
            # second-order pathwise inverse of (I + dM): the dM^2 term carries
            # the Ito correction, so U W - I stays O(step) on every path
            new["W"] = W - _mm(W, dM) + _mm(_mm(W, dM), dM)
            if "V" in names or "K" in names:
                WX = _mm(W, B)
                WXWX = _mm(WX, np.swapaxes(WX, 1, 2))
            if "V" in names:
                new["V"] = state["V"] + WXWX * dt
            if "K" in names:
                K = state["K"]
                new["K"] = K + (_mm(A, K) + _mm(B, np.swapaxes(WX, 1, 2))) * dt + _mm(noise, K)
        if "u" in names:
            u = state["u"]
            if self.kind is Kind.GIRSANOV:
                h = self.spec.schedule(t)
                new["u"] = u * np.exp(dw @ h - 0.5 * float(h @ h) * dt)
            else:
                col = self._u_diffusion(t, state)
                new["u"] = u + (np.einsum("nkm,nm->nk", col, dw) if u.ndim == 2 else np.einsum("nm,nm->n", col, dw))
        return new


def build_augmentation(spec: AugmentationSpec) -> AugmentedSystem:
    return AugmentedSystem(spec)


def augmented_dim(spec: AugmentationSpec) -> int:
    return build_augmentation(spec).layout.dim
