"""Crank–Nicolson oracle for ``dF/dtau = a : D^2 F + b . DF + c F`` in one or
two space dimensions.

Dirichlet data are the initial data frozen on the boundary.  The first time
step is replaced by two implicit-Euler half steps (Rannacher start).  Each
solve is repeated on the nested grid with half the nodes and half the time
steps; the difference of the two solutions is the Richardson error budget.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .field_model import (AugmentationSpec, BaseSystem, Kind, ModelError, PerturbationSchedule,
                          VectorFieldSet, ito_drift)


class PDEError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSolution:
    axes: tuple
    values: np.ndarray
    n_time: int
    t: float
    boundary: str = "dirichlet: initial data frozen"
    coarse: Optional["GridSolution"] = field(default=None, repr=False)

    @property
    def bounds(self):
        return tuple((float(a[0]), float(a[-1])) for a in self.axes)

    @property
    def nodes(self):
        return tuple(len(a) for a in self.axes)

    def _check_inside(self, pt):
        for v, (lo, hi) in zip(pt, self.bounds):
            if not lo - 1e-12 <= v <= hi + 1e-12:
                raise ValueError(f"point {tuple(pt)} outside grid domain {self.bounds}")

    def value_at(self, point) -> float:
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        if len(pt) != len(self.axes):
            raise ValueError("point dimension does not match the grid")
        self._check_inside(pt)
        if len(self.axes) == 1:
            return float(np.interp(pt[0], self.axes[0], self.values))
        return float(RegularGridInterpolator(self.axes, self.values)(pt[None, :])[0])

    def budget_at(self, point) -> float:
        """Richardson estimate ``|F_h - F_2h|`` at ``point`` (0 without a coarse solve)."""
        if self.coarse is None:
            return 0.0
        return abs(self.value_at(point) - self.coarse.value_at(point))

    def gradient_at(self, point, axis: int = 0) -> float:
        """Central-difference derivative of the grid solution along ``axis``."""
        grad = np.gradient(self.values, self.axes[axis], axis=axis)
        return GridSolution(self.axes, grad, self.n_time, self.t).value_at(point)

    def to_csv(self, path) -> None:
        names = ["x", "u"][: len(self.axes)]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["value"])
            for idx in np.ndindex(*self.values.shape):
                w.writerow([repr(float(m[idx])) for m in mesh] + [repr(float(self.values[idx]))])


def _grid_points(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _operator(axes, a, b, c):
    """Sparse central-difference operator; boundary rows are zero."""
    shape = tuple(len(ax) for ax in axes)
    D = len(axes)
    N = int(np.prod(shape))
    idx = np.arange(N).reshape(shape)
    h = [ax[1] - ax[0] for ax in axes]
    interior = np.ones(shape, dtype=bool)
    for k in range(D):
        sl = [slice(None)] * D
        sl[k] = 0
        interior[tuple(sl)] = False
        sl[k] = -1
        interior[tuple(sl)] = False
    I = idx[interior]
    sub = np.array(np.unravel_index(I, shape)).T
    aI, bI = a[I], b[I]
    rows, cols, vals = [], [], []

    def add(offsets, coeff):
        nb = sub + np.asarray(offsets)
        rows.append(I)
        cols.append(np.ravel_multi_index(nb.T, shape))
        vals.append(coeff)

    diag = np.zeros(len(I)) if c is None else c[I].astype(float)
    for k in range(D):
        e = np.zeros(D, dtype=int)
        e[k] = 1
        akk = aI[:, k, k]
        add(e, akk / h[k] ** 2 + bI[:, k] / (2 * h[k]))
        add(-e, akk / h[k] ** 2 - bI[:, k] / (2 * h[k]))
        diag = diag - 2 * akk / h[k] ** 2
    for j in range(D):
        for k in range(j + 1, D):
            ajk = (aI[:, j, k] + aI[:, k, j]) / (4 * h[j] * h[k])
            ej = np.zeros(D, dtype=int)
            ek = np.zeros(D, dtype=int)
            ej[j] = 1
            ek[k] = 1
            add(ej + ek, ajk)
            add(-ej - ek, ajk)
            add(ej - ek, -ajk)
            add(-ej + ek, -ajk)
    rows.append(I)
    cols.append(I)
    vals.append(diag)
    L = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return L, interior.ravel()


def _peclet(axes, a, b, interior):
    """Largest cell Peclet number ``|b_k| h_k / (2 a_kk)`` over interior nodes."""
    h = [ax[1] - ax[0] for ax in axes]
    worst = 0.0
    for k in range(len(axes)):
        akk = a[interior, k, k]
        bk = np.abs(b[interior, k])
        ok = akk > 1e-14
        if np.any(ok):
            worst = max(worst, float(np.max(bk[ok] * h[k] / (2 * akk[ok]))))
    return worst


def _factor(M):
    try:
        return spla.splu(M.tocsc())
    except RuntimeError as exc:
        raise PDEError(f"singular linear system: {exc}") from exc


def _march(axes, coeffs, F0, t, n_time, t0, time_dependent):
    pts = _grid_points(axes)
    N = len(pts)
    dt = t / n_time
    eye = sp.identity(N, format="csc")

    def op(tau):
        a, b, c = coeffs(tau, pts)
        return _operator(axes, a, b, c)

    L, interior = op(t0 + 0.5 * dt)
    a0, b0, _ = coeffs(t0, pts)
    pe = _peclet(axes, a0, b0, interior)
    if pe > 2:
        warnings.warn(f"mesh Peclet number {pe:.3g} exceeds 2", RuntimeWarning, stacklevel=3)
    F = F0.ravel().astype(float).copy()
    # Rannacher start: two implicit Euler half steps
    for k in range(2):
        La = op(t0 + (k + 1) * 0.5 * dt)[0] if time_dependent else L
        F = _factor(eye - 0.5 * dt * La).solve(F)
    lu = None if time_dependent else _factor(eye - 0.5 * dt * L)
    rhs_op = None if time_dependent else (eye + 0.5 * dt * L)
    for n in range(1, n_time):
        if time_dependent:
            Ln = op(t0 + (n + 0.5) * dt)[0]
            F = _factor(eye - 0.5 * dt * Ln).solve((eye + 0.5 * dt * Ln) @ F)
        else:
            F = lu.solve(rhs_op @ F)
    if not np.all(np.isfinite(F)):
        raise PDEError("non-finite values in the grid solution")
    return F.reshape(tuple(len(ax) for ax in axes))


def solve_parabolic(coeffs: Callable, f, domain, nodes, t: float, n_time: Optional[int] = None,
                    t0: float = 0.0, time_dependent: bool = False, richardson: bool = True) -> GridSolution:
    """Solve ``dF/dtau = a:D^2F + b.DF + cF`` from ``F(0) = f`` up to ``tau = t``.

    Parameters
    ----------
    coeffs : callable
        ``coeffs(tau, pts) -> (a, b, c)`` with ``pts`` of shape ``(N, D)``,
        ``a`` of shape ``(N, D, D)``, ``b`` of shape ``(N, D)`` and ``c`` of
        shape ``(N,)`` or None.  ``a`` carries the factor 1/2 of the generator.
    f : callable or array
        Initial data as ``f(pts) -> (N,)`` or values on the grid.
    domain : sequence of ``(lo, hi)``, one per axis (at most 2)
    nodes : int or sequence of int
    n_time : int, optional
        Number of time steps (default: the largest node count).
    t0 : float
        Starting value of ``tau`` handed to ``coeffs``.
    """
    domain = [tuple(map(float, d)) for d in np.atleast_2d(np.asarray(domain, dtype=float))]
    D = len(domain)
    if D > 2:
        raise PDEError("grid oracle supports at most two dimensions")
    nodes = tuple(np.broadcast_to(np.asarray(nodes, dtype=int), (D,)))
    if min(nodes) < 3:
        raise PDEError("need at least 3 nodes per axis")
    axes = tuple(np.linspace(lo, hi, n) for (lo, hi), n in zip(domain, nodes))
    n_time = int(n_time or max(nodes))
    if t < 0:
        raise ValueError("t must be non-negative")
    F0 = f(_grid_points(axes)).reshape(nodes) if callable(f) else np.asarray(f, dtype=float).reshape(nodes)
    if t == 0:
        return GridSolution(axes, F0.copy(), 0, 0.0)
    values = _march(axes, coeffs, F0, t, n_time, t0, time_dependent)
    coarse = None
    if richardson and all(n >= 5 for n in nodes) and n_time >= 2:
        cn = tuple((n - 1) // 2 + 1 for n in nodes)
        caxes = tuple(np.linspace(lo, hi, n) for (lo, hi), n in zip(domain, cn))
        if callable(f):
            cF0 = f(_grid_points(caxes)).reshape(cn)
        else:
            cF0 = RegularGridInterpolator(axes, F0)(_grid_points(caxes)).reshape(cn)
        cvals = _march(caxes, coeffs, cF0, t, max(n_time // 2, 1), t0, time_dependent)
        coarse = GridSolution(caxes, cvals, max(n_time // 2, 1), float(t))
    return GridSolution(axes, values, n_time, float(t), coarse=coarse)


# generator coefficients ------------------------------------------------------

def schedule_is_constant(sched, horizon: float, probes: int = 9) -> bool:
    """True when ``sched`` takes one value at ``probes`` times in ``[0, horizon]``."""
    vals = np.array([sched(s) for s in np.linspace(0.0, horizon, probes)])
    return bool(np.all(vals == vals[0]))


def base_coefficients(vfs: VectorFieldSet, perturbation: Optional[PerturbationSchedule] = None,
                      horizon: Optional[float] = None):
    """Coefficients of ``L`` (or ``L^h``) for the backward equation in
    forward PDE time: at ``tau`` the schedule is read at ``horizon - tau``.

    Returns ``(coeffs, time_dependent)``.
    """
    if vfs.dim != 1:
        raise PDEError("base grid solves are provided for scalar models")

    def coeffs(tau, pts):
        B = vfs.diffusion_matrix(pts)  # (N, 1, m)
        a = 0.5 * B @ np.swapaxes(B, 1, 2)
        b = ito_drift(vfs, pts)
        if perturbation is not None:
            b = b + B @ perturbation(horizon - tau)
        return a, b, None

    return coeffs, perturbation is not None and not schedule_is_constant(perturbation, horizon)


def extended_coefficients(spec: AugmentationSpec, horizon: float):
    """Coefficients of the generator of the GIRSANOV or IBP lift on ``(x, u)``."""
    vfs = spec.base
    if spec.kind not in (Kind.GIRSANOV, Kind.IBP) or vfs.dim != 1:
        raise PDEError("extended grid solves cover GIRSANOV/IBP lifts of scalar models")
    sched = spec.schedule

    def coeffs(tau, pts):
        x = pts[:, :1]
        u = pts[:, 1]
        h = sched(horizon - tau)
        Bx = vfs.diffusion_matrix(x)[:, 0, :]  # (N, m)
        Bu = u[:, None] * h[None, :] if spec.kind is Kind.GIRSANOV else np.broadcast_to(h, Bx.shape)
        cols = np.stack([Bx, Bu], axis=1)  # (N, 2, m)
        a = 0.5 * cols @ np.swapaxes(cols, 1, 2)
        b = np.concatenate([ito_drift(vfs, x), np.zeros((len(pts), 1))], axis=1)
        return a, b, None

    return coeffs


def u_axis_bounds(spec: AugmentationSpec, t: float):
    hb = max(spec.schedule.bound, 1e-12)
    if spec.kind is Kind.GIRSANOV:
        umax = float(np.exp(4 * hb * np.sqrt(t)))
    else:
        umax = max(4 * hb * np.sqrt(t), 1.0)
    return (-umax, umax)


def solve_extended(spec: AugmentationSpec, F, domain, nodes, t: float, n_time=None,
                   richardson: bool = True) -> GridSolution:
    """Solve ``dF/dtau = L~ F`` on ``(x, u)`` for a GIRSANOV or IBP lift of a
    scalar model.  ``domain`` may give only the x-range; the u-range then
    follows :func:`u_axis_bounds`."""
    domain = [tuple(d) for d in np.atleast_2d(np.asarray(domain, dtype=float))]
    if len(domain) == 1:
        domain.append(u_axis_bounds(spec, t))
    coeffs = extended_coefficients(spec, t)
    td = not schedule_is_constant(spec.schedule, t)
    return solve_parabolic(coeffs, F, domain, nodes, t, n_time=n_time, time_dependent=td,
                           richardson=richardson)


def default_domain(vfs: VectorFieldSet, x, t: float, width: float = 8.0, pilot_paths: int = 4096,
                   perturbation: Optional[PerturbationSchedule] = None):
    """Model-informed truncation ``[lo, hi]`` per axis from a fixed-seed pilot
    run: pilot extremes widened by ``width/2`` pilot standard deviations."""
    from .sde_engine import TimeGrid, simulate

    ens = simulate(BaseSystem(vfs, perturbation), x, TimeGrid(max(t, 1e-12), 64), pilot_paths, seed=0x5EED, workers=1)
    xs = ens["x"][ens.valid]
    x0 = np.atleast_1d(np.asarray(x, dtype=float))
    s = np.maximum(xs.std(axis=0), 1e-3)
    lo = np.minimum(xs.min(axis=0), x0) - 0.5 * width * s
    hi = np.maximum(xs.max(axis=0), x0) + 0.5 * width * s
    return [(float(a), float(b)) for a, b in zip(lo, hi)]


def centered_domain(domain, x):
    """Symmetrise ``domain`` about ``x`` so the query point is the middle node
    of any grid with an odd node count."""
    out = []
    for (lo, hi), xc in zip(domain, np.atleast_1d(x)):
        half = max(xc - lo, hi - xc)
        out.append((float(xc - half), float(xc + half)))
    return out


def convergence_ratio(coeffs, f, domain, nodes: int, t: float, point, time_dependent: bool = False):
    """Observed ratio ``(F_h - F_{h/2}) / (F_{h/2} - F_{h/4})`` at ``point``
    with time step refined alongside the mesh; about 4 for a second-order
    scheme.  ``point`` should be a node of the coarsest grid."""
    vals = []
    for k in range(3):
        n = (nodes - 1) * 2 ** k + 1
        g = solve_parabolic(coeffs, f, domain, n, t, time_dependent=time_dependent, richardson=False)
        vals.append(g.value_at(point))
    return (vals[0] - vals[1]) / (vals[1] - vals[2])


@dataclass(frozen=True)
class CompareReport:
    point: tuple
    grid_value: float
    mc_value: float
    difference: float
    mc_part: float
    budget: float
    tolerance: float
    passed: bool


def oracle_compare(grid: GridSolution, point, mc) -> CompareReport:
    """Pass iff ``|grid - mc| <= 3 mc.stderr + Richardson budget``."""
    gv = grid.value_at(point)
    budget = grid.budget_at(point)
    mc_part = 3.0 * float(np.max(mc.stderr))
    diff = abs(gv - float(mc.value))
    tol = mc_part + budget
    return CompareReport(tuple(np.atleast_1d(point).tolist()), gv, float(mc.value), diff, mc_part, budget, tol,
                         bool(diff <= tol))
