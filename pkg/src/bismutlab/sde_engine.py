"""Seed-reproducible Euler–Maruyama simulation of (augmented) Itô systems.

Noise is derived from the master seed by counter: paths are grouped in
fixed blocks of ``BLOCK`` lanes and block ``b`` owns the Philox stream with
key ``master_seed`` and counter offset ``b * 2**192``.  Every step draws a
full block of increments, so the noise seen by path ``p`` depends only on
``(master_seed, p)``.  Worker count only changes which thread runs which
block.
"""
from __future__ import annotations

import csv
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .field_model import BaseSystem, Layout, ModelError

BLOCK = 16384
MAX_EXCLUDED_FRACTION = 0.01


class SimulationError(RuntimeError):
    """Too many paths produced non-finite states."""


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if int(self.n_steps) < 1:
            raise ValueError("n_steps must be at least 1")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def step(self) -> float:
        return self.t_end / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_steps + 1)


@dataclass(frozen=True)
class PathEnsemble:
    """Terminal (and optionally full) augmented states of ``n_paths`` paths.

    ``valid`` marks paths that stayed finite.  Arrays keep every path, so
    ensembles built from the same seed stay aligned path by path.
    """

    n_paths: int
    grid: TimeGrid
    states: dict
    valid: np.ndarray
    master_seed: int
    layout: Layout
    system: BaseSystem = field(repr=False)
    trajectories: Optional[dict] = field(default=None, repr=False)

    @property
    def excluded(self) -> int:
        return int(self.n_paths - np.count_nonzero(self.valid))

    def __getitem__(self, name):
        return self.states[name]


def block_noise(seed: int, block: int, n_steps: int, m: int):
    """Generator of the ``(BLOCK, m)`` standard normal draws of one block."""
    bitgen = np.random.Philox(key=int(seed) & (2**128 - 1), counter=[0, 0, 0, int(block)])
    gen = np.random.Generator(bitgen)
    for _ in range(n_steps):
        yield gen.standard_normal((BLOCK, m))


def path_increments(seed: int, paths, grid: TimeGrid, m: int = 1) -> np.ndarray:
    """Brownian increments used by the given path indices, shape ``(n_steps, len(paths), m)``."""
    paths = np.asarray(paths, dtype=int)
    out = np.empty((grid.n_steps, len(paths), m))
    sq = np.sqrt(grid.step)
    for b in np.unique(paths // BLOCK):
        sel = paths // BLOCK == b
        lanes = paths[sel] % BLOCK
        for k, z in enumerate(block_noise(seed, b, grid.n_steps, m)):
            out[k, sel] = z[lanes] * sq
    return out


def _run_block(system, x0, init_kw, grid, seed, block, lanes, record):
    state = system.initial_state(x0, lanes, **init_kw)
    dt = grid.step
    sq = np.sqrt(dt)
    traj = None
    if record:
        traj = {k: [v.copy()] for k, v in state.items()}
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for k, z in enumerate(block_noise(seed, block, grid.n_steps, system.num_noise)):
            state = system.step(k * dt, dt, state, z[:lanes] * sq)
            if record:
                for name, v in state.items():
                    traj[name].append(v)
    finite = np.ones(lanes, dtype=bool)
    for v in state.values():
        finite &= np.all(np.isfinite(v.reshape(lanes, -1)), axis=1)
    if record:
        traj = {k: np.stack(v) for k, v in traj.items()}
        for v in traj.values():
            finite &= np.all(np.isfinite(v.reshape(v.shape[0], lanes, -1)), axis=(0, 2))
    return state, finite, traj


def default_workers() -> int:
    return os.cpu_count() or 1


def simulate(system: BaseSystem, x0, grid: TimeGrid, n_paths: int, seed: int,
             record: bool = False, workers: Optional[int] = None, **init_kw) -> PathEnsemble:
    """Euler–Maruyama on the Itô form of ``system`` from the augmented start
    ``(x0, **init_kw)`` (e.g. ``u0=1.0``, ``V0=...``).

    Paths whose state becomes non-finite are flagged invalid; more than 1%
    invalid raises :class:`SimulationError`.
    """
    n_paths = int(n_paths)
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    lip = system.lipschitz_estimate(x0)
    if grid.step * lip >= 1.0:
        warnings.warn(f"step {grid.step:g} times local Lipschitz bound {lip:g} is >= 1", RuntimeWarning)
    n_blocks = -(-n_paths // BLOCK)
    jobs = [(b, min(BLOCK, n_paths - b * BLOCK)) for b in range(n_blocks)]
    workers = default_workers() if workers is None else max(int(workers), 1)

    def run(job):
        b, lanes = job
        return _run_block(system, x0, init_kw, grid, seed, b, lanes, record)

    if workers == 1 or n_blocks == 1:
        results = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))

    names = results[0][0].keys()
    states = {k: np.concatenate([r[0][k] for r in results]) for k in names}
    valid = np.concatenate([r[1] for r in results])
    trajectories = None
    if record:
        trajectories = {k: np.concatenate([r[2][k] for r in results], axis=1) for k in names}
    excluded = n_paths - int(np.count_nonzero(valid))
    if excluded > MAX_EXCLUDED_FRACTION * n_paths:
        raise SimulationError(f"{excluded} of {n_paths} paths became non-finite")
    if excluded:
        warnings.warn(f"{excluded} non-finite paths excluded", RuntimeWarning)
    return PathEnsemble(n_paths, grid, states, valid, int(seed), system.layout, system, trajectories)


def pathwise_functional(ensemble: PathEnsemble, functional: Callable, trajectory: bool = False) -> np.ndarray:
    """Per-path values of ``functional`` in path order; invalid paths give NaN.

    ``functional`` receives the dict of terminal state blocks, or with
    ``trajectory=True`` the dict of recorded trajectories (time axis first)
    and the grid.
    """
    if trajectory:
        if ensemble.trajectories is None:
            raise ModelError("trajectories were not recorded")
        vals = functional(ensemble.trajectories, ensemble.grid)
    else:
        missing = [b for b in getattr(functional, "requires", ()) if b not in ensemble.states]
        if missing:
            raise ModelError(f"functional needs blocks {missing} absent from layout {ensemble.layout.names}")
        vals = functional(ensemble.states)
    vals = np.array(vals, dtype=float)
    if vals.ndim == 0:
        vals = np.full(ensemble.n_paths, float(vals))
    if vals.shape[0] != ensemble.n_paths:
        raise ModelError("functional must return one value per path")
    vals[~ensemble.valid] = np.nan
    return vals


def inverse_residual(ensemble: PathEnsemble) -> np.ndarray:
    """``|U_T W_T - I|`` (Frobenius) per path for layouts carrying the flow."""
    if "U" not in ensemble.states:
        raise ModelError("layout has no flow block")
    d = ensemble.states["U"].shape[-1]
    R = ensemble.states["U"] @ ensemble.states["W"] - np.eye(d)
    return np.linalg.norm(R.reshape(len(R), -1), axis=1)


def variation_of_constants_residual(ensemble: PathEnsemble, rule: str = "left") -> np.ndarray:
    """Per path ``|K_T - U_T (K_0 + int_0^T U_s^{-1} Y_s ds)|`` with
    ``Y_s = sum_i X_i (U_s^{-1} X_i)^T`` on the simulation grid.  ``rule`` is
    ``"left"`` (Itô-convention Riemann sum, first order like the Euler step)
    or ``"trapezoid"``.  Needs a MALLIAVIN lift built with ``with_variation``
    and recorded trajectories.
    """
    traj = ensemble.trajectories
    if traj is None:
        raise ModelError("variation-of-constants residual needs recorded trajectories")
    if "K" not in traj:
        raise ModelError("layout has no variation block K (build with with_variation=True)")
    vfs = ensemble.system.vfs
    xs, Us, Ks = traj["x"], traj["U"], traj["K"]
    n_t, n, d = xs.shape
    Uinv = np.linalg.inv(Us)
    B = vfs.diffusion_matrix(xs.reshape(-1, d)).reshape(n_t, n, d, -1)
    WX = Uinv @ B
    integrand = WX @ np.swapaxes(WX, -1, -2)  # U^{-1} Y
    dt = ensemble.grid.step
    if rule == "left":
        integral = dt * integrand[:-1].sum(axis=0)
    elif rule == "trapezoid":
        integral = dt * (integrand.sum(axis=0) - 0.5 * (integrand[0] + integrand[-1]))
    else:
        raise ValueError("rule must be 'left' or 'trapezoid'")
    R = Ks[-1] - Us[-1] @ (Ks[0] + integral)
    out = np.linalg.norm(R.reshape(n, -1), axis=1)
    out[~ensemble.valid] = np.nan
    return out


def write_trajectories(ensemble: PathEnsemble, path) -> None:
    """CSV dump: header ``path,step,t,<component labels>`` then one row per
    (path, step) in path-major order."""
    if ensemble.trajectories is None:
        raise ModelError("trajectories were not recorded")
    layout = ensemble.layout
    traj = ensemble.trajectories
    n_t = ensemble.grid.n_steps + 1
    times = ensemble.grid.times
    flat = np.concatenate(
        [traj[name].reshape(n_t, ensemble.n_paths, -1) for name in layout.names], axis=2)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "step", "t"] + layout.component_labels())
        for p in range(ensemble.n_paths):
            for k in range(n_t):
                w.writerow([p, k, repr(float(times[k]))] + [repr(float(v)) for v in flat[k, p]])
