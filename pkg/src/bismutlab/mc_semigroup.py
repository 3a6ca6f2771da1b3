"""Monte Carlo estimators of semigroup-level quantities with standard errors.

Every estimator is a pure function of its inputs and the seed.  Estimates
keep their per-path samples so two estimates driven by the same seed can be
compared path by path (common random numbers).
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .field_model import (AugmentationSpec, AugmentedSystem, BaseSystem, Kind, ModelError,
                          PerturbationSchedule, TestFunction, VectorFieldSet, as_points)
from .sde_engine import TimeGrid, simulate

DEFAULT_N_STEPS = 256
SMALL_BALL_P_MAX = 0.1


class GrowthWarning(UserWarning):
    """Test function of polynomial growth used where boundedness is assumed."""


class NondegeneracyError(RuntimeError):
    """Too many paths with a singular Malliavin matrix."""


@dataclass(frozen=True)
class SemigroupEstimate:
    value: object
    stderr: object
    n_paths: int
    t: float
    descriptor: str
    samples: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.descriptor:
            raise ValueError("descriptor must be non-empty")
        if np.any(np.asarray(self.stderr) < 0):
            raise ValueError("stderr must be non-negative")


def _summary(samples: np.ndarray):
    ok = np.all(np.isfinite(samples.reshape(len(samples), -1)), axis=1)
    s = samples[ok]
    n = len(s)
    mean = s.mean(axis=0)
    se = s.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    if np.ndim(mean) == 0:
        return float(mean), float(se), n
    return mean, se, n


def _make_estimate(samples, t, descriptor, keep=True, **meta) -> SemigroupEstimate:
    value, se, n = _summary(samples)
    if not np.all(np.isfinite(value)):
        raise ModelError(f"{descriptor}: non-finite estimate")
    return SemigroupEstimate(value, se, n, float(t), descriptor, samples if keep else None, meta)


def paired_difference(a: SemigroupEstimate, b: SemigroupEstimate):
    """Mean and standard error of ``a - b`` computed path by path."""
    if a.samples is None or b.samples is None or a.samples.shape != b.samples.shape:
        raise ModelError("paired comparison needs aligned per-path samples")
    return _summary(a.samples - b.samples)[:2]


def combined_stderr(a: SemigroupEstimate, b: SemigroupEstimate):
    return np.sqrt(np.asarray(a.stderr) ** 2 + np.asarray(b.stderr) ** 2)


def _check_growth(f):
    if isinstance(f, TestFunction) and not f.bounded:
        warnings.warn(f"test function {f.name!r} is unbounded; moments are assumed finite", GrowthWarning,
                      stacklevel=3)


def _fvalue(f, x):
    return np.asarray(f(x), dtype=float)


def _grid(t, n_steps):
    return TimeGrid(float(t), int(n_steps))


def estimate_semigroup(vfs: VectorFieldSet, f, x, t, n_paths, seed, n_steps=DEFAULT_N_STEPS,
                       perturbation: Optional[PerturbationSchedule] = None, workers=None) -> SemigroupEstimate:
    """``P_t f(x)`` (or ``P^h_t f(x)`` with a drift perturbation) as the mean of
    ``f`` over terminal states."""
    _check_growth(f)
    system = BaseSystem(vfs, perturbation)
    ens = simulate(system, x, _grid(t, n_steps), n_paths, seed, workers=workers)
    samples = _fvalue(f, ens["x"])
    samples[~ens.valid] = np.nan
    desc = "P_t f" if perturbation is None else "P^h_t f"
    return _make_estimate(samples, t, desc, excluded=ens.excluded)


def _weight_fn(weight):
    if weight is None or weight == "u":
        return lambda s: s["u"]
    if weight == 1 or weight == "1":
        return lambda s: np.ones(len(s["x"]))
    return weight


def estimate_weighted(spec: AugmentationSpec, weight, f, x0, t, n_paths, seed, n_steps=DEFAULT_N_STEPS,
                      u0=None, workers=None) -> SemigroupEstimate:
    """Mean of ``weight(terminal state) * f(x_T)`` over the lifted system.

    With ``weight="u"`` this is ``P~^h_t[uf](x, u0)`` for GIRSANOV (default
    ``u0 = 1``), ``P-^h_t[uf](x, u0)`` for IBP and ``Q_t[fu](x, u0)`` for a
    scalar state-feedback lift (default ``u0 = 0``).
    """
    _check_growth(f)
    system = AugmentedSystem(spec)
    kw = {} if u0 is None else {"u0": u0}
    ens = simulate(system, x0, _grid(t, n_steps), n_paths, seed, workers=workers, **kw)
    w = np.asarray(_weight_fn(weight)(ens.states), dtype=float)
    fx = _fvalue(f, ens["x"])
    samples = w * fx if w.ndim == 1 else w * fx[:, None]
    samples[~ens.valid] = np.nan
    return _make_estimate(samples, t, f"{spec.kind.value}[w f]", excluded=ens.excluded)


def estimate_gradient(vfs: VectorFieldSet, f: TestFunction, x, t, n_paths, seed, n_steps=DEFAULT_N_STEPS,
                      workers=None) -> SemigroupEstimate:
    """``D P_t f(x)`` as the mean of ``Df(x_T) U_T`` over the Jacobian lift from ``(x, I)``."""
    if f.grad is None:
        raise ModelError("estimate_gradient needs a test function with a gradient")
    system = AugmentedSystem(AugmentationSpec(Kind.JACOBIAN, vfs))
    ens = simulate(system, x, _grid(t, n_steps), n_paths, seed, workers=workers)
    samples = np.einsum("ni,nij->nj", f.grad(ens["x"]), ens["U"])
    samples[~ens.valid] = np.nan
    return _make_estimate(samples, t, "D P_t f", excluded=ens.excluded)


def bismut_pair(vfs: VectorFieldSet, f: TestFunction, x, t, n_paths, seed, n_steps=DEFAULT_N_STEPS,
                workers=None):
    """Both sides of the first-order Bismut integration by parts from one
    common-noise ensemble.

    ``lhs`` averages ``Df(x_T) U_T V_T`` and ``rhs`` averages ``f(x_T) u_T``
    with ``u_T = sum_i int U_s^{-1} X_i(x_s) dw^i``.  ``U_T V_T`` is taken in
    its variation-of-constants form ``K_T``; under the Euler scheme this
    makes the two sides agree in expectation exactly, so the paired
    difference carries no discretisation bias.
    """
    from .field_model import ellipticity_margin

    if f.grad is None:
        raise ModelError("bismut_pair needs a test function with a gradient")
    if ellipticity_margin(vfs, x) <= 0:
        warnings.warn("model is not elliptic at the starting point", RuntimeWarning, stacklevel=2)
    system = AugmentedSystem(AugmentationSpec(Kind.BISMUT_FEEDBACK, vfs, with_covariance=True))
    ens = simulate(system, x, _grid(t, n_steps), n_paths, seed, workers=workers)
    lhs_s = np.einsum("ni,nij->nj", f.grad(ens["x"]), ens["K"])
    rhs_s = _fvalue(f, ens["x"])[:, None] * ens["u"]
    lhs_s[~ens.valid] = np.nan
    rhs_s[~ens.valid] = np.nan
    uv = np.einsum("ni,nij->nj", f.grad(ens["x"]), ens["U"] @ ens["V"])[ens.valid].mean(axis=0)
    lhs = _make_estimate(lhs_s, t, "Df U_T V_T", excluded=ens.excluded, flow_times_reduced=uv)
    rhs = _make_estimate(rhs_s, t, "f u_T", excluded=ens.excluded)
    return lhs, rhs


# moments and small balls ---------------------------------------------------

@dataclass(frozen=True)
class MomentReport:
    component: str
    exponents: tuple
    moments: np.ndarray
    stderr: np.ndarray
    tail_fraction: np.ndarray
    half_moments: np.ndarray
    n_paths: int
    singular: int = 0

    @property
    def doubling_change(self) -> np.ndarray:
        """Relative change of each moment between ``n/2`` and ``n`` paths."""
        denom = np.where(self.moments != 0, np.abs(self.moments), 1.0)
        return np.abs(self.moments - self.half_moments) / denom


def _malliavin_ensemble(vfs, x, t, n_paths, seed, n_steps, workers, record=False):
    system = AugmentedSystem(AugmentationSpec(Kind.MALLIAVIN, vfs, with_variation=True))
    return simulate(system, x, _grid(t, n_steps), n_paths, seed, record=record, workers=workers)


def _singular_mask(M):
    ev = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, 1, 2)))
    return ev[:, 0] <= 1e-12 * np.maximum(1.0, ev[:, -1])


MOMENT_COMPONENTS = ("U", "Uinv", "V", "Vinv", "K", "Kinv")


def component_norms(ens, component: str):
    """Frobenius norm per path of ``U``, ``Uinv``, ``V``, ``Vinv``, ``K`` or ``Kinv``.

    Returns ``(norms, singular_mask)``.
    """
    if component not in MOMENT_COMPONENTS:
        raise ModelError(f"component must be one of {MOMENT_COMPONENTS}, got {component!r}")
    base = component[:-3] if component.endswith("inv") else component
    if base not in ens.states:
        raise ModelError(f"component {component!r} not in layout {ens.layout.names}")
    M = ens.states[base]
    n = len(M)
    singular = np.zeros(n, dtype=bool)
    if component.endswith("inv"):
        if base == "V":
            singular = _singular_mask(M)
        else:
            singular = np.abs(np.linalg.det(M)) <= 1e-300
        M = M.copy()
        M[singular] = np.eye(M.shape[-1])
        M = np.linalg.inv(M)
    norms = np.linalg.norm(M.reshape(n, -1), axis=1)
    norms[singular | ~ens.valid] = np.nan
    return norms, singular & ens.valid


def moments_from_norms(component, norms, exponents, singular_count=0) -> MomentReport:
    exps = tuple(float(p) for p in exponents)
    z = norms[np.isfinite(norms)]
    n = len(z)
    mom, se, tail, half = [], [], [], []
    for p in exps:
        zp = z**p
        mom.append(zp.mean())
        se.append(zp.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0)
        total = zp.sum()
        tail.append(float(zp.max() / total) if total > 0 else 0.0)
        half.append(zp[: max(n // 2, 1)].mean())
    return MomentReport(component, exps, np.array(mom), np.array(se), np.array(tail), np.array(half), n,
                        int(singular_count))


def estimate_moments(vfs: VectorFieldSet, component: str, exponents: Sequence[float], x, t, n_paths, seed,
                     n_steps=DEFAULT_N_STEPS, workers=None) -> MomentReport:
    """Empirical ``E|Z|^p`` for ``Z`` in {U, Uinv, V, Vinv, K, Kinv} of the
    Malliavin lift from ``(x, I, 0)``, with tail and doubling diagnostics."""
    ens = _malliavin_ensemble(vfs, x, t, n_paths, seed, n_steps, workers)
    norms, singular = component_norms(ens, component)
    n_sing = int(np.count_nonzero(singular))
    if n_sing > 0.01 * n_paths:
        raise NondegeneracyError(f"{n_sing} of {n_paths} paths have a singular Malliavin matrix")
    return moments_from_norms(component, norms, exponents, n_sing)


@dataclass(frozen=True)
class SmallBallReport:
    epsilons: np.ndarray
    probabilities: np.ndarray
    smoothed: np.ndarray  # E[exp(-|V xi| / eps)]
    floor: float
    resolvable: np.ndarray
    slope: float
    n_paths: int
    form: str


def fit_small_ball_slope(eps, prob, floor, p_max=SMALL_BALL_P_MAX):
    """Least-squares slope of ``log P`` against ``log eps`` over resolvable points.

    Returns ``(slope, resolvable_mask)``.  The slope is ``inf`` when every
    probability in the small-ball regime is exactly zero (decay beyond the
    resolution floor) and ``nan`` when nothing can be fitted.
    """
    eps = np.asarray(eps, dtype=float)
    prob = np.asarray(prob, dtype=float)
    res = (prob >= floor) & (prob <= p_max)
    if np.count_nonzero(res) >= 2:
        slope = float(np.polyfit(np.log(eps[res]), np.log(prob[res]), 1)[0])
    elif np.any(prob == 0) and not np.any((prob > 0) & (prob < floor)) and np.count_nonzero(res) == 0:
        slope = float("inf")
    else:
        slope = float("nan")
    return slope, res


def small_ball_from_ensemble(ens, xi, epsilons, form="reduced") -> SmallBallReport:
    M = ens.states["V" if form == "reduced" else "K"]
    xi = np.asarray(xi, dtype=float).ravel()
    if not np.isclose(np.linalg.norm(xi), 1.0):
        raise ValueError("direction must be a unit vector")
    r = np.linalg.norm(M @ xi, axis=1)[ens.valid]
    n = len(r)
    eps = np.sort(np.asarray(epsilons, dtype=float))
    prob = np.array([np.count_nonzero(r < e) / n for e in eps])
    smooth = np.array([np.mean(np.exp(-r / e)) for e in eps])
    floor = 5.0 / n
    slope, res = fit_small_ball_slope(eps, prob, floor)
    return SmallBallReport(eps, prob, smooth, floor, res, slope, n, form)


def small_ball(vfs: VectorFieldSet, xi, epsilons, x, t, n_paths, seed, form="reduced",
               n_steps=DEFAULT_N_STEPS, workers=None) -> SmallBallReport:
    """Empirical ``P(|M xi| < eps)`` for the Malliavin matrix ``M``.

    ``form="reduced"`` uses ``V_T = int U^{-1}X (U^{-1}X)^T ds``; ``"flow"``
    uses ``U_T V_T`` (the matrix inverted by the density weight).
    """
    if form not in ("reduced", "flow"):
        raise ValueError("form must be 'reduced' or 'flow'")
    ens = _malliavin_ensemble(vfs, x, t, n_paths, seed, n_steps, workers)
    return small_ball_from_ensemble(ens, xi, epsilons, form)


def tail_exceedance(ens, x0, C: float) -> dict:
    """Frequencies of ``|U_T^{-1}| > C`` and ``|x_T - x0| > C``."""
    out = {}
    if "U" in ens.states:
        norms, _ = component_norms(ens, "Uinv")
        out["Uinv"] = float(np.mean(norms[ens.valid] > C))
    dx = np.linalg.norm(ens["x"] - np.asarray(x0, dtype=float).reshape(1, -1), axis=1)
    out["x"] = float(np.mean(dx[ens.valid] > C))
    return out


# densities -----------------------------------------------------------------

@dataclass(frozen=True)
class DensityEstimate:
    y: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    method: str
    n_paths: int
    bandwidth: Optional[float] = None


def silverman_bandwidth(samples: np.ndarray) -> float:
    n = len(samples)
    return float(np.std(samples, ddof=1) * (0.75 * n) ** (-0.2))


def gaussian_kde(samples: np.ndarray, y: np.ndarray, bandwidth: float) -> np.ndarray:
    norm = 1.0 / (np.sqrt(2 * np.pi) * bandwidth * len(samples))
    out = np.empty(len(y))
    for k, yk in enumerate(y):
        z = (samples - yk) / bandwidth
        out[k] = np.exp(-0.5 * z * z).sum() * norm
    return out


def density_estimate(vfs: VectorFieldSet, x, t, y, method="KDE", n_paths=100_000, seed=0,
                     n_steps=DEFAULT_N_STEPS, bandwidth=None, workers=None) -> DensityEstimate:
    """Transition density of ``x_t`` started at ``x`` on the points ``y``.

    ``KDE``: Gaussian kernel, Silverman bandwidth unless given.
    ``MALLIAVIN_WEIGHT``: ``mean(1{x_T > y} u_T) / (U_T V_T)``; only for
    scalar models whose ``U_T V_T`` is path independent (linear drift,
    additive noise), otherwise :class:`ModelError`.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    method = method.upper()
    if method == "KDE":
        ens = simulate(BaseSystem(vfs), x, _grid(t, n_steps), n_paths, seed, workers=workers)
        s = ens["x"][ens.valid, 0] if vfs.dim == 1 else None
        if s is None:
            raise ModelError("KDE density is implemented for scalar models")
        h = silverman_bandwidth(s) if bandwidth is None else float(bandwidth)
        vals = gaussian_kde(s, y, h)
        return DensityEstimate(y, vals, np.full(len(y), np.nan), "KDE", len(s), h)
    if method != "MALLIAVIN_WEIGHT":
        raise ModelError(f"unknown density method {method!r}")
    if vfs.dim != 1:
        raise ModelError("the Malliavin-weight density needs a scalar model")
    system = AugmentedSystem(AugmentationSpec(Kind.BISMUT_FEEDBACK, vfs, with_covariance=True))
    ens = simulate(system, x, _grid(t, n_steps), n_paths, seed, workers=workers)
    K = ens["K"][ens.valid, 0, 0]
    k0 = float(np.mean(K))
    if np.ptp(K) > 1e-9 * max(abs(k0), 1e-300):
        raise ModelError("U_T V_T is path dependent for this model; the Malliavin-weight density "
                         "is restricted to the deterministic-covariance class")
    xs = ens["x"][ens.valid, 0]
    u = ens["u"][ens.valid, 0]
    vals = np.empty(len(y))
    se = np.empty(len(y))
    order = np.argsort(xs)
    xs_sorted, u_sorted = xs[order], u[order]
    # suffix sums give every threshold in one pass
    cu = np.concatenate([np.cumsum(u_sorted[::-1])[::-1], [0.0]])
    cu2 = np.concatenate([np.cumsum((u_sorted**2)[::-1])[::-1], [0.0]])
    n = len(xs)
    for k, yk in enumerate(y):
        i = np.searchsorted(xs_sorted, yk, side="right")
        m1 = cu[i] / n
        m2 = cu2[i] / n
        vals[k] = m1 / k0
        se[k] = np.sqrt(max(m2 - m1 * m1, 0.0) / (n - 1)) / abs(k0)
    return DensityEstimate(y, vals, se, "MALLIAVIN_WEIGHT", n)


# export --------------------------------------------------------------------

CSV_COLUMNS = ("descriptor", "model", "t", "x", "value", "stderr", "n_paths", "seed")


def estimate_rows(est: SemigroupEstimate, model: str, x, seed) -> list:
    """CSV rows for an estimate; vector estimates give one row per component."""
    xs = ";".join(repr(float(v)) for v in np.atleast_1d(x))
    vals = np.atleast_1d(est.value)
    ses = np.atleast_1d(est.stderr)
    rows = []
    for k, (v, s) in enumerate(zip(vals, ses)):
        desc = est.descriptor if len(vals) == 1 else f"{est.descriptor}[{k}]"
        rows.append([desc, model, repr(float(est.t)), xs, repr(float(v)), repr(float(s)), est.n_paths, seed])
    return rows


def write_estimates_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        w.writerows(rows)
