"""Command line entry point.

Config grammar (YAML)::

    model: bm                  # or {name: ou, params: {a: 2.0}}
    seed: 0                    # master seed
    n_paths: 100000
    n_steps: 256
    t: 1.0
    x: 0.0
    output_dir: runs
    verbosity: 1
    workers: null              # null = all cores
    experiments:
      - quasi_invariance       # bare name, or a mapping of overrides:
      - experiment: bismut
        label: bismut-gbm      # seed derivation key (default: experiment name)
        seed: 7                # explicit per-experiment seed
        model: gbm
        f: x
        x: 1.0

Global ``n_paths``, ``n_steps``, ``t`` and ``x`` apply to every experiment
that takes them unless overridden.  Per-experiment keys are the keyword
arguments of the matching check.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import inspect
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .catalog import CONTROL_MODELS, DEFAULT_PARAMS, DICTIONARY, make_model, parse_schedule, parse_test_function
from .field_model import ModelError
from .identity_suite import EXPERIMENTS, derive_seed, run_suite

ENV_OUTPUT_ROOT = "BISMUTLAB_OUTPUT_ROOT"
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

GLOBAL_KEYS = ("model", "seed", "n_paths", "n_steps", "t", "x", "output_dir", "verbosity", "workers",
               "experiments")
DEFAULTS = {"seed": 0, "n_paths": 100_000, "n_steps": 256, "t": 1.0, "x": 0.0, "output_dir": "runs",
            "verbosity": 1, "workers": None}
INHERITED = ("n_paths", "n_steps", "t", "x")
SUMMARY_COLUMNS = ("experiment", "label", "model", "verdict", "lhs", "rhs", "sigma", "seed")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    experiment: str
    label: str
    seed: Optional[int] = None
    overrides: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"experiment": self.experiment, "label": self.label}
        if self.seed is not None:
            out["seed"] = self.seed
        out.update(self.overrides)
        return out


@dataclass
class RunConfig:
    model: str
    model_params: dict
    experiments: list
    seed: int = 0
    n_paths: int = 100_000
    n_steps: int = 256
    t: float = 1.0
    x: object = 0.0
    output_dir: str = "runs"
    verbosity: int = 1
    workers: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "model": {"name": self.model, "params": dict(self.model_params)},
            "seed": self.seed, "n_paths": self.n_paths, "n_steps": self.n_steps, "t": self.t, "x": self.x,
            "output_dir": self.output_dir, "verbosity": self.verbosity, "workers": self.workers,
            "experiments": [e.to_dict() for e in self.experiments],
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def experiment_seed(self, e: ExperimentConfig) -> int:
        return int(e.seed) if e.seed is not None else derive_seed(self.seed, e.label)

    def entries(self) -> list:
        """Keyword-argument dicts for :func:`run_suite`, in declaration order."""
        out = []
        for e in self.experiments:
            sig = inspect.signature(EXPERIMENTS[e.experiment]).parameters
            kw = {"experiment": e.experiment, "model": self.model if not self.model_params else
                  make_model(self.model, self.model_params)}
            for key in INHERITED:
                if key in sig and not (key == "n_steps" and e.experiment == "variation"):
                    kw[key] = getattr(self, key)
            kw.update(e.overrides)
            if isinstance(kw.get("model"), dict):
                kw["model"] = make_model(kw["model"]["name"], kw["model"].get("params"))
            kw["seed"] = self.experiment_seed(e)
            if "workers" in sig:
                kw["workers"] = self.workers
            out.append(kw)
        return out


# validation -------------------------------------------------------------------

def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_model(spec, where, errors):
    known = tuple(DEFAULT_PARAMS) + CONTROL_MODELS
    if isinstance(spec, str):
        name, params = spec, {}
    elif isinstance(spec, dict):
        extra = set(spec) - {"name", "params"}
        if extra:
            errors.append(f"{where}: unknown keys {sorted(extra)}")
        name, params = spec.get("name"), spec.get("params") or {}
        if name is None:
            errors.append(f"{where}.name: missing required field")
            return None, {}
        if not isinstance(params, dict):
            errors.append(f"{where}.params: must be a mapping")
            return None, {}
    else:
        errors.append(f"{where}: must be a model name or a mapping")
        return None, {}
    if name not in known:
        errors.append(f"{where}: unknown model {name!r} (known: {', '.join(known)})")
        return None, {}
    try:
        make_model(name, params)
    except (ModelError, TypeError) as exc:
        errors.append(f"{where}.params: {exc}")
        return None, {}
    return name, dict(params)


def _check_value(key, v, where, errors):
    """Validate a scalar field by name; collects errors."""
    loc = f"{where}.{key}"
    if key in ("n_paths", "quadrature_nodes", "n_nodes", "directions"):
        if not _is_int(v) or v <= 0:
            errors.append(f"{loc}: must be a positive integer, got {v!r}")
    elif key == "n_steps":
        vals = v if isinstance(v, list) else [v]
        if not vals or not all(_is_int(k) and k > 0 for k in vals):
            errors.append(f"{loc}: must be a positive integer, got {v!r}")
    elif key in ("t", "delta", "tol_weight", "tol_kde", "max_change"):
        if not _is_num(v) or not v > 0:
            errors.append(f"{loc}: must be positive, got {v!r}")
    elif key == "seed":
        if not _is_int(v) or v < 0:
            errors.append(f"{loc}: must be a non-negative integer, got {v!r}")
    elif key == "x":
        vals = v if isinstance(v, list) else [v]
        if not vals or not all(_is_num(k) for k in vals):
            errors.append(f"{loc}: must be a number or a list of numbers, got {v!r}")
    elif key == "f":
        for name in (v if isinstance(v, list) else [v]):
            try:
                parse_test_function(str(name))
            except ModelError as exc:
                errors.append(f"{loc}: {exc} (dictionary: {', '.join(DICTIONARY)})")
    elif key == "h":
        try:
            parse_schedule(v)
        except ModelError as exc:
            errors.append(f"{loc}: {exc}")
    elif key in ("exponents", "epsilons", "y"):
        if not isinstance(v, list) or not v or not all(_is_num(k) for k in v):
            errors.append(f"{loc}: must be a non-empty list of numbers")
        elif key != "y" and not all(k > 0 for k in v):
            errors.append(f"{loc}: entries must be positive")
    elif key == "rule":
        if v not in ("left", "trapezoid"):
            errors.append(f"{loc}: must be 'left' or 'trapezoid'")
    elif key == "form":
        if v not in ("reduced", "flow"):
            errors.append(f"{loc}: must be 'reduced' or 'flow'")
    elif key in ("use_pde",):
        if not isinstance(v, bool):
            errors.append(f"{loc}: must be true or false")


def _parse_experiment(item, k, errors):
    where = f"experiments[{k}]"
    if isinstance(item, str):
        item = {"experiment": item}
    if not isinstance(item, dict):
        errors.append(f"{where}: must be an experiment name or a mapping")
        return None
    name = item.get("experiment")
    if name is None:
        errors.append(f"{where}.experiment: missing required field")
        return None
    if name not in EXPERIMENTS:
        errors.append(f"{where}.experiment: unknown experiment {name!r} (known: {', '.join(EXPERIMENTS)})")
        return None
    sig = inspect.signature(EXPERIMENTS[name]).parameters
    allowed = (set(sig) - {"workers"}) | {"experiment", "label", "seed", "model"}
    extra = sorted(set(item) - allowed)
    if extra:
        errors.append(f"{where}: unknown keys {extra} for experiment {name!r}")
    overrides = {}
    for key, v in item.items():
        if key in ("experiment", "label") or key in extra:
            continue
        if key in ("model", "rhs_model"):
            mname, mparams = _check_model(v, f"{where}.{key}", errors)
            if mname is not None:
                overrides[key] = {"name": mname, "params": mparams} if (mparams or isinstance(v, dict)) else mname
            continue
        _check_value(key, v, where, errors)
        if key != "seed":
            overrides[key] = v
    if name == "variation" and "n_steps" in overrides and not isinstance(overrides["n_steps"], list):
        errors.append(f"{where}.n_steps: the variation experiment takes a list of step counts")
    if name != "quasi_invariance" and isinstance(item.get("h"), list):
        errors.append(f"{where}.h: give a single schedule")
    label = item.get("label", name)
    if not isinstance(label, str) or not label:
        errors.append(f"{where}.label: must be a non-empty string")
        label = name
    return ExperimentConfig(name, label, item.get("seed"), overrides)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML run config; raises :class:`ConfigError`
    listing every problem found."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"malformed YAML: {exc}"]) from None
    if not isinstance(data, dict):
        raise ConfigError(["config must be a mapping"])
    errors = []
    extra = sorted(set(data) - set(GLOBAL_KEYS))
    if extra:
        errors.append(f"unknown keys {extra}")
    if "model" not in data:
        errors.append("model: missing required field")
        mname, mparams = None, {}
    else:
        mname, mparams = _check_model(data["model"], "model", errors)
    vals = {k: data.get(k, DEFAULTS[k]) for k in DEFAULTS}
    for key in ("seed", "n_paths", "n_steps", "t", "x"):
        _check_value(key, vals[key], "config", errors)
    if isinstance(vals["n_steps"], list):
        errors.append("config.n_steps: must be a positive integer")
    if not isinstance(vals["output_dir"], str) or not vals["output_dir"]:
        errors.append("config.output_dir: must be a non-empty string")
    if not _is_int(vals["verbosity"]) or vals["verbosity"] < 0:
        errors.append("config.verbosity: must be a non-negative integer")
    if vals["workers"] is not None and (not _is_int(vals["workers"]) or vals["workers"] <= 0):
        errors.append("config.workers: must be a positive integer or null")
    items = data.get("experiments")
    exps = []
    if items is None:
        errors.append("experiments: missing required field")
    elif not isinstance(items, list) or not items:
        errors.append("experiments: must be a non-empty list")
    else:
        seen = {}
        for k, item in enumerate(items):
            e = _parse_experiment(item, k, errors)
            if e is None:
                continue
            explicit = isinstance(item, dict) and "label" in item
            if not explicit and e.label in seen:
                # repeated default labels get a counter so seeds differ
                seen[e.label] += 1
                e.label = f"{e.label}#{seen[e.label]}"
            seen.setdefault(e.label, 0)
            exps.append(e)
        labels = [e.label for e in exps]
        dup = sorted({lab for lab in labels if labels.count(lab) > 1})
        if dup:
            errors.append(f"experiments: duplicate labels {dup}")
    if errors:
        raise ConfigError(errors)
    return RunConfig(mname, mparams, exps, **vals)


# output -----------------------------------------------------------------------

def output_root(cfg_dir: str, flag: Optional[str] = None) -> Path:
    """Output root: command-line flag, then the environment variable, then the config."""
    return Path(flag or os.environ.get(ENV_OUTPUT_ROOT) or cfg_dir)


def make_run_dir(root: Path, stem: str) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    base = root / f"{stamp}-{stem}"
    path, k = base, 1
    while path.exists():
        path = Path(f"{base}-{k}")
        k += 1
    path.mkdir(parents=True)
    return path


def report_json(reports) -> str:
    return json.dumps([r.to_json() for r in reports], indent=2, sort_keys=True) + "\n"


def write_artifacts(run_dir: Path, reports, labels, config: Optional[RunConfig] = None) -> None:
    (run_dir / "report.json").write_text(report_json(reports))
    diag = [{"experiment": r.experiment, "label": lab, "details": _jsonable(r.details)}
            for r, lab in zip(reports, labels)]
    (run_dir / "diagnostics.json").write_text(json.dumps(diag, indent=2, sort_keys=True) + "\n")
    with open(run_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r, lab in zip(reports, labels):
            w.writerow([r.experiment, lab, r.model, r.verdict, _cell(r.lhs), _cell(r.rhs), _cell(r.sigma), r.seed])
    if config is not None:
        (run_dir / "config.yaml").write_text(config.dumps())


def _jsonable(v):
    from .identity_suite import _plain

    return _plain(v) if not isinstance(v, (bool, str, type(None))) else v


def _cell(v):
    a = np.atleast_1d(np.asarray(v, dtype=float))
    return ";".join(repr(float(x)) for x in a)


def _labels_for(cfg: RunConfig, reports):
    """Repeat each experiment's label for every report it produced."""
    out = []
    for e in cfg.experiments:
        f = e.overrides.get("f")
        n = len(f) if isinstance(f, list) else 1
        out.extend([e.label] * n)
    return out[: len(reports)]


# commands ---------------------------------------------------------------------

def _print_reports(reports, labels, out=None):
    out = out or sys.stdout
    for r, lab in zip(reports, labels):
        print(f"{r.verdict.upper():12s} {lab:24s} {r.model:20s} lhs={_cell(r.lhs)} rhs={_cell(r.rhs)} "
              f"sigma={_cell(r.sigma)}", file=out)


def cmd_run(path: str, flag_root: Optional[str], workers: Optional[int]) -> int:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if workers is not None:
        cfg.workers = workers
    t0 = time.perf_counter()
    reports, code = run_suite(cfg.entries(), workers=cfg.workers or os.cpu_count())
    labels = _labels_for(cfg, reports)
    run_dir = make_run_dir(output_root(cfg.output_dir, flag_root), Path(path).stem)
    write_artifacts(run_dir, reports, labels, cfg)
    if cfg.verbosity:
        _print_reports(reports, labels)
        n_pass = sum(r.passed for r in reports)
        print(f"{n_pass}/{len(reports)} passed in {time.perf_counter() - t0:.1f}s; artifacts in {run_dir}")
    return EXIT_PASS if code == 0 else EXIT_FAIL


def selfcheck_entries():
    """Fast tier: exact or near-exact cases plus negative controls, each
    paired with its expected verdict."""
    n = 20_000
    return [
        ({"experiment": "quasi_invariance", "model": "bm", "h": 0.0, "f": "x", "n_paths": n, "use_pde": False,
          "seed": 1}, "pass"),
        ({"experiment": "quasi_invariance", "model": "bm", "h": 0.5, "f": "x", "n_paths": n, "seed": 2}, "pass"),
        ({"experiment": "elementary_ibp", "model": "bm", "h": 0.5, "f": "1", "n_paths": n, "seed": 3}, "pass"),
        ({"experiment": "gradient_transfer", "model": "ou", "f": "x", "n_paths": 2000, "seed": 4}, "pass"),
        ({"experiment": "bismut", "model": "ou", "f": "1", "n_paths": n, "seed": 5}, "pass"),
        ({"experiment": "variation", "model": "ou", "n_paths": 200, "seed": 6}, "pass"),
        ({"experiment": "nondegeneracy", "model": "bm", "n_paths": n, "seed": 7}, "pass"),
        ({"experiment": "density", "model": "bm", "n_paths": 200_000, "seed": 8}, "pass"),
        ({"experiment": "nondegeneracy", "model": "degenerate2d", "n_paths": 2000, "seed": 9}, "fail"),
        ({"experiment": "bismut", "model": "ou", "f": "x", "rhs_model": "bm", "n_paths": n, "seed": 10}, "fail"),
    ]


def _determinism_probe() -> bool:
    from .field_model import AugmentationSpec, AugmentedSystem, Kind
    from .sde_engine import BLOCK, TimeGrid, simulate

    system = AugmentedSystem(AugmentationSpec(Kind.BISMUT_FEEDBACK, make_model("gbm"), with_covariance=True))
    runs = [simulate(system, 1.0, TimeGrid(1.0, 8), BLOCK + 1000, seed=11, workers=w) for w in (1, 2)]
    return all(np.array_equal(runs[0][k], runs[1][k]) for k in runs[0].states)


def cmd_selfcheck(flag_root: Optional[str]) -> int:
    t0 = time.perf_counter()
    cases = selfcheck_entries()
    reports, _ = run_suite([c[0] for c in cases], workers=1)
    ok = True
    labels = []
    for r, (entry, want) in zip(reports, cases):
        lab = entry["experiment"] + ("/negative" if want == "fail" else "")
        labels.append(lab)
        good = r.verdict == want
        ok &= good
        print(f"{'OK' if good else 'BAD':4s} expected {want:5s} got {r.verdict:12s} {lab:28s} {r.model}")
    det = _determinism_probe()
    ok &= det
    print(f"{'OK' if det else 'BAD':4s} simulation bit-identical across worker counts")
    run_dir = make_run_dir(output_root(DEFAULTS["output_dir"], flag_root), "selfcheck")
    write_artifacts(run_dir, reports, labels)
    print(f"selfcheck {'passed' if ok else 'FAILED'} in {time.perf_counter() - t0:.1f}s; artifacts in {run_dir}")
    return EXIT_PASS if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bismutlab", description="Semigroup identity experiments for diffusions.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiments of a YAML config")
    r.add_argument("config")
    r.add_argument("--output-root", default=None, help=f"overrides ${ENV_OUTPUT_ROOT} and the config")
    r.add_argument("--workers", type=int, default=None)
    sub.add_parser("list-models", help="print the catalog model names")
    sub.add_parser("list-experiments", help="print the experiment names")
    s = sub.add_parser("selfcheck", help="fast self-test suite")
    s.add_argument("--output-root", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-models":
        print("\n".join(DEFAULT_PARAMS))
        return EXIT_PASS
    if args.command == "list-experiments":
        print("\n".join(EXPERIMENTS))
        return EXIT_PASS
    if args.command == "selfcheck":
        return cmd_selfcheck(args.output_root)
    return cmd_run(args.config, args.output_root, args.workers)


if __name__ == "__main__":
    sys.exit(main())
