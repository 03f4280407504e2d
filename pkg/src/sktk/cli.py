"""Batch front end: ``sktk <subcommand> --config path [--out dir]``.

Every subcommand reads one JSON file, writes its tables as CSV (header row,
floats with 17 significant digits) plus ``summary.json``, and exits with
0 on success, 2 when the configuration or the model is invalid, and 3 when
a numerical step fails.  ``SKTK_THREADS`` caps the number of worker
processes used for independent stochastic trials.

Configuration keys (all but ``model`` optional)::

    {
      "model": {"D": [...], "A": [[...]] | "Dij": [[...]], "pi": [...]},
      "grid": {"M": 64} | {"M_list": [16, 32, 64]},
      "T": 0.25, "n_samples": 101, "seed": 0, "trials": 64,
      "initial": {"type": "constant", "values": [...]}
               | {"type": "fourier", "mean": [...], "modes": [[...]],
                  "amplitudes": [[...]], "phases": [[...]]}
               | {"type": "values", "values": [[...]]},
      "particles": {"N": 16, "N_list": [8, 16, 32]},
      "oracle": {"M": 3, "N_list": [4, 6], "t_obs": 0.5, "initial": [[...]]},
      "bbgky": {"M": 3, "N": 4, "laws": 10, "p": [[1, 0], [1, 1]]},
      "tolerances": {"tol_db": 1e-12, "bbgky": 1e-12, "cfl": 0.4}
    }
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from ._rng import LAW_STREAM, trial_rng
from .convergence import refinement_study
from .grid import Grid
from .master import NonPositiveState, StepFailure, StepPolicy, dissipation, solve
from .meanfield import averaged_marginals, chaos_study, mf_solve
from .model import (
    DEFAULT_TOL_DB,
    DetailedBalanceError,
    DimensionError,
    InvalidModelError,
    MicroParams,
    ModelParams,
    macro_to_micro,
    micro_to_macro,
    validate,
)
from .particles import (
    CapExceeded,
    LabeledStateSpace,
    NonPositiveMeasure,
    bbgky_check,
    symmetrize,
)

log = logging.getLogger("sktk")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

STUDIES = ("validate", "solve", "simulate", "bbgky-check", "meanfield-study", "grid-study",
           "entropy-report")
DEFAULT_TOLERANCES = {"tol_db": DEFAULT_TOL_DB, "bbgky": 1e-12, "cfl": 0.4}

NUMERICAL_ERRORS = (StepFailure, NonPositiveState, NonPositiveMeasure, CapExceeded,
                    FloatingPointError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    """A configuration entry is missing, malformed or inconsistent."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


class NumericalFailure(RuntimeError):
    """A study failed numerically; the message carries the study context."""


# ---------------------------------------------------------------------------
# configuration


def _get(block: dict, key: str, where: str, default=None, required: bool = False):
    if key not in block:
        if required:
            raise ConfigError(f"{where}.{key}" if where else key, "missing required field")
        return default
    return block[key]


def _block(raw: dict, key: str) -> dict:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(key, "expected an object")
    return value


def _number(value, where: str, kind=float, positive: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    if kind is int and float(value) != int(value):
        raise ConfigError(where, f"expected an integer, got {value!r}")
    out = kind(value)
    if positive and out <= 0:
        raise ConfigError(where, f"must be positive, got {value!r}")
    return out


def _array(value, where: str, ndim: int) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, f"not a numeric array ({exc})") from None
    if arr.ndim != ndim:
        raise ConfigError(where, f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(where, "entries must be finite")
    return arr


@dataclass(frozen=True)
class InitialData:
    """Initial profile: constant per species, a cosine series, or node values."""

    kind: str
    mean: np.ndarray | None = None
    modes: tuple = ()
    amplitudes: tuple = ()
    phases: tuple = ()
    values: np.ndarray | None = None

    @property
    def closed_form(self) -> bool:
        return self.kind != "values"

    def __call__(self, x) -> np.ndarray:
        """``n x len(x)`` values of a closed-form profile."""
        if not self.closed_form:
            raise ConfigError("initial.type", "node values have no closed form")
        x = np.asarray(x, dtype=float)
        out = np.repeat(self.mean[:, None], x.size, axis=1)
        for i, (ms, amps, phs) in enumerate(zip(self.modes, self.amplitudes, self.phases)):
            for m, a, ph in zip(ms, amps, phs):
                out[i] += a * np.cos(2.0 * np.pi * m * x + ph)
        return out

    def on_grid(self, M: int) -> np.ndarray:
        if self.closed_form:
            return Grid(M).sample(self)
        if self.values.shape[1] != M:
            raise ConfigError("initial.values", f"has {self.values.shape[1]} nodes, grid has M={M}")
        return self.values.copy()

    def check_positive(self, M: int):
        """Closed forms are probed on ``16 M`` points, node values directly."""
        probe = self(np.arange(16 * M) / (16 * M)) if self.closed_form else self.values
        if probe.min() <= 0:
            raise ConfigError("initial", f"initial data must be strictly positive (min {probe.min():.6g})")


def _parse_initial(block, n: int) -> InitialData:
    if block is None:
        return InitialData("constant", mean=np.ones(n))
    if not isinstance(block, dict):
        raise ConfigError("initial", "expected an object")
    kind = _get(block, "type", "initial", required=True)
    if kind == "constant":
        vals = _array(_get(block, "values", "initial", required=True), "initial.values", 1)
        if vals.shape != (n,):
            raise ConfigError("initial.values", f"expected {n} entries, got {vals.size}")
        return InitialData("constant", mean=vals)
    if kind == "fourier":
        mean = _array(_get(block, "mean", "initial", required=True), "initial.mean", 1)
        if mean.shape != (n,):
            raise ConfigError("initial.mean", f"expected {n} entries, got {mean.size}")
        modes = _get(block, "modes", "initial", required=True)
        amps = _get(block, "amplitudes", "initial", required=True)
        phases = _get(block, "phases", "initial", [[0.0] * len(m) for m in modes])
        for name, lists in (("modes", modes), ("amplitudes", amps), ("phases", phases)):
            if not isinstance(lists, list) or len(lists) != n or not all(isinstance(v, list) for v in lists):
                raise ConfigError(f"initial.{name}", f"expected {n} per-species lists")
        for i in range(n):
            if not len(modes[i]) == len(amps[i]) == len(phases[i]):
                raise ConfigError(f"initial.amplitudes[{i}]", "modes, amplitudes and phases differ in length")
            for q, m in enumerate(modes[i]):
                _number(m, f"initial.modes[{i}][{q}]", int)
        as_tuple = lambda lists, kind: tuple(tuple(kind(v) for v in row) for row in lists)  # noqa: E731
        return InitialData("fourier", mean=mean, modes=as_tuple(modes, int),
                           amplitudes=as_tuple(amps, float), phases=as_tuple(phases, float))
    if kind == "values":
        vals = _array(_get(block, "values", "initial", required=True), "initial.values", 2)
        if vals.shape[0] != n:
            raise ConfigError("initial.values", f"expected {n} rows, got {vals.shape[0]}")
        return InitialData("values", values=vals)
    raise ConfigError("initial.type", f"unknown type {kind!r} (constant, fourier or values)")


@dataclass(frozen=True)
class RunConfig:
    D: np.ndarray
    pi: np.ndarray
    A: np.ndarray | None
    Dij: np.ndarray | None
    initial: InitialData
    study: str | None = None
    M: int | None = None
    M_list: tuple = ()
    T: float = 1.0
    n_samples: int = 101
    seed: int = 0
    trials: int = 64
    N: int | None = None
    N_list: tuple = ()
    oracle: dict = field(default_factory=dict)
    bbgky: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.D.size

    def model_params(self) -> ModelParams:
        if self.A is not None:
            return ModelParams(self.D, self.A, self.pi)
        return micro_to_macro(MicroParams(self.D, self.Dij, self.pi))

    def micro_params(self) -> MicroParams:
        if self.Dij is not None:
            return MicroParams(self.D, self.Dij, self.pi)
        return macro_to_micro(self.model_params(), self.tolerances["tol_db"])

    def grid_M(self) -> int:
        if self.M is not None:
            return self.M
        if self.M_list:
            return self.M_list[-1]
        raise ConfigError("grid.M", "missing required field")


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    model = _get(raw, "model", "", required=True)
    if not isinstance(model, dict):
        raise ConfigError("model", "expected an object")
    D = _array(_get(model, "D", "model", required=True), "model.D", 1)
    pi = _array(_get(model, "pi", "model", required=True), "model.pi", 1)
    if ("A" in model) == ("Dij" in model):
        raise ConfigError("model", "give exactly one of A and Dij")
    key = "A" if "A" in model else "Dij"
    mat = _array(model[key], f"model.{key}", 2)
    n = D.size
    if "n" in model and _number(model["n"], "model.n", int) != n:
        raise ConfigError("model.n", f"n={model['n']} but D has {n} entries")
    if pi.shape != (n,):
        raise ConfigError("model.pi", f"expected {n} entries, got {pi.size}")
    if mat.shape != (n, n):
        raise ConfigError(f"model.{key}", f"expected a {n}x{n} matrix, got shape {mat.shape}")

    grid = _block(raw, "grid")
    M = _get(grid, "M", "grid")
    M = None if M is None else _number(M, "grid.M", int, positive=True)
    M_list = tuple(_number(v, f"grid.M_list[{q}]", int, positive=True)
                   for q, v in enumerate(_get(grid, "M_list", "grid", [])))
    for where, size in [("grid.M", M)] + [(f"grid.M_list[{q}]", v) for q, v in enumerate(M_list)]:
        if size is not None and size < 2:
            raise ConfigError(where, "a grid needs at least 2 sites")

    particles = _block(raw, "particles")
    N = _get(particles, "N", "particles")
    N = None if N is None else _number(N, "particles.N", int, positive=True)
    N_list = tuple(_number(v, f"particles.N_list[{q}]", int, positive=True)
                   for q, v in enumerate(_get(particles, "N_list", "particles", [])))

    tolerances = dict(DEFAULT_TOLERANCES)
    for k, v in _block(raw, "tolerances").items():
        if k not in DEFAULT_TOLERANCES:
            raise ConfigError(f"tolerances.{k}", f"unknown tolerance (known: {', '.join(DEFAULT_TOLERANCES)})")
        tolerances[k] = _number(v, f"tolerances.{k}", float)

    study = _get(raw, "study", "")
    if study is not None and study not in STUDIES:
        raise ConfigError("study", f"unknown study {study!r}")

    return RunConfig(
        D=D, pi=pi,
        A=mat if key == "A" else None,
        Dij=mat if key == "Dij" else None,
        initial=_parse_initial(_get(raw, "initial", ""), n),
        study=study,
        M=M,
        M_list=M_list,
        T=_number(_get(raw, "T", "", 1.0), "T", float, positive=True),
        n_samples=_number(_get(raw, "n_samples", "", 101), "n_samples", int, positive=True),
        seed=_number(_get(raw, "seed", "", 0), "seed", int),
        trials=_number(_get(raw, "trials", "", 64), "trials", int, positive=True),
        N=N,
        N_list=N_list,
        oracle=dict(_block(raw, "oracle")),
        bbgky=dict(_block(raw, "bbgky")),
        tolerances=tolerances,
        raw=raw,
    )


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}", exc.msg) from None
    try:
        return parse_config(raw)
    except TypeError as exc:
        raise ConfigError(str(path), f"malformed entry ({exc})") from None


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_csv(path: Path, header, rows):
    """Header row, then rows with floats at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def snapshot_rows(times, u):
    """Rows ``(t, k, x, u_1..u_n)`` for snapshots ``u[s, i, k]``."""
    M = u.shape[-1]
    x = np.arange(M) / M
    for s, t in enumerate(times):
        for k in range(M):
            yield [float(t), k, float(x[k]), *u[s, :, k].tolist()]


def snapshot_header(n: int):
    return ["t", "k", "x"] + [f"u_{i + 1}" for i in range(n)]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_summary(out: Path, command: str, status: int, raw: dict | None, metrics: dict,
                  files, error: str | None = None, seeds=None):
    summary = {
        "command": command,
        "status": status,
        "config": raw,
        "versions": {
            "sktk": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "seeds": seeds or {},
        "metrics": metrics,
        "files": [str(f) for f in files],
    }
    if error is not None:
        summary["error"] = error
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# studies


def _policy(cfg: RunConfig) -> StepPolicy:
    return StepPolicy(cfl=cfg.tolerances["cfl"])


def _valid_model(cfg: RunConfig) -> ModelParams:
    params = cfg.model_params()
    report = validate(params, cfg.tolerances["tol_db"])
    if not report:
        raise InvalidModelError(report)
    return params


def _initial_on_grid(cfg: RunConfig, M: int) -> np.ndarray:
    cfg.initial.check_positive(M)
    return cfg.initial.on_grid(M)


def _distributions(u: np.ndarray) -> np.ndarray:
    return u / u.sum(axis=1, keepdims=True)


def run_validate(cfg: RunConfig, out: Path):
    params = cfg.model_params()
    report = validate(params, cfg.tolerances["tol_db"])
    violations = list(report.violations)
    if cfg.M is not None or cfg.M_list or not cfg.initial.closed_form:
        M = cfg.grid_M() if (cfg.M is not None or cfg.M_list) else cfg.initial.values.shape[1]
        try:
            _initial_on_grid(cfg, M)
        except ConfigError as exc:
            violations.append(str(exc))
    metrics = {"valid": not violations, "violations": violations}
    if violations:
        for v in violations:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_INVALID, metrics, []
    return EXIT_OK, metrics, []


def _solve(cfg: RunConfig):
    params = _valid_model(cfg)
    M = cfg.grid_M()
    u0 = _initial_on_grid(cfg, M)
    times = np.linspace(0.0, cfg.T, cfg.n_samples)
    try:
        traj = solve(u0, params, cfg.T, _policy(cfg), sample_times=times)
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(f"solve with M={M}, T={cfg.T}: {exc}") from exc
    return params, traj


def run_solve(cfg: RunConfig, out: Path):
    _, traj = _solve(cfg)
    path = out / "snapshots.csv"
    write_csv(path, snapshot_header(traj.u.shape[1]), snapshot_rows(traj.times, traj.u))
    masses = traj.masses()
    metrics = {
        "M": traj.u.shape[-1],
        "steps": traj.n_steps,
        "final_masses": masses[-1],
        "max_mass_drift": float(np.abs(masses - masses[0]).max()),
        "min_value": float(traj.u.min()),
    }
    return EXIT_OK, metrics, [path]


def run_entropy_report(cfg: RunConfig, out: Path):
    params, traj = _solve(cfg)
    rows = []
    for s, t in enumerate(traj.times):
        d = dissipation(traj.state(s), params)
        rows.append([float(t), d.H, d.dissipation, d.sqrt_lower_bound, *d.masses.tolist()])
    table = np.array(rows)
    header = ["t", "H", "dissipation", "sqrt_lower_bound"] + [f"mass_{i + 1}" for i in range(params.n)]
    path = out / "entropy.csv"
    write_csv(path, header, rows)
    metrics = {
        "M": traj.u.shape[-1],
        "H_initial": table[0, 1],
        "H_final": table[-1, 1],
        "H_max_increase": float(max(0.0, np.diff(table[:, 1]).max())) if len(rows) > 1 else 0.0,
        "max_mass_drift": float(np.abs(table[:, 4:] - table[0, 4:]).max()),
    }
    return EXIT_OK, metrics, [path]


def run_simulate(cfg: RunConfig, out: Path):
    micro = cfg.micro_params().normalized()
    if cfg.N is None:
        raise ConfigError("particles.N", "missing required field")
    M = cfg.grid_M()
    u0 = _distributions(_initial_on_grid(cfg, M))
    times = np.linspace(0.0, cfg.T, cfg.n_samples)
    try:
        avg = averaged_marginals(micro, u0, cfg.N, times, cfg.seed, cfg.trials)
        mf = mf_solve(u0, micro, cfg.T, times).u
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(f"simulate with M={M}, N={cfg.N}: {exc}") from exc
    header = snapshot_header(micro.n)
    paths = [out / "simulate.csv", out / "meanfield.csv"]
    write_csv(paths[0], header, snapshot_rows(times, avg))
    write_csv(paths[1], header, snapshot_rows(times, mf))
    metrics = {
        "M": M,
        "N": cfg.N,
        "trials": cfg.trials,
        "sup_l1_distance": float(np.abs(avg - mf).sum(axis=(1, 2)).max()),
    }
    return EXIT_OK, metrics, paths


def _multi_indices(counts):
    for p in itertools.product(*(range(c + 1) for c in counts)):
        if any(p):
            yield p


def run_bbgky(cfg: RunConfig, out: Path):
    micro = cfg.micro_params().normalized()
    block = cfg.bbgky
    M = _number(block.get("M", cfg.M if cfg.M is not None else 3), "bbgky.M", int, positive=True)
    N = _number(block.get("N", cfg.N if cfg.N is not None else 2), "bbgky.N", int, positive=True)
    laws = _number(block.get("laws", 10), "bbgky.laws", int, positive=True)
    try:
        space = LabeledStateSpace.from_weights(M, micro.pi, N)
    except CapExceeded as exc:
        raise ConfigError("bbgky", str(exc)) from None
    if "p" in block:
        p_list = [tuple(_number(v, f"bbgky.p[{q}]", int) for v in p) for q, p in enumerate(block["p"])]
    else:
        p_list = list(_multi_indices(space.counts))
    rows = []
    worst = 0.0
    for r in range(laws):
        rng = trial_rng(cfg.seed, r, LAW_STREAM)
        mu = symmetrize(space, rng.random(space.size) + 0.05)
        mu /= mu.sum()
        for p in p_list:
            try:
                res = bbgky_check(space, micro, mu, p)
            except ValueError as exc:
                raise ConfigError("bbgky.p", str(exc)) from None
            worst = max(worst, res)
            rows.append([N, r, *p, res])
    path = out / "bbgky.csv"
    write_csv(path, ["N", "law"] + [f"p_{i + 1}" for i in range(micro.n)] + ["residual"], rows)
    tol = cfg.tolerances["bbgky"]
    metrics = {"M": M, "N": N, "counts": list(space.counts), "laws": laws, "max_residual": worst,
               "tolerance": tol}
    if worst > tol:
        raise NumericalFailure(f"bbgky-check with M={M}, N={N}: residual {worst:.3e} exceeds {tol:.1e}")
    return EXIT_OK, metrics, [path]


def run_meanfield_study(cfg: RunConfig, out: Path):
    micro = cfg.micro_params().normalized()
    if not cfg.N_list:
        raise ConfigError("particles.N_list", "missing required field")
    M = cfg.grid_M()
    u0 = _distributions(_initial_on_grid(cfg, M))
    oracle = cfg.oracle
    oracle_kw = {}
    if oracle:
        oM = _number(_get(oracle, "M", "oracle", required=True), "oracle.M", int, positive=True)
        ou0 = _array(_get(oracle, "initial", "oracle", required=True), "oracle.initial", 2)
        if ou0.shape != (micro.n, oM) or ou0.min() <= 0:
            raise ConfigError("oracle.initial", f"expected a positive {micro.n}x{oM} array")
        oracle_kw = dict(
            oracle_M=oM,
            oracle_u0=ou0,
            oracle_N_list=[_number(v, "oracle.N_list", int, positive=True)
                           for v in _get(oracle, "N_list", "oracle", required=True)],
            oracle_t_obs=_number(oracle.get("t_obs", cfg.T), "oracle.t_obs", float, positive=True),
            oracle_pairs=oracle.get("pairs"),
        )
    try:
        report = chaos_study(micro, M, u0, cfg.N_list, trials=cfg.trials, t_end=cfg.T, seed=cfg.seed,
                             n_samples=cfg.n_samples, **oracle_kw)
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(f"meanfield-study with M={M}, N_list={list(cfg.N_list)}: {exc}") from exc
    path = out / "meanfield_study.csv"
    write_csv(path, ["N", "metric", "value"], ([r["N"], r["metric"], r["value"]] for r in report.rows()))
    metrics = {
        "M": M,
        "N_list": report.N_list,
        "distances": report.distances,
        "distance_slope": report.distance_slope,
        "inversions": report.inversions(),
        "covariance_defects": report.covariance_defects,
        "covariance_slope": report.covariance_slope,
    }
    return EXIT_OK, metrics, [path]


def run_grid_study(cfg: RunConfig, out: Path):
    params = _valid_model(cfg)
    if len(cfg.M_list) < 2:
        raise ConfigError("grid.M_list", "need at least two grid sizes")
    if not cfg.initial.closed_form:
        raise ConfigError("initial.type", "grid-study needs closed-form (constant or fourier) initial data")
    cfg.initial.check_positive(max(cfg.M_list))
    try:
        study = refinement_study(params, cfg.initial, cfg.M_list, cfg.T, n_samples=cfg.n_samples,
                                 policy=_policy(cfg))
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(f"grid-study with M_list={list(cfg.M_list)}: {exc}") from exc
    rows = list(study.rows())
    header = list(rows[0])
    path = out / "grid_study.csv"
    write_csv(path, header, ([row[k] for k in header] for row in rows))
    metrics = {
        "M_list": study.M_list,
        "product_gap_slope": study.slope(study.product_gaps),
        "gap_envelope_slope": study.slope(study.gap_envelopes),
        "weak_residual_slopes": [study.slope(study.weak_residuals[:, q])
                                 for q in range(study.weak_residuals.shape[1])],
        "l2_difference_orders": study.difference_orders(),
        "monitor_ratios": {name: study.monitor_ratio(name) for name in study.monitors},
    }
    return EXIT_OK, metrics, [path]


RUNNERS = {
    "validate": run_validate,
    "solve": run_solve,
    "simulate": run_simulate,
    "bbgky-check": run_bbgky,
    "meanfield-study": run_meanfield_study,
    "grid-study": run_grid_study,
    "entropy-report": run_entropy_report,
}


def run(command: str, config_path, out_dir=None) -> int:
    """Execute one study and return the exit status."""
    out = Path(out_dir) if out_dir is not None else Path(".")
    raw = None
    metrics: dict = {}
    files: list = []
    error = None
    seeds = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg = load_config(config_path)
        raw = cfg.raw
        seeds = {"seed": cfg.seed, "trials": cfg.trials}
        if cfg.study is not None and cfg.study != command:
            raise ConfigError("study", f"config selects {cfg.study!r} but the command is {command!r}")
        status, metrics, files = RUNNERS[command](cfg, out)
    except (ConfigError, InvalidModelError, DetailedBalanceError, DimensionError) as exc:
        status, error = EXIT_INVALID, str(exc)
        print(f"sktk {command}: invalid input: {exc}", file=sys.stderr)
    except NumericalFailure as exc:
        status, error = EXIT_NUMERICAL, str(exc)
        print(f"sktk {command}: numerical failure: {exc}", file=sys.stderr)
    except NUMERICAL_ERRORS as exc:
        status, error = EXIT_NUMERICAL, f"{command}: {exc}"
        print(f"sktk {command}: numerical failure: {exc}", file=sys.stderr)
    except ValueError as exc:
        status, error = EXIT_INVALID, str(exc)
        print(f"sktk {command}: invalid input: {exc}", file=sys.stderr)
    except OSError as exc:
        status, error = EXIT_INVALID, str(exc)
        print(f"sktk {command}: cannot write outputs: {exc}", file=sys.stderr)
    if out.is_dir():
        write_summary(out, command, status, raw, metrics, [f.name for f in files], error, seeds)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sktk", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STUDIES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default=".", help="output directory (default: current)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    return run(args.command, args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
