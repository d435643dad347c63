"""Command-line entry point.

Each subcommand writes a table (CSV with a schema comment, or JSON) and a
JSON summary holding the parameters, a SHA-256 of the table and the results
of the built-in checks.  Settings come from an INI file (``--config``) with
one section per topic; command-line flags override the file.

Exit status: 0 on success, 1 when a built-in check fails or a run errors,
2 for configuration errors.  Failures are also reported as one JSON object
on stderr.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
OUT_ENV = "STOCHCOLLAPSE_OUT"
SUBCOMMANDS = ("master", "trajectory", "oracle", "free", "perturb", "estimate", "validate")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "validate"
    # [model]
    lam: float | None = None
    eta: float | None = None
    omega: float = 1.0
    mass: float = 1.0
    dim: int = 40
    dt: float = 1e-3
    t_final: float = 5.0
    record_every: int = 100
    # [drive]
    drive: str = "zero"
    d0: complex = 0j
    nu: float = 0.0
    # [initial]
    z: complex = 0j
    # [ensemble]
    M: int = 200
    seed: int = 0
    threads: int = 1
    # [perturb]
    etas: tuple[float, ...] = (2e-3, 1e-3)
    # [estimate]
    preset: str = "all"
    collapse_model: str = "all"
    eta0: float = 1e-2
    gamma: float = 1e-30
    alpha_csl: float = 1e10
    nucleon_density: float = 1e24
    # [output]
    out: str | None = None
    format: str = "csv"

    def resolved_eta(self) -> float:
        """``eta`` from either ``eta`` or the dimensionless ``lam = eta sigma^2``."""
        if self.lam is not None and self.eta is not None:
            raise ConfigError("give either lam or eta, not both")
        if self.eta is not None:
            return self.eta
        lam = 0.01 if self.lam is None else self.lam
        return lam * 2 * self.mass * self.omega

    def validate(self) -> "RunConfig":
        if self.command not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.command!r}")
        positive = ("omega", "mass", "dt", "t_final", "eta0", "gamma", "alpha_csl", "nucleon_density")
        for key in positive:
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be > 0, got {getattr(self, key)!r}")
        for key in ("lam", "eta"):
            v = getattr(self, key)
            if v is not None and v < 0:
                raise ConfigError(f"{key} must be >= 0, got {v!r}")
        for key, lo in (("dim", 4), ("record_every", 1), ("M", 1), ("threads", 1)):
            if getattr(self, key) < lo:
                raise ConfigError(f"{key} must be >= {lo}, got {getattr(self, key)!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.dt * self.omega > 0.01:
            raise ConfigError(f"dt*omega must be <= 0.01, got {self.dt * self.omega:g}")
        if self.drive not in ("zero", "constant", "harmonic"):
            raise ConfigError(f"drive must be zero, constant or harmonic, got {self.drive!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.collapse_model not in ("all", "grw", "csl"):
            raise ConfigError(f"collapse_model must be all, grw or csl, got {self.collapse_model!r}")
        if any(e <= 0 for e in self.etas):
            raise ConfigError("etas must all be > 0")
        self.resolved_eta()
        return self


# section -> key -> RunConfig field
CONFIG_KEYS: dict[str, tuple[str, ...]] = {
    "model": ("lam", "eta", "omega", "mass", "dim", "dt", "t_final", "record_every"),
    "drive": ("drive", "d0", "nu"),
    "initial": ("z",),
    "ensemble": ("M", "seed", "threads"),
    "perturb": ("etas",),
    "estimate": ("preset", "collapse_model", "eta0", "gamma", "alpha_csl", "nucleon_density"),
    "output": ("out", "format"),
}
_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key: str, raw):
    if raw is None or not isinstance(raw, str):
        return raw
    kind = str(_FIELDS[key].type)
    try:
        if key == "etas":
            return tuple(float(x) for x in raw.replace(",", " ").split())
        if "complex" in kind:
            return complex(raw.replace(" ", ""))
        if kind.startswith("int"):
            return int(raw)
        if "float" in kind:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    return raw


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None,
                command: str = "validate") -> RunConfig:
    """Read an INI file, apply ``overrides`` (flag values, ``None`` meaning unset), validate."""
    values: dict = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section not in CONFIG_KEYS:
                raise ConfigError(f"{path}: unknown section [{section}]; known: {sorted(CONFIG_KEYS)}")
            for key, raw in parser.items(section):
                if key not in CONFIG_KEYS[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]; "
                                      f"known: {list(CONFIG_KEYS[section])}")
                values[key] = _convert(key, raw)
    for key, val in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        if val is not None:
            values[key] = _convert(key, val)
    return RunConfig(command=command, **values).validate()


# -- output -----------------------------------------------------------------------

@dataclass
class Table:
    columns: list[str]
    rows: list[list]
    checks: dict[str, dict] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def check(self, name: str, passed: bool, **detail) -> None:
        self.checks[name] = {"passed": bool(passed), **{k: _jsonable(v) for k, v in detail.items()}}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def render_table(table: Table, fmt: str) -> str:
    if fmt == "json":
        rows = [dict(zip(table.columns, map(_jsonable, r))) for r in table.rows]
        return json.dumps({"schema_version": SCHEMA_VERSION, "rows": rows}, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# stochcollapse table schema {SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


# -- pipelines ----------------------------------------------------------------------

def _model(cfg: RunConfig):
    from .model import DriveSpec, OscillatorModel
    drive = {"zero": DriveSpec.zero, "constant": lambda: DriveSpec.constant(cfg.d0),
             "harmonic": lambda: DriveSpec.harmonic(cfg.d0, cfg.nu)}[cfg.drive]()
    return OscillatorModel(cfg.dim, cfg.resolved_eta(), cfg.mass, cfg.omega, drive)


def _initial_state(cfg: RunConfig, model) -> np.ndarray:
    return model.space.vacuum() if cfg.z == 0 else model.space.coherent(cfg.z)


def run_master(cfg: RunConfig) -> Table:
    from .master import evolve_master
    from .oracles import MomentSet, moment_oracle

    model = _model(cfg)
    sp = model.space
    psi = _initial_state(cfg, model)
    rho0 = sp.projector(psi)
    res = evolve_master(model, rho0, cfg.t_final, cfg.dt, record_every=cfg.record_every)
    init = MomentSet.from_state(sp, rho0)
    cols = ["t", "N", "X1", "X2", "X1^2", "X2^2", "X1X2+X2X1", "trace", "min_eigenvalue",
            "oracle_N", "oracle_X1^2"]
    rows, worst = [], 0.0
    for t, rho, mn in zip(res.times, res.rhos, res.min_eigenvalues):
        ms = MomentSet.from_state(sp, rho, t)
        orc = moment_oracle(model, init, float(t))
        worst = max(worst, abs(ms.n - orc.n).real, abs(ms.x1sq - orc.x1sq))
        rows.append([t, ms.n.real, ms.x1, ms.x2, ms.x1sq, ms.x2sq, ms.x12, np.trace(rho).real, mn,
                     orc.n.real, orc.x1sq])
    table = Table(cols, rows)
    table.check("trace_preserved", max(abs(r[7] - 1) for r in rows) < 1e-8)
    table.check("positivity", min(r[8] for r in rows) >= -1e-8)
    table.check("matches_moment_oracle", worst < 1e-6, max_abs_difference=worst)
    return table


def run_trajectory(cfg: RunConfig) -> Table:
    from .statistics import ensemble_stats, variance_inequality_check
    from .trajectory import simulate_ensemble

    model = _model(cfg)
    psi = _initial_state(cfg, model)
    ens = simulate_ensemble(model, psi, cfg.t_final, cfg.dt, cfg.M, cfg.seed,
                            record_every=cfg.record_every, threads=cfg.threads)
    names = ("X1", "X2", "N")
    reports = {b: ensemble_stats(ens, b) for b in names}
    cols = ["t"]
    for b in names:
        cols += [f"mean_{b}", f"mean_pure_var_{b}", f"mixed_var_{b}", f"C_{b}",
                 f"stderr_pure_var_{b}", f"stderr_C_{b}"]
    rows = []
    for r, t in enumerate(ens.times):
        row = [t]
        for b in names:
            rep = reports[b]
            row += [rep.mean_expectation[r], rep.mean_of_pure_variance[r], rep.mixed_variance[r],
                    rep.correction[r], rep.stderr_pure[r], rep.stderr_correction[r]]
        rows.append(row)
    table = Table(cols, rows)
    for b in names:
        chk = variance_inequality_check(reports[b])
        table.check(f"variance_inequality_{b}", chk.passed, worst_margin=chk.worst_margin)
    drift = float(np.mean(np.abs(ens.norm_drift)))
    table.check("norm_drift", drift < 1e-5, mean_abs_drift=drift)
    return table


def run_oracle(cfg: RunConfig) -> Table:
    from .oracles import decoherence_shifts

    model = _model(cfg)
    n = max(1, int(round(cfg.t_final / (cfg.dt * cfg.record_every))))
    cols = ["t", "delta_N", "delta_X1^2", "delta_X2^2", "delta_X1X2+X2X1", "delta_E"]
    rows, worst = [], 0.0
    for t in np.linspace(0.0, cfg.t_final, n + 1):
        sh = decoherence_shifts(model, float(t))
        rows.append([float(t), sh.n, sh.x1sq, sh.x2sq, sh.x12, sh.energy])
        worst = max(worst, abs(sh.n - model.lam * t))
    table = Table(cols, rows)
    table.check("delta_N_equals_lambda_t", worst <= 1e-15 * max(1.0, model.lam * cfg.t_final),
                max_abs_difference=worst)
    return table


def run_free(cfg: RunConfig) -> Table:
    from .free_mass import energy_growth_free, free_moment_table, minimum_uncertainty_moments

    eta = cfg.resolved_eta()
    init = minimum_uncertainty_moments(cfg.mass, cfg.omega)
    n = max(1, int(round(cfg.t_final / (cfg.dt * cfg.record_every))))
    times = np.linspace(0.0, cfg.t_final, n + 1)
    moments = free_moment_table(cfg.mass, eta, init, times)
    cols = ["t", "mean_q", "mean_p", "q2", "p2", "qp+pq", "delta_E"]
    rows = [[m.t, m.mean_q, m.mean_p, m.q2, m.p2, m.qp_sym, energy_growth_free(cfg.mass, eta, m.t)]
            for m in moments]
    table = Table(cols, rows)
    table.check("uncertainty_relation", all(m.uncertainty_ok() for m in moments))
    return table


def run_perturb(cfg: RunConfig) -> Table:
    from .perturbation import (perturbative_density, perturbative_variance_correction,
                               residual_scaling, zero_mean_score)

    model = _model(cfg)
    rho0 = model.space.projector(_initial_state(cfg, model))
    pert = perturbative_density(model, rho0, cfg.t_final, ds=cfg.dt, M=cfg.M, seed=cfg.seed)
    rows_r = residual_scaling(model, rho0, cfg.t_final, etas=cfg.etas, dt=cfg.dt, pert=pert)
    table = Table(["eta", "residual"], [[r.eta, r.residual] for r in rows_r])
    for a, b in zip(rows_r, rows_r[1:]):
        expected = (a.eta / b.eta) ** 2
        ratio = a.residual / b.residual
        table.check(f"residual_scaling_{a.eta:g}_{b.eta:g}", abs(ratio / expected - 1) <= 0.2,
                    ratio=ratio, expected=expected)
    score = zero_mean_score(pert.rho_half)
    table.check("rho_half_zero_mean", score <= 4, max_z=score)
    var_x1 = perturbative_variance_correction(pert.kernel, model.space.x1)
    table.extra["variance_correction_X1"] = var_x1
    return table


def run_estimate(cfg: RunConfig) -> Table:
    from .estimator import PRESETS, CollapseModelParams, deviation_bounds, preset

    configs = list(PRESETS.values()) if cfg.preset == "all" else [preset(cfg.preset)]
    kinds = ("grw", "csl") if cfg.collapse_model == "all" else (cfg.collapse_model,)
    cols = ["experiment", "model", "kind", "eta", "t", "sql", "occupation_growth", "rms_bound",
            "ratio_to_sql", "ratio_to_accuracy"]
    rows = []
    for ex in configs:
        for k in kinds:
            params = CollapseModelParams(k, cfg.eta0, cfg.gamma, cfg.alpha_csl, cfg.nucleon_density)
            r = deviation_bounds(ex, params)
            rows.append([r.experiment, r.model, r.kind, r.eta, r.t, r.sql,
                         r.occupation_growth, r.rms_bound, r.ratio_to_sql, r.ratio_to_accuracy])
    table = Table(cols, rows)
    table.check("finite_positive", all(v > 0 and math.isfinite(v) for r in rows for v in r[3:6] + r[7:9]))
    return table


def run_validate(cfg: RunConfig) -> Table:
    """Quick invariant suite on small sizes."""
    from .estimator import CollapseModelParams, collapse_eta
    from .fock import FockSpace
    from .master import evolve_master, validate_density_matrix
    from .model import OscillatorModel
    from .oracles import MomentSet, coherent_element_L, coherent_element_numeric, moment_oracle, moments_from_K
    from .statistics import ito_isometry_check

    table = Table(["check", "value", "tolerance", "passed"], [])

    def add(name, value, tol, ok):
        table.rows.append([name, float(value), float(tol), bool(ok)])
        table.check(name, ok, value=float(value))

    sp = FockSpace(12)
    comm = sp.a @ sp.adag - sp.adag @ sp.a
    err = np.max(np.abs(comm[:-1, :-1] - np.eye(11)))
    add("canonical_commutator", err, 1e-12, err < 1e-12)

    model = OscillatorModel.from_lambda(0.02, 20)
    rho0 = model.space.projector(model.space.vacuum())
    res = evolve_master(model, rho0, 1.0, 1e-3, record_every=1000)
    diag = validate_density_matrix(res.final)
    add("density_matrix_valid", diag.trace_deviation, 1e-8, diag.ok())
    orc = moment_oracle(model, MomentSet.from_state(model.space, rho0), 1.0)
    ms = MomentSet.from_state(model.space, res.final, 1.0)
    err = max(abs(ms.n - orc.n), abs(ms.x1sq - orc.x1sq))
    add("master_vs_moment_oracle", err, 1e-8, err < 1e-8)
    k22 = moments_from_K(model, 2, 2, 1.0)
    direct = np.trace(res.final @ model.space.adag @ model.space.adag @ model.space.a @ model.space.a)
    err = abs(k22 - direct)
    add("fourth_moment_from_K", err, 1e-8, err < 1e-8)
    L = coherent_element_L(model, 0.3, -0.2j, 1.0).value
    Ln = coherent_element_numeric(model.space, res.final, 0.3, -0.2j, 1.0)
    err = abs(L - Ln)
    add("coherent_element", err, 1e-8, err < 1e-8)
    ito = ito_isometry_check(lambda u: np.ones_like(u), lambda u: np.ones_like(u), 1.0,
                             M=2000, seed=cfg.seed, n_steps=100)
    add("ito_isometry_z", abs(ito.z_score), 4.0, ito.passed)
    eta = collapse_eta(CollapseModelParams("grw"), 1e12)
    add("grw_eta_1e12", eta, 1e10 * 1e-12, abs(eta - 1e10) < 1e-2)
    return table


PIPELINES = {
    "master": run_master, "trajectory": run_trajectory, "oracle": run_oracle, "free": run_free,
    "perturb": run_perturb, "estimate": run_estimate, "validate": run_validate,
}


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute the pipeline, write its artifacts and return ``(exit status, summary)``."""
    table = PIPELINES[cfg.command](cfg)
    out = Path(cfg.out or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    text = render_table(table, cfg.format)
    data_path = out / f"{cfg.command}.{cfg.format}"
    data_path.write_text(text)
    params = {k: _jsonable(v) for k, v in dataclasses.asdict(cfg).items() if k not in ("out", "threads")}
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "params": params,
        "artifacts": {data_path.name: hashlib.sha256(text.encode()).hexdigest()},
        "checks": table.checks,
        "passed": all(c["passed"] for c in table.checks.values()),
        **({"results": _jsonable(table.extra)} if table.extra else {}),
    }
    (out / f"{cfg.command}.summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return (0 if summary["passed"] else 1), summary


# -- argument parsing ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="INI file with [model], [drive], [initial], [ensemble], "
                                    "[perturb], [estimate] and [output] sections")
    g.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or the working directory)")
    g.add_argument("--seed", type=int)
    g.add_argument("--format", choices=("csv", "json"))
    g.add_argument("--threads", type=int, help="worker threads; never changes results")
    m = common.add_argument_group("model")
    m.add_argument("--lam", type=float, help="dimensionless eta*sigma^2 (default 0.01)")
    m.add_argument("--eta", type=float)
    m.add_argument("--omega", type=float)
    m.add_argument("--mass", type=float)
    m.add_argument("--dim", type=int, help="Fock truncation")
    m.add_argument("--dt", type=float)
    m.add_argument("--t-final", dest="t_final", type=float)
    m.add_argument("--record-every", dest="record_every", type=int)
    m.add_argument("--drive", choices=("zero", "constant", "harmonic"))
    m.add_argument("--d0", help="drive amplitude, e.g. 0.1+0.05j")
    m.add_argument("--nu", type=float, help="drive frequency for the harmonic drive")
    m.add_argument("--z", help="coherent-state amplitude of the initial state (0 = vacuum)")
    m.add_argument("-M", "--trajectories", dest="M", type=int)
    m.add_argument("--etas", help="comma-separated eta values for the residual scaling table")
    e = common.add_argument_group("estimate")
    e.add_argument("--preset", help="nanoresonator, advanced_ligo, lisa or all")
    e.add_argument("--model", dest="collapse_model", choices=("all", "grw", "csl"))

    parser = argparse.ArgumentParser(prog="stochcollapse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "master": "integrate the ensemble master equation",
        "trajectory": "run an ensemble of stochastic trajectories with variance statistics",
        "oracle": "tabulate the exact decoherence shifts of the moments",
        "free": "free-mass moment table",
        "perturb": "perturbative expansion and its residual scaling",
        "estimate": "collapse-model deviation estimates for the built-in experiments",
        "validate": "run the quick invariant suite",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _fail(kind: str, message: str, status: int, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}) + "\n")
    return status


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = load_config(args.config, overrides, command=args.command)
    except ConfigError as exc:
        return _fail("config", str(exc), 2)
    try:
        status, summary = run(cfg)
    except Exception as exc:  # surfaced to the caller as machine-readable JSON
        module = type(exc).__module__.rsplit(".", 1)[-1]
        return _fail(type(exc).__name__, str(exc), 1, module=module, command=cfg.command)
    if status:
        failed = [k for k, c in summary["checks"].items() if not c["passed"]]
        return _fail("checks_failed", ", ".join(failed), status, command=cfg.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
