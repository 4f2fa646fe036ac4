"""Command-line driver for convergence studies, single solves and the brain scenario.

Configuration comes from an INI-style file (``--config``) whose sections
are merged into one flat key space, with command-line flags taking
precedence.  Example::

    [run]
    mode = convergence
    case = table2
    levels = 5

    [output]
    out = results/table2
"""

from __future__ import annotations

import argparse
import configparser
import difflib
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .core import STANDARD, TOTAL_PRESSURE
from .linalg import SolverError
from .timestepper import write_series

log = logging.getLogger(__name__)

MODES = ("convergence", "scenario", "single-solve")
FORMULATION_CHOICES = (TOTAL_PRESSURE, STANDARD, "both")
ORACLE_TOL = 1e-5

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_ORACLE = 4

# name -> (mode, formulation, overrides)
CASES = {
    "table1": ("convergence", STANDARD, {}),
    "table2": ("convergence", TOTAL_PRESSURE, {}),
    "table3-nu04": ("convergence", TOTAL_PRESSURE, {"nu": 0.4}),
    "table4-c0": ("convergence", TOTAL_PRESSURE, {"storage": 0.0}),
    "table5-superconv": ("convergence", TOTAL_PRESSURE, {"discretization_errors": True}),
    "brain": ("scenario", "both", {}),
}
CASE_ALIASES = {"example1-table1": "table1", "example1-table2": "table2",
                "example1-table3": "table3-nu04", "example1-table4": "table4-c0",
                "example1-table5": "table5-superconv"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass
class RunConfig:
    """Validated run settings.

    ``lam`` (config key ``lambda``) overrides the Lamé parameter derived
    from ``nu``; ``lam_scale`` multiplies it.
    """

    mode: str = "convergence"
    case: str = "table2"
    formulation: str | None = None
    levels: int = 5
    nu: float = 0.49999
    storage: float = 1.0
    lam: float | None = None
    lam_scale: float = 1.0
    dt: float = 0.125
    T: float = 0.5
    start: str = "affine"
    discretization_errors: bool = False
    resolution: int = 10
    out: str = "mpet-output"
    emit_energy_trace: bool = False
    emit_matrices: bool = False
    scenario_dt: float = 0.0125
    scenario_T: float = 3.0


# config-file key -> RunConfig attribute
KEY_MAP = {f.name: f.name for f in fields(RunConfig)}
KEY_MAP.update({"lambda": "lam", "lambda_scale": "lam_scale", "c": "storage",
                "emit-energy-trace": "emit_energy_trace", "emit-matrices": "emit_matrices",
                "discretization-errors": "discretization_errors"})
KEY_MAP.pop("lam")
KEY_MAP.pop("lam_scale")


def _convert(key, attr, raw):
    target = {f.name: f for f in fields(RunConfig)}[attr]
    typ = str(target.type)
    text = str(raw).strip()
    try:
        if "bool" in typ:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if typ.startswith("int"):
            return int(text)
        if "float" in typ:
            return float(text)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot convert {text!r} to {typ.split(' ')[0]}") from None
    return text


def _suggest(key):
    close = difflib.get_close_matches(key, list(KEY_MAP), n=1, cutoff=0.6)
    return f"; did you mean {close[0]!r}?" if close else ""


def read_config_file(path):
    """Flatten an INI file into ``{key: raw string}``."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    flat = {}
    for section in cp.sections():
        for k, v in cp.items(section):
            if k in flat:
                raise ConfigError(f"key {k!r} given more than once")
            flat[k] = v
    return flat


def parse_config(path=None, overrides=None):
    """Build a :class:`RunConfig` from a file and/or a ``{key: value}`` mapping.

    Named cases fill in mode, formulation and parameter overrides; explicit
    keys win over the case defaults.  Raises :class:`ConfigError`.
    """
    raw = read_config_file(path) if path else {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values = {}
    for key, val in raw.items():
        norm = key.strip().lower()
        if norm not in KEY_MAP:
            raise ConfigError(f"unknown key {key!r}{_suggest(norm)}")
        attr = KEY_MAP[norm]
        values[attr] = val if not isinstance(val, str) else _convert(key, attr, val)
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            values[attr] = _convert(key, attr, val)

    case = str(values.get("case", RunConfig.case))
    case = CASE_ALIASES.get(case, case)
    if case not in CASES:
        raise ConfigError(f"key 'case': unknown case {case!r}; choose from {', '.join(CASES)}")
    mode, form, extra = CASES[case]
    merged = {"case": case, "mode": mode, "formulation": form, **extra}
    merged.update({k: v for k, v in values.items() if k != "case"})
    cfg = RunConfig(**merged)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg.mode not in MODES:
        raise ConfigError(f"key 'mode': {cfg.mode!r} is not one of {', '.join(MODES)}")
    if cfg.formulation not in FORMULATION_CHOICES:
        raise ConfigError(f"key 'formulation': {cfg.formulation!r} is not one of "
                          f"{', '.join(FORMULATION_CHOICES)}")
    if cfg.mode == "convergence" and cfg.levels < 2:
        raise ConfigError(f"key 'levels': a convergence study needs at least 2 levels, got {cfg.levels}")
    if cfg.levels < 1:
        raise ConfigError(f"key 'levels': must be positive, got {cfg.levels}")
    if cfg.mode != "scenario" and cfg.case == "brain":
        raise ConfigError("key 'mode': the brain case only runs in scenario mode")
    if cfg.mode == "scenario" and cfg.case != "brain":
        raise ConfigError(f"key 'case': scenario mode needs the brain case, got {cfg.case!r}")
    if not -1.0 < cfg.nu < 0.5:
        raise ConfigError(f"key 'nu': Poisson ratio must lie in (-1, 0.5), got {cfg.nu}")
    if cfg.storage < 0:
        raise ConfigError(f"key 'storage': must be non-negative, got {cfg.storage}")
    if cfg.lam is not None and cfg.lam <= 0:
        raise ConfigError(f"key 'lambda': must be positive, got {cfg.lam}")
    if cfg.dt <= 0 or cfg.T <= 0:
        raise ConfigError("keys 'dt' and 'T' must be positive")
    if cfg.start not in ("affine", "interpolate"):
        raise ConfigError(f"key 'start': {cfg.start!r} is not 'affine' or 'interpolate'")


def build_parser():
    p = argparse.ArgumentParser(
        prog="mpet",
        description="Multiple-network poroelasticity: convergence studies and the brain scenario.",
        epilog="Defaults: nu=0.49999, storage c=1, dt=0.125, T=0.5, levels=5 "
               "(meshes 4x4 .. 64x64); the brain case uses dt=0.0125, T=3. "
               f"Cases: {', '.join(CASES)}.",
    )
    p.add_argument("--config", metavar="PATH", help="INI-style configuration file")
    p.add_argument("--case", metavar="NAME", help="named case (default table2)")
    p.add_argument("--mode", choices=MODES, help="override the mode implied by the case")
    p.add_argument("--formulation", metavar="NAME",
                   help="total-pressure, standard or both (default from the case)")
    p.add_argument("--levels", type=int, metavar="N", help="number of mesh levels (default 5)")
    p.add_argument("--nu", type=float, metavar="X", help="Poisson ratio (default 0.49999)")
    p.add_argument("--storage", type=float, metavar="X", help="storage coefficient c_j (default 1)")
    p.add_argument("--out", metavar="DIR", help="output directory (default mpet-output)")
    p.add_argument("--emit-energy-trace", action="store_true", default=None,
                   help="write energy.csv")
    p.add_argument("--emit-matrices", action="store_true", default=None,
                   help="write the time-step matrices in MatrixMarket format")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def config_from_args(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in
                 ("case", "mode", "formulation", "levels", "nu", "storage", "out",
                  "emit_energy_trace", "emit_matrices")}
    return parse_config(args.config, overrides), args


# -- execution -----------------------------------------------------------------
def _formulations(cfg):
    return [TOTAL_PRESSURE, STANDARD] if cfg.formulation == "both" else [cfg.formulation]


def _case(cfg):
    from .verify import example1_case
    return example1_case(nu=cfg.nu, c_value=cfg.storage, lam=cfg.lam, lam_scale=cfg.lam_scale,
                         name=cfg.case)


OPTIMAL = {"u:L2": 3, "u:H1": 2, "p1:L2": 2, "p1:H1": 1, "p2:L2": 2, "p2:H1": 1, "p0:L2": 2,
           "Pip1:L2": 2, "Pip1:H1": 2, "Pip2:L2": 2, "Pip2:H1": 2, "Piu:H1": 2, "Pip0:L2": 2}


def run_convergence(cfg, out):
    from .verify import convergence_study, oracle_gate
    case = _case(cfg)
    case.dt, case.T, case.start = cfg.dt, cfg.T, cfg.start
    gate = oracle_gate(case)
    if gate >= ORACLE_TOL:
        print(f"error: source oracle residual {gate:.3e} >= {ORACLE_TOL:g}", file=sys.stderr)
        return EXIT_ORACLE
    csv_parts, md_parts = [], []
    for form in _formulations(cfg):
        rep = convergence_study(case, form, levels=cfg.levels,
                                discretization_errors=cfg.discretization_errors)
        csv_parts.append(f"# {form}\n" + rep.to_csv())
        md_parts.append(rep.to_markdown(optimal=OPTIMAL))
        if cfg.emit_energy_trace or cfg.emit_matrices:
            _emit_level_extras(cfg, case, form, out)
    (out / "report.csv").write_text("".join(csv_parts))
    md = f"oracle residual: {gate:.3e}\n\n" + "\n".join(md_parts)
    (out / "report.md").write_text(md)
    print(md)
    return EXIT_OK


def _emit_level_extras(cfg, case, form, out):
    """Energy trace and matrices of the finest level."""
    from .verify import level_meshes, solve_level
    (_, mesh), = level_meshes([cfg.levels - 1])
    tmpl, res = solve_level(case, form, mesh)
    tag = "" if cfg.formulation != "both" else f"-{form}"
    if cfg.emit_energy_trace:
        res.write_energy(out / f"energy{tag}.csv")
    if cfg.emit_matrices:
        from .linalg import DirichletLift, dump_matrix
        dump_matrix(DirichletLift(tmpl.lhs, tmpl.constrained()).matrix, out / f"lhs{tag}.mtx")
        dump_matrix(tmpl.history, out / f"history{tag}.mtx")


def run_single(cfg, out):
    from .verify import error_norms, level_meshes, solve_level
    case = _case(cfg)
    case.dt, case.T, case.start = cfg.dt, cfg.T, cfg.start
    (k, mesh), = level_meshes([cfg.levels - 1])
    rows = []
    for form in _formulations(cfg):
        tmpl, res = solve_level(case, form, mesh)
        for name in tmpl.names:
            l2, _, h1 = error_norms(res.state[name], case.exact(name), case.T)
            rows.append((form, name, l2, h1))
        if cfg.emit_energy_trace:
            tag = "" if cfg.formulation != "both" else f"-{form}"
            res.write_energy(out / f"energy{tag}.csv")
    csv_text = "formulation,field,L2,H1\n" + "".join(f"{f},{n},{a:.6e},{b:.6e}\n" for f, n, a, b in rows)
    md = (f"## {case.name}: single solve on {4 * 2 ** k}x{4 * 2 ** k} mesh\n\n"
          "| formulation | field | L2 error | H1 error |\n|---|---|---|---|\n"
          + "".join(f"| {f} | {n} | {a:.3e} | {b:.3e} |\n" for f, n, a, b in rows))
    (out / "report.csv").write_text(csv_text)
    (out / "report.md").write_text(md)
    print(md)
    return EXIT_OK


def run_brain(cfg, out):
    from .scenarios import (brain_scenario, compare_formulations, comparison_markdown,
                            cycle_difference, pressure_bound_violations, run_scenario)
    spec = brain_scenario(resolution=cfg.resolution, T=cfg.scenario_T, dt=cfg.scenario_dt)
    results = []
    for form in _formulations(cfg):
        dump = out / f"lhs-{form}.mtx" if cfg.emit_matrices else None
        r = run_scenario(spec, form, matrix_dump=dump)
        results.append(r)
        tag = "" if form == TOTAL_PRESSURE or len(_formulations(cfg)) == 1 else f"-{form}"
        r.run.write_probes(out / f"probes{tag}.csv")
        if cfg.emit_energy_trace:
            r.run.write_energy(out / f"energy{tag}.csv")
    lines = ["# Brain scenario (annulus)", ""]
    csv_rows = ["formulation,cycle,column,min,max,mean"]
    for r in results:
        lines += [f"## {r.formulation}", "",
                  f"steps: {len(r.run.times) - 1}, max relative residual: {max(r.run.residuals):.3e}, "
                  f"max |u| on skull: {r.skull_displacement:.3e}", ""]
        lines += ["| cycle | column | min | max | mean |", "|---|---|---|---|---|"]
        for k, cyc in enumerate(r.cycles):
            for col, (lo, hi, mean) in cyc.items():
                lines.append(f"| {k + 1} | {col} | {lo:.6e} | {hi:.6e} | {mean:.6e} |")
                csv_rows.append(f"{r.formulation},{k + 1},{col},{lo:.6e},{hi:.6e},{mean:.6e}")
        if len(r.cycles) >= 3:
            diffs = cycle_difference(r)
            lines += ["", "cycle 2 vs cycle 3 relative max difference:", ""]
            lines += [f"- {c}: {v:.3e}" for c, v in diffs.items()]
        bad = pressure_bound_violations(r)
        lines += ["", f"pressure bound violations after cycle 1: {len(bad)}", ""]
    if len(results) == 2:
        lines += ["## Formulation comparison", "", comparison_markdown(compare_formulations(results))]
    md = "\n".join(lines) + "\n"
    (out / "report.md").write_text(md)
    (out / "report.csv").write_text("\n".join(csv_rows) + "\n")
    print(md)
    return EXIT_OK


def main(argv=None):
    """Entry point; returns the process exit code."""
    try:
        cfg, args = config_from_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    runner = {"convergence": run_convergence, "single-solve": run_single, "scenario": run_brain}[cfg.mode]
    try:
        return runner(cfg, out)
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
