"""Command-line entry point driven by flat ``key = value`` run files.

Subcommands: ``solve`` (one case), ``bench`` (sweep of an example),
``converge`` (manufactured-solution refinement study), ``dump-mesh``.
Exit status: 0 converged, 2 solver did not reach tolerance (artifacts are
still written), 1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .benchmarks import (CONVERGENCE_COLUMNS, EXAMPLE_DEFAULTS, CaseSpec, convergence_study,
                         run_benchmark, run_case, write_csv)
from .errors import ContractViolation, StochDGError
from .kkt import FORMULATIONS
from .mesh import build_uniform, write_mesh
from .postproc import field_table
from .problems import EXAMPLES
from .sipg import SIGMA_BOUNDARY, SIGMA_INTERIOR
from .solvers import METHODS, SolverConfig

OUTPUT_ENV = "STOCHDG_OUTPUT_DIR"
MAX_LEVEL = 7

log = logging.getLogger("stochdg")


class ConfigError(ContractViolation):
    """Malformed run file; the message carries the line number."""


@dataclass(frozen=True)
class RunSpec:
    example: str = "6.1"
    level: int = 5
    n_terms: int = 3
    order: int = 3
    ell: float = 1.0
    mean: float = 1.0
    kappa: Optional[float] = None
    nu: float = 1.0
    mu: Optional[float] = None
    gamma: Optional[float] = None
    u_a: Optional[float] = None
    u_b: Optional[float] = None
    domain: tuple = (-1.0, 1.0, -1.0, 1.0)
    method: str = "direct"
    tol: float = 5e-3
    trunc: float = 1e-8
    maxit: int = 250
    pdas_max: int = 30
    formulation: str = "verbatim"
    mode_penalty: bool = False
    sigma_interior: float = SIGMA_INTERIOR
    sigma_boundary: float = SIGMA_BOUNDARY
    max_level: int = MAX_LEVEL
    output_dir: str = "stochdg_out"
    csv: str = "report.csv"
    dump_fields: bool = False

    def case(self) -> CaseSpec:
        solver = SolverConfig(tol=self.tol, maxit=self.maxit, trunc=self.trunc, method=self.method,
                              pdas_max=self.pdas_max)
        return CaseSpec(example=self.example, level=self.level, n_terms=self.n_terms,
                        order=self.order, kappa=self.kappa, nu=self.nu, mu=self.mu,
                        gamma=self.gamma, ell=self.ell, mean=self.mean, u_a=self.u_a, u_b=self.u_b,
                        formulation=self.formulation, mode_penalty=self.mode_penalty,
                        sigma_interior=self.sigma_interior, sigma_boundary=self.sigma_boundary,
                        domain=self.domain, solver=solver)


FIELD_TYPES = {f.name: f.type for f in fields(RunSpec)}
# bounds may be infinite; everything else numeric must be finite
INFINITE_OK = {"u_a", "u_b"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(key: str, text: str):
    kind = FIELD_TYPES[key]
    text = text.strip()
    if "bool" in kind:
        return _parse_bool(text)
    if "int" in kind:
        return int(text)
    if "float" in kind:
        if "Optional" in kind and text.lower() in ("none", "default", ""):
            return None
        return float(text)
    if key == "domain":
        parts = [float(p) for p in text.replace(",", " ").split()]
        if len(parts) != 4:
            raise ValueError(f"domain needs 4 numbers x0,x1,y0,y1, got {len(parts)}")
        return tuple(parts)
    return text


def validate(spec: RunSpec) -> RunSpec:
    """Fill example defaults and check every field; returns the resolved spec."""
    if spec.example not in EXAMPLES:
        raise ContractViolation(f"example: unknown id {spec.example!r}; expected one of {EXAMPLES}")
    defaults = EXAMPLE_DEFAULTS[spec.example]
    spec = replace(spec, **{k: v for k, v in defaults.items() if getattr(spec, k) is None})
    for f in fields(RunSpec):
        v = getattr(spec, f.name)
        if isinstance(v, float) and not math.isfinite(v) and f.name not in INFINITE_OK:
            raise ContractViolation(f"{f.name}: must be finite, got {v}")
        if isinstance(v, float) and math.isnan(v):
            raise ContractViolation(f"{f.name}: NaN is not allowed")
    if not all(math.isfinite(v) for v in spec.domain):
        raise ContractViolation(f"domain: must be finite, got {spec.domain}")
    if not spec.mu > 0:
        raise ContractViolation(f"mu: must be > 0, got {spec.mu}")
    if spec.gamma < 0:
        raise ContractViolation(f"gamma: must be >= 0, got {spec.gamma}")
    if spec.u_a > spec.u_b:
        raise ContractViolation(f"u_a: lower bound {spec.u_a} exceeds u_b = {spec.u_b}")
    if not 0 <= spec.level <= spec.max_level:
        raise ContractViolation(f"level: must lie in [0, {spec.max_level}], got {spec.level}")
    if spec.n_terms < 1 or spec.order < 0:
        raise ContractViolation(f"n_terms/order: need n_terms >= 1 and order >= 0, "
                                f"got {spec.n_terms}, {spec.order}")
    if spec.method not in METHODS:
        raise ContractViolation(f"method: must be one of {METHODS}, got {spec.method!r}")
    if spec.formulation not in FORMULATIONS:
        raise ContractViolation(f"formulation: must be one of {FORMULATIONS}, got {spec.formulation!r}")
    for name in ("kappa", "nu", "ell", "tol", "trunc", "sigma_interior", "sigma_boundary"):
        if not getattr(spec, name) > 0:
            raise ContractViolation(f"{name}: must be > 0, got {getattr(spec, name)}")
    if spec.maxit < 1 or spec.pdas_max < 1:
        raise ContractViolation("maxit/pdas_max: must be positive")
    return spec


def parse_pairs(pairs, base: RunSpec | None = None, source: str = "<args>") -> RunSpec:
    """Apply (line number, key, raw value) triples on top of ``base`` without validating."""
    values, seen = {}, {}
    for lineno, key, raw in pairs:
        if key not in FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: key {key!r} already set on line {seen[key]}")
        seen[key] = lineno
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return replace(base or RunSpec(), **values)


def _split_lines(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: missing key before '='")
        yield lineno, key, raw


def parse_spec(text: str, source: str = "<config>") -> RunSpec:
    """Parse a flat run file (``key = value`` per line, ``#`` comments) into a resolved spec."""
    try:
        pairs = list(_split_lines(text))
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return validate(parse_pairs(pairs, source=source))


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def serialize_spec(spec: RunSpec) -> str:
    return "".join(f"{f.name} = {_format(getattr(spec, f.name))}\n"
                   for f in fields(RunSpec) if getattr(spec, f.name) is not None)


def output_dir(spec: RunSpec) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or spec.output_dir)


# ---------------------------------------------------------------- commands

def _prepare(spec: RunSpec) -> Path:
    out = output_dir(spec)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    handler = logging.FileHandler(out / "run.log", mode="a")
    handler.setFormatter(logging.Formatter("%(asctime)s %(message)s"))
    log.addHandler(handler)
    return out


def run(spec: RunSpec) -> int:
    """Single solve; writes the CSV row, the log and optionally the field dump."""
    out = _prepare(spec)
    log.debug("run spec:\n%s", serialize_spec(spec).rstrip())
    res = run_case(spec.case())
    write_csv([res.row()], out / spec.csv)
    rec = res.report.record()
    log.info("solver report: %s", ", ".join(f"{k}={v}" for k, v in rec.items()))
    log.info("cost: J=%.6e tracking=%.6e variance=%.6e control=%.6e peak variance=%.6e",
             res.cost.total, res.cost.tracking, res.cost.variance, res.cost.control,
             res.moments.peak_variance)
    if spec.dump_fields:
        path = out / "fields.txt"
        try:
            np.savetxt(path, field_table(res.system.blocks.mesh, res.Y, res.U),
                       header="x y mean variance control", fmt="%.17g")
        except OSError as exc:
            raise OSError(f"cannot write field dump to {path}: {exc}") from exc
    if not res.report.converged:
        log.warning("solver did not reach tolerance: residual %.3e after %d iterations",
                    res.report.residual, res.report.iterations)
        return 2
    return 0


_BENCH_KEYS = ("level", "n_terms", "order", "ell", "mean", "nu", "kappa", "mu", "gamma", "u_a", "u_b",
               "domain", "formulation", "mode_penalty", "sigma_interior", "sigma_boundary")


def bench(spec: RunSpec, explicit, workers: int = 1) -> int:
    """Sweep of ``spec.example``; only explicitly given keys override the sweep points."""
    out = _prepare(spec)
    overrides = {k: getattr(spec, k) for k in _BENCH_KEYS if k in explicit}
    overrides["solver"] = spec.case().solver
    rows, flags = run_benchmark(spec.example, overrides, workers=workers)
    write_csv(rows, out / spec.csv)
    for r, ok in zip(rows, flags):
        log.info("row: %s converged=%s", ", ".join(f"{k}={v}" for k, v in r.items()), ok)
    return 0 if all(flags) else 2


def converge(spec: RunSpec, levels) -> int:
    out = _prepare(spec)
    rows = convergence_study(levels, nu=spec.nu)
    write_csv(rows, out / spec.csv, columns=CONVERGENCE_COLUMNS)
    for r in rows:
        log.info("level %d: energy error %.4e (rate %s), control L2 error %.4e (rate %s)",
                 r["level"], r["state_energy_error"], r["state_rate"], r["control_l2_error"],
                 r["control_rate"])
    return 0


def dump_mesh(spec: RunSpec, path: Optional[str]) -> int:
    out = _prepare(spec)
    target = Path(path) if path else out / f"mesh_L{spec.level}.txt"
    try:
        write_mesh(build_uniform(spec.domain, spec.level), target)
    except OSError as exc:
        raise OSError(f"cannot write mesh to {target}: {exc}") from exc
    log.info("mesh level %d written to %s", spec.level, target)
    return 0


# ---------------------------------------------------------------- argument handling

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochdg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {
        "solve": sub.add_parser("solve", help="solve one configuration"),
        "bench": sub.add_parser("bench", help="run the parameter sweep of an example"),
        "converge": sub.add_parser("converge", help="mesh-refinement study on manufactured solutions"),
        "dump-mesh": sub.add_parser("dump-mesh", help="write the vertex/triangle listing of a mesh"),
    }
    for name, p in cmds.items():
        p.add_argument("config", nargs="?", help="run file with one 'key = value' per line")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one run-file key (repeatable)")
        for f in fields(RunSpec):
            p.add_argument("--" + f.name.replace("_", "-"), dest="field_" + f.name, metavar="VALUE",
                           help=argparse.SUPPRESS)
        p.add_argument("-v", "--verbose", action="store_true")
    cmds["bench"].add_argument("--workers", type=int, default=1)
    cmds["converge"].add_argument("--levels", type=int, nargs="+", default=[2, 3, 4, 5])
    cmds["dump-mesh"].add_argument("--out", help="output path (default: <output_dir>/mesh_L<level>.txt)")
    return parser


def spec_from_args(args):
    """Run-file keys, then ``--set`` pairs, then per-field flags; returns (spec, explicit keys)."""
    spec, explicit = RunSpec(), set()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise OSError(f"cannot read run file {args.config}: {exc}") from exc
        try:
            pairs = list(_split_lines(text))
        except ConfigError as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        spec = parse_pairs(pairs, spec, source=args.config)
        explicit.update(k for _, k, _ in pairs)
    sets = []
    for i, item in enumerate(args.set, start=1):
        if "=" not in item:
            raise ConfigError(f"--set #{i}: expected KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        sets.append((i, k.strip(), v))
    spec = parse_pairs(sets, spec, source="--set")
    explicit.update(k for _, k, _ in sets)
    flags = [(0, f.name, getattr(args, "field_" + f.name)) for f in fields(RunSpec)
             if getattr(args, "field_" + f.name) is not None]
    spec = parse_pairs(flags, spec, source="flag")
    explicit.update(k for _, k, _ in flags)
    return validate(spec), explicit


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    stream.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    log.handlers[:] = [stream]
    log.setLevel(logging.DEBUG)
    try:
        spec, explicit = spec_from_args(args)
        if args.command == "solve":
            return run(spec)
        if args.command == "bench":
            return bench(spec, explicit, args.workers)
        if args.command == "converge":
            return converge(spec, args.levels)
        return dump_mesh(spec, args.out)
    except (StochDGError, OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    finally:
        for h in log.handlers[:]:
            h.close()
        log.handlers[:] = []


if __name__ == "__main__":
    sys.exit(main())
