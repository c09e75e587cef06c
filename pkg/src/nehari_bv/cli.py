"""Batch front end: ``nehari-bv run`` and ``nehari-bv audit``.

A run is described by one INI file::

    [problem]
    functional = one_laplacian      ; or mean_curvature
    nonlinearity = power            ; or power_sum (then also q, c1, c2)
    p = 1.5
    lambda = 1.0                    ; mean curvature only; "auto" halves from 1
    flavor = isotropic

    [grid]
    nx = 32
    ny = 32                         ; h defaults to 1 / max(nx, ny)

    [solver]
    restarts = 16
    seed = 0

    [run]
    commands = solve, certify       ; subset of audit, solve, certify, continuation
    continuation_p = 2.0, 1.8, 1.6

    [output]
    dir = out

Exit codes: 0 success, 2 invalid configuration, 3 solver or audit failure.
The environment variable ``NEHARI_BV_OUT`` overrides the output directory
(and is itself overridden by ``--out``).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import difflib
import json
import math
import os
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bv_calculus import DiscreteDomain, TvFlavor
from .errors import AuditFailed, ConfigError, NehariError
from .fibering import Functional, ProblemSpec
from .ground_state import SolverConfig, p_continuation, select_lambda, solve
from .io import field_from_csv, field_to_csv, field_to_pgm, flux_to_csv, write_atomic
from .nonlinearity import Power, PowerSum, audit
from .verification import certify

OUT_ENV = "NEHARI_BV_OUT"
COMMAND_ORDER = ("audit", "solve", "certify", "continuation")
EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 2, 3

_SOLVER_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}
_SCHEMA = {
    "problem": {"functional", "nonlinearity", "p", "q", "c1", "c2", "lambda", "flavor"},
    "grid": {"nx", "ny", "h"},
    "solver": set(_SOLVER_FIELDS),
    "run": {"commands", "continuation_p", "field"},
    "output": {"dir"},
}


@dataclass(frozen=True)
class RunConfig:
    spec: ProblemSpec
    solver: SolverConfig
    commands: tuple[str, ...]
    output_dir: Path
    lambda_auto: bool = False
    continuation_p: tuple[float, ...] = (2.0, 1.8, 1.6)
    field_path: Path | None = None
    echo: dict = field(default_factory=dict, compare=False)


# ----------------------------------------------------------------------
# parsing
def _locate(text: str) -> dict:
    """``(section, key) -> (line, column of the value)``, 1-based."""
    where, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"(\s*)([^=:;#\s][^=:]*?)\s*[=:]\s*", line)
        if m and section is not None:
            where[(section, m.group(2).strip().lower())] = (n, m.end() + 1)
    return where


def _suggest(word: str, options) -> str:
    close = difflib.get_close_matches(word, sorted(options), n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.replace(",", " ").split())


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    """Validate an INI run description and fill in defaults.

    Raises :class:`ConfigError` naming the offending field, with the line
    (and column where known) of the problem.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [section] header before the first key", line=exc.lineno, column=1) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]",
                          field=f"{exc.section}.{exc.option}", line=exc.lineno, column=1) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", field=exc.section, line=exc.lineno, column=1) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0] if exc.errors else (None, "")
        col = len(line) - len(str(line).lstrip()) + 1 if line else None
        raise ConfigError(f"cannot parse line {str(line).strip()!r}", line=lineno, column=col) from None

    where = _locate(text)

    def fail(section, key, message):
        line, col = where.get((section, key), (None, None))
        raise ConfigError(message, field=f"{section}.{key}", line=line, column=col)

    for section in parser.sections():
        if section not in _SCHEMA:
            line = next((n for n, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{section}]"), None)
            raise ConfigError(f"unknown section [{section}]" + _suggest(section, _SCHEMA),
                              field=section, line=line, column=1)
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                fail(section, key, f"unknown key {key!r} in [{section}]" + _suggest(key, _SCHEMA[section]))
    for required in ("problem", "grid"):
        if not parser.has_section(required):
            raise ConfigError(f"missing section [{required}]", field=required)

    def get(section, key, conv, default=None, required=False):
        if not parser.has_option(section, key):
            if required:
                raise ConfigError(f"missing required key {key!r} in [{section}]", field=f"{section}.{key}")
            return default
        raw = parser.get(section, key)
        try:
            return conv(raw)
        except ValueError:
            fail(section, key, f"{section}.{key}: cannot read {raw!r} as {getattr(conv, '__name__', 'value')}")

    prob = parser["problem"]
    functional = get("problem", "functional", str, "one_laplacian")
    try:
        functional = Functional(functional)
    except ValueError:
        fail("problem", "functional", f"functional must be one of {[f.value for f in Functional]}"
             + _suggest(functional, [f.value for f in Functional]))
    kind = get("problem", "nonlinearity", str, "power")
    p = get("problem", "p", float, required=True)

    def check_exponent(name, value):
        if not 1.0 < value < 2.0:
            fail("problem", name, f"{name} must lie in (1, 2) for N = 2, got {value}")

    check_exponent("p", p)
    if kind == "power":
        for extra in ("q", "c1", "c2"):
            if extra in prob:
                fail("problem", extra, f"{extra!r} only applies to nonlinearity = power_sum")
        nl = Power(p)
    elif kind == "power_sum":
        q = get("problem", "q", float, required=True)
        check_exponent("q", q)
        c1, c2 = get("problem", "c1", float, 1.0), get("problem", "c2", float, 1.0)
        for name, c in (("c1", c1), ("c2", c2)):
            if not c > 0:
                fail("problem", name, f"{name} must be positive, got {c}")
        try:
            nl = PowerSum(p, q, c1, c2)
        except ValueError as exc:
            fail("problem", "q", str(exc))
    else:
        fail("problem", "nonlinearity", f"nonlinearity must be 'power' or 'power_sum', got {kind!r}")

    flavor = get("problem", "flavor", str, "isotropic")
    try:
        flavor = TvFlavor(flavor)
    except ValueError:
        fail("problem", "flavor", f"flavor must be 'isotropic' or 'anisotropic', got {flavor!r}")

    raw_lam = get("problem", "lambda", str, "1.0").strip().lower()
    lambda_auto = raw_lam == "auto"
    if lambda_auto and functional is not Functional.MEAN_CURVATURE:
        fail("problem", "lambda", "lambda = auto only applies to the mean curvature problem")
    lam = 1.0 if lambda_auto else get("problem", "lambda", float, 1.0)
    if not (math.isfinite(lam) and lam > 0):
        fail("problem", "lambda", f"lambda must be positive, got {lam}")
    if functional is Functional.ONE_LAPLACIAN and lam != 1.0:
        fail("problem", "lambda", "the 1-Laplacian problem has no lambda; leave it at 1")
    if functional is Functional.MEAN_CURVATURE and flavor is not TvFlavor.ISOTROPIC:
        fail("problem", "flavor", "the mean curvature problem uses the isotropic gradient")

    nx = get("grid", "nx", int, required=True)
    ny = get("grid", "ny", int, nx)
    for name, n in (("nx", nx), ("ny", ny)):
        if n < 1:
            fail("grid", name, f"{name} must be at least 1, got {n}")
    h = get("grid", "h", float, 1.0 / max(nx, ny))
    if not (math.isfinite(h) and h > 0):
        fail("grid", "h", f"h must be positive, got {h}")
    spec = ProblemSpec(functional, nl, DiscreteDomain(nx, ny, h), flavor, lam)

    solver_kw = {}
    for key in parser["solver"] if parser.has_section("solver") else ():
        default = _SOLVER_FIELDS[key].default
        if isinstance(default, bool):
            solver_kw[key] = get("solver", key, lambda s: parser.BOOLEAN_STATES[s.strip().lower()]
                                 if s.strip().lower() in parser.BOOLEAN_STATES else _bad_bool(s))
        elif isinstance(default, int):
            solver_kw[key] = get("solver", key, int)
        elif isinstance(default, tuple):
            solver_kw[key] = get("solver", key, _floats)
        else:
            solver_kw[key] = get("solver", key, float)
    try:
        solver = SolverConfig(**solver_kw)
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}", field="solver") from None

    raw_cmds = get("run", "commands", str, "solve")
    commands = [c.strip() for c in raw_cmds.replace(",", " ").split() if c.strip()]
    for c in commands:
        if c not in COMMAND_ORDER:
            fail("run", "commands", f"unknown command {c!r}" + _suggest(c, COMMAND_ORDER))
    if not commands:
        fail("run", "commands", "no commands given")
    commands = tuple(c for c in COMMAND_ORDER if c in commands)
    cont = get("run", "continuation_p", _floats, (2.0, 1.8, 1.6))
    field_path = get("run", "field", str)
    if field_path is not None:
        field_path = Path(field_path)
        if base_dir is not None and not field_path.is_absolute():
            field_path = base_dir / field_path
    needs_field = ("certify" in commands or "continuation" in commands) and "solve" not in commands
    if needs_field and field_path is None and "certify" in commands:
        raise ConfigError("certify needs a field: add solve to the commands or set run.field",
                          field="run.commands")
    if "continuation" in commands:
        if any(b >= a for a, b in zip(cont, cont[1:])) or any(not 1.0 < x <= 2.0 for x in cont):
            fail("run", "continuation_p", "continuation_p must decrease strictly inside (1, 2]")

    out = Path(get("output", "dir", str, "out") if parser.has_section("output") else "out")
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out

    echo = {
        "problem": spec.to_dict() | {"lambda": "auto" if lambda_auto else lam},
        "solver": solver.to_dict(),
        "run": {"commands": list(commands), "continuation_p": list(cont),
                "field": None if field_path is None else str(field_path)},
    }
    return RunConfig(spec, solver, commands, out, lambda_auto, tuple(cont), field_path, echo)


def _bad_bool(s):
    raise ValueError(f"not a boolean: {s!r}")


# ----------------------------------------------------------------------
# running
def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


@dataclass
class RunManifest:
    config: dict
    seed: int
    version: str = __version__
    status: str = "ok"
    wall_time: float = 0.0
    commands: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def run(cfg: RunConfig) -> RunManifest:
    """Execute the configured commands and persist everything under ``cfg.output_dir``.

    Files are written through temporary files and renamed into place, so a
    failing command leaves earlier outputs intact.  The manifest is written
    last and always, with ``status = "failed"`` if a command raised.
    """
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(config=cfg.echo, seed=cfg.solver.seed)
    spec = cfg.spec
    u = None

    def emit(name, data):
        man.files[name] = {"sha256": write_atomic(out / name, data)}

    current = None
    try:
        for current in cfg.commands:
            if current == "audit":
                rep = audit(spec.nl)
                man.commands["audit"] = rep.to_dict()
                if not rep.passed:
                    raise AuditFailed(f"nonlinearity fails {', '.join(rep.failures())}", rep)
            elif current == "solve":
                if cfg.lambda_auto:
                    choice = select_lambda(spec)
                    spec = spec.with_lambda(choice.lam)
                    man.commands["select_lambda"] = {"lambda": choice.lam, "halvings": choice.halvings}
                res = solve(spec, cfg.solver)
                u = res.u_star
                summary = res.summary()
                summary.pop("certificate")
                man.commands["solve"] = summary
                emit("field.csv", field_to_csv(u.values))
                emit("field.pgm", field_to_pgm(u.values))
                rows = ["restart,stage,eps,iteration,psi"]
                rows += [f"{r.restart},{r.stage},{r.eps!r},{r.iteration},{r.psi!r}" for r in res.trace]
                emit("trace.csv", "\n".join(rows) + "\n")
                cert = res.certificate
            elif current == "certify":
                if u is None:
                    u = field_from_csv(cfg.field_path.read_text(), spec.domain)
                    cert = certify(spec, u, n_probes=cfg.solver.n_probes, seed=cfg.solver.seed)
                man.commands["certify"] = cert.to_dict()
                emit("certificate.json", _dump(cert.to_dict()))
                if cert.flux is not None:
                    zx, zy = flux_to_csv(cert.flux.zx, cert.flux.zy)
                    emit("flux_x.csv", zx)
                    emit("flux_y.csv", zy)
            elif current == "continuation":
                points = p_continuation(spec, cfg.continuation_p, cfg.solver,
                                        reference_energy=man.commands.get("solve", {}).get("energy"))
                man.commands["continuation"] = [pt.to_dict() for pt in points]
    except NehariError as exc:
        man.status = "failed"
        man.error = f"{current}: {type(exc).__name__}: {exc}"
        raise
    finally:
        man.wall_time = time.perf_counter() - t0
        write_atomic(out / "manifest.json", _dump(man.to_dict()))
    return man


# ----------------------------------------------------------------------
def _load(path: str, out: str | None, seed: int | None, audit_only: bool = False) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    cfg = parse_config(text, base_dir=p.parent)
    override = out or os.environ.get(OUT_ENV)
    changes = {}
    if override:
        changes["output_dir"] = Path(override)
    if seed is not None:
        try:
            solver = dataclasses.replace(cfg.solver, seed=seed)
        except ValueError as exc:
            raise ConfigError(str(exc), field="--seed") from None
        echo = dict(cfg.echo, solver=solver.to_dict())
        changes.update(solver=solver, echo=echo)
    if audit_only:
        changes["commands"] = ("audit",)
        changes["echo"] = dict(changes.get("echo", cfg.echo), run=dict(cfg.echo["run"], commands=["audit"]))
    return dataclasses.replace(cfg, **changes) if changes else cfg


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nehari-bv", description="Nehari-set ground states on a grid.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run the commands listed in a config file")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides the config and $%s)" % OUT_ENV)
    r.add_argument("--seed", type=int, help="override solver.seed")
    a = sub.add_parser("audit", help="audit the nonlinearity of a config file")
    a.add_argument("config")
    a.add_argument("--out")
    args = ap.parse_args(argv)
    try:
        cfg = _load(args.config, args.out, getattr(args, "seed", None), audit_only=args.cmd == "audit")
    except ConfigError as exc:
        print(f"nehari-bv: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        man = run(cfg)
    except NehariError as exc:
        print(f"nehari-bv: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"nehari-bv: {man.status}; outputs in {cfg.output_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
