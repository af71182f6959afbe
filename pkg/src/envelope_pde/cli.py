"""Batch front end: ``envelope-pde <config> [--out DIR] [--seed N] [--quiet]``.

The config is a plain ``key = value`` file with ``#`` comments.  Every run
writes ``summary.txt`` in the output directory, including failed runs.

Exit codes: 0 success, 2 parse error, 3 non-convergence, 4 IO error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .envelope_solver import (Init, SolutionField, SolverConfig, Sweep, refinement_tol,
                              residual_field, solve_dirichlet, solve_obstacle,
                              write_field_csv, write_residuals_csv)
from .problem import (BoundaryDatum, BoundaryProblem, ConfigError, Domain, build_grid,
                      random_trig_datum, read_samples_csv, sample_boundary, write_samples_csv)
from .stencil import MAX_WIDTH, make_directions

logger = logging.getLogger("envelope_pde")

EXIT_OK, EXIT_ERROR, EXIT_PARSE, EXIT_NOCONV, EXIT_IO = 0, 1, 2, 3, 4

COMMANDS = ("solve", "obstacle", "oracle-compare", "pucci-sweep", "mc-value", "analyze",
            "convergence-study")


class ParseError(ConfigError):
    def __init__(self, key: str, line: int | None, msg: str):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{key}: {msg}")
        self.key = key
        self.line = line


class NonConvergence(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str
    domain: Domain
    datum: BoundaryDatum | None
    n: int = 65
    width: int = 2
    tol: float = 1e-8
    max_iter: int = 100_000
    sweep: Sweep = Sweep.GAUSS_SEIDEL
    init: Init = Init.CONSTANT_MIN_G
    m: int = 256
    obstacle: str | None = None
    gamma: float = 1.0
    gammas: tuple[float, ...] = (1.0, 4.0, 16.0, 64.0, 256.0)
    x0: tuple[float, float] = (0.0, 0.0)
    dt: float = 1e-4
    n_paths: int = 10_000
    policy: tuple[str, ...] = ("feedback",)
    alpha: float = 0.8
    n_pairs: int = 100_000
    regions: tuple[tuple[float, float, float], ...] = ((0.0, 0.0, 0.5),)
    ladder: tuple[int, ...] = (33, 65, 129, 257)
    tol_mode: str = "refine"
    seed: int = 0
    raw: dict[str, str] = field(default_factory=dict)

    def solver_config(self, tol: float | None = None) -> SolverConfig:
        return SolverConfig(tol=self.tol if tol is None else tol, max_iter=self.max_iter,
                            sweep=self.sweep, init=self.init)

    @property
    def problem(self) -> BoundaryProblem:
        return BoundaryProblem(self.domain, self.datum)


# -- value parsers ----------------------------------------------------------

def _floats(s: str, count: int | None = None) -> list[float]:
    vals = [float(t) for t in s.replace(",", " ").split()]
    if count is not None and len(vals) != count:
        raise ValueError(f"expected {count} numbers")
    return vals


def _int_range(lo: int, hi: int | None = None):
    def parse(s):
        v = int(s)
        if v < lo or (hi is not None and v > hi):
            raise ValueError("out of range" + (f" [{lo}, {hi}]" if hi else f" (>= {lo})"))
        return v
    return parse


def _positive(s):
    v = float(s)
    if not (v > 0 and math.isfinite(v)):
        raise ValueError("out of range (must be positive)")
    return v


def _alpha(s):
    v = float(s)
    if not 0 < v <= 1:
        raise ValueError("out of range (0, 1]")
    return v


def _domain(s):
    parts = s.split()
    if not parts or parts[0] not in ("square", "disk"):
        raise ValueError("expected 'square R [cx cy]' or 'disk R [cx cy]'")
    nums = _floats(" ".join(parts[1:]))
    if len(nums) not in (1, 3):
        raise ValueError("expected a size and optionally a center")
    center = tuple(nums[1:]) if len(nums) == 3 else (0.0, 0.0)
    if not nums[0] > 0:
        raise ValueError("out of range (size must be positive)")
    ctor = Domain.square if parts[0] == "square" else Domain.disk
    return ctor(nums[0], center)


def _choice(options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


def _policies(s):
    out = []
    for item in s.split(";"):
        item = item.strip()
        if item == "feedback":
            out.append(item)
        elif item.startswith("fixed"):
            v = _floats(item[5:], 2)
            if v[0] == 0 and v[1] == 0:
                raise ValueError("fixed direction must be nonzero")
            out.append(item)
        else:
            raise ValueError("policies are 'feedback' or 'fixed a b', separated by ';'")
    return tuple(out)


def _regions(s):
    out = []
    for item in s.split(";"):
        v = _floats(item, 3)
        if not v[2] > 0:
            raise ValueError("out of range (radius must be positive)")
        out.append(tuple(v))
    return tuple(out)


def _gammas(s):
    v = tuple(_floats(s))
    if not v or any(g <= 0 for g in v):
        raise ValueError("out of range (need positive values)")
    if any(b <= a for a, b in zip(v, v[1:])):
        raise ValueError("must be strictly increasing")
    return v


def _ladder(s):
    v = tuple(int(t) for t in s.split())
    if not v or any(k < 5 or k > 4097 for k in v):
        raise ValueError("out of range [5, 4097]")
    return v


_PARSERS: dict[str, Callable] = {
    "command": _choice(COMMANDS),
    "domain": _domain,
    "datum": str,
    "n": _int_range(5, 4097),
    "width": _int_range(1, MAX_WIDTH),
    "tol": _positive,
    "max_iter": _int_range(1),
    "sweep": lambda s: Sweep(_choice([e.value for e in Sweep])(s)),
    "init": lambda s: Init(_choice([e.value for e in Init])(s)),
    "m": _int_range(4, 100_000),
    "obstacle": str,
    "gamma": _positive,
    "gammas": _gammas,
    "x0": lambda s: tuple(_floats(s, 2)),
    "dt": _positive,
    "n_paths": _int_range(2),
    "policy": _policies,
    "alpha": _alpha,
    "n_pairs": _int_range(1),
    "regions": _regions,
    "ladder": _ladder,
    "tol_mode": _choice(("refine", "fixed")),
    "seed": _int_range(0),
}


def _datum(s: str, domain: Domain, m: int, base: Path) -> BoundaryDatum:
    parts = s.split()
    kind, args = parts[0], parts[1:]
    if kind in ("saddle", "absx") and not args:
        return getattr(BoundaryDatum, kind)()
    if kind == "powercone" and len(args) == 1:
        return BoundaryDatum.powercone(float(args[0]))
    if kind == "affine" and len(args) == 3:
        a1, a2, b = map(float, args)
        return BoundaryDatum.affine((a1, a2), b)
    if kind == "constant" and len(args) == 1:
        return BoundaryDatum.constant(float(args[0]))
    if kind == "samples" and len(args) == 1:
        return read_samples_csv(base / args[0], domain)
    if kind == "trig" and len(args) in (1, 2):
        modes = int(args[1]) if len(args) == 2 else 4
        return random_trig_datum(domain, m, int(args[0]), modes)
    raise ValueError("expected saddle, absx, powercone EPS, affine A1 A2 B, constant C, "
                     "samples PATH or trig SEED [MODES]")


def _obstacle_fn(s: str) -> Callable:
    parts = s.split()
    if parts == ["paraboloid"]:
        return lambda p: p[..., 0] ** 2 + p[..., 1] ** 2
    if parts == ["doublewell"]:
        return lambda p: np.minimum((p[..., 0] - 0.5) ** 2, (p[..., 0] + 0.5) ** 2) + p[..., 1] ** 2
    if parts == ["saddle"]:
        return lambda p: p[..., 0] ** 2 - p[..., 1] ** 2
    if parts and parts[0] == "affine" and len(parts) == 4:
        a1, a2, b = map(float, parts[1:])
        return lambda p: a1 * p[..., 0] + a2 * p[..., 1] + b
    raise ValueError("expected paraboloid, doublewell, saddle or affine A1 A2 B")


def parse_config(text: str, base_dir: str | Path = ".") -> RunConfig:
    """Parse and validate a ``key = value`` run configuration."""
    seen: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(line.split()[0], lineno, "expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in _PARSERS:
            raise ParseError(key, lineno, "unknown key")
        if key in seen:
            raise ParseError(key, lineno, f"duplicate key (first on line {seen[key][1]})")
        if not value:
            raise ParseError(key, lineno, "empty value")
        seen[key] = (value, lineno)

    def get(key):
        value, lineno = seen[key]
        try:
            return _PARSERS[key](value)
        except (ValueError, ConfigError) as exc:
            raise ParseError(key, lineno, f"{key} {exc}" if str(exc).startswith("out of range")
                             else str(exc)) from None

    required = ["command", "domain"]
    for key in required:
        if key not in seen:
            raise ParseError(key, None, "missing required key")
    command = get("command")
    if command == "obstacle":
        if "obstacle" not in seen:
            raise ParseError("obstacle", None, "missing required key")
    elif "datum" not in seen:
        raise ParseError("datum", None, "missing required key")
    kw = {k: get(k) for k in seen if k not in ("command", "domain", "datum", "obstacle")}
    domain = get("domain")
    m = kw.get("m", 256)
    datum = None
    if "datum" in seen:
        value, lineno = seen["datum"]
        try:
            datum = _datum(value, domain, m, Path(base_dir))
        except OSError as exc:
            raise ParseError("datum", lineno, f"cannot read samples: {exc}") from None
        except (ValueError, ConfigError) as exc:
            raise ParseError("datum", lineno, str(exc)) from None
    if "obstacle" in seen:
        value, lineno = seen["obstacle"]
        try:
            _obstacle_fn(value)
        except ValueError as exc:
            raise ParseError("obstacle", lineno, str(exc)) from None
        kw["obstacle"] = value
    if kw.get("init") is Init.OBSTACLE and command != "obstacle":
        raise ParseError("init", seen["init"][1], "init 'obstacle' applies to the obstacle command only")
    cfg = RunConfig(command=command, domain=domain, datum=datum,
                    raw={k: v for k, (v, _) in sorted(seen.items())}, **kw)
    if not bool(domain.is_interior(np.asarray(cfg.x0))) and command == "mc-value":
        raise ParseError("x0", seen.get("x0", ("", None))[1], "start point must be interior")
    return cfg


# -- commands ---------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        return f"{float(v):.17g}"
    return str(v)


def _sup_error(field: SolutionField, ref: Callable, mask=None) -> float:
    grid = field.grid
    exact = grid.sample(ref)
    sel = grid.interior if mask is None else grid.interior & mask
    return float(np.nanmax(np.abs(field.values - exact)[sel]))


def _check(field: SolutionField, what: str):
    if not field.converged:
        raise NonConvergence(f"{what}: no convergence after {field.iterations} sweeps "
                             f"(update {field.final_residual:.3e} > tol {field.tol:.3e})")


def _solve(cfg: RunConfig, n: int | None = None, tol: float | None = None) -> SolutionField:
    grid = build_grid(cfg.domain, n or cfg.n)
    return solve_dirichlet(cfg.problem, grid, make_directions(cfg.width), cfg.solver_config(tol))


def _solve_fields(cfg, out, metrics, f: SolutionField):
    write_field_csv(out / "field.csv", f)
    write_residuals_csv(out / "residuals.csv", f)
    metrics["iterations"] = f.iterations
    metrics["final_residual"] = f.final_residual
    metrics["converged"] = f.converged


def cmd_solve(cfg: RunConfig, out: Path, metrics: dict):
    f = _solve(cfg)
    _solve_fields(cfg, out, metrics, f)
    metrics["u_min"] = float(np.nanmin(f.values))
    metrics["u_max"] = float(np.nanmax(f.values))
    metrics["residual_sup"] = float(np.nanmax(np.abs(residual_field(f))))
    ref = cfg.problem.reference()
    if ref is not None:
        metrics["sup_error"] = _sup_error(f, ref)
    _check(f, "solve")


def cmd_obstacle(cfg: RunConfig, out: Path, metrics: dict):
    obs = _obstacle_fn(cfg.obstacle)
    grid = build_grid(cfg.domain, cfg.n)
    scfg = cfg.solver_config()
    if "init" not in cfg.raw:
        scfg = SolverConfig(scfg.tol, scfg.max_iter, scfg.sweep, Init.OBSTACLE)
    f = solve_obstacle(obs, grid, make_directions(cfg.width), scfg)
    _solve_fields(cfg, out, metrics, f)
    metrics["max_u_minus_obstacle"] = float(np.nanmax(f.values - grid.sample(obs)))
    if cfg.obstacle.split()[0] in ("paraboloid", "affine"):
        metrics["sup_error"] = _sup_error(f, obs)
    _check(f, "obstacle")


def cmd_oracle_compare(cfg: RunConfig, out: Path, metrics: dict):
    from .oracle import LowerHull, envelope_grid, write_witness_csv

    f = _solve(cfg)
    _solve_fields(cfg, out, metrics, f)
    trace = sample_boundary(cfg.domain, cfg.datum, cfg.m)
    write_samples_csv(out / "samples.csv", trace)
    orc = envelope_grid(f.grid, trace)
    write_field_csv(out / "oracle.csv", orc)
    write_witness_csv(out / "witness.csv", f.grid, LowerHull.build(trace))
    diff = np.abs(f.values - orc.values)[f.grid.interior]
    metrics["oracle_nodes_outside_hull"] = int(np.isnan(diff).sum())
    metrics["sup_solver_minus_oracle"] = float(np.nanmax(diff))
    _check(f, "solve")


def cmd_pucci_sweep(cfg: RunConfig, out: Path, metrics: dict):
    from .pucci import ratio_sweep, write_sweep_csv

    grid = build_grid(cfg.domain, cfg.n)
    rows, fs = ratio_sweep(cfg.problem, grid, make_directions(cfg.width), cfg.gamma,
                           list(cfg.gammas), cfg.solver_config(), return_fields=True)
    write_sweep_csv(out / "sweep.csv", rows)
    d = [r[1] for r in rows]
    metrics["final_distance"] = d[-1]
    metrics["strictly_decreasing"] = all(b < a for a, b in zip(d, d[1:]))
    metrics["iterations"] = " ".join(str(f.iterations) for f in fs)
    for f, r in zip(fs, rows):
        _check(f, f"pucci ratio {r[0]:g}")


def cmd_mc_value(cfg: RunConfig, out: Path, metrics: dict):
    from .control_sim import ControlPolicy, estimate_value, policy_from_solution, write_estimate_csv

    f = _solve(cfg)
    _check(f, "solve")
    metrics["iterations"] = f.iterations
    i, j = f.grid.nearest_node(cfg.x0)
    metrics["u_at_nearest_node"] = float(f.values[i, j])
    rows = []
    for k, spec in enumerate(cfg.policy):
        if spec == "feedback":
            pol = policy_from_solution(f)
        else:
            pol = ControlPolicy.fixed(_floats(spec[5:], 2))
        est = estimate_value(cfg.x0, pol, cfg.dt, cfg.n_paths, cfg.domain, cfg.datum,
                             cfg.seed + k * cfg.n_paths)
        rows.append((cfg.x0, pol.label, est, cfg.dt))
        metrics[f"mean[{pol.label}]"] = est.mean
        metrics[f"stderr[{pol.label}]"] = est.stderr
    write_estimate_csv(out / "estimate.csv", rows)


def cmd_analyze(cfg: RunConfig, out: Path, metrics: dict):
    from .analysis import (Region, boundary_gap, contact_fractions, contact_scan, gradient_field,
                           holder_quotient, ma_residual, write_contact_csv, write_holder_txt)

    f = _solve(cfg)
    _solve_fields(cfg, out, metrics, f)
    reports = contact_scan(f, cfg.datum)
    write_contact_csv(out / "contact.csv", reports)
    flat, hit = contact_fractions(reports, f.grid)
    metrics["flat_fraction_core"] = flat
    metrics["segment_hit_fraction_core"] = hit
    gap, where = boundary_gap(f)
    metrics["boundary_gap"] = gap
    metrics["boundary_gap_at"] = f"{where[0]:.17g} {where[1]:.17g}"
    gf = gradient_field(f)
    hold = []
    for cx, cy, r in cfg.regions:
        reg = Region.ball((cx, cy), r, closed=True)
        try:
            rep = holder_quotient(f, region=reg, alpha=cfg.alpha, n_pairs=cfg.n_pairs,
                                  seed=cfg.seed, gradient=gf)
        except ValueError as exc:
            metrics[f"holder[{reg.label}]"] = f"error: {exc}"
            continue
        hold.append(rep)
        metrics[f"holder[{reg.label}]"] = rep.sup_quotient
        ma = ma_residual(f)[reg(f.grid.coords())]
        if np.any(np.isfinite(ma)):
            metrics[f"ma_residual_sup[{reg.label}]"] = float(np.nanmax(np.abs(ma)))
    write_holder_txt(out / "holder.txt", hold)
    _check(f, "solve")


def cmd_convergence_study(cfg: RunConfig, out: Path, metrics: dict):
    ref = cfg.problem.reference()
    lines = ["n,h,tol,iterations,sup_error,rate"]
    prev = None
    failed = []
    for n in cfg.ladder:
        grid = build_grid(cfg.domain, n)
        tol = refinement_tol(grid.h) if cfg.tol_mode == "refine" else cfg.tol
        f = _solve(cfg, n, tol)
        if ref is not None:
            err = _sup_error(f, ref)
        else:
            from .oracle import envelope_grid
            orc = envelope_grid(grid, sample_boundary(cfg.domain, cfg.datum, cfg.m))
            err = float(np.nanmax(np.abs(f.values - orc.values)[grid.interior]))
        rate = math.log2(prev / err) if prev and err > 0 else math.nan
        lines.append(f"{n},{grid.h:.17g},{tol:.17g},{f.iterations},{err:.17g},"
                     f"{'' if math.isnan(rate) else f'{rate:.17g}'}")
        metrics[f"sup_error[n={n}]"] = err
        prev = err
        if not f.converged:
            failed.append(n)
    metrics["reference"] = "closed form" if ref is not None else f"oracle m={cfg.m}"
    with open(out / "convergence.csv", "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    if failed:
        raise NonConvergence(f"no convergence at n = {' '.join(map(str, failed))}")


_COMMANDS = {
    "solve": cmd_solve,
    "obstacle": cmd_obstacle,
    "oracle-compare": cmd_oracle_compare,
    "pucci-sweep": cmd_pucci_sweep,
    "mc-value": cmd_mc_value,
    "analyze": cmd_analyze,
    "convergence-study": cmd_convergence_study,
}


def _write_summary(out: Path, cfg: RunConfig | None, metrics: dict, status: str,
                   error: str | None) -> None:
    lines = [f"status = {status}"]
    if cfg is not None:
        lines.append(f"command = {cfg.command}")
        for f_ in fields(cfg):
            if f_.name in ("command", "raw"):
                continue
            v = getattr(cfg, f_.name)
            if f_.name == "datum":
                v = "none" if v is None else v.label
            elif f_.name == "domain":
                v = f"{v.shape.value} {v.size:g} {v.center[0]:g} {v.center[1]:g}"
            elif hasattr(v, "value"):
                v = v.value
            elif isinstance(v, tuple):
                v = "; ".join(" ".join(_fmt(t) for t in x) if isinstance(x, tuple) else _fmt(x)
                              for x in v)
            lines.append(f"{f_.name} = {_fmt(v)}")
    for k, v in metrics.items():
        lines.append(f"{k} = {_fmt(v)}")
    if error:
        lines.append(f"error = {error}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def run(cfg: RunConfig, out: str | Path) -> int:
    """Execute a parsed config, writing artifacts to ``out``; returns the exit code."""
    out = Path(out)
    metrics: dict = {}
    status, code, error = "ok", EXIT_OK, None
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        logger.error("cannot create output directory: %s", exc)
        return EXIT_IO
    try:
        _COMMANDS[cfg.command](cfg, out, metrics)
    except NonConvergence as exc:
        status, code, error = "not converged", EXIT_NOCONV, str(exc)
    except OSError as exc:
        status, code, error = "io error", EXIT_IO, str(exc)
    except Exception as exc:  # recorded in the summary, never swallowed silently
        from .control_sim import SimulationError
        code = EXIT_NOCONV if isinstance(exc, SimulationError) else EXIT_ERROR
        status, error = "failed", f"{type(exc).__name__}: {exc}"
    try:
        _write_summary(out, cfg, metrics, status, error)
    except OSError as exc:
        logger.error("cannot write summary: %s", exc)
        return EXIT_IO
    if error:
        logger.error(error)
    for k, v in metrics.items():
        logger.info("%s = %s", k, _fmt(v))
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="envelope-pde", description=__doc__.splitlines()[0])
    ap.add_argument("config", help="key = value run configuration")
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--quiet", action="store_true", help="only report errors")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    out = Path(args.out)
    try:
        path = Path(args.config)
        text = path.read_text(encoding="utf-8")
        cfg = parse_config(text, base_dir=path.parent)
        if args.seed is not None:
            if args.seed < 0:
                raise ParseError("seed", None, "seed out of range (>= 0)")
            cfg.seed = args.seed
    except (OSError, UnicodeDecodeError) as exc:
        logger.error("cannot read config: %s", exc)
        _try_summary(out, "io error", f"cannot read config: {exc}")
        return EXIT_IO
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        _try_summary(out, "parse error", str(exc))
        return EXIT_PARSE
    return run(cfg, out)


def _try_summary(out: Path, status: str, error: str) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_summary(out, None, {}, status, error)
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
