"""Command line front end: ``study``, ``solve`` and ``check``.

Configuration is a flat ``key = value`` file (``--config FILE``) and/or
``--key value`` flags; flags override the file. Unknown keys are errors.

Exit codes: 0 success, 1 failed property check, 2 configuration error,
3 solver nonconvergence, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import MESH_PATTERNS, _atomic_write_text, generate_square_mesh, read_mesh, red_refine
from .system import Model, NewtonOptions, NonConvergenceError, SolverError
from .verification import (
    ErrorRecord,
    StudyConfig,
    StudyError,
    StudyReport,
    make_manufactured,
)

log = logging.getLogger("ldgpflow")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4

TABLE_HEADER = "level,h,ndof_v,ndof_q,e_L,eoc_L,e_S,eoc_S,e_jump,eoc_jump,e_q,eoc_q,newton_iters"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    p: float = 2.5
    rho: float = 0.1
    delta: float = 1e-4
    alpha: float = 2.5
    k: int = 1
    model: str = "PNavierStokes"
    n0: int = 4
    levels: int = 5
    level: int | None = None
    quad_degree: int | None = None
    penalty_shift: str = "none"
    mesh_pattern: str = "uniform"
    warm_start: bool = True
    newton_tau_abs: float = 1e-8
    newton_tau_rel: float = 1e-10
    newton_max_iter: int = 50
    line_search: bool = False
    mesh: str | None = None
    output: str = "eoc.csv"
    vtk: str = "solution.vtk"
    seed: int = 0
    # extra (p, rho) pairs for a table sweep, e.g. "2.5:0.1,3.0:0.1"
    grid: str | None = None

    def newton(self) -> NewtonOptions:
        return NewtonOptions(self.newton_tau_abs, self.newton_tau_rel, self.newton_max_iter, self.line_search)

    def study_config(self, p: float | None = None, rho: float | None = None) -> StudyConfig:
        return StudyConfig(
            p=self.p if p is None else p,
            rho=self.rho if rho is None else rho,
            delta=self.delta,
            alpha=self.alpha,
            k=self.k,
            model=Model(self.model),
            n0=self.n0,
            levels=self.levels,
            quad_degree=self.quad_degree,
            warm_start=self.warm_start,
            penalty_shift=self.penalty_shift,
            mesh_pattern=self.mesh_pattern,
            newton=self.newton(),
        )

    def cells(self) -> list[tuple[float, float]]:
        if not self.grid:
            return [(self.p, self.rho)]
        out = []
        for item in self.grid.split(","):
            try:
                p, rho = (float(s) for s in item.split(":"))
            except ValueError as exc:
                raise ConfigError(f"grid: entries must look like p:rho, got {item!r}") from exc
            _validate_p_rho(p, rho)
            out.append((p, rho))
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key: str, raw: str):
    target = _FIELDS[key].type
    text = raw.strip()
    try:
        if "bool" in target:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "None" in target and text.lower() in ("", "none"):
            return None
        if target.startswith("int"):
            return int(text)
        if target.startswith("float"):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {target}") from exc


def _validate_p_rho(p, rho):
    if not (math.isfinite(p) and p > 1):
        raise ConfigError(f"p: must be > 1, got {p}")
    if not 0 < rho <= 1:
        raise ConfigError(f"rho: must lie in (0, 1], got {rho}")


def validate(cfg: RunConfig, mode: str = "study") -> RunConfig:
    _validate_p_rho(cfg.p, cfg.rho)
    if not (math.isfinite(cfg.delta) and cfg.delta >= 0):
        raise ConfigError(f"delta: must be >= 0, got {cfg.delta}")
    if not cfg.alpha > 0:
        raise ConfigError(f"alpha: must be > 0, got {cfg.alpha}")
    if cfg.k not in (1, 2):
        raise ConfigError(f"k: must be 1 or 2, got {cfg.k}")
    if cfg.model not in (m.value for m in Model):
        raise ConfigError(f"model: must be PStokes or PNavierStokes, got {cfg.model!r}")
    if cfg.n0 < 2 or cfg.n0 % 2:
        raise ConfigError(f"n0: must be an even integer >= 2, got {cfg.n0}")
    if mode == "study" and cfg.levels < 2:
        raise ConfigError(f"levels: a study needs levels >= 2, got {cfg.levels}")
    if cfg.levels < 0:
        raise ConfigError(f"levels: must be >= 0, got {cfg.levels}")
    if cfg.level is not None and cfg.level < 0:
        raise ConfigError(f"level: must be >= 0, got {cfg.level}")
    if cfg.quad_degree is not None and not 1 <= cfg.quad_degree <= 30:
        raise ConfigError(f"quad_degree: must lie in [1, 30], got {cfg.quad_degree}")
    if cfg.penalty_shift not in ("none", "average"):
        raise ConfigError(f"penalty_shift: must be 'none' or 'average', got {cfg.penalty_shift!r}")
    if cfg.mesh_pattern not in MESH_PATTERNS:
        raise ConfigError(f"mesh_pattern: must be one of {', '.join(MESH_PATTERNS)}, got {cfg.mesh_pattern!r}")
    if not (cfg.newton_tau_abs > 0 and cfg.newton_tau_rel >= 0):
        raise ConfigError("newton_tau_abs must be > 0 and newton_tau_rel >= 0")
    if cfg.newton_max_iter < 1:
        raise ConfigError(f"newton_max_iter: must be >= 1, got {cfg.newton_max_iter}")
    cfg.cells()
    return cfg


def _parse_text(text: str, source: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


def _parse_flags(flags: list[str]) -> dict[str, str]:
    values = {}
    i = 0
    while i < len(flags):
        tok = flags[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            if i + 1 >= len(flags):
                raise ConfigError(f"{tok}: missing value")
            i += 1
            val = flags[i]
        values[key.replace("-", "_")] = val
        i += 1
    return values


def parse_config(source=None, flags: list[str] | None = None, mode: str = "study") -> RunConfig:
    """Build a RunConfig from a config file (path or text stream) and flags."""
    values: dict[str, str] = {}
    if source is not None:
        if hasattr(source, "read"):
            values.update(_parse_text(source.read(), "<config>"))
        else:
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config file {source}: {exc}") from exc
            values.update(_parse_text(text, str(source)))
    values.update(_parse_flags(flags or []))
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    cfg = RunConfig(**{k: _convert(k, v) for k, v in values.items()})
    return validate(cfg, mode)


# ----------------------------------------------------------------------
# output formats

def _g(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.6g}"


def format_table(report: StudyReport) -> str:
    buf = io.StringIO()
    buf.write(TABLE_HEADER + "\n")
    for i, rec in enumerate(report.records):
        eo = [None if i == 0 else report.eocs[name][i - 1] for name in ("e_L", "e_S", "e_jump", "e_q")]
        row = [rec.level, rec.h, rec.ndof_v, rec.ndof_q, rec.e_L, eo[0], rec.e_S, eo[1],
               rec.e_jump, eo[2], rec.e_q, eo[3], rec.newton_iterations]
        buf.write(",".join(_g(v) for v in row) + "\n")
    buf.write("ref,,,,,,%.4f\n" % report.reference_rate)
    return buf.getvalue()


def emit_table(report: StudyReport, path) -> None:
    _atomic_write_text(path, format_table(report))


def read_table(path):
    """Parse a table written by :func:`emit_table`: (records, eocs, reference)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or ",".join(rows[0]) != TABLE_HEADER:
        raise ValueError("not an EOC table")
    records, eocs, ref = [], {n: [] for n in ("e_L", "e_S", "e_jump", "e_q")}, None
    for row in rows[1:]:
        if row[0] == "ref":
            ref = float(row[6])
            continue
        records.append(ErrorRecord(int(row[0]), float(row[1]), int(row[2]), int(row[3]),
                                   float(row[4]), float(row[6]), float(row[8]), float(row[10]), int(row[12])))
        if row[5]:
            for name, col in zip(eocs, (5, 7, 9, 11)):
                eocs[name].append(float(row[col]))
    return records, eocs, ref


def format_vtk(solution, aux, mesh) -> str:
    """Legacy ASCII VTK with cell/point velocity and point pressure."""
    from .femspace import Kind

    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    vel = solution.velocity.values_at(corners)  # (m, 3, 2)
    cell_vel = vel.mean(axis=1)
    nv = mesh.n_vertices
    acc = np.zeros((nv, 2))
    cnt = np.zeros(nv)
    np.add.at(acc, mesh.cells, vel)
    np.add.at(cnt, mesh.cells, 1.0)
    point_vel = acc / cnt[:, None]
    pspace = solution.pressure.space
    if pspace.kind is Kind.ContinuousScalar:
        pres = solution.pressure.coeffs[:nv]
    else:  # pragma: no cover - only continuous pressures are produced
        raise ValueError("pressure must be continuous")
    out = io.StringIO()
    out.write("# vtk DataFile Version 3.0\nldgpflow solution\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {nv} double\n")
    for x, y in mesh.vertices.tolist():
        out.write(f"{x:.17g} {y:.17g} 0\n")
    m = mesh.n_cells
    out.write(f"CELLS {m} {4 * m}\n")
    for a, b, c in mesh.cells:
        out.write(f"3 {a} {b} {c}\n")
    out.write(f"CELL_TYPES {m}\n" + "5\n" * m)
    out.write(f"CELL_DATA {m}\nVECTORS velocity double\n")
    for u, v in cell_vel.tolist():
        out.write(f"{u:.17g} {v:.17g} 0\n")
    if aux is not None:
        Lsym = aux.L.values_at(np.array([[1 / 3, 1 / 3]]))[:, 0]
        mag = np.linalg.norm((0.5 * (Lsym + np.swapaxes(Lsym, -1, -2))).reshape(m, 4), axis=1)
        out.write("SCALARS strain_rate double 1\nLOOKUP_TABLE default\n")
        out.write("".join(f"{s:.17g}\n" for s in mag.tolist()))
    out.write(f"POINT_DATA {nv}\nVECTORS velocity double\n")
    for u, v in point_vel.tolist():
        out.write(f"{u:.17g} {v:.17g} 0\n")
    out.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
    out.write("".join(f"{q:.17g}\n" for q in np.asarray(pres, dtype=float).tolist()))
    return out.getvalue()


def emit_vtk(solution, aux, mesh, path) -> None:
    _atomic_write_text(path, format_vtk(solution, aux, mesh))


# ----------------------------------------------------------------------
# subcommands

def _worker_count(n_tasks: int) -> int:
    env = os.environ.get("LDGPFLOW_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"LDGPFLOW_THREADS must be a positive integer, got {env!r}") from exc
    return max(1, min(cap, n_tasks))


def _run_study(args):
    from .verification import run_convergence_study

    return run_convergence_study(args)


def _output_path(base: str, p: float, rho: float, many: bool) -> str:
    if not many:
        return base
    path = Path(base)
    return str(path.with_name(f"{path.stem}_p{p:g}_rho{rho:g}{path.suffix}"))


def cmd_study(cfg: RunConfig) -> int:
    cells = cfg.cells()
    configs = [cfg.study_config(p, rho) for p, rho in cells]
    workers = _worker_count(len(configs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_study, configs))
    else:
        reports = [_run_study(c) for c in configs]
    for (p, rho), rep in zip(cells, reports):
        path = _output_path(cfg.output, p, rho, len(cells) > 1)
        emit_table(rep, path)
        print(f"p={p:g} rho={rho:g}: wrote {path}")
        print(format_table(rep), end="")
    return EXIT_OK


def _initial_mesh(cfg: RunConfig):
    if cfg.mesh:
        try:
            return read_mesh(cfg.mesh)
        except OSError as exc:
            raise IOError(f"cannot read mesh {cfg.mesh}: {exc}") from exc
    return generate_square_mesh(cfg.n0, cfg.mesh_pattern)


def cmd_solve(cfg: RunConfig) -> int:
    from .system import DiscreteSpaces, reconstruct_auxiliary
    from .verification import compute_errors, solve_level, solver_invariants

    level = cfg.levels if cfg.level is None else cfg.level
    mesh = _initial_mesh(cfg)
    for _ in range(level):
        mesh = red_refine(mesh)
    exact, data = make_manufactured(cfg.p, cfg.delta, cfg.rho, cfg.alpha, cfg.model, cfg.penalty_shift)
    spaces = DiscreteSpaces(mesh, cfg.k, cfg.quad_degree)
    res = solve_level(spaces, data, None, cfg.newton())
    aux = reconstruct_auxiliary(res.solution, data, spaces)
    rec = compute_errors(res.solution, aux, exact, spaces, level, res.iterations)
    div, mean = solver_invariants(res.solution, data, spaces)
    emit_vtk(res.solution, aux, mesh, cfg.vtk)
    print(f"level {level}: cells={mesh.n_cells} h={rec.h:.6g} newton={rec.newton_iterations} "
          f"e_L={rec.e_L:.6g} e_S={rec.e_S:.6g} e_jump={rec.e_jump:.6g} e_q={rec.e_q:.6g} "
          f"div={div:.2e} mean={mean:.2e}")
    print(f"wrote {cfg.vtk}")
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    from .properties import run_constitutive_suite, run_operator_suite

    results = run_operator_suite(cfg.seed) + run_constitutive_suite(cfg.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


COMMANDS = {"study": cmd_study, "solve": cmd_solve, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ldgpflow",
        description="LDG solver for steady p-Navier-Stokes flow: convergence studies, single solves, checks.",
        epilog="Any RunConfig key can be given as --key value (e.g. --p 3.0 --rho 0.1 --levels 4).",
    )
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat key = value configuration file")
    ap.add_argument("-v", "--verbose", action="store_true", help="log per-level progress")
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, rest, mode=args.command)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StudyError, NonConvergenceError, SolverError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
