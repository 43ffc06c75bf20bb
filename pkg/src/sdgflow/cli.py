"""Command-line driver: single solves, convergence sweeps, CSV and SVG output."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import cases, mesh as meshmod, verify
from .solver import solve_case
from .spaces import StaggeredSpaces
from .verify import ConvergenceRow, ConvergenceTable

MESH_FAMILIES = ("square", "distorted", "hanging")
ERROR_KEYS = ("u", "L", "p", "super", "z2_scaled")
CSV_COLUMNS = (
    "level,h,n_dof,err_u,ord_u,err_L,ord_L,err_p,ord_p,"
    "err_super,ord_super,err_z2_scaled,ord_z2"
)


class ConfigError(ValueError):
    """Invalid run configuration; message aggregates all problems found."""


@dataclass
class RunConfig:
    k: int = 1
    epsilon: float = 1.0
    alpha: float = 1.0
    mesh: str = "square"
    mesh_file: str | None = None
    levels: tuple[int, ...] = (8,)
    delta: float = 0.25
    seed: int = 42
    case: str = "trig"
    quad_degree: int | None = None
    out_csv: str | None = None
    out_svg: str | None = None
    serial: bool = True

    def validate(self) -> None:
        problems = []
        if not 0 <= self.k <= 3:
            problems.append(f"k must be in 0..3, got {self.k}")
        if not self.epsilon > 0.0:
            problems.append(f"epsilon must be positive, got {self.epsilon}")
        if not self.alpha > 0.0:
            problems.append(f"alpha must be positive, got {self.alpha}")
        if self.mesh not in MESH_FAMILIES and self.mesh != "file":
            problems.append(
                f"mesh must be one of {MESH_FAMILIES} or 'file', got {self.mesh!r}"
            )
        if self.mesh == "file" and not self.mesh_file:
            problems.append("mesh 'file' requires --mesh-file PATH")
        if not self.levels:
            problems.append("at least one level is required")
        elif any(n < 1 for n in self.levels):
            problems.append(f"levels must be positive, got {self.levels}")
        elif list(self.levels) != sorted(self.levels):
            problems.append(f"levels must be increasing, got {self.levels}")
        if self.case not in ("trig", "zero"):
            problems.append(f"unknown case {self.case!r} (expected 'trig' or 'zero')")
        if self.quad_degree is not None and not 1 <= self.quad_degree <= 20:
            problems.append(f"quad_degree must be in 1..20, got {self.quad_degree}")
        if problems:
            raise ConfigError("; ".join(problems))


def config_from_preset(preset: cases.ExperimentPreset, k: int | None = None,
                       epsilon: float | None = None) -> RunConfig:
    """Expand a named preset into a RunConfig; k and epsilon may be narrowed."""
    return RunConfig(
        k=preset.orders[0] if k is None else k,
        epsilon=preset.eps if epsilon is None else epsilon,
        alpha=preset.alpha,
        mesh=preset.family,
        levels=tuple(preset.levels),
        delta=preset.delta,
        seed=preset.seed,
        case=preset.case,
    )


@dataclass
class RunReport:
    """Results of one solve: errors, solution norms, sizes, wall times."""

    config: RunConfig
    level: int
    h: float
    ndof: int
    dims: tuple[int, int, int]
    errors: dict[str, float]
    norms: dict[str, float]
    timings: dict[str, float] = field(default_factory=dict)

    def summary(self) -> str:
        nW, nU, nP = self.dims
        lines = [
            f"mesh {self.config.mesh} h=1/{self.level}  k={self.config.k}"
            f"  epsilon={self.config.epsilon:g}  alpha={self.config.alpha:g}",
            f"unknowns {self.ndof} (gradient {nW}, velocity {nU}, pressure {nP})",
        ]
        for key in ERROR_KEYS:
            lines.append(f"err_{key:<10s} {self.errors[key]:.3e}")
        for key, val in self.norms.items():
            lines.append(f"norm_{key:<9s} {val:.3e}")
        total = sum(self.timings.values())
        lines.append(f"wall time {total:.2f}s "
                     + " ".join(f"{k}={v:.2f}s" for k, v in self.timings.items()))
        return "\n".join(lines)


def _build_mesh(config: RunConfig, n: int) -> meshmod.StaggeredMesh:
    if config.mesh == "file":
        with open(config.mesh_file, "r", encoding="utf-8") as fh:
            primal = meshmod.import_polygon_mesh(fh.read())
        return meshmod.build_staggered(primal)
    return cases.build_mesh(config.mesh, n, delta=config.delta, seed=config.seed)


def _get_case(config: RunConfig):
    base = verify.trig_case(config.epsilon, config.alpha)
    if config.case == "zero":
        zero_v = lambda x: np.zeros((len(x), 2))
        zero_s = lambda x: np.zeros(len(x))
        return replace(base, f=zero_v, g=zero_s)
    return base


def run_single(config: RunConfig, n: int | None = None) -> RunReport:
    """Solve one resolution and report errors, norms, sizes and timings."""
    config.validate()
    if config.quad_degree is not None:
        os.environ["SDG_QUAD_DEGREE"] = str(config.quad_degree)
    level = config.levels[0] if n is None else n
    case = _get_case(config)
    timings = {}
    t0 = time.perf_counter()
    mesh = _build_mesh(config, level)
    timings["mesh"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    spaces = StaggeredSpaces(mesh, config.k)
    timings["spaces"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    solution, system = solve_case(spaces, config.epsilon, config.alpha, case.f, case.g)
    timings["solve"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    errors = {
        "u": verify.error_vs_interpolant(spaces, solution.u, case.u),
        "L": verify.error_vs_interpolant(spaces, solution.L, case.L),
        "p": verify.error_vs_interpolant(spaces, solution.p, case.p),
        "super": verify.superconvergence_error(spaces, solution.u, case),
        "z2_scaled": math.sqrt(config.epsilon)
        * verify.error_Z2(spaces, solution.u, case),
    }
    norms = {
        "u": verify.norm_eval(spaces, solution.u, "L2"),
        "L": verify.norm_eval(spaces, solution.L, "L2"),
        "p": verify.norm_eval(spaces, solution.p, "L2"),
    }
    timings["errors"] = time.perf_counter() - t0
    return RunReport(
        config=config,
        level=level,
        h=1.0 / level,
        ndof=system.num_unknowns,
        dims=system.dims,
        errors=errors,
        norms=norms,
        timings=timings,
    )


def run_convergence(config: RunConfig) -> ConvergenceTable:
    """Run all configured levels and collect errors with observed orders."""
    config.validate()
    table = ConvergenceTable(k=config.k, eps=config.epsilon, family=config.mesh)
    for n in config.levels:
        report = run_single(config, n=n)
        table.add(ConvergenceRow(
            level=n, h=report.h, ndof=report.ndof, errors=dict(report.errors)))
    return table


# -- output formatting --------------------------------------------------

def _fmt_err(v: float) -> str:
    return f"{v:.2e}"


def _fmt_ord(v: float | None) -> str:
    return "N/A" if v is None else f"{v:.2f}"


def table_to_csv(table: ConvergenceTable) -> str:
    lines = [CSV_COLUMNS]
    for row in table.rows:
        fields = [str(row.level), f"{row.h:.6g}", str(row.ndof)]
        for key in ERROR_KEYS:
            fields.append(_fmt_err(row.errors[key]))
            fields.append(_fmt_ord(row.orders.get(key)))
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[dict]:
    """Parse a convergence CSV back into row dictionaries."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    out = []
    for ln in lines[1:]:
        vals = ln.split(",")
        row = {}
        for name, val in zip(header, vals):
            if name == "level" or name == "n_dof":
                row[name] = int(val)
            elif val == "N/A":
                row[name] = None
            else:
                row[name] = float(val)
        out.append(row)
    return out


def table_to_svg(table: ConvergenceTable, width: int = 640, height: int = 480) -> str:
    """Self-contained log-log error plot with reference slope guide lines."""
    series = [("u", "#1f77b4"), ("L", "#d62728"), ("p", "#2ca02c")]
    hs = [row.h for row in table.rows]
    margin = 60
    x0, x1 = margin, width - margin
    y0, y1 = height - margin, margin  # y grows downward in SVG
    all_errs = [row.errors[key] for row in table.rows for key, _c in series
                if row.errors[key] > 0.0]
    if not all_errs or len(hs) < 1:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
                f'height="{height}"><text x="20" y="40">empty table</text></svg>')
    lh = [math.log10(h) for h in hs]
    le_min = math.floor(math.log10(min(all_errs)))
    le_max = math.ceil(math.log10(max(all_errs)))
    lh_min, lh_max = min(lh), max(lh)
    if lh_max == lh_min:
        lh_min -= 0.5
        lh_max += 0.5
    if le_max == le_min:
        le_max += 1

    def sx(h):  # h descending left to right: large h at left
        return x0 + (lh_max - math.log10(h)) / (lh_max - lh_min) * (x1 - x0)

    def sy(e):
        return y0 - (math.log10(e) - le_min) / (le_max - le_min) * (y0 - y1)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.0f}" y="{height - 15}" '
        f'text-anchor="middle">h (log scale, decreasing)</text>',
        f'<text x="15" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 15 {(y0 + y1) / 2:.0f})">error (log scale)</text>',
    ]
    for h in hs:
        parts.append(f'<text x="{sx(h):.1f}" y="{y0 + 18}" text-anchor="middle">'
                     f'1/{round(1 / h)}</text>')
    for d in range(le_min, le_max + 1):
        yy = sy(10.0 ** d)
        parts.append(f'<line x1="{x0 - 4}" y1="{yy:.1f}" x2="{x0}" y2="{yy:.1f}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{x0 - 8}" y="{yy + 4:.1f}" text-anchor="end">'
                     f'1e{d}</text>')
    for key, color in series:
        pts = " ".join(f"{sx(row.h):.1f},{sy(row.errors[key]):.1f}"
                       for row in table.rows if row.errors[key] > 0.0)
        if pts:
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                         f'stroke-width="1.5"/>')
    if len(table.rows) >= 2:
        # Reference slopes k and k+1 anchored at the finest-level u error.
        last = table.rows[-1]
        first = table.rows[0]
        anchor = last.errors["u"]
        for slope, dash in ((table.k, "4 3"), (table.k + 1, "1 3")):
            e_first = anchor * (first.h / last.h) ** slope
            parts.append(
                f'<polyline points="{sx(first.h):.1f},{sy(e_first):.1f} '
                f'{sx(last.h):.1f},{sy(anchor):.1f}" fill="none" stroke="gray" '
                f'stroke-dasharray="{dash}"/>')
            parts.append(f'<text x="{sx(first.h) + 5:.1f}" y="{sy(e_first):.1f}" '
                         f'fill="gray">slope {slope}</text>')
    for i, (key, color) in enumerate(series):
        yy = y1 + 15 * i
        parts.append(f'<line x1="{x1 - 90}" y1="{yy}" x2="{x1 - 70}" y2="{yy}" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{x1 - 65}" y="{yy + 4}">err_{key}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def emit_outputs(table: ConvergenceTable, out_csv: str | None,
                 out_svg: str | None) -> None:
    if out_csv:
        with open(out_csv, "w", encoding="utf-8") as fh:
            fh.write(table_to_csv(table))
    if out_svg:
        with open(out_svg, "w", encoding="utf-8") as fh:
            fh.write(table_to_svg(table))


# -- argument handling --------------------------------------------------

def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--preset", help="named experiment preset, e.g. table1")
    sub.add_argument("--k", type=int, help="polynomial order 0..3")
    sub.add_argument("--epsilon", type=float, help="viscosity coefficient")
    sub.add_argument("--alpha", type=float, help="reaction coefficient")
    sub.add_argument("--mesh", help="square|distorted|hanging|file")
    sub.add_argument("--mesh-file", help="polygon mesh file (with --mesh file)")
    sub.add_argument("--levels", help="comma-separated h^-1 values, e.g. 2,4,8")
    sub.add_argument("--delta", type=float, help="distortion amplitude")
    sub.add_argument("--seed", type=int, help="distortion seed")
    sub.add_argument("--case", help="manufactured case id (trig or zero)")
    sub.add_argument("--quad-degree", type=int, help="data quadrature degree")
    sub.add_argument("--out-csv", help="CSV output path")
    sub.add_argument("--out-svg", help="SVG plot output path")
    sub.add_argument("--serial", action="store_true", help="force serial execution")


_CONFIG_KEYS = {
    "k": int, "epsilon": float, "alpha": float, "mesh": str, "mesh_file": str,
    "levels": None, "delta": float, "seed": int, "case": str,
    "quad_degree": int, "out_csv": str, "out_svg": str, "serial": bool,
}


def _parse_levels(value) -> tuple[int, ...]:
    if isinstance(value, str):
        return tuple(int(part) for part in value.split(",") if part.strip())
    return tuple(int(v) for v in value)


def build_config(args: argparse.Namespace) -> RunConfig:
    """Assemble a RunConfig: preset first, JSON config next, flags last."""
    problems = []
    config = RunConfig()
    if args.preset:
        try:
            config = config_from_preset(cases.preset(args.preset))
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        for key, value in data.items():
            if key not in _CONFIG_KEYS:
                problems.append(f"unknown config key {key!r}")
            elif key == "levels":
                config = replace(config, levels=_parse_levels(value))
            else:
                config = replace(config, **{key: _CONFIG_KEYS[key](value)})
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is None or (key == "serial" and not flag):
            continue
        if key == "levels":
            config = replace(config, levels=_parse_levels(flag))
        else:
            config = replace(config, **{key: flag})
    if problems:
        raise ConfigError("; ".join(problems))
    return config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdgflow",
        description="Staggered DG solver for Brinkman flow with a convergence harness.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    solve_p = subs.add_parser("solve", help="single solve at one resolution")
    _add_run_flags(solve_p)
    conv_p = subs.add_parser("converge", help="convergence sweep over levels")
    _add_run_flags(conv_p)
    mesh_p = subs.add_parser("mesh", help="mesh utilities")
    mesh_subs = mesh_p.add_subparsers(dest="mesh_command", required=True)
    check_p = mesh_subs.add_parser("check", help="build and validate a mesh")
    _add_run_flags(check_p)
    preset_p = subs.add_parser("preset", help="preset utilities")
    preset_subs = preset_p.add_subparsers(dest="preset_command", required=True)
    preset_subs.add_parser("list", help="list registered presets")

    args = parser.parse_args(argv)
    try:
        if args.command == "preset":
            for name in cases.preset_names():
                pr = cases.preset(name)
                print(f"{name}: {pr.family}, eps={pr.eps:g}, alpha={pr.alpha:g}, "
                      f"k={list(pr.orders)}, levels={list(pr.levels)}")
            return 0
        config = build_config(args)
        if args.command == "mesh":
            config.validate()
            for n in config.levels:
                mesh = _build_mesh(config, n)
                mesh.validate()
                counts = {}
                for e in mesh.edges:
                    counts[e.kind] = counts.get(e.kind, 0) + 1
                print(f"level 1/{n}: {len(mesh.primal.polygons)} polygons, "
                      f"{mesh.num_triangles} triangles, "
                      f"edges {counts}, h={mesh.h:.4g}: OK")
            return 0
        if args.command == "solve":
            report = run_single(config)
            print(report.summary())
            single = ConvergenceTable(k=config.k, eps=config.epsilon,
                                      family=config.mesh)
            single.add(ConvergenceRow(level=report.level, h=report.h,
                                      ndof=report.ndof,
                                      errors=dict(report.errors)))
            emit_outputs(single, config.out_csv, config.out_svg)
            return 0
        if args.command == "converge":
            table = run_convergence(config)
            print(table_to_csv(table), end="")
            emit_outputs(table, config.out_csv, config.out_svg)
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except meshmod.MeshError as exc:
        print(f"error: mesh: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # solver or IO failure
        print(f"error: runtime: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
