"""Command-line driver for convergence studies and the invariant suite.

Example::

    dfstokes run --k 1 --l 0 --example ex1 --levels 3:6 --postprocess --out results
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .exact import EXAMPLES, get_example
from .mesh import DIAGONAL, build_uniform_unit_square
from .postproc import ERROR_COLUMNS, error_norms, observed_orders, postprocess
from .properties import run_properties
from .spaces import SpaceConfig
from .system import SolverError, solve_stokes

log = logging.getLogger("dfstokes")

MAX_K = 2
CSV_NORMS = ("err_u", "err_sigma", "err_sigma_0h", "err_p", "err_Iu", "err_upost", "err_grad_upost")
CSV_HEADER = ["h"] + [c for e in CSV_NORMS for c in (e, "ord" + e[3:])]
MD_NORMS = {
    "err_u": "‖u−u_h‖",
    "err_sigma": "‖σ−σ_h‖",
    "err_p": "‖p−p_h‖",
    "err_Iu": "‖Iu−u_h‖",
    "err_upost": "‖u−u_h*‖",
    "err_grad_upost": "‖∇_h(u−u_h*)‖",
}


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    k: int
    ell: int
    example: str = "ex1"
    levels: tuple[int, int] = (3, 5)
    out: Path = Path(".")
    postprocess: bool = False
    vtk: bool = False
    properties: bool = False
    flip_normals: bool = False

    def __post_init__(self):
        if not 0 <= self.k <= MAX_K:
            raise UsageError(f"k must be in 0..{MAX_K}, got {self.k}")
        if self.ell < 0 or self.ell not in (self.k, self.k - 1):
            raise UsageError(f"l must be k or k-1 and non-negative, got k={self.k}, l={self.ell}")
        lo, hi = self.levels
        if lo < 0 or hi < lo:
            raise UsageError(f"levels must be ascending non-negative exponents, got {lo}:{hi}")
        if self.example not in EXAMPLES:
            raise UsageError(f"unknown example {self.example!r}; known: {', '.join(sorted(EXAMPLES))}")

    @property
    def space(self) -> SpaceConfig:
        return SpaceConfig(self.k, self.ell)

    @property
    def stem(self) -> str:
        return f"study_k{self.k}_l{self.ell}"


def parse_levels(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A:B, got {text!r}") from None
    return lo, hi


def run_convergence_study(cfg: RunConfig) -> list[dict]:
    """Solve on every level, write CSV and markdown tables, return the rows."""
    exact = get_example(cfg.example)
    cfg.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for level in range(cfg.levels[0], cfg.levels[1] + 1):
        t0 = time.perf_counter()
        mesh = build_uniform_unit_square(2**level)
        sol = solve_stokes(mesh, cfg.space, exact.f, flip_normals=cfg.flip_normals)
        upost = postprocess(sol) if cfg.postprocess else None
        row = error_norms(sol, upost, exact)
        row["level"] = level
        rows.append(row)
        if cfg.vtk:
            from .vtk import write_solution

            write_solution(cfg.out / f"level{level}.vtk", sol)
        log.info("level %d (%d cells) done in %.1fs", level, mesh.n_cells, time.perf_counter() - t0)
    for name in ERROR_COLUMNS:
        for row, order in zip(rows, observed_orders([r[name] for r in rows])):
            row["ord" + name[3:]] = order
    (cfg.out / f"{cfg.stem}.csv").write_text(format_csv(rows))
    (cfg.out / f"{cfg.stem}.md").write_text(format_markdown(rows, cfg))
    return rows


def _fmt(value, spec):
    return "" if value is None or not math.isfinite(value) else format(value, spec)


def format_csv(rows) -> str:
    lines = [",".join(CSV_HEADER)]
    for row in rows:
        cells = [format(row["h"], ".6e")]
        for name in CSV_NORMS:
            cells += [_fmt(row[name], ".10e"), _fmt(row["ord" + name[3:]], ".4f")]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def format_markdown(rows, cfg: RunConfig) -> str:
    norms = [n for n in MD_NORMS if cfg.postprocess or "upost" not in n]
    head = ["h", "(k,l)"] + [c for n in norms for c in (MD_NORMS[n], "order")]
    lines = [
        f"Example {cfg.example}, uniform meshes split along the {DIAGONAL} diagonal",
        "",
        "| " + " | ".join(head) + " |",
        "|" + "---|" * len(head),
    ]
    for row in rows:
        cells = [f"2^-{row['level']}", f"({cfg.k},{cfg.ell})"]
        for n in norms:
            order = row["ord" + n[3:]]
            cells += [f"{row[n]:.3e}", "--" if not math.isfinite(order) else f"{order:.2f}"]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def run_property_suite(cfg: RunConfig) -> dict:
    """Evaluate every invariant on n in {2, 4}, k in {0, 1} and write ``properties.json``."""
    checks = run_properties(flip_normals=cfg.flip_normals)
    report = {
        "passed": all(c.passed for c in checks),
        "flip_normals": cfg.flip_normals,
        "properties": [c.to_dict() for c in checks],
    }
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "properties.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfstokes", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a convergence study")
    run.add_argument("--k", type=int, required=True, help="stress / velocity degree")
    run.add_argument("--l", type=int, required=True, dest="ell", help="pressure degree (k or k-1)")
    run.add_argument("--example", default="ex1", help="manufactured solution name")
    run.add_argument("--levels", type=parse_levels, default=(3, 5), help="A:B, mesh n = 2^level")
    run.add_argument("--out", type=Path, default=Path("."), help="output directory")
    run.add_argument("--postprocess", action="store_true", help="compute the postprocessed velocity")
    run.add_argument("--vtk", action="store_true", help="write level{N}.vtk per level")
    run.add_argument("--properties", action="store_true", help="also run the invariant suite")
    run.add_argument("--debug-flip-normals", action="store_true", dest="flip_normals",
                     help="fault injection: drop the outward sign in the multiplier term")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig(
            k=args.k, ell=args.ell, example=args.example, levels=args.levels, out=args.out,
            postprocess=args.postprocess, vtk=args.vtk, properties=args.properties,
            flip_normals=args.flip_normals,
        )
    except UsageError as exc:
        parser.error(str(exc))

    status = 0
    try:
        run_convergence_study(cfg)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print((cfg.out / f"{cfg.stem}.md").read_text(), end="")
    if cfg.properties:
        report = run_property_suite(cfg)
        failed = [p["name"] for p in report["properties"] if not p["passed"]]
        if failed:
            print("violated properties: " + ", ".join(failed), file=sys.stderr)
            status = 1
        else:
            print(f"all {len(report['properties'])} properties passed")
    return status


if __name__ == "__main__":
    sys.exit(main())
