"""Command-line front end.

Exit codes: 0 success / satisfied / uniform, 1 error, 2 violated / non-uniform,
3 inconclusive.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Optional, Sequence

import numpy as np

from . import diagnostics, transversality
from .autodiff import DomainError
from .dsl import DSLError, PerturbationSpec, ProblemSpec, parse_problem
from .euler import FREE_INITIAL, PINNED_INITIAL, assemble_system
from .paths import Path, PerturbationError, format_float, read_path_csv, write_path_csv
from .solver import SolveOptions, SolverError, steady_state, solve_truncated

EXIT_OK, EXIT_ERROR, EXIT_VIOLATED, EXIT_INCONCLUSIVE = 0, 1, 2, 3


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    problem: str
    horizon: Optional[int] = None
    window: tuple = (5, 50)
    eps: tuple = diagnostics.DEFAULT_EPS
    T_axis: tuple = diagnostics.DEFAULT_T_AXIS
    perturb: Optional[str] = None
    michel: Optional[float] = None
    mode: str = "auto"
    out: str = "."
    format: str = "csv"
    threads: int = 1
    reference: str = "auto"
    tol: float = 1e-4
    paths: tuple = ()

    def validate(self):
        lo, hi = self.window
        if lo < 0 or hi < lo:
            raise CliError(f"window must satisfy 0 <= min <= max, got {lo}:{hi}")
        if self.horizon is not None and self.horizon < 0:
            raise CliError("horizon must be non-negative")
        if self.michel is not None and not 0.0 < self.michel < 1.0:
            raise CliError("--michel needs a value in (0, 1)")
        if self.threads < 1:
            raise CliError("--threads must be >= 1")


# --------------------------------------------------------------------------
# helpers


def _load(cfg: RunConfig) -> ProblemSpec:
    p = FsPath(cfg.problem)
    try:
        source = p.read_text()
    except OSError as exc:
        raise CliError(f"cannot read problem file {cfg.problem}: {exc.strerror or exc}") from None
    try:
        return parse_problem(source)
    except DSLError as exc:
        raise CliError(f"{cfg.problem}:{exc}") from None


def _mode(spec: ProblemSpec, cfg: RunConfig) -> str:
    if cfg.mode != "auto":
        return cfg.mode
    if spec.order > 1 and spec.pinned_initial and spec.pins_complete():
        return PINNED_INITIAL
    return FREE_INITIAL


def _solve(spec: ProblemSpec, T_prime: int, mode: str):
    try:
        system = assemble_system(spec, T_prime, mode)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    report = solve_truncated(system, SolveOptions())
    if not report.converged:
        raise CliError(
            f"solver did not converge after {report.iterations} iterations "
            f"(residual {report.final_residual_norm:.3e})"
        )
    return report


def _perturbation(spec: ProblemSpec, cfg: RunConfig):
    """(label, PerturbationSpec) from --michel, --perturb or the first declared one."""
    if cfg.michel is not None:
        return f"scaled(alpha={cfg.michel!r})", PerturbationSpec("scaled", alpha=cfg.michel)
    if cfg.perturb is not None:
        if cfg.perturb not in spec.perturbations:
            known = ", ".join(spec.perturbations) or "none"
            raise CliError(f"unknown perturbation {cfg.perturb!r} (declared: {known})")
        return cfg.perturb, spec.perturbations[cfg.perturb]
    if not spec.perturbations:
        raise CliError("no perturbation declared; use --perturb or --michel")
    name = next(iter(spec.perturbations))
    return name, spec.perturbations[name]


def _outdir(cfg: RunConfig) -> FsPath:
    out = FsPath(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(dest: FsPath, payload: dict):
    dest.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n")


def _write_table(dest: FsPath, header: Sequence[str], rows, fmt: str):
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, (int, np.integer)) else format_float(c) for c in row])
    if fmt == "json":
        records = [
            {h: (int(c) if isinstance(c, (int, np.integer)) else float(c)) for h, c in zip(header, row)}
            for row in rows
        ]
        _write_json(dest.with_suffix(".json"), {"columns": list(header), "rows": records})


# --------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig) -> int:
    spec = _load(cfg)
    mode = _mode(spec, cfg)
    T_prime = cfg.horizon if cfg.horizon is not None else 20
    report = _solve(spec, T_prime, mode)
    out = _outdir(cfg)
    write_path_csv(report.path, out / "path.csv", spec.var_names)
    if cfg.format == "json":
        _write_json(
            out / "path.json",
            {"t": list(range(len(report.path))), "values": report.path.values.tolist()},
        )
    payload = report.to_dict()
    payload.update(mode=mode, T_prime=T_prime)
    _write_json(out / "solve_report.json", payload)
    print(
        f"converged in {report.iterations} iteration(s), "
        f"residual {report.final_residual_norm:.3e}, mode {mode}"
    )
    if report.steady_state is not None:
        print("steady state: " + ", ".join(
            f"{n}={format_float(v)}" for n, v in zip(spec.var_names, report.steady_state)
        ))
    return EXIT_OK


def cmd_check_tvc(cfg: RunConfig) -> int:
    spec = _load(cfg)
    mode = _mode(spec, cfg)
    label, q = _perturbation(spec, cfg)
    T_min, T_max = cfg.window
    T_prime = max(T_max, cfg.horizon or 0)
    report = _solve(spec, T_prime, mode)
    series = transversality.tvc_series(spec, report.path, q, T_min, T_max, mode)
    verdict = transversality.classify_tvc(series)
    out = _outdir(cfg)
    rows = [(int(t), v, r) for t, v, r in zip(series.T_values, series.values, series.running_inf())]
    _write_table(out / "tvc_series.csv", ["T_prime", "boundary_term", "running_inf"], rows, cfg.format)
    payload = verdict.to_dict()
    payload.update(perturbation=label, mode=mode, T_prime=T_prime)
    _write_json(out / "tvc_verdict.json", payload)
    print(
        f"transversality {verdict.classification}: liminf ~ {verdict.liminf_estimate:.12g}, "
        f"limsup ~ {verdict.limsup_estimate:.12g} on [{T_min}, {T_max}]"
    )
    return {
        transversality.SATISFIED: EXIT_OK,
        transversality.VIOLATED: EXIT_VIOLATED,
        transversality.INCONCLUSIVE: EXIT_INCONCLUSIVE,
    }[verdict.classification]


def cmd_diagnose(cfg: RunConfig) -> int:
    spec = _load(cfg)
    mode = _mode(spec, cfg)
    label, q = _perturbation(spec, cfg)
    T_last = max(cfg.T_axis)
    T_prime = max(T_last, cfg.horizon or 0)
    H = T_prime + spec.order - 1

    reference = cfg.reference
    cbar = None
    if reference in ("auto", "steady"):
        try:
            cbar = steady_state(spec)
        except (SolverError, DomainError) as exc:
            if reference == "steady":
                raise CliError(f"no steady state for --reference steady: {exc}") from None
    if reference == "auto":
        reference = "steady" if (mode == FREE_INITIAL and cbar is not None) else "solved"
    if reference == "steady":
        path = Path.constant(cbar, H, spec.dim)
    else:
        path = _solve(spec, T_prime, mode).path

    grid = diagnostics.build_a_grid(spec, path, q, cfg.eps, cfg.T_axis, mode, cfg.threads)
    try:
        verdict = diagnostics.assess_assumptions(grid, cfg.tol)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = _outdir(cfg)
    header = ["T_prime"] + [f"eps={format_float(e)}" for e in grid.eps_values]
    rows = [(T, *grid.A[k]) for k, T in enumerate(grid.T_values)]
    _write_table(out / "a_grid.csv", header, rows, cfg.format)
    payload = verdict.to_dict()
    payload.update(perturbation=label, mode=mode, reference_path=reference)
    _write_json(out / "assumption_verdict.json", payload)

    def show(x):
        return "divergent" if math.isinf(x) else f"{x:.12g}"

    print(f"assumptions {verdict.classification}: L1 = {show(verdict.L1)}, L2 = {show(verdict.L2)}")
    return {
        diagnostics.UNIFORM: EXIT_OK,
        diagnostics.NON_UNIFORM: EXIT_VIOLATED,
        diagnostics.INCONCLUSIVE: EXIT_INCONCLUSIVE,
    }[verdict.classification]


def cmd_compare(cfg: RunConfig) -> int:
    spec = _load(cfg)
    mode = _mode(spec, cfg)
    loaded = []
    for p in cfg.paths:
        try:
            path, names = read_path_csv(p)
        except OSError as exc:
            raise CliError(f"cannot read path file {p}: {exc.strerror or exc}") from None
        except ValueError as exc:
            raise CliError(f"malformed path file: {exc}") from None
        if path.dim != spec.dim:
            raise CliError(f"{p}: {path.dim} value columns, problem has {spec.dim}")
        loaded.append(path)
    a, b = loaded
    common = min(a.horizon, b.horizon)
    T_max = common - spec.order + 1
    if T_max < 0:
        raise CliError("paths are too short for a single stage")
    if a.horizon != b.horizon:
        print(f"note: paths differ in length; comparing on the common window t <= {common}")
    pinned = spec.pinned_times if mode == PINNED_INITIAL else ()
    try:
        cmp_ = diagnostics.overtaking_compare(spec, a, b, T_max, pinned_times=pinned)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = _outdir(cfg)
    _write_table(
        out / "overtaking.csv",
        ["T_prime", "D"],
        [(int(t), d) for t, d in zip(cmp_.T_values, cmp_.D)],
        cfg.format,
    )
    words = {
        "A-overtakes-B": "first overtakes",
        "B-overtakes-A": "second overtakes",
        "incomparable": "incomparable",
    }
    print(f"verdict: {words[cmp_.verdict]} (T' <= {T_max}, D(T_max) = {cmp_.D[-1]:.12g})")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "check-tvc": cmd_check_tvc,
    "diagnose": cmd_diagnose,
    "compare": cmd_compare,
}


# --------------------------------------------------------------------------
# argument parsing


def _window(text: str) -> tuple:
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected <min>:<max>, got {text!r}") from None


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eulertvc",
        description="Solve order-N Euler systems and check transversality and uniform convergence.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("problem", help="problem file")
        p.add_argument("--horizon", type=int, help="truncation index T'")
        p.add_argument(
            "--mode",
            choices=["auto", FREE_INITIAL, PINNED_INITIAL],
            default="auto",
            help="auto pins initial values when the file gives all of them",
        )
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        p.add_argument("--threads", type=int, default=1)

    def perturbation(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--perturb", help="perturbation name from the problem file")
        g.add_argument("--michel", type=float, help="use q = alpha * c* with this alpha")

    common(sub.add_parser("solve", help="solve the truncated Euler system"))

    p = sub.add_parser("check-tvc", help="boundary-term series and transversality verdict")
    common(p)
    perturbation(p)
    p.add_argument("--window", type=_window, default=(5, 50), help="T_min:T_max")

    p = sub.add_parser("diagnose", help="A(T', eps) grid and iterated-limit verdict")
    common(p)
    perturbation(p)
    p.add_argument("--eps", type=_floats, default=diagnostics.DEFAULT_EPS)
    p.add_argument("--T-axis", dest="T_axis", type=_ints, default=diagnostics.DEFAULT_T_AXIS)
    p.add_argument("--reference", choices=["auto", "solved", "steady"], default="auto")
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("compare", help="overtaking comparison of two path files")
    common(p)
    p.add_argument("paths", nargs=2, metavar="PATH_CSV")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    fields = {k: v for k, v in vars(ns).items() if v is not None and k in RunConfig.__dataclass_fields__}
    if "paths" in fields:
        fields["paths"] = tuple(fields["paths"])
    cfg = RunConfig(**fields)
    cfg.validate()
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        return COMMANDS[cfg.command](cfg)
    except (CliError, DomainError, SolverError, PerturbationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
