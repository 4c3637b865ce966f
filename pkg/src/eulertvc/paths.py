"""Finite paths c(0..H), perturbation sequences and path CSV files."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Sequence, Union

import numpy as np

from .autodiff import compile_expr, real_part
from .dsl import PerturbationSpec, ProblemSpec

__all__ = [
    "Path",
    "PerturbationError",
    "as_values",
    "perturbation_values",
    "window",
    "format_float",
    "write_path_csv",
    "read_path_csv",
]


class PerturbationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Path:
    """Decision vectors on times 0..H; ``values[t]`` is c(t)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] == 0:
            raise ValueError("path values must be a non-empty (H+1) x n array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        return isinstance(other, Path) and np.array_equal(self.values, other.values)

    @classmethod
    def constant(cls, value, horizon: int, dim: int = 1) -> "Path":
        return cls(np.broadcast_to(np.asarray(value, dtype=float), (horizon + 1, dim)))


PathLike = Union[Path, np.ndarray, Sequence]


def as_values(p: PathLike) -> np.ndarray:
    if isinstance(p, Path):
        return p.values
    return Path(p).values


def window(values: np.ndarray, t: int, order: int) -> list:
    """Stage window at ``t`` as an n x N nested list of floats."""
    return values[t : t + order].T.tolist()


def perturbation_values(
    spec: ProblemSpec,
    q: Union[PerturbationSpec, PathLike],
    horizon: int,
    path: PathLike = None,
    pinned_times: Sequence[int] = (),
) -> np.ndarray:
    """Evaluate q(0..horizon) as a (horizon+1) x n array.

    A scaled-optimal perturbation reads the attached ``path`` and is zeroed at
    t=0 and at every pinned time; any other kind must already vanish there.
    """
    n = spec.dim
    if not isinstance(q, PerturbationSpec):
        vals = as_values(q)
        if vals.shape[1] != n:
            raise PerturbationError(f"perturbation has {vals.shape[1]} components, expected {n}")
        if vals.shape[0] < horizon + 1:
            raise PerturbationError(
                f"perturbation covers t <= {vals.shape[0] - 1}, need t <= {horizon}"
            )
        out = vals[: horizon + 1].copy()
    elif q.kind == "step":
        t = np.arange(horizon + 1, dtype=float)
        ramp = np.where(t >= q.t0, q.level, q.level * t / q.t0)
        out = np.repeat(ramp[:, None], n, axis=1)
    elif q.kind == "scaled":
        if path is None:
            raise PerturbationError("scaled-optimal perturbation needs an attached optimal path")
        c = as_values(path)
        if c.shape[0] < horizon + 1:
            raise PerturbationError(
                f"attached path covers t <= {c.shape[0] - 1}, need t <= {horizon}"
            )
        out = q.alpha * c[: horizon + 1]
        out[0] = 0.0
        for t in pinned_times:
            if t <= horizon:
                out[t] = 0.0
        return out
    else:
        exprs = q.exprs if len(q.exprs) == n else q.exprs * n
        fns = [compile_expr(e) for e in exprs]
        out = np.array(
            [[real_part(f((), t, spec.params)) for f in fns] for t in range(horizon + 1)],
            dtype=float,
        ).reshape(horizon + 1, n)
    for t in pinned_times:
        if t <= horizon and np.any(out[t] != 0.0):
            raise PerturbationError(f"perturbation must vanish at pinned time t={t}")
    return out


def format_float(x: float) -> str:
    """Shortest repr that round-trips; locale independent."""
    return repr(float(x))


def write_path_csv(path: PathLike, dest, var_names: Sequence[str]) -> None:
    values = as_values(path)
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *var_names])
        for t, row in enumerate(values):
            w.writerow([t, *(format_float(x) for x in row)])


def read_path_csv(src) -> tuple[Path, list[str]]:
    """Read a path file written by :func:`write_path_csv`.

    Rows must be consecutive times starting at 0.
    """
    text = FsPath(src).read_text() if not isinstance(src, io.IOBase) else src.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(cell.strip() for cell in r)]
    if not rows or rows[0][0].strip() != "t":
        raise ValueError(f"{src}: missing 't,...' header")
    names = [c.strip() for c in rows[0][1:]]
    if not names:
        raise ValueError(f"{src}: no value columns")
    values = []
    for k, row in enumerate(rows[1:]):
        if len(row) != len(names) + 1:
            raise ValueError(f"{src}: row {k + 2} has {len(row)} fields, expected {len(names) + 1}")
        try:
            t = int(row[0])
            vals = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise ValueError(f"{src}: row {k + 2}: {exc}") from None
        if t != k:
            raise ValueError(f"{src}: row {k + 2} has t={t}, expected {k}")
        values.append(vals)
    if not values:
        raise ValueError(f"{src}: no data rows")
    return Path(np.array(values)), names
