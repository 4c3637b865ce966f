"""Bundled problem files."""

from importlib import resources

from ..dsl import ProblemSpec, parse_problem

NAMES = ("counterexample", "discounted_tracking", "ramsey")


def source(name: str) -> str:
    return resources.files(__package__).joinpath(f"{name}.prob").read_text()


def load(name: str) -> ProblemSpec:
    """Parse a bundled problem by name, e.g. ``load("counterexample")``."""
    return parse_problem(source(name))
