"""The difference-quotient grid A(T', eps) and its two iterated limits.

Around the steady path of the third-order example every entry is
eps*T' + 0.75: letting T' grow first blows up, letting eps shrink first
gives 0.75.  The discounted tracking problem shows the two orders agreeing.
"""

import numpy as np

from eulertvc import Path, assemble_system, assess_assumptions, build_a_grid, problems
from eulertvc import solve_truncated, steady_state
from eulertvc.diagnostics import DEFAULT_EPS, DEFAULT_T_AXIS

ce = problems.load("counterexample")
H = max(DEFAULT_T_AXIS) + ce.order - 1
ref = Path.constant(steady_state(ce), H, 1)
grid = build_a_grid(ce, ref, ce.perturbations["p"], DEFAULT_EPS, DEFAULT_T_AXIS)
np.set_printoptions(precision=6, suppress=True)
print("third-order example, rows T' =", grid.T_values, ", columns eps =", grid.eps_values)
print(grid.A)
v = assess_assumptions(grid)
print(f"L1 = {v.L1}, L2 = {v.L2:.9f}: {v.classification}")

tr = problems.load("discounted_tracking")
path = solve_truncated(assemble_system(tr, H, "pinned-initial")).path
grid = build_a_grid(tr, path, tr.perturbations["p"], DEFAULT_EPS, DEFAULT_T_AXIS, "pinned-initial")
v = assess_assumptions(grid)
print(f"\ndiscounted tracking: L1 = {v.L1:.3e}, L2 = {v.L2:.3e}: {v.classification}")
