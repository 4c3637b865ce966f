"""Comparing two paths by their running difference of stage sums.

The third-order example's stage is convex in c(t), so raising the constant
tail from 0.625 to 0.725 gains 0.01 per period: the shifted path overtakes
the Euler path.
"""

import numpy as np

from eulertvc import Path, assemble_system, overtaking_compare, problems, solve_truncated

ce = problems.load("counterexample")
euler = solve_truncated(assemble_system(ce, 40)).path
shifted = euler.values.copy()
shifted[2:] += 0.1
cmp_ = overtaking_compare(ce, euler, Path(shifted), 40)
print("D(T') every 10 periods:", cmp_.D[::10])
print("per-period change in the tail:", np.diff(cmp_.D)[-1])
print("verdict:", cmp_.verdict)
