"""Solving the truncated Euler system for three bundled problems.

The third-order example has a closed-form Euler path (1, 0.75, 0.625, ...);
the tracking problem pins c(0) and is compared to its target a = 1; the
growth model is checked against its known policy k(t+1) = theta*delta*k(t)^theta.
"""

import numpy as np

from eulertvc import SolveOptions, assemble_system, problems, solve_truncated, steady_state

ce = problems.load("counterexample")
report = solve_truncated(assemble_system(ce, 20))
print("third-order example, T'=20")
print("  steady state:", steady_state(ce))
print("  c(0..5) =", np.round(report.path.values[:6, 0], 12))
print(f"  {report.iterations} Newton step(s), residual {report.final_residual_norm:.1e}")

tr = problems.load("discounted_tracking")
report = solve_truncated(assemble_system(tr, 60, "pinned-initial"))
c = report.path.values[:, 0]
print("\ndiscounted tracking, c(0) = 0 pinned")
print("  c(1), c(5), c(20), c(60):", c[1], c[5], c[20], c[60])

rm = problems.load("ramsey")
theta, delta = rm.params["theta"], rm.params["delta"]
report = solve_truncated(assemble_system(rm, 40, "pinned-initial"))
k = [0.2]
for _ in range(40):
    k.append(theta * delta * k[-1] ** theta)
gap = np.max(np.abs(report.path.values[:41, 0] - k))
print("\ngrowth model, k(0) = 0.2")
print(f"  max |k(t) - closed-form policy| for t <= 40: {gap:.1e}")

# replicate-last closes the tail without a steady state
opts = SolveOptions(tail_policy="replicate-last")
alt = solve_truncated(assemble_system(tr, 60, "pinned-initial"), opts)
print("  tracking with replicate-last tail, c(20):", alt.path.values[20, 0])
