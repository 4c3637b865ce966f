"""Boundary terms of the transversality condition along a solved path.

On the third-order example the boundary term under a step perturbation is a
constant 1.0, so the Euler path fails the condition.  Under discounting the
Michel-style term (q = 0.5 c*) dies out geometrically.
"""

from eulertvc import assemble_system, classify_tvc, michel_series, problems, solve_truncated, tvc_series

ce = problems.load("counterexample")
path = solve_truncated(assemble_system(ce, 50)).path
series = tvc_series(ce, path, ce.perturbations["p"], 5, 50)
verdict = classify_tvc(series)
print("third-order example, step perturbation")
print("  B(T') for T' = 5..9:", series.values[:5])
print(f"  {verdict.classification}, liminf ~ {verdict.liminf_estimate}")

tr = problems.load("discounted_tracking")
path = solve_truncated(assemble_system(tr, 60, "pinned-initial")).path
series = michel_series(tr, path, 0.5, 10, 60, "pinned-initial")
verdict = classify_tvc(series)
print("\ndiscounted tracking, q = 0.5 c*")
for T, v in list(series.entries)[::10]:
    print(f"  T'={T:3d}  B={v: .3e}")
print(f"  {verdict.classification}, liminf ~ {verdict.liminf_estimate:.2e}")
