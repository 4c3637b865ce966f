"""Parsing a problem file, printing it back, and differentiating one stage.

Run with ``python demos/01_problem_files.py``.
"""

import numpy as np

from eulertvc import StageEnv, grad_stage, parse_problem, print_canonical, tokenize
from eulertvc.dsl import DSLError

SOURCE = """
# a third-order stage: each period sees c(t), c(t+1) and c(t+2)
params alpha=1.0 beta=0.5 gamma=0.25
utility U = (c(t) - alpha)^2 + beta*c(t+1) + gamma*c(t+2)
perturb p = step(t0=1, level=1.0)
"""

spec = parse_problem(SOURCE)
print(f"order N = {spec.order}, components n = {spec.dim}")
print(f"the utility line lexes into {len(tokenize(SOURCE.splitlines()[3]))} tokens")
print("\ncanonical form:")
print(print_canonical(spec))

# gradient of one stage with respect to its whole window, at c = 0.625 everywhere
env = StageEnv(time=3, window=np.full((1, 3), 0.625), params=spec.params)
print("\ndU/dc(t..t+2) at the steady value:", grad_stage(spec.utility, env)[0])

# errors carry a line:column position
try:
    parse_problem("params a=1\nutility U = a*c(t) + b*c(t+1)")
except DSLError as exc:
    print("\nrejected:", exc)
