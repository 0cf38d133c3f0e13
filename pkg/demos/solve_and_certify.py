"""Walkthrough: solve a complementarity-constrained program and certify
what kind of point the shrinking-width trajectory converges to.

The program (bundled as ``example1``) has a degenerate corner at
x = (0, 0, 0, 1) where both factors of the first complementarity pair
vanish.  We follow the kinked relaxation for a few widths, then ask the
multiplier and curvature machinery what the limit point is.

Run with:  python3 demos/solve_and_certify.py
"""

import numpy as np

from mpccreg.analysis import diagnostics_text, trajectory_diagnostics
from mpccreg.bench import load_corpus
from mpccreg.disjunctive import solve_disjunctive
from mpccreg.model import print_problem
from mpccreg.regularize import disjunctive

problem = next(e.problem for e in load_corpus() if e.problem.name == "example1")
print(print_problem(problem))
print()

# Chase the relaxed minimizer through three widths, warm-starting each
# solve at the previous point.
runs = []
x = problem.start_array
for t in (0.1, 0.01, 0.001):
    sol = solve_disjunctive(disjunctive(problem, t), x0=x)
    x = sol.x
    runs.append((t, sol.x))
    print(f"t = {t:<6g} -> x = {np.round(sol.x, 6)}   f = {sol.f:.6f}   "
          f"pattern {sol.pattern}, {sol.stationarity}-stationary")

# The iterates head for the degenerate corner; certify it.
x_limit = np.array([0.0, 0.0, 0.0, 1.0])
report = trajectory_diagnostics(problem, runs, x_limit)
print()
print("What the trajectory converged to:")
print(diagnostics_text(report))
