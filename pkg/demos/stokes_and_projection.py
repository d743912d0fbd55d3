"""Refine the unit square, solve steady Stokes, and watch the discrete
Helmholtz projection converge.

Runs in well under a minute:  python demos/stokes_and_projection.py
"""
import numpy as np

from mini_sns import assemble_level, helmholtz_project
from mini_sns.lab import inf_sup_constant, measure_projection_rate
from mini_sns.operators import project_function, solve_discrete_stokes
from mini_sns.rates import fit_eoc

# A divergence-free field with zero boundary trace: curl of sin(pi x)^2 sin(pi y)^2.
def exact(x, y):
    s, c = np.sin(np.pi * x), np.cos(np.pi * x)
    t, d = np.sin(np.pi * y), np.cos(np.pi * y)
    return np.stack([2 * np.pi * s**2 * t * d, -2 * np.pi * s * c * t**2])


print("level   free dofs   ||P_h u0||_L2   inf-sup")
for level in range(1, 5):
    ops = assemble_level(level)
    v = project_function(ops, exact)
    print(f"{level:5d} {ops.n_velocity:11d} {ops.l2_norm(v):15.6f} {inf_sup_constant(level):9.4f}")

# Projecting an already solenoidal field twice changes nothing.
ops = assemble_level(3)
raw = np.random.default_rng(1).standard_normal(ops.n_velocity)
p = helmholtz_project(ops, raw)[0]
pp = helmholtz_project(ops, p)[0]
print("\nidempotency defect at level 3:", ops.l2_norm(pp - p) / ops.l2_norm(p))

# Stokes solves with a smooth load: the H1 seminorm of the solution settles.
h1 = []
for level in range(1, 6):
    ops = assemble_level(level)
    f = ops.M @ project_function(ops, exact)
    h1.append(ops.h1_seminorm(solve_discrete_stokes(ops, f, dual=True)))
print("\n|A_h^-1 f|_H1 by level:", np.round(h1, 6))
diffs = np.abs(np.diff(h1))
print("successive differences:", diffs, " observed order", fit_eoc(diffs, [2.0**-k for k in range(1, 5)]).slope)

est = measure_projection_rate((1, 2, 3))
print(f"\n(I - P_h) on smooth fields: norms {np.round(est.norms, 6)}, slope {est.slope:.2f} (expect about 2)")
