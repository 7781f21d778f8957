"""
Thinning a common Poisson field and integrating against it
==========================================================

A single base field of points (t, r, h) on [0, T] x R x [0, lambda_bar]
drives every jump in the package.  A point is kept when its height h sits
below the intensity lambda(t, nu_{t-}, r).  Here we check the counts, the
martingale property of the compensated integral and the isometry.
"""

import numpy as np

from cmvjump.marked_poisson import constant_intensity, integrate_compensated, thin
from cmvjump.measures import MeasurePath, dirac
from cmvjump.noise import SeedSpec, UniformMarks, common_base_field

spec = SeedSpec(1, 2)
T, R = 5.0, 4000
env = MeasurePath.constant(dirac([0.0]))  # lambda is constant, so the environment is irrelevant
lam = constant_intensity([1.0], bound=[2.0])

counts, comp = np.empty(R), np.empty(R)
for rep in range(R):
    base = common_base_field(spec, rep, T, [UniformMarks()], [2.0])
    jumps = thin(base, lam, env)
    counts[rep] = jumps.total()
    comp[rep] = integrate_compensated(lambda t, r: np.ones((1, 1)), jumps, lam, [UniformMarks()], env, [0.0, T])[0]

# the accepted points form a Poisson process of rate 1
print(f"accepted count: mean {counts.mean():.3f}, variance {counts.var(ddof=1):.3f} (both should be {T})")

# N_T - T is a martingale with E[(N_T - T)^2] = T
se = comp.std(ddof=1) / np.sqrt(R)
print(f"compensated integral: mean {comp.mean():.4f} +- {se:.4f}, second moment {np.mean(comp**2):.3f}")

# raising the intensity can only add points: the coupling is monotone
base = common_base_field(spec, 0, T, [UniformMarks()], [2.0])
low = set(thin(base, constant_intensity([0.5], bound=[2.0]), env).times[0])
high = set(thin(base, constant_intensity([1.5], bound=[2.0]), env).times[0])
print(f"{len(low)} points at lambda=0.5, {len(high)} at lambda=1.5, nested: {low <= high}")
