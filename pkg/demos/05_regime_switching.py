"""
Regime switching driven by the common field
===========================================

The regime Y jumps from i to j at a point (t, u) of a Poisson field with
Lebesgue marks when u falls in the interval Gamma^(i,j), whose length is
the rate q_ij.  With q12 = 1 and q21 = 2 the chain spends 2/3 of the
time in the first state.
"""

import numpy as np

from cmvjump.integrator import (
    SimConfig,
    regime_base_field,
    regime_occupation,
    regime_transition_counts,
    simulate_regime_switching,
)
from cmvjump.model import RegimeSpec, build_regime_switching, constant_generator, regime_intervals, state_drifts
from cmvjump.noise import SeedSpec

Q = np.array([[-1.0, 1.0], [2.0, -2.0]])
print("intervals:", regime_intervals(Q, ["calm", "stress"]))

spec = RegimeSpec(["calm", "stress"], constant_generator(Q), H0=2.0)
# the population drifts up in calm periods and down under stress
model = build_regime_switching(spec, state_drifts([0.5, -1.0]), vol=0.3)

T, R = 200.0, 20
counts, holding, occ = np.zeros((2, 2)), np.zeros(2), []
for rep in range(R):
    cfg = SimConfig(T=T, dt=0.05, n=8, seed_spec=SeedSpec(5, 6), replication=rep)
    traj = simulate_regime_switching(model, cfg, regime_base_field(model, cfg))
    c, h = regime_transition_counts(traj.regime_path, T, 2)
    counts += c
    holding += h
    occ.append(regime_occupation(traj.regime_path, T, 2)[0])

print(f"{int(counts.sum())} switches")
print(f"estimated q12 = {counts[0, 1] / holding[0]:.3f}, q21 = {counts[1, 0] / holding[1]:.3f}")
print(f"time in calm: {np.mean(occ):.4f} (theory {2 / 3:.4f})")
