"""
Falsifying declared constants, and the Gronwall envelope
========================================================

The validators search random atom measures for a violation of the
declared Lipschitz, growth and fourth-moment constants.  Halving the
declared K is caught.  The envelope G^-1(G(a) + k t) is compared to a
direct quadrature-and-bisection solution.
"""

import numpy as np

from cmvjump.chaos import gronwall_envelope, gronwall_oracle
from cmvjump.model import SystemicRiskParams, build_systemic_risk, validate_all, validate_lipschitz

model = build_systemic_risk(SystemicRiskParams(), lambda_bar=5.0)
rng = np.random.default_rng(0)
for rep in validate_all(model, 1000, rng):
    print(f"{rep.name:14s} {'PASS' if rep.passed else 'FAIL'}  worst ratio {rep.max_ratio:.3f}")
# the fourth moment is a Monte Carlo estimate, judged with 3 standard errors of slack
d = rep.details
print(f"  fourth moment estimate {d['estimate']:.4f} +- {d['se']:.4f}, declared {d['gamma_star']:.4f}")

halved = model.with_constants(K=model.constants.K / 2, K0=model.constants.K0 / 2)
rep = validate_lipschitz(halved, 1000, rng)
print(f"halved K: {'PASS' if rep.passed else 'FAIL'} (worst ratio {rep.max_ratio:.3f})")

for a, kt in [(0.04, 0.0), (0.04, 2.0), (1.0, 1.0), (0.0, 1.0)]:
    env = gronwall_envelope(a, 1.0, kt, eps=0.01)
    print(f"a={a:<5} kt={kt:<4} envelope {env:.10f}  oracle {gronwall_oracle(a, kt):.10f}")
