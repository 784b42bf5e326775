"""
Equilibrium consumption and investment
======================================

Build the baseline problem, tabulate the coefficient functions and read off
the equilibrium controls for three utility families.
"""

import numpy as np

from mvu import (
    ExponentialUtility,
    PowerUtility,
    baseline_spec,
    build_coefficients,
    consumption_star,
    dollar_amount_star,
    investment_star,
)

# r = 0.01, mu = 0.05, sigma = 0.2, gamma = beta = 1, T = 10, log utility
spec = baseline_spec()
co = build_coefficients(spec)
print("A(0) =", co.A[0], " b(0) =", co.b[0], " B(0) =", co.B[0], " q(0) =", co.q[0])

###############################################################################
# Consumption depends on time only.  It rises toward the horizon for every
# family and is scaled up by beta.
t = np.linspace(0.0, spec.T, 6)
for label, s in [("log, beta=1", spec),
                 ("power theta=0.1", spec.replace(utility=PowerUtility(0.1))),
                 ("exp eta=3, beta=10", spec.replace(utility=ExponentialUtility(3.0), beta=10.0))]:
    print(f"{label:20s}", np.round(consumption_star(s, t), 6))

###############################################################################
# The amount held in the stock does not depend on wealth, so the fraction
# pi* falls as 1/x.
print("dollar amount:", np.round(dollar_amount_star(spec, t), 6))
for x in (0.5, 1.0, 2.0):
    print(f"pi*(0, {x}) = {float(investment_star(spec, 0.0, x)):.6f}")
