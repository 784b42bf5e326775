"""
Value function and terminal-wealth moments
==========================================

The value is affine in wealth and splits into mean, variance and
accumulated utility.
"""

import numpy as np

from mvu import (
    baseline_spec,
    build_coefficients,
    objective_of_triple,
    terminal_mean,
    terminal_second_moment,
    terminal_variance,
    value_function,
)

spec = baseline_spec()
co = build_coefficients(spec)

x = 1.0
V = float(value_function(spec, co, 0.0, x))
mean = float(terminal_mean(spec, co, 0.0, x))
var = float(terminal_variance(spec, co, 0.0))
print(f"V = {V:.9f}  mean = {mean:.6f}  variance = {var:.6f}")
print(f"second moment = {float(terminal_second_moment(spec, co, 0.0, x)):.9f}")

###############################################################################
# Recombine the pieces: V = mean - (gamma/2) variance + beta q.
rebuilt = objective_of_triple(mean, float(terminal_second_moment(spec, co, 0.0, x)), float(co.q_at(0.0)), spec.prefs)
print("identity error:", abs(rebuilt - V))

###############################################################################
# Investment risk does not depend on the consumption rule: the variance is
# the same linear function of remaining time for every utility and beta.
t = np.linspace(0.0, spec.T, 5)
print("variance:", terminal_variance(spec, co, t))
print("law     :", 0.04**2 * (spec.T - t) / 0.04)
