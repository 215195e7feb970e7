"""
Local power and sample size under the density ratio model
=========================================================

Three gamma populations with a linear hypothesis on the tilts, then a
two- versus three-sample normal design testing the same hypothesis.
"""

import numpy as np

from drmtest import local_power, sample_size
from drmtest.power import compare_designs
from drmtest.scenarios import example1_design, example3_designs

# Gamma(2,1) baseline, basis (x, log x), H0: 2 beta_1 - beta_2 = 0
design = example1_design()
d2 = design.delta2()
print(f"delta^2 = {d2:.3f}, power = {local_power(d2, design.constraint.q, 0.05):.3f}")

# The information matrix and its Schur complement
U = design.information()
print("Lambda =\n", np.round(U.Lambda, 4))

# Fixed shifts: how many observations reach 80% power?
shifts = np.array([[0.5, 1.5], [0.5, 0.5]])
res = sample_size(0.8, 0.05, shifts, design.rho, design.f0, design.beta_star, design.constraint, design.basis)
print(f"n* = {res.n_star}: power {res.power_below:.3f} at n*-1, {res.power_at_n_star:.3f} at n*")

# Power curve in n
for n in (20, 30, 40, 50, 60, 80):
    print(n, round(local_power(n * res.delta2_per_n, design.constraint.q, 0.05), 3))

# Adding a third sample that the hypothesis does not mention
subset, pooled = example3_designs()
cmp = compare_designs(subset, pooled)
q = pooled.constraint.q
print(f"two samples:   delta^2 = {cmp.delta2_subset:.3f}, power = {local_power(cmp.delta2_subset, q, 0.05):.3f}")
print(f"three samples: delta^2 = {cmp.delta2_pooled:.3f}, power = {local_power(cmp.delta2_pooled, q, 0.05):.3f}")
