"""Run every kernel/field hypothesis check on a shipped model.

Covers ellipticity extremes, symmetry, tail integrability, lower
nondegeneracy of near-pair jump mass, the pointwise-vs-ball-average
comparability, tail intensity, and the small-jump moments that drive both
the simulator corrections and the exponential-perturbation bound.
"""

import numpy as np

from jumplab import load_model
from jumplab.kernels import (
    check_j_integrability,
    check_j_lower_bound,
    check_ujs,
    check_uniform_ellipticity,
    jump_intensity_tail,
    small_jump_moments,
)

model = load_model("mixture-1d")
print(f"model: {model.name}  (A: {model.diffusion.description}; J: {model.jump.description})")

report = model.validate()
print("declared-hypothesis validation:", report)

pts = np.linspace(-4, 4, 129)[:, None]
lo, hi = check_uniform_ellipticity(model.diffusion, pts)
print(f"realized ellipticity window: [{lo:.4f}, {hi:.4f}]")

integ = check_j_integrability(model.jump, np.zeros((1, 1)))
print(f"sup_x int (|z|^2 ^ 1) J dz = {integ.value:.4f}  (finite: {integ.passed})")

low = check_j_lower_bound(model.jump, [0.1, 0.4])
print(f"near-pair jump mass minima: {low.detail}  (positive: {low.passed})")

ujs = check_ujs(model.jump, [(np.array([0.0]), np.array([1.0]))], radii=[0.05, 0.2])
print(f"pointwise/ball-average constant: {ujs.value:.4f}")

for lam in (0.25, 1.0, 4.0):
    print(f"jump intensity beyond {lam}: {jump_intensity_tail(model.jump, np.zeros(1), lam):.4f}")

for eps in (0.05, 0.2):
    m, c, delta = small_jump_moments(model.jump, np.zeros(1), eps)
    print(f"eps={eps}: small-jump mean {m[0]:+.2e}, second moment {c[0,0]:.5f}, trace {delta:.5f}")
