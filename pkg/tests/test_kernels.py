import math

import numpy as np
import pytest

from jumplab.kernels import (
    JumpKernel,
    Model,
    ValidationError,
    check_j_integrability,
    check_j_lower_bound,
    check_ujs,
    check_uniform_ellipticity,
    divergence_drift,
    jump_intensity_tail,
    small_jump_moments,
    zero_kernel,
)
from jumplab.models import (
    MODEL_ZOO,
    _identity_field,
    _rotation_field,
    _scalar_profile_field,
    comparability_kernel,
    load_model,
)
from jumplab.scaling import power_scale


def test_ellipticity_identity_field():
    field = _identity_field(2)
    pts = np.random.default_rng(0).uniform(-3, 3, size=(64, 2))
    lo, hi = check_uniform_ellipticity(field, pts)
    assert lo == pytest.approx(1.0, abs=1e-12)
    assert hi == pytest.approx(1.0, abs=1e-12)


def test_ellipticity_scalar_profile_range():
    field = _scalar_profile_field(1, 1.0, 0.5)
    pts = np.linspace(-np.pi, np.pi, 257)[:, None]  # includes +-pi/2
    lo, hi = check_uniform_ellipticity(field, pts)
    assert lo == pytest.approx(0.5, abs=1e-12)
    assert hi == pytest.approx(1.5, abs=1e-12)


def test_ellipticity_rotation_field_spectrum():
    field = _rotation_field(0.7, 1.3)
    pts = np.random.default_rng(1).uniform(-4, 4, size=(128, 2))
    lo, hi = check_uniform_ellipticity(field, pts)
    assert lo == pytest.approx(0.7, abs=1e-9)
    assert hi == pytest.approx(1.3, abs=1e-9)


def test_ellipticity_rejects_asymmetric_matrix():
    def bad(x):
        out = np.broadcast_to(np.array([[1.0, 0.2], [0.1, 1.0]]), x.shape[:-1] + (2, 2))
        return out.copy()

    from jumplab.kernels import DiffusionField

    field = DiffusionField(dim=2, matrix=bad, ellipticity=2.0)
    with pytest.raises(ValidationError):
        check_uniform_ellipticity(field, np.zeros((3, 2)))


def test_divergence_drift_constant_field_is_zero():
    field = _identity_field(2)
    assert np.allclose(divergence_drift(field, np.zeros((5, 2))), 0.0)


def test_divergence_drift_scalar_profile():
    field = _scalar_profile_field(1, 1.0, 0.5)
    b = divergence_drift(field, np.array([0.0]))
    assert b[0] == pytest.approx(0.25, abs=1e-12)


def test_divergence_drift_finite_difference_order_two():
    analytic = _scalar_profile_field(2, 1.0, 0.4)
    from jumplab.kernels import DiffusionField

    fd_field = DiffusionField(dim=2, matrix=analytic.matrix, ellipticity=analytic.ellipticity)
    x = np.array([0.3, -0.7])
    exact = divergence_drift(analytic, x)
    errs = []
    for h in (1e-2, 5e-3):
        errs.append(np.abs(divergence_drift(fd_field, x, h=h) - exact).max())
    order = math.log(errs[0] / errs[1]) / math.log(2.0)
    assert order > 1.9


def test_integrability_power_half_value():
    # oracle: 2 (int_0^1 z^{1/2} dz + int_1^inf z^{-3/2} dz) = 2 (2/3 + 2) = 16/3
    kernel = load_model("stable-half-1d").jump
    rep = check_j_integrability(kernel, np.zeros((1, 1)))
    assert rep.passed
    assert rep.value == pytest.approx(16.0 / 3.0, rel=1e-6)


def test_integrability_zero_kernel():
    rep = check_j_integrability(zero_kernel(1), np.zeros((2, 1)))
    assert rep.passed
    assert rep.value == 0.0


def test_integrability_mixture_matches_brute_force():
    kernel = load_model("mixture-1d").jump
    rep = check_j_integrability(kernel, np.zeros((1, 1)))
    assert math.isfinite(rep.value) and rep.value > 0
    # independent oracle: dense log-grid Riemann sum of (z^2 ^ 1) J(z)
    z = np.geomspace(1e-8, 1e8, 400001)
    integrand = np.minimum(z * z, 1.0) * kernel.radial_profile(z)
    brute = 2.0 * float(np.trapezoid(integrand, z))
    assert rep.value == pytest.approx(brute, rel=0.01)


def test_lower_bound_comparability_positive():
    kernel = load_model("reference").jump
    rep = check_j_lower_bound(kernel, [0.1, 0.4])
    assert rep.passed
    assert rep.value > 0


def test_lower_bound_truncated_kernel_fails():
    kernel = comparability_kernel(1, power_scale(1.0), cutoff=0.5)
    kernel.delta0 = 1.0
    rep = check_j_lower_bound(kernel, [0.8])
    assert not rep.passed
    assert rep.value == 0.0


def test_lower_bound_stable_kernel_small_radius():
    kernel = load_model("stable-half-1d").jump
    rep = check_j_lower_bound(kernel, [0.1])
    assert rep.passed


def test_ujs_power_kernel_constant_near_ball_normalization():
    # for a locally flat kernel the realized constant tends to r^d/|B_r|,
    # which is 1/2 in d = 1
    kernel = load_model("stable-half-1d").jump
    pairs = [(np.array([0.0]), np.array([1.0])), (np.array([0.3]), np.array([-0.9]))]
    rep = check_ujs(kernel, pairs, radii=[0.02, 0.05])
    assert rep.passed
    assert rep.value == pytest.approx(0.5, rel=0.05)


def test_ujs_oscillating_kernel_flagged_large():
    base = load_model("stable-half-1d").jump

    def osc(x, y):
        # symmetric gate concentrated on thin spikes of the pair midpoint
        mid = 0.5 * (np.asarray(x)[..., 0] + np.asarray(y)[..., 0])
        gate = np.where(np.sin(200.0 * mid) > 0.995, 1.0, 1e-3)
        return base.evaluate(x, y) * gate

    kernel = JumpKernel(dim=1, evaluate=osc, scale=base.scale, kappa_low=0.0,
                        kappa_up=base.kappa_up, kappa0=base.kappa0, beta=base.beta)
    peak_mid = (math.pi / 2 + 32 * math.pi) / 200.0
    x0 = 2 * peak_mid - 1.0
    pairs = [(np.array([x0]), np.array([1.0]))]  # J(x, y) sits on a gate spike
    rep = check_ujs(kernel, pairs, radii=[0.1])
    base_rep = check_ujs(base, pairs, radii=[0.1])
    assert rep.value > 5.0 * base_rep.value


def test_ujs_radius_precondition():
    kernel = load_model("stable-half-1d").jump
    with pytest.raises(ValidationError):
        check_ujs(kernel, [(np.array([0.0]), np.array([0.5]))], radii=[0.3])


def test_tail_intensity_power_half():
    kernel = load_model("stable-half-1d").jump
    val = jump_intensity_tail(kernel, np.array([0.0]), 1.0)
    assert val == pytest.approx(4.0, rel=1e-8)


def test_tail_monotone_vanishing():
    kernel = load_model("reference").jump
    lams = [0.5, 1.0, 2.0, 8.0, 32.0]
    vals = [jump_intensity_tail(kernel, np.array([0.0]), l) for l in lams]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.2


def test_tail_envelope_window_for_comparability_kernels():
    # tail(lam) * phi(lam) stays inside constants computed from the
    # comparability window and the scaling exponents
    model = load_model("mixture-1d")
    kernel = model.jump
    phi = kernel.scale
    d = kernel.dim
    surf = 2.0
    c = phi.comp_const
    hi = surf * kernel.kappa_up * c / phi.beta1
    lo = surf * kernel.kappa_low / (c * phi.beta2)
    for lam in np.geomspace(1e-2, 1e2, 9):
        val = jump_intensity_tail(kernel, np.array([0.0]), float(lam)) * phi(lam)
        assert lo * (1 - 1e-6) <= val <= hi * (1 + 1e-6)


def test_small_jump_moments_isotropic_mean_zero():
    kernel = load_model("reference").jump
    m, c, delta = small_jump_moments(kernel, np.array([0.0]), 0.5)
    assert abs(m[0]) < 1e-12
    assert delta == pytest.approx(c[0, 0], rel=1e-12)


def test_small_jump_second_moment_value():
    # oracle: 2 int_0^1 z^{1/2} dz = 4/3 for J = |z|^{-3/2}
    kernel = load_model("stable-half-1d").jump
    _, c, delta = small_jump_moments(kernel, np.array([0.0]), 1.0)
    assert delta == pytest.approx(4.0 / 3.0, rel=1e-8)


def test_delta_monotone_and_vanishing():
    kernel = load_model("reference").jump
    eps = [1e-3, 1e-2, 1e-1, 1.0]
    deltas = [small_jump_moments(kernel, np.array([0.0]), e)[2] for e in eps]
    assert all(a < b for a, b in zip(deltas, deltas[1:]))
    assert deltas[0] < 1e-2


def test_zoo_models_validate():
    for name in MODEL_ZOO:
        model = load_model(name)
        report = model.validate(n_points=128)
        assert "ellipticity" in report


def test_kernel_symmetry_random_pairs():
    rng = np.random.default_rng(12)
    for name in ("reference", "mixture-1d", "truncated-reference"):
        kernel = load_model(name).jump
        xs = rng.uniform(-4, 4, size=(10000, 1))
        zs = rng.uniform(-3, 3, size=(10000, 1))
        ys = xs + zs
        a = kernel.j_between(xs, ys)
        b = kernel.j_between(ys, xs)
        denom = np.maximum(np.abs(a), np.abs(b))
        ok = denom > 0
        assert np.all(np.abs(a - b)[ok] / denom[ok] <= 1e-12)


def test_validate_catches_wrong_envelope():
    model = load_model("reference")
    model.jump.kappa_up = 0.5  # declared window now below the true kernel
    with pytest.raises(ValidationError):
        model.validate()


def test_validate_catches_wrong_ellipticity():
    field = _scalar_profile_field(1, 1.0, 0.5)
    field.ellipticity = 1.2  # true range [0.5, 1.5]
    model = Model(field, zero_kernel(1))
    with pytest.raises(ValidationError):
        model.validate()


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        Model(_identity_field(2), zero_kernel(1))
