import math

import numpy as np
import pytest

from jumplab.bounds import (
    EnvelopeConstants,
    classify_region,
    crossover_radius,
    davies_minimized_bound,
    davies_truncated_bound,
    envelope,
    gaussian_situation_form,
    on_diagonal_profile,
    optimized_F,
    p_c,
    p_j,
    polynomial_situation_form,
    region_sweep,
)
from jumplab.scaling import MixtureMeasure, mixed_stable_phi, power_scale, rescaled_scale

PHI = power_scale(1.0)


def test_p_c_values():
    assert p_c(1.0, 0.0, 1) == pytest.approx(1.0)
    assert p_c(1.0, 0.0, 3) == pytest.approx(1.0)
    assert p_c(1.0, 1.0, 2) == pytest.approx(math.exp(-1.0))
    r = np.linspace(0.0, 3.0, 20)
    vals = p_c(0.7, r, 2)
    assert np.all(np.diff(vals) < 0)


def test_p_c_domain():
    with pytest.raises(ValueError):
        p_c(0.0, 1.0, 1)
    with pytest.raises(ValueError):
        p_c(-1.0, 1.0, 1)


def test_p_j_power_law_form():
    # phi = r^alpha: p_j = t^{-d/alpha} ^ t / r^{d+alpha}
    phi = power_scale(0.5)
    t, r, d = 0.3, 1.7, 1
    expected = min(t ** (-d / 0.5), t / r ** (d + 0.5))
    assert p_j(t, r, phi, d) == pytest.approx(expected, rel=1e-9)
    assert p_j(1.0, 1.0, PHI, 1) == pytest.approx(1.0)


def test_p_j_on_diagonal_at_zero():
    t = 0.2
    assert p_j(t, 0.0, PHI, 1) == pytest.approx(PHI.inverse(t) ** -1.0, rel=1e-9)


def test_p_j_branch_continuity_at_crossover():
    phi = mixed_stable_phi(MixtureMeasure(atoms=[(0.5, 0.5), (1.5, 0.5)]))
    for t in (0.05, 0.4, 3.0):
        r_star = crossover_radius(t, phi, 1)
        diag = phi.inverse(t) ** -1.0
        far = t / (r_star * phi(r_star))
        assert far == pytest.approx(diag, rel=1e-8)


def test_envelope_on_diagonal_branch_at_zero_distance():
    consts = EnvelopeConstants()
    for t in (0.01, 0.5, 4.0):
        val = envelope(t, 0.0, PHI, 1, consts, "upper")
        assert val == pytest.approx(on_diagonal_profile(t, PHI, 1), rel=1e-12)


def test_envelope_sides_ordered():
    consts = EnvelopeConstants(c1=0.2, c2=2.0, c3=3.0, c4=0.5)
    ts = np.geomspace(1e-2, 5.0, 12)
    rs = np.geomspace(1e-2, 5.0, 12)
    for t in ts:
        lo = envelope(float(t), rs, PHI, 1, consts, "lower")
        hi = envelope(float(t), rs, PHI, 1, consts, "upper")
        assert np.all(lo <= hi * (1 + 1e-12))


def test_envelope_constants_validation():
    with pytest.raises(ValueError):
        EnvelopeConstants(c1=2.0, c3=1.0)
    with pytest.raises(ValueError):
        EnvelopeConstants(c2=0.5, c4=1.0)
    with pytest.raises(ValueError):
        EnvelopeConstants(c1=-1.0)
    with pytest.raises(ValueError):
        envelope(1.0, 1.0, PHI, 1, EnvelopeConstants(), "middle")


def test_jump_dominance_example_short_time():
    # phi = r, d = 1, t = 0.01, R = 0.5: jump term 0.04 dwarfs the Gaussian term
    rep = classify_region(0.01, 0.5, PHI, 1)
    assert rep.dominant == "jump"
    assert rep.terms["jump"] == pytest.approx(0.04, rel=1e-9)
    assert rep.terms["gaussian"] < 1e-9


def test_davies_bound_small_s_limit():
    t, big_r, lam, delta = 0.3, 1.0, 0.5, 0.2
    base = t ** (-0.5)
    val = davies_truncated_bound(t, big_r, 1e-9, lam, 1, delta)
    assert val == pytest.approx(base, rel=1e-6)


def test_davies_domain():
    with pytest.raises(ValueError):
        davies_truncated_bound(0.0, 1.0, 1.0, 1.0, 1, 0.1)
    with pytest.raises(ValueError):
        davies_truncated_bound(1.0, 1.0, -1.0, 1.0, 1, 0.1)


def test_davies_minimized_recovers_gaussian_rate():
    # delta = 0: minimizing -sR + c2 s^2 t gives exp(-R^2/(4 c2 t))
    t, big_r, c2 = 0.25, 1.5, 1.0
    val, s_star = davies_minimized_bound(t, big_r, 1e-6, 1, 0.0, c1=1.0, c2=c2, n_grid=4001)
    expected = t ** (-0.5) * math.exp(-big_r**2 / (4 * c2 * t))
    assert val == pytest.approx(expected, rel=1e-3)
    assert s_star == pytest.approx(big_r / (2 * c2 * t), rel=1e-2)


def test_optimized_F_situation_tag_example():
    # R^2 = 4t with the jump-side inequality satisfied -> regime (i)
    res = optimized_F(0.25, 1.0, PHI, 1, 1.0)
    assert res.situation == "i"
    assert res.lam == pytest.approx(1.0 / 24.0)


def test_optimized_F_closed_form_regime_i():
    # phi_r(R)/t = e makes s * (H R) = 2 and F evaluable by substitution
    big_r = 2.0
    t = PHI(big_r) / math.e
    res = optimized_F(t, big_r, PHI, 1, 1.0)
    assert res.situation == "i"
    h_const = 1.0 / 24.0
    lam = h_const * big_r
    s = 2.0 / lam
    expected_log = -s * big_r / 3.0 + (s * s + math.exp(2.0) / PHI(lam)) * t
    assert res.s == pytest.approx(s, rel=1e-12)
    assert res.log_value == pytest.approx(expected_log, rel=1e-12)


def test_optimized_F_regime_ii_via_zoomed_scale():
    pr = rescaled_scale(PHI, 0.01)
    res = optimized_F(1.0, 1.5, pr, 1, 1.0)
    assert res.situation == "ii"
    assert res.s == pytest.approx(1.5 / 6.0)
    k_const = (1.0 / 24.0) / 6.0
    assert res.lam == pytest.approx(k_const * 1.5 / 6.0, rel=1e-12)
    # direct substitution into the exponential test value
    expected_log = -res.s * 1.5 / 3.0 + (res.s**2 + math.exp(res.s * res.lam) / pr(res.lam))
    assert res.log_value == pytest.approx(expected_log, rel=1e-12)


def test_optimized_F_not_applicable_corner():
    # inequality of regime (i) holds but R^2 < t: explicitly not applicable
    res = optimized_F(2.0, 1.0, PHI, 1, 1.0)
    assert res.situation == "not-applicable"
    assert "R^2 < t" in res.reason


def test_situation_form_shapes():
    assert polynomial_situation_form(0.1, 2.0, PHI, 1) == pytest.approx((0.1 / 2.0) ** 2)
    assert gaussian_situation_form(0.1, 1.2, 1.0) == pytest.approx(math.exp(-1.44 / 3.6))


def test_classify_examples():
    assert classify_region(0.04, 0.5, PHI).case == 5
    assert classify_region(2.0, 0.5, PHI).case == 2
    assert classify_region(0.5, 2.0, PHI).case == 3
    assert classify_region(1.0, 2.0, PHI).case == 3  # precedence over case 4 at t = 1
    assert classify_region(2.0, 4.0, PHI).case == 4
    assert classify_region(0.4, 0.3, power_scale(0.5)).case == 1  # R^2 < t < phi(R) <= 1


def test_classify_domain():
    with pytest.raises(ValueError):
        classify_region(0.0, 1.0, PHI)


def test_partition_unique_on_grid():
    t_grid = np.geomspace(1e-3, 10.0, 256)
    r_grid = np.geomspace(1e-3, 10.0, 256)
    for phi in (PHI, power_scale(0.5), mixed_stable_phi(MixtureMeasure(atoms=[(0.5, 0.5), (1.5, 0.5)]))):
        _, _, case, _, _ = region_sweep(phi, 1, t_grid, r_grid)
        assert int((case == 0).sum()) == 0
        # boundary lines get exactly one label too
        for t, r in [(0.25, 0.5), (1.0, 1.0), (0.5, 0.5)]:
            classify_region(t, r, phi)  # must not raise


def test_sweep_matches_pointwise_classifier():
    t_grid = np.geomspace(1e-2, 5.0, 24)
    r_grid = np.geomspace(1e-2, 5.0, 24)
    tt, rr, case, dom, _ = region_sweep(PHI, 1, t_grid, r_grid)
    labels = ("on-diagonal", "gaussian", "jump")
    for i in range(0, 24, 5):
        for j in range(0, 24, 5):
            rep = classify_region(float(tt[i, j]), float(rr[i, j]), PHI)
            assert rep.case == int(case[i, j])
            assert rep.dominant == labels[dom[i, j]]
