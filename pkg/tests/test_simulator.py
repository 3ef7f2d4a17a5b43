import math
from dataclasses import replace

import numpy as np
import pytest

from jumplab.kernels import ModelError, small_jump_moments
from jumplab.models import comparability_kernel, load_model
from jumplab.scaling import power_scale
from jumplab.simulator import (
    ConfigError,
    SimConfig,
    _RadialMajorant,
    ensemble_histogram,
    ensemble_to_csv_rows,
    events_to_records,
    exit_statistics,
    hitting_tail,
    levy_system_check,
    sample_big_jump,
    simulate_paths,
)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(dt=0.0, eps=0.1)
    with pytest.raises(ConfigError):
        SimConfig(dt=1e-3, eps=-0.1)
    with pytest.raises(ConfigError):
        SimConfig(dt=1e-3, eps=0.2, r_max=0.1)


def test_stability_budget_enforced():
    m = load_model("reference")
    cfg = SimConfig(dt=1e-2, eps=0.01, seed=1)  # dt * rate = 2.0
    with pytest.raises(ConfigError, match="stability"):
        simulate_paths(m, 0.0, 0.1, [0.1], cfg, 10)


def test_horizon_must_resolve():
    m = load_model("pure-diffusion-1d")
    cfg = SimConfig(dt=1e-3, eps=0.1, seed=1)
    with pytest.raises(ConfigError):
        simulate_paths(m, 0.0, 0.10051, [0.1], cfg, 10)


def test_brownian_terminal_law():
    m = load_model("pure-diffusion-1d")
    cfg = SimConfig(dt=1e-3, eps=0.1, seed=42)
    ens = simulate_paths(m, 0.0, 1.0, [1.0], cfg, 20000)
    x = ens.terminal[:, 0]
    assert abs(x.mean()) <= 3.0 / math.sqrt(ens.n)
    assert abs(x.var() - 1.0) <= 4.0 * math.sqrt(2.0 / ens.n)
    assert ens.alive.all()
    assert ens.event_path.size == 0


def test_determinism_and_chunk_independence():
    m = load_model("reference")
    cfg = SimConfig(dt=2e-3, eps=0.1, seed=7)
    a = simulate_paths(m, 0.0, 0.2, [0.1, 0.2], cfg, 4000)
    b = simulate_paths(m, 0.0, 0.2, [0.1, 0.2], cfg, 4000)
    assert np.array_equal(a.terminal, b.terminal)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.event_time, b.event_time)
    c = simulate_paths(m, 0.0, 0.2, [0.1, 0.2], replace(cfg, chunk_size=613), 4000)
    assert np.array_equal(a.terminal, c.terminal)
    assert np.array_equal(a.event_size, c.event_size)


def test_stream_tag_changes_draws():
    m = load_model("pure-diffusion-1d")
    cfg = SimConfig(dt=1e-2, eps=0.1, seed=7)
    a = simulate_paths(m, 0.0, 0.2, [0.2], cfg, 100)
    b = simulate_paths(m, 0.0, 0.2, [0.2], replace(cfg, stream_tag=1), 100)
    assert not np.array_equal(a.terminal, b.terminal)


def test_snapshots_include_time_zero():
    m = load_model("pure-diffusion-1d")
    cfg = SimConfig(dt=1e-2, eps=0.1, seed=3)
    ens = simulate_paths(m, 0.7, 0.1, [0.0, 0.05, 0.1], cfg, 50)
    assert np.all(ens.positions[:, 0, 0] == 0.7)
    assert np.array_equal(ens.positions[:, 2, :], ens.terminal)


def test_exit_times_brownian_identity():
    m = load_model("pure-diffusion-1d")
    cfg = SimConfig(dt=1.0 / 400, eps=0.1, seed=5)
    stats = exit_statistics(m, 0.0, [0.5, 1.0], cfg, 3000)
    by_r = {s.radius: s for s in stats}
    assert by_r[1.0].ci95[0] <= 1.0 <= by_r[1.0].ci95[1]
    # doubling the radius quadruples the mean exit time
    ratio = by_r[1.0].mean / by_r[0.5].mean
    se = ratio * math.hypot(by_r[1.0].sem / by_r[1.0].mean, by_r[0.5].sem / by_r[0.5].mean)
    assert abs(ratio - 4.0) <= 3.0 * se


def test_exit_time_d2():
    m = load_model("pure-diffusion-2d")
    cfg = SimConfig(dt=1.0 / 400, eps=0.1, seed=6)
    (s,) = exit_statistics(m, [0.0, 0.0], [1.0], cfg, 3000)
    assert s.ci95[0] <= 0.5 <= s.ci95[1]


def test_mass_conservation_and_truncation_budget():
    m = load_model("reference")
    cfg = SimConfig(dt=1e-3, eps=0.05, seed=11)
    ens = simulate_paths(m, 0.0, 0.2, [0.2], cfg, 30000)
    # alive is exactly the complement of logged losses
    assert np.array_equal(ens.alive, ~(ens.truncated | ens.killed))
    maj = _RadialMajorant(m.jump, cfg.eps)
    # default cap: envelope tail rate * horizon <= 1e-4
    frac = ens.truncated.mean()
    se = math.sqrt(frac * (1 - frac) / ens.n + 1e-12)
    assert frac <= 1e-4 + 3 * se


def test_event_budget_flags_paths():
    m = load_model("reference")
    cfg = SimConfig(dt=1e-3, eps=0.05, seed=13, max_events=2)
    ens = simulate_paths(m, 0.0, 0.2, [0.2], cfg, 2000)
    assert ens.budget_exceeded.any()
    assert ens.alive[ens.budget_exceeded].all()  # flagged, not dropped


def test_killing_ball():
    m = load_model("pure-diffusion-1d")
    cfg = SimConfig(dt=1e-3, eps=0.1, seed=17, kill_ball=(np.array([0.0]), 0.5))
    ens = simulate_paths(m, 0.0, 0.5, [0.5], cfg, 2000)
    assert ens.killed.any()
    assert np.all(np.abs(ens.terminal[ens.killed, 0]) >= 0.5)
    assert np.array_equal(ens.alive, ~(ens.truncated | ens.killed))


def test_sample_big_jump_radius_law():
    from scipy import stats

    kern = load_model("stable-half-1d").jump
    rng = np.random.default_rng(99)
    eps, cap = 0.1, 10.0
    maj = _RadialMajorant(kern, eps, r_far=cap)
    zs = np.array([sample_big_jump(kern, np.zeros(1), eps, cap, rng, maj)[0] for _ in range(8000)])
    a = 0.5
    cdf = lambda r: (eps**-a - r**-a) / (eps**-a - cap**-a)
    ks, p = stats.kstest(np.abs(zs), cdf)
    assert p > 0.01
    assert abs((zs > 0).mean() - 0.5) <= 3.0 * 0.5 / math.sqrt(len(zs))


def test_sample_big_jump_acceptance_rate():
    kern = comparability_kernel(1, power_scale(0.5), kappa=0.7)
    kern.kappa_up = 1.0  # envelope deliberately above the kernel
    rng = np.random.default_rng(4)
    maj = _RadialMajorant(kern, 0.1, r_far=10.0)
    calls = [0]
    inner = kern.evaluate

    def counting(x, y):
        calls[0] += 1
        return inner(x, y)

    kern.evaluate = counting
    n_acc = 3000
    for _ in range(n_acc):
        sample_big_jump(kern, np.zeros(1), 0.1, 10.0, rng, maj)
    rate = n_acc / calls[0]
    assert abs(rate - 0.7) <= 3.0 * math.sqrt(0.7 * 0.3 / calls[0])


def test_sample_big_jump_direction_symmetry_d2():
    kern = comparability_kernel(2, power_scale(1.0))
    rng = np.random.default_rng(8)
    maj = _RadialMajorant(kern, 0.2, r_far=5.0)
    zs = np.array([sample_big_jump(kern, np.zeros(2), 0.2, 5.0, rng, maj) for _ in range(4000)])
    norm = np.linalg.norm(zs, axis=1)
    unit = zs / norm[:, None]
    assert np.abs(unit.mean(axis=0)).max() <= 3.0 / math.sqrt(len(zs))


def test_sampler_detects_wrong_envelope():
    kern = comparability_kernel(1, power_scale(0.5), kappa=1.0)
    kern.kappa_up = 0.5  # declared envelope below the true kernel
    rng = np.random.default_rng(4)
    with pytest.raises(ModelError, match="envelope"):
        sample_big_jump(kern, np.zeros(1), 0.1, 5.0, rng)


def test_hitting_tail_pure_diffusion_is_zero():
    m = load_model("pure-diffusion-1d")
    cfg = SimConfig(dt=2.5e-4, eps=0.1, seed=19)
    ht = hitting_tail(m, 0.0, 0.1, [0.2, 0.5], cfg, 2000)
    assert np.all(ht.estimates == 0.0)
    assert not ht.flagged


def test_hitting_tail_monotone_and_fitted_constant():
    m = load_model("reference")
    r = 0.1
    cfg = SimConfig(dt=r * r / 100, eps=r / 4, seed=21)
    ht = hitting_tail(m, 0.0, r, [0.2, 0.4, 0.8], cfg, 8000)
    assert np.all(np.diff(ht.estimates) <= 1e-12)
    assert math.isfinite(ht.fitted_c) and ht.fitted_c > 0


def test_hitting_tail_regime_precondition():
    m = load_model("reference")
    cfg = SimConfig(dt=1e-4, eps=0.02, seed=1)
    with pytest.raises(ValueError, match="2r"):
        hitting_tail(m, 0.0, 0.2, [0.3], cfg, 100)


def test_levy_system_zero_function():
    m = load_model("stable-one-1d")
    cfg = SimConfig(dt=4e-3, eps=0.1, seed=3)
    f0 = lambda x, y: np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]))
    out = levy_system_check(m, 0.0, 0.4, f0, cfg, 200, n_radial=64)
    assert out["lhs"] == 0.0 and out["rhs"] == 0.0


def test_levy_system_indicator_identity():
    # f = 1_{|y-x| > lam}: both sides estimate the expected number of
    # lam-large jumps before leaving the ball
    m = load_model("stable-one-1d")
    cfg = SimConfig(dt=2e-3, eps=0.1, seed=3)
    lam0 = 0.8
    f = lambda x, y: (np.linalg.norm(np.asarray(y) - np.asarray(x), axis=-1) > lam0).astype(float)
    out = levy_system_check(m, 0.0, 0.5, f, cfg, 2000, n_radial=384)
    assert abs(out["lhs"] - out["rhs"]) <= 3.0 * out["joint_se"] + 0.02 * max(out["lhs"], out["rhs"])


def test_levy_system_generic_function_mixed_model():
    m = load_model("reference")
    cfg = SimConfig(dt=2e-3, eps=0.1, seed=5)
    fg = lambda x, y: np.minimum(np.linalg.norm(np.asarray(y) - np.asarray(x), axis=-1) ** 2, 1.0)
    out = levy_system_check(m, 0.0, 0.5, fg, cfg, 2000, n_radial=256)
    assert abs(out["lhs"] - out["rhs"]) <= 3.0 * out["joint_se"] + 0.02 * max(out["lhs"], out["rhs"])


def test_weak_order_one_coupled_refinement():
    """Euler weak error decreases linearly in dt (coupled refinements).

    The scheme is the simulator's diffusion map (drift (1/2) div A, factor
    sqrt(A)); coupling through shared Brownian increments makes the error
    differences resolvable at desk-scale sample sizes.
    """
    t_end = 0.25
    fine_k = 9
    n = 150000
    rng = np.random.default_rng(2024)
    n_fine = int(t_end * 2**fine_k)
    dw = rng.standard_normal((n, n_fine)) * math.sqrt(2.0**-fine_k)

    def euler(level_k):
        dt = 2.0**-level_k
        block = 2 ** (fine_k - level_k)
        incs = dw.reshape(n, -1, block).sum(axis=2)
        x = np.full(n, 0.5)
        for j in range(incs.shape[1]):
            a = 1.0 + 0.9 * np.sin(x)
            x = x + 0.45 * np.cos(x) * dt + np.sqrt(a) * incs[:, j]
        return x

    xf = euler(fine_k)
    dts, gaps = [], []
    for k in (4, 5, 6, 7):
        d = euler(k) - xf
        se = d.std() / math.sqrt(n)
        assert abs(d.mean()) > 5 * se  # bias resolved above noise
        dts.append(2.0**-k)
        gaps.append(abs(d.mean()))
    slope = np.polyfit(np.log(dts), np.log(gaps), 1)[0]
    assert abs(slope - 1.0) <= 0.3


def test_cutoff_robustness():
    # halving eps moves E[g(X_t)] by at most the small-jump moment budget
    m = load_model("reference")
    t = 0.2
    g = lambda x: np.exp(-(x**2))
    outs = {}
    for i, eps in enumerate((0.1, 0.05)):
        cfg = SimConfig(dt=1e-3, eps=eps, seed=29, stream_tag=i)
        ens = simulate_paths(m, 0.0, t, [t], cfg, 50000)
        vals = g(ens.terminal[ens.alive, 0])
        outs[eps] = (vals.mean(), vals.std() / math.sqrt(len(vals)))
    _, _, delta = small_jump_moments(m.jump, np.zeros(1), 0.1)
    budget = 0.5 * delta * t * 2.0  # max |g''| = 2 for the Gaussian bump
    gap = abs(outs[0.1][0] - outs[0.05][0])
    assert gap <= 3.0 * math.hypot(outs[0.1][1], outs[0.05][1]) + budget


def test_ensemble_exports():
    m = load_model("reference")
    cfg = SimConfig(dt=2e-3, eps=0.1, seed=7,
                    monitor_balls=((np.array([0.0]), 0.5),))
    ens = simulate_paths(m, 0.0, 0.2, [0.2], cfg, 300)
    rows = ensemble_to_csv_rows(ens)
    assert len(rows) == 300
    assert len(rows[0]) == 1 + 1 + 1 + 5  # path, x1, exit col, flags/counters
    counts, edges = ensemble_histogram(ens, np.linspace(-3, 3, 31))
    assert counts.sum() <= 300
    recs = events_to_records(ens)
    if recs:
        assert set(recs[0]) == {"path", "time", "size"}
