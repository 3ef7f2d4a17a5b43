"""Seeded path simulation of the jump-diffusion.

Scheme: Euler-Maruyama for the divergence-form diffusion part (drift
(1/2) div A plus the small-jump mean, diffusion factor S with
S S^T = A + C_eps where C_eps is the small-jump second moment), and
majorant-thinned arrivals for jumps larger than eps: a Poisson number of
proposals per step at the constant majorant rate, each drawn from the
radial envelope kappa_up / (|z|^d phi(|z|)) and accepted with probability
J(x, x+z) / majorant(z).  Accepted jumps beyond the radial cap terminate
the path and are logged as truncation.

Determinism contract: every random draw of path i comes from the
substream seeded by (master seed, stream tag, i), so results are bitwise
independent of chunking, scheduling and thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .kernels import (
    JumpKernel,
    Model,
    ModelError,
    divergence_drift,
    small_jump_moments,
    sphere_directions,
    sphere_surface,
)

__all__ = [
    "SimConfig",
    "PathEnsemble",
    "ExitRecord",
    "simulate_paths",
    "sample_big_jump",
    "exit_statistics",
    "hitting_tail",
    "levy_system_check",
    "ensemble_to_csv_rows",
    "ensemble_histogram",
    "events_to_records",
]

STABILITY_BUDGET = 0.1


class ConfigError(ValueError):
    """Simulation configuration violates its stability contract."""


@dataclass
class SimConfig:
    """Time step, jump cutoffs, seeding and bookkeeping limits.

    The thinning stability budget dt * (majorant jump rate) <= 0.1 is
    enforced at simulation start.  ``stream_tag`` separates substream
    families of independent runs under one master seed.
    """

    dt: float
    eps: float
    r_max: Optional[float] = None
    seed: int = 0
    max_events: int = 64
    chunk_size: int = 20000
    bridge_exit: bool = False
    kill_ball: Optional[tuple] = None
    monitor_balls: tuple = ()
    stream_tag: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.r_max is not None and not (self.eps < self.r_max):
            raise ConfigError("need 0 < eps < r_max")


class _RadialMajorant:
    """Inverse-CDF table for the radial envelope kappa_up/(r phi(r)) dr.

    The table spans [eps, r_far] where r_far makes the neglected envelope
    tail below 1e-12 of the total rate; jumps proposed beyond the cap are
    truncation events, not silently clipped.
    """

    def __init__(self, kernel: JumpKernel, eps: float, r_far: Optional[float] = None,
                 n_table: int = 4096):
        if kernel.scale is None or kernel.kappa_up <= 0:
            raise ModelError("jump sampling needs a comparability envelope (kappa_up, scale)")
        self.kernel = kernel
        self.eps = eps
        surf = sphere_surface(kernel.dim)
        phi = kernel.scale
        if r_far is None:
            r_far = max(10.0, 100.0 * eps)
            # extend until the last decade is negligible
            for _ in range(40):
                u = np.linspace(math.log(eps), math.log(r_far), n_table)
                g = surf * kernel.kappa_up / phi(np.exp(u))
                cum = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(u))])
                if cum[-1] - cum[int(0.9 * n_table)] < 1e-12 * cum[-1]:
                    break
                r_far *= 10.0
        u = np.linspace(math.log(eps), math.log(r_far), n_table)
        g = surf * kernel.kappa_up / phi(np.exp(u))
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(u))])
        self.log_r = u
        self.cdf = cum / cum[-1]
        self.total_rate = float(cum[-1])
        self.r_far = r_far

    def radius_from_uniform(self, q: np.ndarray) -> np.ndarray:
        return np.exp(np.interp(q, self.cdf, self.log_r))

    def density_value(self, r: np.ndarray) -> np.ndarray:
        """Envelope intensity kappa_up/(r^d phi(r)) at radius r."""
        phi = self.kernel.scale
        d = self.kernel.dim
        r = np.asarray(r, dtype=float)
        return self.kernel.kappa_up / (r**d * phi(r))

    def tail_rate(self, radius: float) -> float:
        """Envelope jump rate beyond the given radius."""
        q = np.interp(math.log(radius), self.log_r, self.cdf)
        return self.total_rate * (1.0 - float(q))


def _unit_directions(raw: np.ndarray) -> np.ndarray:
    if raw.shape[-1] == 1:
        return np.where(raw >= 0.0, 1.0, -1.0)
    norm = np.linalg.norm(raw, axis=-1, keepdims=True)
    norm = np.where(norm > 0, norm, 1.0)
    return raw / norm


def sample_big_jump(
    kernel: JumpKernel, x: np.ndarray, eps: float, cap: float, rng: np.random.Generator,
    majorant: Optional[_RadialMajorant] = None,
) -> np.ndarray:
    """One displacement with density proportional to J(x, x+z) on eps < |z| <= cap.

    Rejection from the radial comparability envelope; an acceptance ratio
    above 1 + 1e-9 means the declared envelope constants are wrong.
    """
    if not eps < cap:
        raise ConfigError("need eps < cap")
    if majorant is None:
        majorant = _RadialMajorant(kernel, eps, r_far=cap)
    x = np.asarray(x, dtype=float)
    d = kernel.dim
    for _ in range(100000):
        q = rng.random()
        # restrict the table to [eps, cap]
        q_cap = np.interp(math.log(cap), majorant.log_r, majorant.cdf)
        r = float(majorant.radius_from_uniform(q * q_cap))
        direction = _unit_directions(rng.standard_normal(d))
        z = r * direction
        jval = float(kernel.j_between(x, x + z))
        env = float(majorant.density_value(r))
        ratio = jval / env
        if ratio > 1.0 + 1e-9:
            raise ModelError(
                f"kernel exceeds its declared envelope at |z|={r:.6g}: ratio {ratio:.6g}"
            )
        if rng.random() < ratio:
            return z
    raise ModelError("rejection sampler failed to accept after 1e5 proposals")


@dataclass
class ExitRecord:
    """First-exit data of one monitored ball across the ensemble."""

    center: np.ndarray
    radius: float
    exited: np.ndarray
    time: np.ndarray
    position: np.ndarray


@dataclass
class PathEnsemble:
    """Simulated trajectories with event logs and exit records."""

    model_name: str
    x0: np.ndarray
    horizon: float
    dt: float
    times: np.ndarray
    n: int
    positions: np.ndarray          # (n, len(times), d)
    terminal: np.ndarray           # (n, d)
    alive: np.ndarray
    killed: np.ndarray
    truncated: np.ndarray
    budget_exceeded: np.ndarray
    event_path: np.ndarray
    event_time: np.ndarray
    event_size: np.ndarray         # (m, d)
    exits: dict = field(default_factory=dict)
    seed: int = 0
    stream_tag: int = 0

    def exit_record(self, center, radius) -> ExitRecord:
        key = (tuple(np.atleast_1d(center).astype(float)), float(radius))
        return self.exits[key]


def _path_rngs(seed: int, tag: int, lo: int, hi: int) -> list[np.random.Generator]:
    return [
        np.random.default_rng(np.random.SeedSequence(entropy=(seed, tag, i)))
        for i in range(lo, hi)
    ]


def simulate_paths(
    model: Model,
    x0,
    horizon: float,
    times: Sequence[float],
    config: SimConfig,
    n: int,
) -> PathEnsemble:
    """Simulate n independent paths and record snapshots, events and exits.

    Snapshot times are snapped to step boundaries.  Paths stop early only
    by explicit killing or by an accepted jump beyond the radial cap
    (logged as truncation); everything else runs to the horizon.  With
    monitored balls and no requested snapshot times the run is in
    exit-analysis mode: stepping stops once every monitor has been exited,
    and ``terminal`` then holds the positions at that stopping step.
    """
    d = model.dim
    x0 = np.broadcast_to(np.atleast_1d(np.asarray(x0, dtype=float)), (d,)).copy()
    dt = config.dt
    nsteps = int(round(horizon / dt))
    if abs(nsteps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ConfigError(f"horizon {horizon} is not a multiple of dt {dt}")
    times = np.asarray(list(times), dtype=float)
    snap_steps = np.round(times / dt).astype(int)
    if np.any(snap_steps < 0) or np.any(snap_steps > nsteps):
        raise ConfigError("snapshot times outside [0, horizon]")

    kernel = model.jump
    majorant = None
    lam_bar = 0.0
    m_eps = np.zeros(d)
    c_eps = np.zeros((d, d))
    r_cap = config.r_max
    if not kernel.is_zero:
        majorant = _RadialMajorant(kernel, config.eps)
        lam_bar = majorant.total_rate
        if dt * lam_bar > STABILITY_BUDGET * (1.0 + 1e-9):
            raise ConfigError(
                f"thinning stability violated: dt * rate = {dt * lam_bar:.3g} > {STABILITY_BUDGET}"
            )
        if not kernel.translation_invariant:
            raise ConfigError(
                "path simulation requires a translation-invariant kernel profile; "
                "state-dependent kernels are validated through the lattice oracle"
            )
        m_eps, c_eps, _ = small_jump_moments(kernel, np.zeros(d), config.eps)
        if r_cap is None:
            # cap where the envelope tail rate over the horizon is below 1e-4
            grid = np.exp(majorant.log_r)
            tails = majorant.total_rate * (1.0 - majorant.cdf)
            ok = np.nonzero(tails * horizon <= 1e-4)[0]
            r_cap = float(grid[ok[0]]) if ok.size else majorant.r_far
        if not (config.eps < r_cap):
            raise ConfigError("r_max must exceed eps")

    analytic_div = model.diffusion.div is not None
    eye = np.eye(d)

    monitors = []
    for center, radius in config.monitor_balls:
        monitors.append((np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (d,)).copy(),
                         float(radius)))
    kill = None
    if config.kill_ball is not None:
        kc, kr = config.kill_ball
        kill = (np.broadcast_to(np.atleast_1d(np.asarray(kc, dtype=float)), (d,)).copy(), float(kr))

    positions = np.empty((n, len(times), d))
    terminal = np.empty((n, d))
    alive = np.ones(n, dtype=bool)
    killed = np.zeros(n, dtype=bool)
    truncated = np.zeros(n, dtype=bool)
    budget = np.zeros(n, dtype=bool)
    ev_path: list[np.ndarray] = []
    ev_time: list[np.ndarray] = []
    ev_size: list[np.ndarray] = []
    exit_state = [
        {
            "exited": np.zeros(n, dtype=bool),
            "time": np.full(n, np.nan),
            "position": np.full((n, d), np.nan),
        }
        for _ in monitors
    ]

    buffer_cap = max(1000, int(2.5e7 / max(nsteps, 1)))
    chunk = min(config.chunk_size, buffer_cap, n)
    use_bridge = config.bridge_exit and monitors

    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        m = hi - lo
        rngs = _path_rngs(config.seed, config.stream_tag, lo, hi)
        normals = np.stack([r.standard_normal((nsteps, d)) for r in rngs])
        if majorant is not None:
            counts = np.stack(
                [np.minimum(r.poisson(lam_bar * dt, nsteps), 255).astype(np.uint8) for r in rngs]
            )
            events = np.stack([r.random((config.max_events, d + 2)) for r in rngs])
            ev_norm = np.stack([r.standard_normal((config.max_events, d)) for r in rngs])
        if use_bridge:
            bridge_u = np.stack([r.random(nsteps) for r in rngs])

        x = np.tile(x0, (m, 1))
        act = np.ones(m, dtype=bool)
        consumed = np.zeros(m, dtype=np.int64)
        over_budget = np.zeros(m, dtype=bool)

        snap0 = np.nonzero(snap_steps == 0)[0]
        for j in snap0:
            positions[lo:hi, j, :] = x0

        for k in range(nsteps):
            if not act.any() and not monitors:
                # nothing left to advance
                for j in np.nonzero(snap_steps > k)[0]:
                    positions[lo:hi, j, :] = x
                break
            idx = np.nonzero(act)[0]
            xa = x[idx]
            mats = model.diffusion(xa)
            if majorant is not None:
                mats = mats + c_eps
            drift = divergence_drift(model.diffusion, xa) + m_eps
            if d == 1:
                step_diff = np.sqrt(mats[:, 0, 0])[:, None] * normals[idx, k, :]
            else:
                w_eig, v_eig = np.linalg.eigh(mats)
                if np.any(w_eig <= 0):
                    raise ModelError("A + C_eps not positive definite")
                s_mat = np.einsum("pij,pj,pkj->pik", v_eig, np.sqrt(w_eig), v_eig)
                step_diff = np.einsum("pij,pj->pi", s_mat, normals[idx, k, :])
            x_old = x.copy()
            x[idx] = xa + drift * dt + step_diff * math.sqrt(dt)

            jumped = np.zeros(m, dtype=bool)
            if majorant is not None:
                pending = counts[:, k].astype(np.int64)
                pending[~act | over_budget] = 0
                max_k = int(pending.max()) if pending.size else 0
                for j in range(max_k):
                    sel = np.nonzero(pending > j)[0]
                    if sel.size == 0:
                        break
                    slots = consumed[sel]
                    room = slots < config.max_events
                    newly_over = sel[~room]
                    if newly_over.size:
                        over_budget[newly_over] = True
                        budget[lo + newly_over] = True
                    sel = sel[room]
                    if sel.size == 0:
                        continue
                    slots = consumed[sel]
                    consumed[sel] += 1
                    q = events[sel, slots, 0]
                    u_acc = events[sel, slots, d + 1]
                    raw_dir = ev_norm[sel, slots, :]
                    radius = majorant.radius_from_uniform(q)
                    z = radius[:, None] * _unit_directions(raw_dir)
                    jval = kernel.j_between(x[sel], x[sel] + z)
                    env = majorant.density_value(radius)
                    ratio = jval / env
                    if np.any(ratio > 1.0 + 1e-9):
                        raise ModelError(
                            f"kernel exceeds its declared envelope: max ratio {ratio.max():.6g}"
                        )
                    accept = u_acc < ratio
                    out = accept & (radius > r_cap)
                    land = accept & ~out
                    if np.any(out):
                        g = sel[out]
                        truncated[lo + g] = True
                        act[g] = False
                    if np.any(land):
                        g = sel[land]
                        x[g] += z[land]
                        jumped[g] = True
                        ev_path.append(lo + g)
                        ev_time.append(np.full(g.size, (k + 1) * dt))
                        ev_size.append(z[land])

            t_next = (k + 1) * dt
            for mon_i, (center, radius) in enumerate(monitors):
                st = exit_state[mon_i]
                watch = act & ~st["exited"][lo:hi]
                if not watch.any():
                    continue
                w_idx = np.nonzero(watch)[0]
                d_new = np.linalg.norm(x[w_idx] - center, axis=1)
                crossed = d_new >= radius
                if np.any(crossed):
                    g = w_idx[crossed]
                    d_old = np.linalg.norm(x_old[g] - center, axis=1)
                    gap = np.maximum(d_new[crossed] - d_old, 1e-300)
                    theta = np.clip((radius - d_old) / gap, 0.0, 1.0)
                    theta[jumped[g]] = 1.0
                    st["exited"][lo + g] = True
                    st["time"][lo + g] = (k + theta) * dt
                    st["position"][lo + g] = x[g]
                if use_bridge:
                    inside = w_idx[~crossed]
                    if inside.size:
                        no_jump = inside[~jumped[inside]]
                        if no_jump.size:
                            g0 = radius - np.linalg.norm(x_old[no_jump] - center, axis=1)
                            g1 = radius - np.linalg.norm(x[no_jump] - center, axis=1)
                            xa2 = x_old[no_jump]
                            mats2 = model.diffusion(xa2)
                            if majorant is not None:
                                mats2 = mats2 + c_eps
                            if d == 1:
                                var_r = mats2[:, 0, 0]
                            else:
                                e_r = _unit_directions(xa2 - center)
                                var_r = np.einsum("pi,pij,pj->p", e_r, mats2, e_r)
                            with np.errstate(under="ignore", divide="ignore"):
                                p_cross = np.exp(-2.0 * g0 * g1 / np.maximum(var_r * dt, 1e-300))
                            fire = bridge_u[no_jump, k] < p_cross
                            if np.any(fire):
                                g = no_jump[fire]
                                st["exited"][lo + g] = True
                                st["time"][lo + g] = (k + 0.5) * dt
                                ref = x[g] - center
                                ref = _unit_directions(ref)
                                st["position"][lo + g] = center + radius * ref

            if kill is not None:
                kc, kr = kill
                k_idx = np.nonzero(act)[0]
                outside = np.linalg.norm(x[k_idx] - kc, axis=1) >= kr
                if np.any(outside):
                    g = k_idx[outside]
                    killed[lo + g] = True
                    act[g] = False

            for j in np.nonzero(snap_steps == k + 1)[0]:
                positions[lo:hi, j, :] = x

            # exit-analysis mode: with no snapshots requested, stop a chunk
            # once every monitored ball has been exited
            if monitors and snap_steps.size == 0 and kill is None:
                if all(st["exited"][lo:hi].all() for st in exit_state):
                    break

        terminal[lo:hi] = x
        alive[lo:hi] = act

    exits = {}
    for (center, radius), st in zip(monitors, exit_state):
        exits[(tuple(center), radius)] = ExitRecord(
            center=center, radius=radius, exited=st["exited"],
            time=st["time"], position=st["position"],
        )
    if ev_path:
        # canonical (path, time) order: independent of chunking
        flat_path = np.concatenate(ev_path)
        flat_time = np.concatenate(ev_time)
        flat_size = np.concatenate(ev_size)
        order = np.lexsort((flat_time, flat_path))
        ev_path = [flat_path[order]]
        ev_time = [flat_time[order]]
        ev_size = [flat_size[order]]
    return PathEnsemble(
        model_name=model.name, x0=x0, horizon=horizon, dt=dt, times=times, n=n,
        positions=positions, terminal=terminal, alive=alive, killed=killed,
        truncated=truncated, budget_exceeded=budget,
        event_path=np.concatenate(ev_path) if ev_path else np.empty(0, dtype=int),
        event_time=np.concatenate(ev_time) if ev_time else np.empty(0),
        event_size=np.concatenate(ev_size) if ev_size else np.empty((0, d)),
        exits=exits, seed=config.seed, stream_tag=config.stream_tag,
    )


@dataclass
class ExitStats:
    """Per-radius exit-time summary with confidence intervals."""

    radius: float
    mean: float
    sem: float
    ci95: tuple
    n_used: int
    frac_unresolved: float
    stay_prob: float           # P(sup_{s <= a r^2} |X_s - x0| <= r), a = 0.25
    usable: bool
    exit_positions: Optional[np.ndarray] = None   # positions of resolved exits

    def position_histogram(self, n_bins: int = 32):
        """Binned radial exit-position counts (distance from the center)."""
        if self.exit_positions is None or len(self.exit_positions) == 0:
            return np.zeros(n_bins, dtype=int), np.linspace(0, 1, n_bins + 1)
        dist = np.linalg.norm(self.exit_positions, axis=1)
        edges = np.linspace(self.radius, max(dist.max(), self.radius) + 1e-12, n_bins + 1)
        counts, _ = np.histogram(dist, bins=edges)
        return counts, edges


def exit_statistics(
    model: Model,
    x0,
    radii: Sequence[float],
    config: SimConfig,
    n: int,
    horizon_factor: float = 12.0,
    use_bridge: bool = True,
) -> list[ExitStats]:
    """Mean first-exit times from concentric balls with CLT intervals.

    One ensemble monitors all radii (monitors do not absorb).  Paths that
    fail to exit within horizon_factor * r_max^2 contribute the horizon
    (their fraction is reported); the result is flagged unusable if more
    than 1% of paths hit the event budget.
    """
    radii = sorted(float(r) for r in radii)
    if not radii:
        raise ValueError("need at least one radius")
    horizon = horizon_factor * radii[-1] ** 2
    horizon = math.ceil(horizon / config.dt) * config.dt
    cfg = replace(
        config,
        monitor_balls=tuple((np.asarray(x0, dtype=float), r) for r in radii),
        bridge_exit=use_bridge,
    )
    ens = simulate_paths(model, x0, horizon, (), cfg, n)
    out = []
    budget_frac = float(ens.budget_exceeded.mean())
    for r in radii:
        rec = ens.exit_record(np.atleast_1d(np.asarray(x0, dtype=float)), r)
        tau = np.where(rec.exited, rec.time, horizon)
        drop = ens.truncated | ens.killed
        tau = tau[~drop]
        mean = float(tau.mean())
        sem = float(tau.std(ddof=1) / math.sqrt(len(tau)))
        stay = float((tau > 0.25 * r * r).mean())
        out.append(
            ExitStats(
                radius=r, mean=mean, sem=sem,
                ci95=(mean - 1.96 * sem, mean + 1.96 * sem),
                n_used=int(len(tau)),
                frac_unresolved=float(1.0 - rec.exited[~drop].mean()),
                stay_prob=stay,
                usable=budget_frac <= 0.01,
                exit_positions=rec.position[rec.exited & ~drop].copy(),
            )
        )
    return out


@dataclass
class HittingTail:
    """Exit-position tail estimates P(|X_tau - x| >= s) with binomial CIs."""

    r: float
    s_values: np.ndarray
    estimates: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    fitted_c: float
    bound_values: np.ndarray
    n_exited: int
    flagged: bool


def hitting_tail(
    model: Model,
    x,
    r: float,
    s_list: Sequence[float],
    config: SimConfig,
    n: int,
    horizon_factor: float = 12.0,
) -> HittingTail:
    """Probability that the exit position from B(x, r) lands beyond s >= 2r.

    Also evaluates the quadratic-in-r reference bound c r^2/(s ^ 1)^2 with
    the constant fitted to the estimates.
    """
    s_arr = np.asarray(sorted(float(s) for s in s_list))
    if np.any(s_arr < 2 * r):
        raise ValueError("hitting-tail regime needs s >= 2r")
    horizon = math.ceil(horizon_factor * r * r / config.dt) * config.dt
    x_vec = np.atleast_1d(np.asarray(x, dtype=float))
    cfg = replace(config, monitor_balls=((x_vec, float(r)),))
    ens = simulate_paths(model, x, horizon, (), cfg, n)
    rec = ens.exit_record(x_vec, float(r))
    ok = rec.exited & ~ens.truncated & ~ens.killed
    n_exit = int(ok.sum())
    flagged = n_exit == 0
    dist = np.linalg.norm(rec.position[ok] - x_vec, axis=1)
    est = np.array([(dist >= s).mean() if n_exit else np.nan for s in s_arr])
    se = np.sqrt(np.maximum(est * (1 - est), 0.0) / max(n_exit, 1))
    snapped = np.minimum(s_arr, 1.0)
    with np.errstate(invalid="ignore"):
        fitted_c = float(np.nanmax(est * snapped**2 / (r * r))) if n_exit else math.nan
    return HittingTail(
        r=r, s_values=s_arr, estimates=est,
        ci_low=np.maximum(est - 1.96 * se, 0.0), ci_high=np.minimum(est + 1.96 * se, 1.0),
        fitted_c=fitted_c, bound_values=fitted_c * r * r / snapped**2,
        n_exited=n_exit, flagged=flagged,
    )


def levy_system_check(
    model: Model,
    x,
    ball_radius: float,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    config: SimConfig,
    n: int,
    horizon_factor: float = 12.0,
    n_radial: int = 256,
) -> dict:
    """Two-estimator identity check for sums over jumps versus rate integrals.

    lhs: mean over paths of sum_{jumps before exit} f(X_-, X). rhs: mean of
    the along-path time integral of g(X_s) = int f(X_s, y) J(X_s, y) dy over
    |y - X_s| > eps; the radial integral runs in the envelope's CDF
    coordinate so discontinuous test functions are resolved where the
    kernel mass lives.  Returns both estimates, standard errors, and the
    relative discrepancy.
    """
    kernel = model.jump
    if kernel.is_zero:
        raise ValueError("identity check needs a jump kernel")
    d = model.dim
    x_vec = np.atleast_1d(np.asarray(x, dtype=float))
    horizon = math.ceil(horizon_factor * ball_radius**2 / config.dt) * config.dt
    cfg = replace(config, monitor_balls=((x_vec, float(ball_radius)),))
    ens = simulate_paths(model, x, horizon, np.arange(0.0, horizon + 1e-12, config.dt), cfg, n)
    rec = ens.exit_record(x_vec, float(ball_radius))
    tau = np.where(rec.exited, rec.time, horizon)

    # lhs: sum of f over recorded jumps before exit
    lhs_per_path = np.zeros(n)
    if ens.event_path.size:
        pre = ens.event_time <= tau[ens.event_path] + 1e-15
        src = ens.positions[
            ens.event_path[pre],
            np.minimum((np.round(ens.event_time[pre] / config.dt)).astype(int) - 1,
                       ens.positions.shape[1] - 1),
            :,
        ]
        dst = src + ens.event_size[pre]
        np.add.at(lhs_per_path, ens.event_path[pre], f(src, dst))

    # rhs: time quadrature of the rate integral along the path.  The radial
    # integral runs in the majorant's CDF coordinate (midpoint rule), which
    # resolves user test functions where the kernel mass actually lives.
    majorant = _RadialMajorant(kernel, config.eps)
    q_nodes = (np.arange(n_radial) + 0.5) / n_radial
    radii = majorant.radius_from_uniform(q_nodes)
    env = majorant.density_value(radii)          # envelope intensity at nodes
    dirs, w_ang = sphere_directions(d, 16)
    surf = sphere_surface(d)
    # per-node weight: (majorant rate)/n_radial, split over directions
    w_node = majorant.total_rate / n_radial
    rhs_per_path = np.zeros(n)
    n_snap = ens.positions.shape[1]
    for k in range(n_snap - 1):
        t_k = k * config.dt
        in_play = (tau > t_k) & ~ens.truncated & ~ens.killed
        if not in_play.any():
            break
        pts = ens.positions[in_play, k, :]
        frac = np.minimum(tau[in_play] - t_k, config.dt)
        targets = pts[:, None, None, :] + radii[None, :, None, None] * dirs[None, None, :, :]
        base = np.broadcast_to(pts[:, None, None, :], targets.shape)
        ratio = f(base, targets) * kernel.j_between(base, targets) / env[None, :, None]
        g = np.einsum("prk,k->p", ratio, w_ang / surf) * w_node
        rhs_per_path[in_play] += g * frac
    ok = ~ens.truncated & ~ens.killed
    lhs = float(lhs_per_path[ok].mean())
    rhs = float(rhs_per_path[ok].mean())
    se_l = float(lhs_per_path[ok].std(ddof=1) / math.sqrt(ok.sum()))
    se_r = float(rhs_per_path[ok].std(ddof=1) / math.sqrt(ok.sum()))
    denom = max(abs(lhs), abs(rhs))
    return {
        "lhs": lhs, "rhs": rhs, "se_lhs": se_l, "se_rhs": se_r,
        "discrepancy": abs(lhs - rhs) / denom if denom > 0 else 0.0,
        "joint_se": math.hypot(se_l, se_r),
    }


def ensemble_to_csv_rows(ens: PathEnsemble) -> list[list]:
    """One row per path: terminal position, exit times, event count, flags."""
    counts = np.bincount(ens.event_path, minlength=ens.n) if ens.event_path.size else np.zeros(ens.n, dtype=int)
    keys = sorted(ens.exits.keys(), key=lambda k: k[1])
    rows = []
    for i in range(ens.n):
        row = [i, *ens.terminal[i].tolist()]
        for key in keys:
            rec = ens.exits[key]
            row.append(rec.time[i] if rec.exited[i] else math.nan)
        row.extend([int(counts[i]), int(ens.alive[i]), int(ens.killed[i]),
                    int(ens.truncated[i]), int(ens.budget_exceeded[i])])
        rows.append(row)
    return rows


def ensemble_histogram(ens: PathEnsemble, edges: np.ndarray, axis: int = 0,
                       snapshot: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Binned counts of one coordinate at a snapshot over non-dropped paths."""
    ok = ~ens.truncated & ~ens.killed
    data = ens.positions[ok, snapshot, axis] if ens.positions.shape[1] else ens.terminal[ok, axis]
    counts, _ = np.histogram(data, bins=edges)
    return counts, edges


def events_to_records(ens: PathEnsemble) -> list[dict]:
    """Jump event log as one flat record per event (line-delimited export)."""
    out = []
    for i in range(ens.event_path.size):
        out.append(
            {
                "path": int(ens.event_path[i]),
                "time": float(ens.event_time[i]),
                "size": [float(v) for v in ens.event_size[i]],
            }
        )
    return out
