"""Deterministic lattice ground truth for the jump-diffusion generator.

The generator is discretized on a truncated uniform lattice (d = 1, 2):
nearest-neighbor conductances A_kk(midpoint)/(2 h^2) carry the
divergence-form diffusion part (so that the pure-diffusion limit is the
variance-t Gaussian), long-range symmetric rates J(x_i, x_j) h^d carry the
jump part beyond a sub-cell threshold, and the sub-cell jump mass is
folded into the neighbor conductances by second-moment matching.  The
semigroup is evaluated by uniformization: a Poisson-weighted series of
applications of the substochastic matrix I + Q/M with an explicit
absorbed-mass ledger, truncated when the Poisson tail drops below the
requested tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gammaln
from threadpoolctl import threadpool_limits

from .kernels import (
    JumpKernel,
    Model,
    ModelError,
    small_jump_moments,
    sphere_directions,
)

__all__ = [
    "LatticeGenerator",
    "HeatVector",
    "ConfigurationError",
    "build_generator",
    "evolve",
    "evolve_many",
    "killed_kernel",
    "killed_kernel_many",
    "chapman_kolmogorov_check",
    "form_comparability_check",
    "weighted_poincare_check",
    "random_bumps",
    "generator_summary",
]

MAX_SERIES_TERMS = 5_000_000


class ConfigurationError(RuntimeError):
    """Lattice/series parameters outside what the oracle can evaluate."""


@dataclass
class LatticeGenerator:
    """Symmetric rate structure of the discretized generator.

    ``rates`` holds the nonnegative off-diagonal rates (exactly symmetric,
    zero diagonal); ``leak`` the per-node absorption rate (boundary
    diffusion flux plus jump intensity into the complement of the box).
    """

    dim: int
    h: float
    lo: np.ndarray
    shape: tuple
    coords: np.ndarray
    rates: np.ndarray
    leak: np.ndarray
    eps_cell: float
    boundary_mode: str = "absorbing"
    model_name: str = ""

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def total_rate(self) -> np.ndarray:
        return self.rates.sum(axis=1) + self.leak

    def node_index(self, point) -> int:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = np.round((point - self.lo) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            raise ValueError(f"point {point!r} outside the lattice box")
        flat = int(np.ravel_multi_index(tuple(idx), self.shape))
        if np.max(np.abs(self.coords[flat] - point)) > 1e-6 * self.h:
            raise ValueError(f"point {point!r} is not a lattice node (h={self.h})")
        return flat

    def nodes_in_ball(self, center, radius: float) -> np.ndarray:
        center = np.atleast_1d(np.asarray(center, dtype=float))
        dist = np.linalg.norm(self.coords - center, axis=1)
        return np.nonzero(dist < radius * (1.0 - 1e-12))[0]


@dataclass
class HeatVector:
    """Approximate transition density row p(t, base, .) on the lattice."""

    t: float
    base_point: np.ndarray
    coords: np.ndarray
    density: np.ndarray
    leaked: float
    h: float
    dim: int
    series_tol: float
    node_indices: Optional[np.ndarray] = None  # indices into the parent lattice

    @property
    def mass(self) -> float:
        return float(self.density.sum() * self.h**self.dim)

    def conservation_defect(self) -> float:
        return abs(self.mass + self.leaked - 1.0)


def _axis_nodes(lo: float, hi: float, h: float) -> np.ndarray:
    n_cells = (hi - lo) / h
    if abs(n_cells - round(n_cells)) > 1e-9:
        raise ConfigurationError(f"spacing {h} does not resolve the box [{lo}, {hi}]")
    return lo + h * np.arange(int(round(n_cells)) + 1)


def _snap_cell_index(eps_cell: float, h: float) -> int:
    """Nearest-neighbor jump/fold split index: cells beyond (k0 - 1/2) h get rates."""
    return 1 if eps_cell < h else 2


def _outside_box_tails(kernel: JumpKernel, coords: np.ndarray, axes, h: float) -> np.ndarray:
    """Jump intensity from each node into the complement of the box cells.

    Angular decomposition with per-direction distance to the box wall
    (half a cell beyond the extreme nodes); for translation-invariant
    kernels the radial tail integral is tabulated once and interpolated.
    """
    d = coords.shape[1]
    dirs, w = sphere_directions(d, 32)
    lo = np.array([a[0] for a in axes]) - 0.5 * h
    hi = np.array([a[-1] for a in axes]) + 0.5 * h
    # distance to the wall along each direction, per node
    dist_wall = np.full((coords.shape[0], len(dirs)), np.inf)
    for k in range(d):
        dk = dirs[:, k]
        with np.errstate(divide="ignore"):
            t_hi = np.where(dk > 0, (hi[k] - coords[:, [k]]) / dk, np.inf)
            t_lo = np.where(dk < 0, (lo[k] - coords[:, [k]]) / dk, np.inf)
        dist_wall = np.minimum(dist_wall, np.where(dk > 0, t_hi, t_lo))
    if kernel.translation_invariant:
        prof = kernel.radial_profile
        u_grid = np.geomspace(max(h / 4, 1e-6), max(2.0 * float(dist_wall.max()), 1.0), 512)
        tail_vals = np.empty_like(u_grid)
        far = u_grid[-1]
        base, _ = integrate.quad(
            lambda r: r ** (d - 1) * float(prof(np.asarray(r))), far, np.inf, limit=200
        )
        for i in range(len(u_grid) - 1, -1, -1):
            if i == len(u_grid) - 1:
                tail_vals[i] = base
            else:
                seg, _ = integrate.quad(
                    lambda r: r ** (d - 1) * float(prof(np.asarray(r))),
                    u_grid[i], u_grid[i + 1], limit=100,
                )
                tail_vals[i] = tail_vals[i + 1] + seg

        def tail_at(u):
            return np.interp(u, u_grid, tail_vals)

        per_dir = tail_at(np.minimum(dist_wall, u_grid[-1]))
        return per_dir @ w
    out = np.zeros(coords.shape[0])
    for i, x in enumerate(coords):
        acc = 0.0
        for j, omega in enumerate(dirs):
            val, _ = integrate.quad(
                lambda r: r ** (d - 1) * float(kernel.j_between(x, x + r * omega)),
                float(dist_wall[i, j]), np.inf, limit=100,
            )
            acc += w[j] * val
        out[i] = acc
    return out


def build_generator(
    model: Model,
    box,
    h: float,
    eps_cell: Optional[float] = None,
    boundary_mode: str = "absorbing",
) -> LatticeGenerator:
    """Assemble the symmetric lattice rate structure for a model.

    ``box`` is (lo, hi) in d=1 or ((lo1, hi1), (lo2, hi2)) in d=2; the
    spacing must resolve it exactly.  ``eps_cell`` (default 1.5 h) is the
    jump/fold threshold and must lie in [h/2, 2h]: pairs farther apart get
    the midpoint-rule rate J(x_i, x_j) h^d, closer jump mass is folded into
    the neighbor conductances by matching its second moment.
    """
    d = model.dim
    if d not in (1, 2):
        raise ConfigurationError("lattice oracle supports d in {1, 2}")
    if eps_cell is None:
        eps_cell = 1.5 * h
    if not (h / 2 <= eps_cell <= 2 * h):
        raise ConfigurationError(f"eps_cell={eps_cell} outside [h/2, 2h] for h={h}")
    # snap to a half-cell boundary so fold + rates + leak partition exactly
    eps_cell = (_snap_cell_index(eps_cell, h) - 0.5) * h
    if d == 1:
        lo_hi = box if np.ndim(box[0]) == 0 else box[0]
        axes = [_axis_nodes(float(lo_hi[0]), float(lo_hi[1]), h)]
    else:
        axes = [_axis_nodes(float(b[0]), float(b[1]), h) for b in box]
    shape = tuple(len(a) for a in axes)
    grids = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1)
    n = coords.shape[0]
    lo_vec = np.array([a[0] for a in axes])

    kernel = model.jump
    ti = kernel.is_zero or kernel.translation_invariant

    def fold_matrix(points):
        """Second-moment matrix of sub-threshold jumps at given midpoints."""
        if kernel.is_zero:
            return np.zeros((len(points), d, d))
        if ti:
            _, c_mat, _ = small_jump_moments(kernel, np.zeros(d), eps_cell)
            return np.broadcast_to(c_mat, (len(points), d, d))
        out = np.empty((len(points), d, d))
        for i, p in enumerate(points):
            out[i] = small_jump_moments(kernel, p, eps_cell)[1]
        return out

    rates = np.zeros((n, n))
    leak = np.zeros(n)

    # nearest-neighbor conductances (diffusion + folded sub-cell jumps)
    for k in range(d):
        step = np.zeros(d)
        step[k] = h
        idx = np.arange(n).reshape(shape)
        if d == 1:
            left, right = idx[:-1], idx[1:]
        else:
            left = idx[:-1, :] if k == 0 else idx[:, :-1]
            right = idx[1:, :] if k == 0 else idx[:, 1:]
        left = left.ravel()
        right = right.ravel()
        mids = 0.5 * (coords[left] + coords[right])
        a_mid = model.diffusion(mids)
        if d == 2:
            off = np.abs(a_mid[:, 0, 1]).max()
            if off > 1e-12:
                raise ConfigurationError(
                    "d=2 lattice scheme requires a diagonal diffusion matrix; "
                    f"max |A_12| = {off:.3g}"
                )
        fold = fold_matrix(mids)
        cond = (a_mid[:, k, k] + fold[:, k, k]) / (2.0 * h * h)
        if np.any(cond <= 0):
            raise ModelError("nonpositive conductance after sub-cell folding")
        rates[left, right] += cond
        rates[right, left] += cond

        # boundary flux: phantom edges crossing the box walls
        if boundary_mode == "absorbing":
            for side, sel in ((0, 0), (1, -1)):
                face = idx[sel, :] if (k == 0 and d == 2) else (
                    idx[:, sel] if d == 2 else idx[sel]
                )
                face = np.atleast_1d(face).ravel()
                sign = -1.0 if side == 0 else 1.0
                mids_b = coords[face] + 0.5 * sign * step
                a_b = model.diffusion(mids_b)
                fold_b = fold_matrix(mids_b)
                leak[face] += (a_b[:, k, k] + fold_b[:, k, k]) / (2.0 * h * h)

    # long-range jump rates: cell-integrated so that fold + in-box rates +
    # out-of-box leak partition the jump intensity exactly (up to quadrature)
    if not kernel.is_zero:
        if ti and d == 1:
            prof = kernel.radial_profile
            k0 = _snap_cell_index(eps_cell, h)
            gn, gw = np.polynomial.legendre.leggauss(8)
            ks = np.arange(n, dtype=float)
            lo_edges = (ks - 0.5) * h
            r_nodes = lo_edges[:, None] + 0.5 * h * (gn[None, :] + 1.0)
            cell_mass = 0.5 * h * (prof(np.maximum(r_nodes, 1e-300)) * gw[None, :]).sum(axis=1)
            cell_mass[:k0] = 0.0
            from scipy.linalg import toeplitz

            rates += toeplitz(cell_mass)
            if boundary_mode == "absorbing":
                far_edge = (n - 0.5) * h
                tail_beyond, _ = integrate.quad(
                    lambda r: float(prof(np.asarray(r))), far_edge, np.inf, limit=200
                )
                # T[m] = kernel mass beyond (m + 1/2) h on one side
                suffix = np.concatenate([np.cumsum(cell_mass[::-1])[::-1][1:], [0.0]])
                t_half = suffix + tail_beyond
                i_arr = np.arange(n)
                leak += t_half[n - 1 - i_arr] + t_half[i_arr]
        else:
            if ti:
                diffs = coords[:, None, :] - coords[None, :, :]
                dist = np.linalg.norm(diffs, axis=-1)
                with np.errstate(divide="ignore", over="ignore"):
                    profv = kernel.radial_profile(dist)
                jrates = np.where(dist > eps_cell, profv, 0.0) * h**d
            else:
                jvals = kernel.j_between(coords[:, None, :], coords[None, :, :])
                dist = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
                jrates = np.where(dist > eps_cell, jvals, 0.0) * h**d
            jrates = 0.5 * (jrates + jrates.T)  # exact symmetry
            np.fill_diagonal(jrates, 0.0)
            rates += jrates
            if boundary_mode == "absorbing":
                leak += _outside_box_tails(kernel, coords, axes, h)

    return LatticeGenerator(
        dim=d, h=h, lo=lo_vec, shape=shape, coords=coords, rates=rates,
        leak=leak, eps_cell=eps_cell, boundary_mode=boundary_mode,
        model_name=model.name,
    )


def _poisson_weights(mt: float, tol: float) -> np.ndarray:
    """Poisson(mt) pmf values 0..K with tail mass below tol."""
    if mt == 0.0:
        return np.array([1.0])
    k_hi = int(mt + 12.0 * math.sqrt(mt + 1.0) + 40.0)
    while True:
        k = np.arange(k_hi + 1)
        logw = k * math.log(mt) - mt - gammaln(k + 1)
        w = np.exp(logw)
        if 1.0 - w.sum() <= tol:
            return w
        k_hi *= 2
        if k_hi > MAX_SERIES_TERMS:
            raise ConfigurationError("Poisson series does not reach the tolerance")


def _uniformize(
    rates: np.ndarray, leak: np.ndarray, start: int, t: float, tol: float
) -> tuple[np.ndarray, float, float]:
    """Poisson-weighted series for the augmented (nodes + cemetery) chain."""
    n = rates.shape[0]
    total = rates.sum(axis=1) + leak
    m_rate = float(total.max()) * (1.0 + 1e-12) + 1e-300
    mt = m_rate * t
    n_terms = mt + 12.0 * math.sqrt(mt + 1.0) + 40.0
    if n_terms > MAX_SERIES_TERMS:
        h_hint = math.sqrt(n_terms / 1e6)
        raise ConfigurationError(
            f"series needs ~{n_terms:.3g} terms; increase the spacing by ~{h_hint:.2g}x"
        )
    w = _poisson_weights(mt, tol)
    v = np.zeros(n)
    v[start] = 1.0
    cem = 0.0
    acc = w[0] * v
    acc_cem = w[0] * cem
    with threadpool_limits(limits=1):
        for k in range(1, len(w)):
            cem = cem + float(leak @ v) / m_rate
            v = v + (rates @ v - total * v) / m_rate
            wk = w[k]
            if wk > 0.0:
                acc += wk * v
                acc_cem += wk * cem
    tail = 1.0 - w.sum()
    return acc, acc_cem + tail, tail


def _uniformize_many(
    rates: np.ndarray, leak: np.ndarray, start: int, t_list: Sequence[float], tol: float
) -> list[tuple[np.ndarray, float, float]]:
    """One matvec sweep accumulating Poisson-weighted sums for several times."""
    n = rates.shape[0]
    total = rates.sum(axis=1) + leak
    m_rate = float(total.max()) * (1.0 + 1e-12) + 1e-300
    mts = [m_rate * t for t in t_list]
    n_terms = max(mts) + 12.0 * math.sqrt(max(mts) + 1.0) + 40.0
    if n_terms > MAX_SERIES_TERMS:
        h_hint = math.sqrt(n_terms / 1e6)
        raise ConfigurationError(
            f"series needs ~{n_terms:.3g} terms; increase the spacing by ~{h_hint:.2g}x"
        )
    weights = [_poisson_weights(mt, tol) for mt in mts]
    k_max = max(len(w) for w in weights)
    v = np.zeros(n)
    v[start] = 1.0
    cem = 0.0
    accs = [w[0] * v for w in weights]
    acc_cems = [0.0 for _ in weights]
    with threadpool_limits(limits=1):
        for k in range(1, k_max):
            cem = cem + float(leak @ v) / m_rate
            v = v + (rates @ v - total * v) / m_rate
            for j, w in enumerate(weights):
                if k < len(w) and w[k] > 0.0:
                    accs[j] += w[k] * v
                    acc_cems[j] += w[k] * cem
    out = []
    for j, w in enumerate(weights):
        tail = 1.0 - w.sum()
        out.append((accs[j], acc_cems[j] + tail, tail))
    return out


def evolve_many(
    gen: LatticeGenerator, x0, t_list: Sequence[float], tol: float = 1e-10
) -> list[HeatVector]:
    """Heat vectors at several times from one base point, sharing one sweep."""
    t_list = [float(t) for t in t_list]
    if any(t <= 0 for t in t_list):
        raise ValueError("times must be positive (use evolve for t = 0)")
    start = x0 if isinstance(x0, (int, np.integer)) else gen.node_index(x0)
    results = _uniformize_many(gen.rates, gen.leak, start, t_list, tol)
    return [
        HeatVector(
            t=t, base_point=gen.coords[start].copy(), coords=gen.coords,
            density=probs / gen.h**gen.dim, leaked=leaked, h=gen.h, dim=gen.dim,
            series_tol=tail,
        )
        for t, (probs, leaked, tail) in zip(t_list, results)
    ]


def killed_kernel_many(
    gen: LatticeGenerator, ball, x0, t_list: Sequence[float], tol: float = 1e-10
) -> list[HeatVector]:
    """Killed heat vectors at several times, sharing one sweep."""
    center, radius = ball
    idx = gen.nodes_in_ball(center, radius)
    if idx.size == 0:
        raise ValueError("ball contains no lattice nodes")
    start_full = x0 if isinstance(x0, (int, np.integer)) else gen.node_index(x0)
    where = np.nonzero(idx == start_full)[0]
    if where.size == 0:
        raise ValueError("start point not strictly inside the ball")
    sub_rates = gen.rates[np.ix_(idx, idx)]
    sub_leak = gen.total_rate[idx] - sub_rates.sum(axis=1)
    results = _uniformize_many(sub_rates, sub_leak, int(where[0]), [float(t) for t in t_list], tol)
    return [
        HeatVector(
            t=float(t), base_point=gen.coords[start_full].copy(), coords=gen.coords[idx],
            density=probs / gen.h**gen.dim, leaked=leaked, h=gen.h, dim=gen.dim,
            series_tol=tail, node_indices=idx,
        )
        for t, (probs, leaked, tail) in zip(t_list, results)
    ]


def evolve(gen: LatticeGenerator, x0, t: float, tol: float = 1e-10) -> HeatVector:
    """Heat semigroup applied to the point mass at x0, as a lattice density.

    The absorbed mass (boundary leakage plus series tail) is returned in
    ``leaked`` so that h^d * sum(density) + leaked = 1 up to roundoff.
    """
    if t < 0:
        raise ValueError("time must be >= 0")
    start = x0 if isinstance(x0, (int, np.integer)) else gen.node_index(x0)
    if t == 0.0:
        density = np.zeros(gen.n_nodes)
        density[start] = 1.0 / gen.h**gen.dim
        return HeatVector(
            t=0.0, base_point=gen.coords[start].copy(), coords=gen.coords,
            density=density, leaked=0.0, h=gen.h, dim=gen.dim, series_tol=0.0,
        )
    probs, leaked, tail = _uniformize(gen.rates, gen.leak, start, t, tol)
    return HeatVector(
        t=t, base_point=gen.coords[start].copy(), coords=gen.coords,
        density=probs / gen.h**gen.dim, leaked=leaked, h=gen.h, dim=gen.dim,
        series_tol=tail,
    )


def killed_kernel(gen: LatticeGenerator, ball, x0, t: float, tol: float = 1e-10) -> HeatVector:
    """Transition density of the process killed on exiting a lattice ball.

    ``ball`` = (center, radius); nodes at distance >= radius are absorbing,
    so the effective wall sits exactly at the radius when the radius is a
    node coordinate.
    """
    center, radius = ball
    idx = gen.nodes_in_ball(center, radius)
    if idx.size == 0:
        raise ValueError("ball contains no lattice nodes")
    start_full = x0 if isinstance(x0, (int, np.integer)) else gen.node_index(x0)
    where = np.nonzero(idx == start_full)[0]
    if where.size == 0:
        raise ValueError("start point not strictly inside the ball")
    sub_rates = gen.rates[np.ix_(idx, idx)]
    sub_leak = gen.total_rate[idx] - sub_rates.sum(axis=1)
    if t == 0.0:
        density = np.zeros(idx.size)
        density[int(where[0])] = 1.0 / gen.h**gen.dim
        return HeatVector(
            t=0.0, base_point=gen.coords[start_full].copy(), coords=gen.coords[idx],
            density=density, leaked=0.0, h=gen.h, dim=gen.dim, series_tol=0.0,
            node_indices=idx,
        )
    probs, leaked, tail = _uniformize(sub_rates, sub_leak, int(where[0]), t, tol)
    return HeatVector(
        t=t, base_point=gen.coords[start_full].copy(), coords=gen.coords[idx],
        density=probs / gen.h**gen.dim, leaked=leaked, h=gen.h, dim=gen.dim,
        series_tol=tail, node_indices=idx,
    )


def chapman_kolmogorov_check(
    gen: LatticeGenerator,
    x0,
    t: float,
    s: float,
    n_nodes: int = 12,
    floor: float = 1e-8,
    tol: float = 1e-10,
) -> float:
    """Worst relative semigroup-identity error over sampled nodes.

    Compares p(t+s, x0, y) against h^d sum_z p(t, x0, z) p(s, y, z), using
    symmetry of the lattice kernel to evolve from y instead of from every z.
    """
    if t < 0 or s < 0:
        raise ValueError("times must be >= 0")
    u = evolve(gen, x0, t + s, tol)
    w = evolve(gen, x0, t, tol)
    admissible = np.nonzero(u.density * gen.h**gen.dim >= floor)[0]
    if admissible.size == 0:
        raise ValueError("no nodes above the mass floor")
    order = admissible[np.argsort(u.density[admissible])[::-1]]
    picks = [int(order[0])]
    stride = max(1, len(order) // max(1, n_nodes - 1))
    picks.extend(int(i) for i in order[::stride][: n_nodes - 1])
    worst = 0.0
    for y in dict.fromkeys(picks):
        vy = evolve(gen, y, s, tol)
        conv = float(w.density @ vy.density) * gen.h ** (2 * gen.dim) / gen.h**gen.dim
        ref = float(u.density[y])
        worst = max(worst, abs(conv - ref) / ref)
    return worst


def _discrete_forms(gen: LatticeGenerator, f: np.ndarray) -> tuple[float, float]:
    """Energy form <-Qf, f> and the half-gradient Dirichlet energy, both in l2(h^d)."""
    hd = gen.h**gen.dim
    total = gen.total_rate
    energy = hd * float(f @ (total * f) - f @ (gen.rates @ f))
    grad = 0.0
    idx = np.arange(gen.n_nodes).reshape(gen.shape)
    for k in range(gen.dim):
        if gen.dim == 1:
            a, b = idx[:-1], idx[1:]
        else:
            a = (idx[:-1, :] if k == 0 else idx[:, :-1]).ravel()
            b = (idx[1:, :] if k == 0 else idx[:, 1:]).ravel()
        df = (f[b] - f[a]) / gen.h
        grad += hd * float(df @ df)
    return energy, 0.5 * grad


def form_comparability_check(gen: LatticeGenerator, fns: Sequence[np.ndarray]):
    """Extreme ratios of (energy form + L2) to (half-gradient form + L2).

    For the pure-diffusion identity model the ratio is exactly 1 for every
    test function; for mixed models it must stay in a finite window.
    """
    hd = gen.h**gen.dim
    ratios = []
    for f in fns:
        f = np.asarray(f, dtype=float)
        l2 = hd * float(f @ f)
        if l2 == 0.0:
            continue
        energy, grad = _discrete_forms(gen, f)
        ratios.append((energy + l2) / (grad + l2))
    if not ratios:
        raise ValueError("all test functions vanish")
    return float(min(ratios)), float(max(ratios))


def random_bumps(
    gen: LatticeGenerator, n: int = 20, seed: int = 5, margin: float = 0.25
) -> list[np.ndarray]:
    """Smooth compactly supported test functions, zero near the box boundary."""
    rng = np.random.default_rng(seed)
    lo = gen.coords.min(axis=0)
    hi = gen.coords.max(axis=0)
    span = hi - lo
    out = []
    for _ in range(n):
        c = lo + span * rng.uniform(0.35, 0.65, size=gen.dim)
        width = span.min() * rng.uniform(0.05, 0.15)
        f = np.exp(-np.sum((gen.coords - c) ** 2, axis=1) / (2 * width**2))
        edge = np.minimum(
            (gen.coords - lo).min(axis=1), (hi - gen.coords).min(axis=1)
        )
        cutoff = np.clip(edge / (margin * span.min()), 0.0, 1.0)
        out.append(f * cutoff**2)
    return out


def weighted_poincare_check(
    r: float,
    beta: float,
    fns: Optional[Sequence[Callable[[np.ndarray], np.ndarray]]] = None,
    dim: int = 1,
    nodes_per_radius: int = 64,
    seed: int = 3,
) -> float:
    """Realized constant of the weighted Poincare inequality on B(0, r).

    Weight psi(x) = ((1 - |x|/r)_+)^{a1} with a1 = 12/(2 - beta),
    normalized to unit lattice mass.  Test functions are callables of the
    rescaled coordinate x/r so the check is exactly scale-covariant; the
    realized constant is max over them of
    [sum (u - mean_psi u)^2 psi] / [r^2 sum |grad u|^2 psi(midpoint)].
    """
    if not (0 < beta < 2):
        raise ValueError("beta must lie in (0, 2)")
    a1 = 12.0 / (2.0 - beta)
    h = r / nodes_per_radius
    if dim == 1:
        coords = np.arange(-nodes_per_radius, nodes_per_radius + 1)[:, None] * h
    elif dim == 2:
        g = np.arange(-nodes_per_radius, nodes_per_radius + 1) * h
        xx, yy = np.meshgrid(g, g, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        coords = pts[np.linalg.norm(pts, axis=1) < r]
    else:
        raise ValueError("dim must be 1 or 2")
    dist = np.linalg.norm(coords, axis=1)
    hd = h**dim
    raw = np.clip(1.0 - dist / r, 0.0, None) ** a1
    raw_norm = raw.sum() * hd
    psi = raw / raw_norm

    def psi_at(points):
        dd = np.linalg.norm(points, axis=1)
        return np.clip(1.0 - dd / r, 0.0, None) ** a1 / raw_norm

    if fns is None:
        rng = np.random.default_rng(seed)
        fns = []
        for _ in range(20):
            freq = rng.uniform(0.5, 3.0, size=dim)
            phase = rng.uniform(0, 2 * math.pi, size=dim)
            amp = rng.uniform(0.5, 1.5)
            fns.append(
                lambda xi, f=freq, p=phase, a=amp: a
                * np.prod(np.sin(np.atleast_2d(xi) * f + p), axis=1)
            )

    worst = 0.0
    for fn in fns:
        u = np.asarray(fn(coords / r), dtype=float)
        mean = float((u * psi).sum() * hd)
        num = float(((u - mean) ** 2 * psi).sum() * hd)
        den = 0.0
        for k in range(dim):
            step = np.zeros(dim)
            step[k] = h
            shifted = coords + step
            inside = np.linalg.norm(shifted, axis=1) < r
            u_sh = np.asarray(fn(shifted[inside] / r), dtype=float)
            psi_mid = psi_at(coords[inside] + 0.5 * step)
            df = (u_sh - u[inside]) / h
            den += float((df * df * psi_mid).sum() * hd)
        den *= r * r
        if den < 1e-300 or num < 1e-300:
            continue
        worst = max(worst, num / den)
    return worst


def generator_summary(gen: LatticeGenerator) -> dict:
    """Exportable summary record of a lattice generator."""
    total = gen.total_rate
    return {
        "dim": gen.dim,
        "h": gen.h,
        "eps_cell": gen.eps_cell,
        "node_count": gen.n_nodes,
        "max_rate": float(total.max()),
        "leak_max": float(gen.leak.max()),
        "leak_mean": float(gen.leak.mean()),
        "boundary_mode": gen.boundary_mode,
        "model": gen.model_name,
    }
