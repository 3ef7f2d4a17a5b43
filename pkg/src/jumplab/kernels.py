"""Diffusion matrix fields, symmetric jump kernels, and hypothesis checks.

A model couples a uniformly elliptic matrix field A(x) (divergence-form
diffusion part, generator (1/2) div(A grad)) with a symmetric jump kernel
J(x, y) acting as the jump intensity density.  Every quantitative
hypothesis placed on A and J is verified here on finite sample sets:
ellipticity, kernel symmetry, the short-range upper bound, tail
integrability, lower nondegeneracy of near-pair jump mass, and the
pointwise-versus-ball-average (UJS) comparability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .scaling import ScaleFunction

__all__ = [
    "DiffusionField",
    "JumpKernel",
    "Model",
    "ModelError",
    "ValidationError",
    "check_uniform_ellipticity",
    "divergence_drift",
    "check_j_integrability",
    "check_j_lower_bound",
    "check_ujs",
    "jump_intensity_tail",
    "small_jump_moments",
    "sphere_directions",
    "sphere_surface",
]


class ValidationError(ValueError):
    """A declared model hypothesis fails on sampled data."""


class ModelError(RuntimeError):
    """Model constants are inconsistent with the evaluators."""


def sphere_surface(d: int) -> float:
    """Surface measure of the unit sphere (2, 2*pi, 4*pi for d = 1, 2, 3)."""
    if d == 1:
        return 2.0
    if d == 2:
        return 2.0 * math.pi
    if d == 3:
        return 4.0 * math.pi
    raise ValueError(f"dimension {d} not supported")


def sphere_directions(d: int, n: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric quadrature (directions, weights) on the unit sphere.

    Weights sum to the sphere surface; the node set is symmetric under
    negation so odd integrands cancel exactly.
    """
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
        w = np.array([1.0, 1.0])
    elif d == 2:
        n = max(4, n + (n % 2))
        theta = (np.arange(n) + 0.5) * (2.0 * math.pi / n)
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        w = np.full(n, 2.0 * math.pi / n)
    elif d == 3:
        m = max(4, n // 2)
        nodes, gw = np.polynomial.legendre.leggauss(m)
        phis = (np.arange(2 * m) + 0.5) * (math.pi / m)
        ct, st = nodes, np.sqrt(1.0 - nodes**2)
        dirs = np.stack(
            [
                np.outer(st, np.cos(phis)).ravel(),
                np.outer(st, np.sin(phis)).ravel(),
                np.repeat(ct, 2 * m),
            ],
            axis=1,
        )
        w = np.outer(gw, np.full(2 * m, math.pi / m)).ravel() * 2.0
        w *= sphere_surface(3) / w.sum()
    else:
        raise ValueError(f"dimension {d} not supported")
    return dirs, w


@dataclass
class DiffusionField:
    """Symmetric matrix field A(x) with declared ellipticity window.

    ``matrix`` maps points of shape (..., d) to matrices (..., d, d) and
    must be numpy-vectorized.  ``div`` optionally supplies the analytic
    column divergence  (div A)_j = sum_i d_i a_ij ; when absent, central
    differences with step ``fd_step`` are used.
    """

    dim: int
    matrix: Callable[[np.ndarray], np.ndarray]
    ellipticity: float = 1.0
    div: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-5
    description: str = ""
    kind: str = "custom"
    params: tuple = field(default_factory=tuple)

    @property
    def analytic_gradient(self) -> bool:
        return self.div is not None

    def __call__(self, x):
        return self.matrix(np.asarray(x, dtype=float))


@dataclass
class JumpKernel:
    """Symmetric jump intensity density J(x, y) with declared constants.

    ``evaluate`` maps broadcastable point arrays (x, y) of shape (..., d)
    to intensities (...).  ``radial_profile`` is an optional fast path for
    translation-invariant isotropic kernels: J(x, x+z) = radial_profile(|z|).
    Declared constants: ``kappa0``/``beta``/``delta0`` for the short-range
    upper bound J <= kappa0 |x-y|^{-d-beta} on |x-y| <= delta0, and the
    comparability window kappa_low/kappa_up around 1/(|z|^d phi(|z|)).
    """

    dim: int
    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    scale: Optional[ScaleFunction] = None
    kappa_low: float = 0.0
    kappa_up: float = 0.0
    kappa0: float = 0.0
    beta: float = 1.0
    delta0: float = 1.0
    symmetric: bool = True
    radial_profile: Optional[Callable[[np.ndarray], np.ndarray]] = None
    cutoff: float = math.inf
    description: str = ""
    kind: str = "custom"
    params: tuple = field(default_factory=tuple)

    @property
    def is_zero(self) -> bool:
        return self.kappa0 == 0.0 and self.kappa_up == 0.0

    @property
    def translation_invariant(self) -> bool:
        return self.radial_profile is not None

    def j_between(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.evaluate(x, y)


def zero_kernel(d: int) -> JumpKernel:
    """The trivial kernel J = 0 (pure diffusion)."""

    def ev(x, y):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
        return np.zeros(shape)

    return JumpKernel(
        dim=d, evaluate=ev, kappa_low=0.0, kappa_up=0.0, kappa0=0.0,
        beta=1.0, delta0=1.0, radial_profile=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        description="no jumps", kind="zero",
    )


@dataclass
class Model:
    """A diffusion field plus a jump kernel on the same space."""

    diffusion: DiffusionField
    jump: JumpKernel
    dim: int = 0
    name: str = ""

    def __post_init__(self):
        if self.dim == 0:
            self.dim = self.diffusion.dim
        if self.diffusion.dim != self.dim or self.jump.dim != self.dim:
            raise ValidationError(
                f"dimension mismatch: field d={self.diffusion.dim}, kernel d={self.jump.dim}"
            )

    def validate(self, n_points: int = 256, seed: int = 7, box_half: float = 4.0) -> dict:
        """Sampled verification of every declared hypothesis; raises on failure."""
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-box_half, box_half, size=(n_points, self.dim))
        lo, hi = check_uniform_ellipticity(self.diffusion, pts)
        lam = self.diffusion.ellipticity
        if lo < 1.0 / lam - 1e-9 or hi > lam + 1e-9:
            raise ValidationError(
                f"ellipticity window violated: realized [{lo:.6g}, {hi:.6g}], declared "
                f"[{1.0 / lam:.6g}, {lam:.6g}]"
            )
        report = {"ellipticity": (lo, hi)}
        if not self.jump.is_zero:
            xs = rng.uniform(-box_half, box_half, size=(n_points, self.dim))
            zs = rng.standard_normal((n_points, self.dim))
            zs *= (rng.uniform(0.05, 2.0, size=(n_points, 1))) / np.linalg.norm(
                zs, axis=1, keepdims=True
            )
            ys = xs + zs
            jxy = self.jump.j_between(xs, ys)
            jyx = self.jump.j_between(ys, xs)
            denom = np.maximum(np.abs(jxy), np.abs(jyx))
            bad = denom > 0
            rel = np.zeros_like(jxy)
            rel[bad] = np.abs(jxy - jyx)[bad] / denom[bad]
            if np.any(rel > 1e-12):
                raise ValidationError(f"kernel symmetry violated: max rel diff {rel.max():.3g}")
            report["symmetry_max_rel"] = float(rel.max())
            dist = np.linalg.norm(zs, axis=1)
            near = dist <= min(self.jump.delta0, self.jump.cutoff)
            if self.jump.kappa0 > 0 and np.any(near):
                bound = self.jump.kappa0 * dist[near] ** (-(self.dim + self.jump.beta))
                if np.any(jxy[near] > bound * (1 + 1e-9)):
                    raise ValidationError("short-range kernel upper bound violated at samples")
            if self.jump.kappa_up > 0 and self.jump.scale is not None:
                mask = dist <= self.jump.cutoff
                ratio = jxy[mask] * dist[mask] ** self.dim * self.jump.scale(dist[mask])
                if np.any(ratio > self.jump.kappa_up * (1 + 1e-9)) or np.any(
                    ratio < self.jump.kappa_low * (1 - 1e-9)
                ):
                    raise ValidationError(
                        f"comparability window violated: ratios in "
                        f"[{ratio.min():.6g}, {ratio.max():.6g}]"
                    )
                report["comparability"] = (float(ratio.min()), float(ratio.max()))
        return report


def check_uniform_ellipticity(
    field_: DiffusionField,
    points: np.ndarray,
    directions: Optional[np.ndarray] = None,
) -> tuple[float, float]:
    """Extreme Rayleigh quotients of A over sample points.

    Uses exact eigenvalue extremes at every point (d <= 3) and, when
    ``directions`` are supplied, also their Rayleigh quotients.  Raises if
    any sampled matrix is asymmetric beyond 1e-10.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValidationError("empty sample set")
    mats = field_(pts)
    asym = np.abs(mats - np.swapaxes(mats, -1, -2)).max()
    if asym > 1e-10:
        raise ValidationError(f"A(x) asymmetric: max |A - A^T| = {asym:.3g}")
    eigs = np.linalg.eigvalsh(mats)
    lo, hi = float(eigs.min()), float(eigs.max())
    if directions is not None:
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
        quot = np.einsum("ki,pij,kj->pk", dirs, mats, dirs)
        lo = min(lo, float(quot.min()))
        hi = max(hi, float(quot.max()))
    return lo, hi


def divergence_drift(field_: DiffusionField, x: np.ndarray, h: Optional[float] = None) -> np.ndarray:
    """Drift of the divergence-form diffusion: b_j(x) = (1/2) sum_i d_i a_ij(x).

    Central differences of order h^2 unless the field carries an analytic
    divergence.  Vectorized over leading axes of ``x``.
    """
    x = np.asarray(x, dtype=float)
    if field_.div is not None:
        return 0.5 * field_.div(x)
    if h is None:
        h = field_.fd_step
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    d = field_.dim
    out = np.zeros(x.shape)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        diff = (field_(x + e) - field_(x - e)) / (2.0 * h)
        out += diff[..., i, :]
    return 0.5 * out


def _radial_kernel_average(kernel: JumpKernel, x: np.ndarray, n_angular: int = 16):
    """Return f(r) = average of J(x, x + r*omega) over the sphere (times 1)."""
    if kernel.radial_profile is not None:
        prof = kernel.radial_profile

        def avg(r):
            return prof(np.asarray(r, dtype=float))

        return avg
    dirs, w = sphere_directions(kernel.dim, n_angular)
    surf = sphere_surface(kernel.dim)
    x = np.asarray(x, dtype=float)

    def avg(r):
        r = np.asarray(r, dtype=float)
        pts = x[None, ...] + r[..., None, None] * dirs if r.ndim else x + r * dirs
        vals = kernel.j_between(np.broadcast_to(x, pts.shape), pts)
        return np.tensordot(vals, w, axes=(-1, 0)) / surf

    return avg


def _tail_segments(lam: float, cutoff: float) -> list[float]:
    pts = sorted({lam, 2 * lam, max(1.0, lam), 10 * max(1.0, lam)})
    if math.isfinite(cutoff):
        pts.append(cutoff)
    return sorted(p for p in set(pts) if p >= lam)


def jump_intensity_tail(kernel: JumpKernel, x: np.ndarray, lam: float) -> float:
    """Total jump intensity beyond distance lam: int_{|y-x|>lam} J(x, y) dy.

    Radial decomposition: surf * int_lam^inf r^{d-1} avg_J(x, r) dr with the
    sphere average computed by fixed angular quadrature.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if kernel.is_zero:
        return 0.0
    if math.isfinite(kernel.cutoff) and lam >= kernel.cutoff:
        return 0.0
    avg = _radial_kernel_average(kernel, np.asarray(x, dtype=float))
    surf = sphere_surface(kernel.dim)
    d = kernel.dim

    def integrand(r):
        return r ** (d - 1) * float(avg(np.asarray(r)))

    total = 0.0
    segs = _tail_segments(lam, kernel.cutoff)
    for a, b in zip(segs[:-1], segs[1:]):
        val, err = integrate.quad(integrand, a, b, limit=200, epsabs=1e-12, epsrel=1e-10)
        total += val
    if not math.isfinite(kernel.cutoff):
        tail, err = integrate.quad(integrand, segs[-1], np.inf, limit=200, epsrel=1e-10)
        if not math.isfinite(tail):
            raise ModelError(f"tail intensity quadrature diverged at x={x!r}, lam={lam!r}")
        total += tail
    return surf * total


def small_jump_moments(
    kernel: JumpKernel, x: np.ndarray, eps: float, n_angular: int = 16
) -> tuple[np.ndarray, np.ndarray, float]:
    """Mean, second-moment matrix and trace of jumps of size <= eps.

    m = int_{|z|<=eps} z J(x, x+z) dz  (principal value via symmetric nodes),
    C = int_{|z|<=eps} z z^T J(x, x+z) dz,  delta = trace C.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = kernel.dim
    if kernel.is_zero:
        return np.zeros(d), np.zeros((d, d)), 0.0
    x = np.asarray(x, dtype=float)
    dirs, w = sphere_directions(d, n_angular)
    upper = min(eps, kernel.cutoff)

    def vals_at(r):
        pts = x + r * dirs
        return kernel.j_between(np.broadcast_to(x, pts.shape), pts)

    def mean_integrand(r):
        v = vals_at(r)
        return r**d * (w * v) @ dirs  # shape (d,)

    def second_integrand(r):
        v = vals_at(r)
        return r ** (d + 1) * np.einsum("k,ki,kj->ij", w * v, dirs, dirs)

    m = np.zeros(d)
    c = np.zeros((d, d))
    for i in range(d):
        m[i] = integrate.quad(
            lambda r, i=i: mean_integrand(r)[i], 0.0, upper, limit=200, epsabs=1e-13
        )[0]
    for i in range(d):
        for j in range(i, d):
            c[i, j] = integrate.quad(
                lambda r, i=i, j=j: second_integrand(r)[i, j], 0.0, upper,
                limit=200, epsabs=1e-13,
            )[0]
            c[j, i] = c[i, j]
    return m, c, float(np.trace(c))


@dataclass
class CheckReport:
    """Outcome of a sampled kernel-hypothesis check."""

    passed: bool
    value: float
    detail: dict


def check_j_integrability(
    kernel: JumpKernel, points: np.ndarray, budget: float = math.inf
) -> CheckReport:
    """sup_x int (|x-y|^2 ^ 1) J(x, y) dy over the sample, plus the tail form.

    The integral is split at |z| = 1: quadratic part inside, plain tail
    outside; both by radial quadrature.  Divergence under refinement is
    reported as failure, not raised.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValidationError("empty sample set")
    if kernel.is_zero:
        return CheckReport(True, 0.0, {"sup": 0.0, "tail_sup": 0.0})
    d = kernel.dim
    surf = sphere_surface(d)
    sup_val = 0.0
    tail_sup = 0.0
    for x in pts:
        avg = _radial_kernel_average(kernel, x)
        inner = integrate.quad(
            lambda r: r ** (d + 1) * float(avg(np.asarray(r))),
            0.0, min(1.0, kernel.cutoff), limit=200,
        )[0]
        tail = jump_intensity_tail(kernel, x, 1.0)
        sup_val = max(sup_val, surf * inner + tail)
        tail_sup = max(tail_sup, tail)
    finite = math.isfinite(sup_val)
    return CheckReport(
        passed=finite and sup_val <= budget,
        value=sup_val,
        detail={"sup": sup_val, "tail_sup": tail_sup},
    )


def _ball_integral(kernel: JumpKernel, x: np.ndarray, center: np.ndarray, radius: float) -> float:
    """int_{B(center, radius)} J(x, z) dz by polar product quadrature."""
    d = kernel.dim
    dirs, w = sphere_directions(d, 24)
    nodes, gw = np.polynomial.legendre.leggauss(32)
    r = 0.5 * radius * (nodes + 1.0)
    rw = 0.5 * radius * gw
    pts = center[None, None, :] + r[:, None, None] * dirs[None, :, :]
    vals = kernel.j_between(np.broadcast_to(x, pts.shape), pts)
    return float(np.einsum("i,k,ik->", rw * r ** (d - 1), w, vals))


def check_j_lower_bound(
    kernel: JumpKernel,
    radii: Sequence[float],
    n_placements: int = 8,
    seed: int = 11,
) -> CheckReport:
    """Sampled lower nondegeneracy of near-pair jump mass.

    For each r, pairs (x0, y0) at distance r are placed in several
    directions, x ranges over B(x0, r/16), and the mass
    int_{B(y0, r/16)} J(x, z) dz is minimized.  Passing requires a
    strictly positive minimum for every tested radius.  This is a sampled
    verification over finitely many placements, not a proof.
    """
    if kernel.is_zero:
        return CheckReport(False, 0.0, {"reason": "zero kernel"})
    d = kernel.dim
    rng = np.random.default_rng(seed)
    per_radius = {}
    overall = math.inf
    for r in radii:
        if not (0 < r < kernel.delta0):
            raise ValidationError(f"radius {r} outside (0, delta0)")
        worst = math.inf
        for _ in range(n_placements):
            x0 = rng.uniform(-2, 2, size=d)
            direction = rng.standard_normal(d)
            direction /= np.linalg.norm(direction)
            y0 = x0 + r * direction
            for _ in range(4):
                off = rng.standard_normal(d)
                off *= rng.uniform(0, r / 16) / np.linalg.norm(off)
                val = _ball_integral(kernel, x0 + off, y0, r / 16)
                worst = min(worst, val)
        per_radius[float(r)] = worst
        overall = min(overall, worst)
    return CheckReport(passed=overall > 0.0, value=overall, detail=per_radius)


def check_ujs(
    kernel: JumpKernel,
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    radii: Sequence[float],
) -> CheckReport:
    """Realized constant of the pointwise-vs-ball-average comparability.

    sup over samples of J(x, y) * r^d / int_{B(x, r)} J(z, y) dz for radii
    with r <= (|x-y|/2) ^ 1.  Passing requires a finite constant.
    """
    if kernel.is_zero:
        return CheckReport(True, 0.0, {})
    worst = 0.0
    witness = None
    for x, y in pairs:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dist = float(np.linalg.norm(x - y))
        for r in radii:
            if r > min(dist / 2.0, 1.0):
                raise ValidationError(f"radius {r} violates r <= (|x-y|/2) ^ 1")
            ball = _ball_integral(kernel, y, x, r)
            point = float(kernel.j_between(x, y))
            if ball <= 0:
                return CheckReport(False, math.inf, {"witness": (x.tolist(), y.tolist(), r)})
            c_here = point * r**kernel.dim / ball
            if c_here > worst:
                worst = c_here
                witness = (x.tolist(), y.tolist(), float(r))
    return CheckReport(passed=math.isfinite(worst), value=worst, detail={"witness": witness})
