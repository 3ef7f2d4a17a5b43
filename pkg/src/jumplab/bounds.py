"""Closed-form heat-kernel profiles, envelopes, and the region classifier.

Building blocks: the Gaussian profile  p_c(t, r) = t^{-d/2} exp(-r^2/t),
the jump profile  p_j(t, r) = min(phi^{-1}(t)^{-d}, t / (r^d phi(r))),
their two-sided envelope with on-diagonal clipping, the exponential
perturbation bound for range-truncated kernels, the optimized exponential
test value F with its two parameter-selection regimes, and the
five-case (t, R) region partition with the dominance map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scaling import ScaleFunction

__all__ = [
    "EnvelopeConstants",
    "RegionReport",
    "FResult",
    "p_c",
    "p_j",
    "on_diagonal_profile",
    "crossover_radius",
    "envelope",
    "davies_truncated_bound",
    "davies_minimized_bound",
    "optimized_F",
    "polynomial_situation_form",
    "gaussian_situation_form",
    "classify_region",
    "region_sweep",
]

CASE_LABELS = (1, 2, 3, 4, 5)
DOMINANT_LABELS = ("on-diagonal", "gaussian", "jump")


@dataclass
class EnvelopeConstants:
    """Constants (c1, c2) for the lower and (c3, c4) for the upper envelope.

    c2 and c4 multiply the distance inside the Gaussian profile; the lower
    bound must decay at least as fast as the upper one (c2 >= c4).
    """

    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 1.0
    c_star: float = 1.0
    fitted: bool = False

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3, self.c4, self.c_star) <= 0:
            raise ValueError("envelope constants must be positive")
        if self.c1 > self.c3 * (1 + 1e-12):
            raise ValueError("lower amplitude c1 must not exceed upper amplitude c3")
        if self.c2 < self.c4 * (1 - 1e-12):
            raise ValueError("lower Gaussian rate c2 must be >= upper rate c4")


def p_c(t, r, d: int):
    """Gaussian heat-kernel profile t^{-d/2} exp(-r^2/t)."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    with np.errstate(under="ignore"):
        out = t ** (-d / 2.0) * np.exp(-(r * r) / t)
    return float(out) if out.ndim == 0 else out


def p_j(t, r, phi: ScaleFunction, d: int):
    """Jump profile min(phi^{-1}(t)^{-d}, t / (r^d phi(r))); on-diagonal at r=0."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    diag = phi.inverse(t) ** (-float(d))
    r_safe = np.maximum(r, 1e-300)
    with np.errstate(divide="ignore", over="ignore"):
        far = t / (r_safe**d * phi(r_safe))
    out = np.where(r > 0, np.minimum(diag, far), diag)
    return float(out) if out.ndim == 0 else out


def on_diagonal_profile(t, phi: ScaleFunction, d: int):
    """Clipping level of the envelope: combined-clock inverse to the -d."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    out = phi.tilde_inverse(t) ** (-float(d))
    return float(out) if out.ndim == 0 else out


def crossover_radius(t: float, phi: ScaleFunction, d: int, rtol: float = 1e-10) -> float:
    """Radius where the two branches of the jump profile meet.

    Solves r^d phi(r) = t * phi^{-1}(t)^d by monotone bisection.
    """
    if t <= 0:
        raise ValueError("time must be positive")
    target = t * phi.inverse(t) ** d

    def g(r):
        return r**d * phi(r)

    lo = hi = phi.inverse(t)
    while g(lo) > target:
        lo *= 0.5
    while g(hi) < target:
        hi *= 2.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if g(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)


def envelope(t, big_r, phi: ScaleFunction, d: int, consts: EnvelopeConstants, side: str):
    """Two-sided envelope value c * [on-diag ^ (p_c(t, c'.R) + p_j(t, R))]."""
    if side == "upper":
        amp, rate = consts.c3, consts.c4
    elif side == "lower":
        amp, rate = consts.c1, consts.c2
    else:
        raise ValueError(f"side must be 'upper' or 'lower', got {side!r}")
    body = np.minimum(
        on_diagonal_profile(t, phi, d),
        p_c(t, rate * np.asarray(big_r, dtype=float), d) + p_j(t, big_r, phi, d),
    )
    out = amp * body
    return float(out) if np.ndim(out) == 0 else out


def davies_truncated_bound(t, big_r, s, lam, d: int, delta_lam: float, c1: float = 1.0, c2: float = 1.0):
    """Exponential-perturbation bound for the kernel truncated at range lam:

        c1 t^{-d/2} exp(-s R + c2 s^2 (1 + e^{2 lam s} delta(lam)) t).
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t <= 0) or np.any(s <= 0) or lam <= 0:
        raise ValueError("t, s, lam must be positive")
    with np.errstate(over="ignore", under="ignore"):
        expo = -s * np.asarray(big_r, dtype=float) + c2 * s * s * (
            1.0 + np.exp(2.0 * lam * s) * delta_lam
        ) * t
        out = c1 * t ** (-d / 2.0) * np.exp(expo)
    return float(out) if out.ndim == 0 else out


def davies_minimized_bound(
    t: float, big_r: float, lam: float, d: int, delta_lam: float,
    c1: float = 1.0, c2: float = 1.0, n_grid: int = 257,
) -> tuple[float, float]:
    """Minimum of the truncated-kernel bound over a log grid in s.

    Returns (bound value, minimizing s).  Grid minimization suffices; the
    minimand is smooth and unimodal in practice.  The grid brackets the
    free-Gaussian minimizer R/(2 c2 t) by several decades on each side.
    """
    s_ref = max(big_r / (2.0 * c2 * t), 1e-9)
    s_grid = np.geomspace(1e-5 * s_ref, 1e4 * s_ref, n_grid)
    vals = davies_truncated_bound(t, big_r, s_grid, lam, d, delta_lam, c1, c2)
    k = int(np.argmin(vals))
    return float(vals[k]), float(s_grid[k])


@dataclass
class FResult:
    """Optimized exponential test value with its parameter selection."""

    value: float
    log_value: float
    s: float
    lam: float
    situation: str  # "i", "ii", or "not-applicable"
    reason: str = ""


def _situation_constants(phi_r: ScaleFunction, d: int, c_star: float):
    h_const = phi_r.beta1 / (12.0 * (d + phi_r.beta1))
    k_const = h_const / (6.0 * c_star)
    a_const = math.e * k_const / phi_r.comp_const
    return h_const, k_const, a_const


def optimized_F(
    t: float, big_r: float, phi_r: ScaleFunction, d: int, c_star: float = 1.0
) -> FResult:
    """F(lam, s, t, R) = exp(-sR/3 + C_*(s^2 + e^{s lam}/phi_r(lam)) t) with
    the two-regime parameter selection.

    Regime (i) (jump-dominated): applies when K R^2/t >= log(a phi_r(R)/t)
    and R^2 >= t; takes lam = H R, s = log(e phi_r(R)/t)/(H R).
    Regime (ii) (Gaussian): applies on the complementary inequality; takes
    lam = K R/(6 C_*), s = R/(6 C_* t).  When neither applies the result is
    explicitly tagged not-applicable.
    """
    if t <= 0 or big_r <= 0:
        raise ValueError("t and R must be positive")
    h_const, k_const, a_const = _situation_constants(phi_r, d, c_star)
    phi_R = phi_r(big_r)
    log_threshold = math.log(a_const * phi_R / t)
    lhs = k_const * big_r * big_r / t

    def f_log(s, lam):
        return -s * big_r / 3.0 + c_star * (s * s + math.exp(s * lam) / phi_r(lam)) * t

    if lhs >= log_threshold and big_r * big_r >= t:
        arg = math.e * phi_R / t
        if arg <= 1.0:
            return FResult(math.nan, math.nan, math.nan, math.nan, "not-applicable",
                           reason="regime (i) selection needs e*phi_r(R) > t")
        lam = h_const * big_r
        s = math.log(arg) / lam
        lv = f_log(s, lam)
        val = math.exp(lv) if lv <= 709.0 else math.inf
        return FResult(val, lv, s, lam, "i")
    if lhs < log_threshold:
        lam = k_const * big_r / (6.0 * c_star)
        s = big_r / (6.0 * c_star * t)
        lv = f_log(s, lam)
        with np.errstate(under="ignore"):
            val = math.exp(lv) if lv > -745 else 0.0
        return FResult(val, lv, s, lam, "ii")
    return FResult(
        math.nan, math.nan, math.nan, math.nan, "not-applicable",
        reason="inequality holds but R^2 < t (excluded corner)",
    )


def polynomial_situation_form(t, big_r, phi_r: ScaleFunction, d: int):
    """Reference decay shape for regime (i): (t / phi_r(R))^{d/beta1 + 1}."""
    t = np.asarray(t, dtype=float)
    return (t / phi_r(big_r)) ** (d / phi_r.beta1 + 1.0)


def gaussian_situation_form(t, big_r, c_star: float = 1.0):
    """Reference decay shape for regime (ii): exp(-R^2 / (36 C_* t)).

    This is exp(-sR/6) at the regime's parameter s = R/(6 C_* t).
    """
    t = np.asarray(t, dtype=float)
    big_r = np.asarray(big_r, dtype=float)
    with np.errstate(under="ignore"):
        out = np.exp(-big_r * big_r / (36.0 * c_star * t))
    return float(out) if out.ndim == 0 else out


@dataclass
class RegionReport:
    """Case label and dominant envelope term at one (t, R) point."""

    case: int
    dominant: str
    terms: dict = field(default_factory=dict)


def _case_masks(t: np.ndarray, big_r: np.ndarray, phi_r_vals: np.ndarray):
    """Boolean masks of the five case predicates (before precedence)."""
    r2 = big_r * big_r
    return (
        (r2 < t) & (t < phi_r_vals) & (phi_r_vals <= 1.0),
        phi_r_vals <= t,
        (t <= 1.0) & (big_r >= 1.0),
        (phi_r_vals >= t) & (t >= 1.0),
        (t <= r2) & (r2 <= 1.0),
    )


def classify_region(t: float, big_r: float, phi: ScaleFunction, d: int = 1) -> RegionReport:
    """Unique case label under the declared precedence plus the dominance map.

    Precedence is the order of presentation (1..5, first match); boundary
    ties go to the earlier case.  Dominance compares the three envelope
    terms with unit constants.
    """
    if t <= 0 or big_r <= 0:
        raise ValueError("t and R must be positive")
    t_arr = np.asarray(float(t))
    r_arr = np.asarray(float(big_r))
    masks = _case_masks(t_arr, r_arr, np.asarray(phi(big_r)))
    case = 0
    for k, m in enumerate(masks, start=1):
        if bool(m):
            case = k
            break
    if case == 0:
        raise RuntimeError(f"no case matched at (t={t!r}, R={big_r!r}); partition bug")
    diag = on_diagonal_profile(t, phi, d)
    gauss = p_c(t, big_r, d)
    jump = p_j(t, big_r, phi, d)
    if diag <= gauss + jump:
        dom = "on-diagonal"
    else:
        dom = "gaussian" if gauss >= jump else "jump"
    return RegionReport(case=case, dominant=dom, terms={
        "on-diagonal": float(diag), "gaussian": float(gauss), "jump": float(jump),
    })


def region_sweep(phi: ScaleFunction, d: int, t_grid: np.ndarray, r_grid: np.ndarray):
    """Vectorized case/dominance sweep over a (t, R) grid.

    Returns (T, R, case, dominant_index, terms) with dominant indices into
    DOMINANT_LABELS; ``case`` 0 would mean a partition gap (checked by the
    acceptance suite to never occur).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    r_grid = np.asarray(r_grid, dtype=float)
    tt, rr = np.meshgrid(t_grid, r_grid, indexing="ij")
    phi_vals = phi(rr)
    masks = _case_masks(tt, rr, phi_vals)
    case = np.zeros(tt.shape, dtype=np.int8)
    matched = np.zeros(tt.shape, dtype=bool)
    for k, m in enumerate(masks, start=1):
        fresh = m & ~matched
        case[fresh] = k
        matched |= m
    inv = np.empty_like(t_grid)
    for i, tv in enumerate(t_grid):
        inv[i] = phi.inverse(float(tv))
    diag = np.maximum(np.sqrt(tt), inv[:, None]) ** (-float(d))
    with np.errstate(under="ignore", divide="ignore", over="ignore"):
        gauss = tt ** (-d / 2.0) * np.exp(-(rr * rr) / tt)
        jump = np.minimum(inv[:, None] ** (-float(d)), tt / (rr**d * phi_vals))
    dom = np.where(
        diag <= gauss + jump, 0, np.where(gauss >= jump, 1, 2)
    ).astype(np.int8)
    return tt, rr, case, dom, {"on-diagonal": diag, "gaussian": gauss, "jump": jump}
