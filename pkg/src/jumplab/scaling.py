"""Jump scale functions and their growth conditions.

A scale function maps a jump length r to the time scale phi(r) on which
jumps of that size matter.  Admissible scales are strictly increasing,
normalized by phi(0)=0 and phi(1)=1, and satisfy a two-sided power
scaling condition with exponents 0 < beta1 <= beta2 < 2 plus an
integrated smallness condition

    int_0^r s/phi(s) ds <= c * r^2/phi(r).

The combined scale  phi_tilde(r) = min(r^2, phi(r))  merges the diffusive
and the jump clock; its inverse is max(sqrt(t), phi^{-1}(t)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "ScaleFunction",
    "MixtureMeasure",
    "ScalingReport",
    "power_scale",
    "mixed_stable_phi",
    "check_scaling_conditions",
    "scale_to_record",
    "scale_from_record",
]


class ScaleError(ValueError):
    """Invalid scale-function parameters or arguments."""


@dataclass
class MixtureMeasure:
    """Probability measure on a compact index interval inside (0, 2).

    Either a finite atomic measure (``atoms`` = sequence of (index, weight))
    or an absolutely continuous one given by ``density`` on
    [``alpha_min``, ``alpha_max``].
    """

    atoms: Optional[Sequence[tuple[float, float]]] = None
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    alpha_min: float = 0.0
    alpha_max: float = 0.0

    def __post_init__(self):
        if (self.atoms is None) == (self.density is None):
            raise ScaleError("exactly one of atoms/density must be given")
        if self.atoms is not None:
            self.atoms = tuple((float(a), float(w)) for a, w in self.atoms)
            if not self.atoms:
                raise ScaleError("empty atom list")
            self.alpha_min = min(a for a, _ in self.atoms)
            self.alpha_max = max(a for a, _ in self.atoms)
            total = sum(w for _, w in self.atoms)
        else:
            if not (0.0 < self.alpha_min <= self.alpha_max):
                raise ScaleError("density support must be ordered and positive")
            total = integrate.quad(self.density, self.alpha_min, self.alpha_max)[0]
        if not (0.0 < self.alpha_min and self.alpha_max < 2.0):
            raise ScaleError(
                f"mixture support [{self.alpha_min}, {self.alpha_max}] must lie inside (0, 2)"
            )
        if abs(total - 1.0) > 1e-12:
            raise ScaleError(f"mixture mass {total!r} differs from 1 by more than 1e-12")

    def mellin(self, r):
        """int r^{-alpha} d nu(alpha), vectorized over r > 0."""
        r = np.asarray(r, dtype=float)
        if self.atoms is not None:
            out = np.zeros_like(r)
            for a, w in self.atoms:
                out = out + w * r ** (-a)
            return out
        # fixed 64-node Gauss-Legendre: integrand analytic in alpha
        nodes, weights = np.polynomial.legendre.leggauss(64)
        mid = 0.5 * (self.alpha_min + self.alpha_max)
        half = 0.5 * (self.alpha_max - self.alpha_min)
        alphas = mid + half * nodes
        dens = self.density(alphas) * weights * half
        return np.tensordot(dens, r[None, ...] ** (-alphas.reshape((-1,) + (1,) * r.ndim)), axes=(0, 0))


@dataclass
class ScaleFunction:
    """Strictly increasing scale r -> phi(r) with declared growth exponents.

    ``fn`` must be vectorized over numpy arrays of radii.  ``comp_const`` is
    the declared comparability constant for both the two-sided power
    scaling condition and the integrated condition.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    beta1: float
    beta2: float
    comp_const: float = 1.0
    description: str = ""
    kind: str = "custom"
    params: tuple = field(default_factory=tuple)
    normalized: bool = True   # model scales are pinned to phi(1)=1; rescaled families are not

    def __post_init__(self):
        if not (0.0 < self.beta1 <= self.beta2 < 2.0):
            raise ScaleError(
                f"exponents must satisfy 0 < beta1 <= beta2 < 2, got ({self.beta1}, {self.beta2})"
            )
        if self.comp_const < 1.0:
            raise ScaleError("comparability constant must be >= 1")
        if self.normalized:
            one = float(self.fn(np.asarray(1.0)))
            if abs(one - 1.0) > 1e-9:
                raise ScaleError(f"phi(1) = {one!r}, scale functions must be normalized to phi(1)=1")

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < 0):
            raise ScaleError("scale function argument must be >= 0")
        out = np.where(r_arr > 0, self.fn(np.maximum(r_arr, 1e-300)), 0.0)
        return float(out) if np.isscalar(r) or r_arr.ndim == 0 else out

    def inverse(self, t, rtol: float = 1e-12):
        """Monotone bracketed inverse: r with phi(r) = t.

        The initial bracket [ (t/c)^{1/b}, (c t)^{1/b'} ] comes from the
        power sandwich implied by the scaling condition.
        """
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0):
            raise ScaleError("inverse argument must be >= 0")
        scalar = np.isscalar(t) or t_arr.ndim == 0
        flat = np.atleast_1d(t_arr).ravel()
        out = np.empty_like(flat)
        for i, ti in enumerate(flat):
            out[i] = self._inverse_scalar(float(ti), rtol)
        result = out.reshape(np.atleast_1d(t_arr).shape)
        return float(result[0]) if scalar else result

    def _inverse_scalar(self, t: float, rtol: float) -> float:
        if t == 0.0:
            return 0.0
        c = self.comp_const
        t_unit = t / float(self.fn(np.asarray(1.0)))  # power sandwich is anchored at r=1
        candidates = [
            (t_unit / c) ** (1.0 / self.beta1),
            (t_unit / c) ** (1.0 / self.beta2),
            (c * t_unit) ** (1.0 / self.beta1),
            (c * t_unit) ** (1.0 / self.beta2),
        ]
        lo, hi = min(candidates), max(candidates)
        # widen defensively; declared constants may be slightly optimistic
        for _ in range(200):
            if self(lo) <= t:
                break
            lo *= 0.5
        else:
            raise ScaleError(f"inverse bracketing failed at t={t!r}: no lower bound below {lo!r}")
        for _ in range(200):
            if self(hi) >= t:
                break
            hi *= 2.0
        else:
            raise ScaleError(f"inverse bracketing failed at t={t!r}: no upper bound above {hi!r}")
        for _ in range(200):
            mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
            if self(mid) < t:
                lo = mid
            else:
                hi = mid
            if hi - lo <= rtol * hi:
                break
        return 0.5 * (lo + hi)

    def tilde(self, r):
        """Combined diffusive/jump clock min(r^2, phi(r))."""
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < 0):
            raise ScaleError("argument must be >= 0")
        return np.minimum(r_arr * r_arr, self(r_arr))

    def tilde_inverse(self, t):
        """Inverse of the combined clock: max(sqrt(t), phi^{-1}(t))."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0):
            raise ScaleError("argument must be >= 0")
        return np.maximum(np.sqrt(t_arr), self.inverse(t_arr))


def rescaled_scale(phi: ScaleFunction, r: float) -> ScaleFunction:
    """The zoomed scale family phi_r(s) = phi(r s) / min(r^2, phi(r)).

    It satisfies the same scaling conditions with the same constant but is
    not normalized at 1; phi_r(1) >= 1 always.
    """
    if r <= 0:
        raise ScaleError("zoom factor must be positive")
    denom = float(phi.tilde(r))

    def fn(s):
        return phi(np.asarray(s, dtype=float) * r) / denom

    return ScaleFunction(
        fn=fn, beta1=phi.beta1, beta2=phi.beta2, comp_const=phi.comp_const,
        description=f"{phi.description} zoomed by {r:g}", kind="rescaled",
        params=(phi, r), normalized=False,
    )


def power_scale(alpha: float) -> ScaleFunction:
    """phi(r) = r^alpha for alpha in (0, 2)."""
    if not (0.0 < alpha < 2.0):
        raise ScaleError(f"power-scale exponent must lie in (0, 2), got {alpha}")
    return ScaleFunction(
        fn=lambda r: r**alpha,
        beta1=alpha,
        beta2=alpha,
        comp_const=max(1.0, 1.0 / (2.0 - alpha)),
        description=f"power scale r^{alpha:g}",
        kind="power",
        params=(alpha,),
    )


def mixed_stable_phi(nu: MixtureMeasure) -> ScaleFunction:
    """Scale of a stable-index mixture: phi(r) = 1 / int r^{-alpha} d nu(alpha).

    The two-sided scaling condition holds with exponents equal to the
    support endpoints and ratio constant 1; the integrated condition holds
    with constant 1/(2 - alpha_max).
    """
    a1, a2 = nu.alpha_min, nu.alpha_max

    def fn(r):
        return 1.0 / nu.mellin(r)

    return ScaleFunction(
        fn=fn,
        beta1=a1,
        beta2=a2,
        comp_const=max(1.0, 1.0 / (2.0 - a2)),
        description=f"stable mixture scale on [{a1:g}, {a2:g}]",
        kind="mixture",
        params=(nu,),
    )


@dataclass
class ScalingReport:
    """Worst-case constants realized by a scale function on a radius grid."""

    ratio_const: float
    integral_const: float
    declared_const: float
    passed: bool
    worst_ratio_pair: tuple[float, float]
    worst_integral_r: float


def check_scaling_conditions(
    phi: ScaleFunction,
    grid: Optional[np.ndarray] = None,
    tol: float = 1e-6,
) -> ScalingReport:
    """Verify the two-sided and integrated scaling conditions on a grid.

    ``ratio_const`` is the smallest c making
    c^{-1} (R/r)^{b1} <= phi(R)/phi(r) <= c (R/r)^{b2} hold over all grid
    pairs; ``integral_const`` bounds int_0^r s/phi(s) ds relative to
    r^2/phi(r).  Failures are reported, not raised.
    """
    if grid is None:
        grid = np.geomspace(1e-3, 1e3, 64 * 6 + 1)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise ScaleError("grid must be strictly increasing and positive")

    vals = phi(grid)
    ratio_const = 1.0
    worst_pair = (grid[0], grid[-1])
    # ratios over all ordered pairs, vectorized
    lr = np.log(grid)
    lv = np.log(vals)
    dl = lr[None, :] - lr[:, None]
    dv = lv[None, :] - lv[:, None]
    mask = dl > 0
    with np.errstate(invalid="ignore"):
        up = np.where(mask, dv - phi.beta2 * dl, -np.inf)   # log of (phi ratio)/(R/r)^b2
        dn = np.where(mask, phi.beta1 * dl - dv, -np.inf)   # log of (R/r)^b1/(phi ratio)
    worst_up = np.unravel_index(np.argmax(up), up.shape)
    worst_dn = np.unravel_index(np.argmax(dn), dn.shape)
    c_up = math.exp(up[worst_up])
    c_dn = math.exp(dn[worst_dn])
    ratio_const = max(1.0, c_up, c_dn)
    worst_pair = (
        (grid[worst_up[0]], grid[worst_up[1]])
        if c_up >= c_dn
        else (grid[worst_dn[0]], grid[worst_dn[1]])
    )

    integral_const = 0.0
    worst_r = grid[0]
    import warnings

    for r in grid[:: max(1, len(grid) // 48)]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(
                lambda s: s / phi(s), 0.0, r, epsabs=1e-10 * r * r / phi(r), limit=200
            )
        c_here = val * phi(r) / (r * r)
        if c_here > integral_const:
            integral_const = c_here
            worst_r = r
    budget = phi.comp_const * (1.0 + tol)
    return ScalingReport(
        ratio_const=ratio_const,
        integral_const=integral_const,
        declared_const=phi.comp_const,
        passed=(ratio_const <= budget) and (integral_const <= budget),
        worst_ratio_pair=worst_pair,
        worst_integral_r=worst_r,
    )


def scale_to_record(phi: ScaleFunction) -> str:
    """Serialize to the declarative text record (kind, parameters, check value)."""
    lines = [f"scale-kind = {phi.kind}"]
    if phi.kind == "power":
        lines.append(f"alpha = {phi.params[0]!r}")
    elif phi.kind == "mixture":
        nu = phi.params[0]
        if nu.atoms is None:
            raise ScaleError("only atomic mixtures serialize to records")
        atoms = " ".join(f"{a!r}:{w!r}" for a, w in nu.atoms)
        lines.append(f"atoms = {atoms}")
    elif phi.kind == "table":
        radii, values = phi.params
        lines.append("radii = " + " ".join(repr(float(r)) for r in radii))
        lines.append("values = " + " ".join(repr(float(v)) for v in values))
    else:
        raise ScaleError(f"scale kind {phi.kind!r} has no record form")
    lines.append(f"beta1 = {phi.beta1!r}")
    lines.append(f"beta2 = {phi.beta2!r}")
    lines.append(f"comp-const = {phi.comp_const!r}")
    lines.append(f"normalization = {float(phi(1.0))!r}")
    return "\n".join(lines) + "\n"


def table_scale(radii, values, beta1, beta2, comp_const) -> ScaleFunction:
    """Log-log interpolated scale through (radii, values); power tails outside."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(np.diff(radii) <= 0) or np.any(np.diff(values) <= 0):
        raise ScaleError("table must be strictly increasing")
    lr, lv = np.log(radii), np.log(values)

    def fn(r):
        r = np.asarray(r, dtype=float)
        out = np.exp(np.interp(np.log(np.maximum(r, 1e-300)), lr, lv))
        lo = r < radii[0]
        hi = r > radii[-1]
        out = np.where(lo, values[0] * (r / radii[0]) ** beta2, out)
        out = np.where(hi, values[-1] * (r / radii[-1]) ** beta1, out)
        return out

    return ScaleFunction(
        fn=fn, beta1=beta1, beta2=beta2, comp_const=comp_const,
        description="tabulated scale", kind="table", params=(tuple(radii), tuple(values)),
    )


def scale_from_record(text: str) -> ScaleFunction:
    """Parse the record produced by :func:`scale_to_record`."""
    fields = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScaleError(f"malformed scale record line: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        fields[key] = val
    kind = fields.get("scale-kind")
    if kind == "power":
        return power_scale(float(fields["alpha"]))
    if kind == "mixture":
        atoms = []
        for tok in fields["atoms"].split():
            a, w = tok.split(":")
            atoms.append((float(a), float(w)))
        return mixed_stable_phi(MixtureMeasure(atoms=atoms))
    if kind == "table":
        return table_scale(
            [float(x) for x in fields["radii"].split()],
            [float(x) for x in fields["values"].split()],
            float(fields["beta1"]),
            float(fields["beta2"]),
            float(fields["comp-const"]),
        )
    raise ScaleError(f"unknown scale kind {kind!r}")
