"""Shipped model zoo and the declarative model record format.

Records are flat key-value text (one field per line, ``#`` comments).
Diffusion kinds: identity | scalar-profile | rotation-field.
Kernel kinds: zero | power | comparability (the latter optionally
truncated and carrying an embedded scale record).
"""

from __future__ import annotations

import math

import numpy as np

from .kernels import DiffusionField, JumpKernel, Model, ValidationError, zero_kernel
from .scaling import ScaleFunction, mixed_stable_phi, power_scale, scale_from_record, scale_to_record, MixtureMeasure

__all__ = ["MODEL_ZOO", "load_model", "model_to_record", "model_from_record", "comparability_kernel"]


def _identity_field(d: int, factor: float = 1.0) -> DiffusionField:
    eye = np.eye(d) * factor

    def matrix(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(eye, x.shape[:-1] + (d, d)).copy()

    def div(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape)

    return DiffusionField(
        dim=d, matrix=matrix, ellipticity=max(factor, 1.0 / factor), div=div,
        description=f"{factor:g} * identity", kind="identity", params=(factor,),
    )


def _scalar_profile_field(d: int, base: float, amp: float) -> DiffusionField:
    """A(x) = (base + amp*sin(x_1)) * I with analytic divergence."""
    if base - abs(amp) <= 0:
        raise ValidationError("scalar profile must stay positive")

    def matrix(x):
        x = np.asarray(x, dtype=float)
        s = base + amp * np.sin(x[..., 0])
        return s[..., None, None] * np.eye(d)

    def div(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        out[..., 0] = amp * np.cos(x[..., 0])
        return out

    hi = base + abs(amp)
    lo = base - abs(amp)
    return DiffusionField(
        dim=d, matrix=matrix, ellipticity=max(hi, 1.0 / lo), div=div,
        description=f"({base:g} + {amp:g} sin x1) * I", kind="scalar-profile",
        params=(base, amp),
    )


def _rotation_field(eig_lo: float, eig_hi: float) -> DiffusionField:
    """d=2 field with constant spectrum {eig_lo, eig_hi} and rotating frame."""

    def matrix(x):
        x = np.asarray(x, dtype=float)
        theta = x[..., 0] + 0.5 * x[..., 1]
        c, s = np.cos(theta), np.sin(theta)
        a11 = eig_lo * c * c + eig_hi * s * s
        a22 = eig_lo * s * s + eig_hi * c * c
        a12 = (eig_lo - eig_hi) * c * s
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = a11
        out[..., 1, 1] = a22
        out[..., 0, 1] = a12
        out[..., 1, 0] = a12
        return out

    return DiffusionField(
        dim=2, matrix=matrix, ellipticity=max(eig_hi, 1.0 / eig_lo), div=None,
        description=f"rotating frame, spectrum {{{eig_lo:g}, {eig_hi:g}}}",
        kind="rotation-field", params=(eig_lo, eig_hi),
    )


def comparability_kernel(
    d: int, scale: ScaleFunction, kappa: float = 1.0, cutoff: float = math.inf
) -> JumpKernel:
    """Translation-invariant kernel J(x, y) = kappa / (|x-y|^d phi(|x-y|)).

    Exactly comparable with window (kappa, kappa); optional truncation at
    ``cutoff``.
    """

    def profile(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            val = kappa / (np.maximum(r, 1e-300) ** d * scale(np.maximum(r, 1e-300)))
        val = np.where(r > 0, val, np.inf)
        if math.isfinite(cutoff):
            val = np.where(r <= cutoff, val, 0.0)
        return val

    def ev(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return profile(np.linalg.norm(y - x, axis=-1))

    return JumpKernel(
        dim=d, evaluate=ev, scale=scale, kappa_low=kappa, kappa_up=kappa,
        kappa0=kappa * scale.comp_const, beta=scale.beta2, delta0=1.0,
        radial_profile=profile, cutoff=cutoff,
        description=f"comparability kernel, kappa={kappa:g}, scale: {scale.description}",
        kind="comparability", params=(kappa, cutoff),
    )


def _power_kernel(d: int, kappa: float, alpha: float, cutoff: float = math.inf) -> JumpKernel:
    k = comparability_kernel(d, power_scale(alpha), kappa, cutoff)
    k.kind = "power"
    k.params = (kappa, alpha, cutoff)
    k.description = f"isotropic power kernel {kappa:g} |z|^-({d}+{alpha:g})"
    return k


def _reference_model() -> Model:
    return Model(
        diffusion=_scalar_profile_field(1, 1.0, 0.5),
        jump=comparability_kernel(1, power_scale(1.0)),
        name="reference",
    )


MODEL_ZOO = {
    "reference": _reference_model,
    "pure-diffusion-1d": lambda: Model(_identity_field(1), zero_kernel(1), name="pure-diffusion-1d"),
    "pure-diffusion-2d": lambda: Model(_identity_field(2), zero_kernel(2), name="pure-diffusion-2d"),
    "variable-diffusion-1d": lambda: Model(
        _scalar_profile_field(1, 1.0, 0.5), zero_kernel(1), name="variable-diffusion-1d"
    ),
    "stable-half-1d": lambda: Model(
        _identity_field(1, 1e-4), _power_kernel(1, 1.0, 0.5), name="stable-half-1d"
    ),
    "stable-one-1d": lambda: Model(
        _identity_field(1, 1e-4), _power_kernel(1, 1.0, 1.0), name="stable-one-1d"
    ),
    "mixture-1d": lambda: Model(
        _identity_field(1),
        comparability_kernel(
            1, mixed_stable_phi(MixtureMeasure(atoms=[(0.5, 0.5), (1.5, 0.5)]))
        ),
        name="mixture-1d",
    ),
    "truncated-reference": lambda: Model(
        _scalar_profile_field(1, 1.0, 0.5),
        comparability_kernel(1, power_scale(1.0), cutoff=0.5),
        name="truncated-reference",
    ),
    "heavy-mixed-1d": lambda: Model(
        _scalar_profile_field(1, 1.0, 0.5),
        comparability_kernel(1, power_scale(1.9)),
        name="heavy-mixed-1d",
    ),
    "mild-mixed-1d": lambda: Model(
        _scalar_profile_field(1, 1.0, 0.5),
        comparability_kernel(1, power_scale(0.5), kappa=0.5),
        name="mild-mixed-1d",
    ),
    "rotation-2d": lambda: Model(
        _rotation_field(0.7, 1.3), zero_kernel(2), name="rotation-2d"
    ),
}


def load_model(name_or_path: str) -> Model:
    """Model from the zoo by name, else parsed from a record file."""
    if name_or_path in MODEL_ZOO:
        return MODEL_ZOO[name_or_path]()
    try:
        with open(name_or_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"unknown model {name_or_path!r}: not in zoo, not a readable file ({exc})")
    return model_from_record(text)


def model_to_record(model: Model) -> str:
    """Serialize a zoo-style model to its declarative record."""
    f = model.diffusion
    k = model.jump
    lines = [
        f"dimension = {model.dim}",
        f"name = {model.name or 'custom'}",
        f"diffusion-kind = {f.kind}",
    ]
    if f.kind == "identity":
        lines.append(f"diffusion-params = {f.params[0]!r}")
    elif f.kind == "scalar-profile":
        lines.append(f"diffusion-params = {f.params[0]!r} {f.params[1]!r}")
    elif f.kind == "rotation-field":
        lines.append(f"diffusion-params = {f.params[0]!r} {f.params[1]!r}")
    else:
        raise ValidationError(f"diffusion kind {f.kind!r} has no record form")
    lines.append(f"ellipticity = {f.ellipticity!r}")
    lines.append(f"kernel-kind = {k.kind}")
    if k.kind == "zero":
        pass
    elif k.kind in ("power", "comparability"):
        lines.append(f"kappa = {k.params[0]!r}")
        cutoff = k.cutoff
        lines.append(f"cutoff = {'inf' if math.isinf(cutoff) else repr(cutoff)}")
        lines.append(scale_to_record(k.scale).rstrip("\n"))
    else:
        raise ValidationError(f"kernel kind {k.kind!r} has no record form")
    return "\n".join(lines) + "\n"


def model_from_record(text: str) -> Model:
    """Parse the record produced by :func:`model_to_record`."""
    fields = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"malformed model record line: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        fields[key] = val
    try:
        d = int(fields["dimension"])
        dkind = fields["diffusion-kind"]
        if dkind == "identity":
            diffusion = _identity_field(d, float(fields["diffusion-params"]))
        elif dkind == "scalar-profile":
            base, amp = (float(v) for v in fields["diffusion-params"].split())
            diffusion = _scalar_profile_field(d, base, amp)
        elif dkind == "rotation-field":
            lo, hi = (float(v) for v in fields["diffusion-params"].split())
            diffusion = _rotation_field(lo, hi)
        else:
            raise ValidationError(f"unknown diffusion kind {dkind!r}")
        kkind = fields["kernel-kind"]
        if kkind == "zero":
            jump = zero_kernel(d)
        elif kkind in ("power", "comparability"):
            kappa = float(fields["kappa"])
            cutoff = float(fields["cutoff"]) if fields["cutoff"] != "inf" else math.inf
            scale = scale_from_record(text)
            jump = comparability_kernel(d, scale, kappa, cutoff)
            if kkind == "power":
                jump.kind = "power"
        else:
            raise ValidationError(f"unknown kernel kind {kkind!r}")
    except KeyError as exc:
        raise ValidationError(f"model record missing field {exc}")
    return Model(diffusion=diffusion, jump=jump, name=fields.get("name", "custom"))
