"""Experiment bodies behind the batch front door.

Each experiment takes validated parameters plus a model, runs at desk
scale, and returns report records plus named tables.  Verdicts aggregate
conjunctively; the CLI serializes the result and sets the exit status.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bnd
from . import estimators as est
from .kernels import Model, small_jump_moments
from .oracle import (
    build_generator,
    chapman_kolmogorov_check,
    evolve,
    evolve_many,
    generator_summary,
)
from .simulator import (
    SimConfig,
    ensemble_to_csv_rows,
    ensemble_histogram,
    events_to_records,
    hitting_tail,
    simulate_paths,
)

__all__ = ["ExperimentResult", "EXPERIMENT_KINDS", "run_experiment"]


@dataclass
class ExperimentResult:
    records: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    all_pass: bool = True

    def add(self, record: dict):
        self.records.append(record)
        if record.get("verdict") == "FAIL":
            self.all_pass = False


def _sim_config(p: dict, seed: int, **over) -> SimConfig:
    kwargs = dict(
        dt=p.get("dt", 1e-3), eps=p.get("eps", 0.05), seed=seed,
        r_max=p.get("rmax"), max_events=int(p.get("max-events", 64)),
    )
    kwargs.update(over)
    return SimConfig(**kwargs)


def _run_simulate(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    horizon = p.get("horizon", 0.5)
    times = p.get("times") or [horizon]
    cfg = _sim_config(p, seed)
    ens = simulate_paths(model, p.get("x0", 0.0), horizon, times, cfg, int(p.get("paths", 2000)))
    keys = sorted(ens.exits.keys(), key=lambda k: k[1])
    header = ["path"] + [f"x{i+1}" for i in range(model.dim)]
    header += [f"exit_time_r{k[1]:g}" for k in keys]
    header += ["events", "alive", "killed", "truncated", "budget_exceeded"]
    res.tables["paths.csv"] = (header, ensemble_to_csv_rows(ens))
    lo = float(ens.terminal[:, 0].min())
    hi = float(ens.terminal[:, 0].max())
    edges = np.linspace(lo, hi + 1e-12, 51)
    counts, _ = ensemble_histogram(ens, edges)
    res.tables["histogram.csv"] = (
        ["bin_left", "bin_right", "count"],
        [[edges[i], edges[i + 1], int(c)] for i, c in enumerate(counts)],
    )
    if p.get("export-events"):
        res.tables["events.jsonl"] = (None, events_to_records(ens))
    trunc_frac = float(ens.truncated.mean())
    alive_frac = float(ens.alive.mean())
    ok = abs(alive_frac - (1.0 - trunc_frac - float(ens.killed.mean()))) < 1e-12
    res.add({
        "check": "simulate", "n": ens.n, "truncated_fraction": trunc_frac,
        "alive_fraction": alive_frac, "verdict": "PASS" if ok else "FAIL",
    })
    return res


def _run_density(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    box = p.get("box", (-6.0, 6.0))
    gen = build_generator(model, box, p.get("h", 0.05))
    res.records.append({"check": "generator", **generator_summary(gen)})
    for t in p.get("t-list", [0.2]):
        hv = evolve(gen, np.atleast_1d(p.get("base", 0.0)), float(t), p.get("tol", 1e-10))
        rows = [[*hv.coords[i].tolist(), hv.density[i]] for i in range(len(hv.density))]
        res.tables[f"density_t{t:g}.csv"] = (
            [f"x{i+1}" for i in range(model.dim)] + ["density"], rows,
        )
        defect = hv.conservation_defect()
        res.add({
            "check": "density", "t": t, "leaked": hv.leaked, "conservation_defect": defect,
            "verdict": "PASS" if defect <= 1e-8 else "FAIL",
        })
    return res


def _run_oracle(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    box = p.get("box", (-6.0, 6.0))
    h = p.get("h", 0.05)
    tol = p.get("tol", 1e-10)
    gen = build_generator(model, box, h)
    t = p.get("t", 0.25)
    bases = p.get("bases", [0.0, 0.6])
    hvs = [evolve(gen, np.atleast_1d(b), t, tol) for b in bases]
    idxs = [gen.node_index(np.atleast_1d(b)) for b in bases]
    sym = 0.0
    for i in range(len(bases)):
        for j in range(i + 1, len(bases)):
            a = hvs[i].density[idxs[j]]
            b = hvs[j].density[idxs[i]]
            if max(a, b) * gen.h**gen.dim >= 1e-8:
                sym = max(sym, abs(a - b) / max(a, b))
    res.add({"check": "symmetry", "t": t, "max_rel_error": sym,
             "verdict": "PASS" if sym <= 1e-10 else "FAIL"})
    ck = chapman_kolmogorov_check(gen, np.atleast_1d(bases[0]), t, t, tol=tol)
    res.add({"check": "chapman-kolmogorov", "t": t, "s": t, "max_rel_error": ck,
             "verdict": "PASS" if ck <= 1e-6 else "FAIL"})
    defect = max(hv.conservation_defect() for hv in hvs)
    res.add({"check": "conservation", "defect": defect,
             "verdict": "PASS" if defect <= 1e-8 else "FAIL"})
    return res


def _run_bounds(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    phi = model.jump.scale
    if phi is None:
        res.add({"check": "bounds", "verdict": "FAIL", "reason": "model has no jump scale"})
        return res
    d = model.dim
    n_grid = int(p.get("grid", 64))
    c_star = p.get("c-star", 1.0)
    ts = np.geomspace(1e-3, 10.0, n_grid)
    rs = np.geomspace(1e-2, 10.0, n_grid)
    ratio_poly = -math.inf
    ratio_gauss = -math.inf
    n_i = n_ii = 0
    rows = []
    for t in ts:
        for r in rs:
            f = bnd.optimized_F(float(t), float(r), phi, d, c_star)
            if f.situation == "i":
                n_i += 1
                ref = float(bnd.polynomial_situation_form(t, r, phi, d))
                ratio_poly = max(ratio_poly, f.log_value - math.log(ref))
            elif f.situation == "ii":
                n_ii += 1
                ref = -float(r * r / (36.0 * c_star * t))
                ratio_gauss = max(ratio_gauss, f.log_value - ref)
            rows.append([t, r, f.situation, f.value, f.s, f.lam])
    res.tables["optimized_F.csv"] = (["t", "R", "situation", "F", "s", "lambda"], rows)
    ok = (n_i > 0 and math.isfinite(ratio_poly)) and (n_ii == 0 or math.isfinite(ratio_gauss))
    res.add({
        "check": "situation-forms", "n_regime_i": n_i, "n_regime_ii": n_ii,
        "log_const_polynomial": ratio_poly, "log_const_gaussian": ratio_gauss,
        "verdict": "PASS" if ok else "FAIL",
    })
    if not model.jump.is_zero:
        lam = p.get("lambda", 0.5)
        _, _, delta = small_jump_moments(model.jump, np.zeros(d), lam)
        val, s_star = bnd.davies_minimized_bound(0.2, 1.0, lam, d, delta)
        res.add({
            "check": "davies-bound", "lambda": lam, "delta": delta,
            "minimized_value": val, "s_star": s_star,
            "verdict": "PASS" if math.isfinite(val) else "FAIL",
        })
    return res


def _run_regions(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    phi = model.jump.scale
    if phi is None:
        res.add({"check": "regions", "verdict": "FAIL", "reason": "model has no jump scale"})
        return res
    n_grid = int(p.get("grid", 512))
    t_grid = np.geomspace(p.get("t-min", 1e-3), p.get("t-max", 10.0), n_grid)
    r_grid = np.geomspace(p.get("r-min", 1e-3), p.get("r-max", 10.0), n_grid)
    tt, rr, case, dom, terms = bnd.region_sweep(phi, model.dim, t_grid, r_grid)
    rows = []
    for i in range(tt.shape[0]):
        for j in range(tt.shape[1]):
            rows.append([
                tt[i, j], rr[i, j], int(case[i, j]), bnd.DOMINANT_LABELS[dom[i, j]],
                terms["on-diagonal"][i, j], terms["gaussian"][i, j], terms["jump"][i, j],
            ])
    res.tables["regions.csv"] = (
        ["t", "R", "case", "dominant", "on_diagonal", "gaussian", "jump"], rows,
    )
    tiles = int((case == 0).sum()) == 0
    jump_short = bool(((dom == 2) & (tt <= rr * rr) & (rr <= 1.0)).any())
    res.add({"check": "region-tiling", "gaps": int((case == 0).sum()),
             "verdict": "PASS" if tiles else "FAIL"})
    res.add({"check": "jump-dominant-short-range", "nonempty": jump_short,
             "verdict": "PASS" if jump_short else "FAIL"})
    return res


def _run_verify_exit(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    # jump models are tested in the diffusion-dominated small-scale regime
    default_radii = [0.25, 0.5, 1.0] if model.jump.is_zero else [0.01, 0.02, 0.04]
    radii = p.get("radii", default_radii)
    cfg = _sim_config(p, seed)
    fit = est.exit_scaling(
        model, radii, cfg, int(p.get("paths", 1500)),
        x0=p.get("x0", 0.0), dt_divisor=p.get("dt-divisor", 400.0),
    )
    window = 0.15 if model.jump.is_zero else 0.2
    ok = abs(fit.slope - 2.0) <= window
    rows = []
    cover_all = True
    for s in fit.per_scale:
        target = s.radius**2 / model.dim
        covered = abs(s.mean - target) <= 3.0 * s.sem  # 3-sigma interval
        if model.jump.is_zero:
            cover_all &= covered
        rows.append([s.radius, s.mean, s.sem, s.mean - 3 * s.sem, s.mean + 3 * s.sem,
                     target, int(covered), s.stay_prob])
    res.tables["exit_times.csv"] = (
        ["radius", "mean", "sem", "ci_low", "ci_high", "brownian_target", "ci_covers",
         "stay_prob"], rows,
    )
    verdict = ok and (cover_all or not model.jump.is_zero)
    res.add({
        "check": "exit-scaling", "slope": fit.slope, "slope_se": fit.slope_se,
        "window": window, "ci_covers_each": cover_all, "verdict": "PASS" if verdict else "FAIL",
    })
    return res


def _run_verify_hitting(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    r = p.get("r", 0.05)
    s_list = p.get("s-list", [0.5, 1.0])
    cfg = _sim_config(p, seed, dt=p.get("dt", r * r / 100.0), eps=min(p.get("eps", 0.05), r / 4))
    ht = hitting_tail(model, p.get("x0", 0.0), r, s_list, cfg, int(p.get("paths", 30000)))
    rows = [
        [s, ht.estimates[i], ht.ci_low[i], ht.ci_high[i], ht.bound_values[i]]
        for i, s in enumerate(ht.s_values)
    ]
    res.tables["hitting_tail.csv"] = (
        ["s", "estimate", "ci_low", "ci_high", "fitted_bound"], rows,
    )
    ok = not ht.flagged and math.isfinite(ht.fitted_c)
    scaling_ok = True
    if len(ht.s_values) >= 2 and not ht.flagged:
        p1, p2 = ht.estimates[0], ht.estimates[-1]
        s1, s2 = min(ht.s_values[0], 1.0), min(ht.s_values[-1], 1.0)
        if p1 > 0 and p2 > 0:
            n_eff = ht.n_exited
            se_log = math.sqrt((1 - p1) / (p1 * n_eff) + (1 - p2) / (p2 * n_eff))
            scaling_ok = abs(math.log(p1 / p2) - 2.0 * math.log(s2 / s1)) <= 3.0 * se_log
    res.add({
        "check": "hitting-tail", "fitted_c": ht.fitted_c, "n_exited": ht.n_exited,
        "inverse_square_scaling_ok": scaling_ok,
        "verdict": "PASS" if ok and scaling_ok else "FAIL",
    })
    return res


def _run_verify_harnack(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    gen = build_generator(model, p.get("box", (-4.0, 4.0)), p.get("h", 0.04))
    radii = p.get("radii", [0.125, 0.25, 0.5])
    y_refs = p.get("y-refs", [-2.5, -2.0, 2.2])
    ratios = est.harnack_ratio(
        gen, [np.atleast_1d(y) for y in y_refs], p.get("x0", 0.0), radii,
        delta=p.get("delta", 0.1), t0=p.get("t0", 0.0), tol=p.get("tol", 1e-10),
    )
    rows = []
    ok = True
    for y in y_refs:
        vals = [ratios[(float(y), float(r))] for r in radii]
        finite = [v["ratio"] for v in vals if v["resolved"]]
        spread = max(finite) / min(finite) if finite else math.inf
        ok &= len(finite) == len(vals) and spread <= p.get("factor", 3.0)
        for r, v in zip(radii, vals):
            rows.append([y, r, v["ratio"], v["sup_early"], v["inf_late"], int(v["resolved"])])
    res.tables["harnack.csv"] = (
        ["y_ref", "R", "ratio", "sup_early", "inf_late", "resolved"], rows,
    )
    res.add({"check": "harnack-ratio", "factor_budget": p.get("factor", 3.0),
             "verdict": "PASS" if ok else "FAIL"})
    return res


def _run_verify_holder(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    gen = build_generator(model, p.get("box", (-4.0, 4.0)), p.get("h", 0.04))
    radii = p.get("radii", [0.25, 0.5])
    fits = [
        est.holder_modulus(gen, p.get("x0", 0.0), r, np.atleast_1d(p.get("y-ref", -1.6)),
                           seed=seed)
        for r in radii
    ]
    rows = [[f.big_r, f.kappa, f.se, f.ci95[0], f.ci95[1], f.n_pairs] for f in fits]
    res.tables["holder.csv"] = (["R", "kappa", "se", "ci_low", "ci_high", "n_pairs"], rows)
    positive = all(f.ci95[0] > 0 for f in fits)
    kappas = [f.kappa for f in fits]
    stable = max(kappas) <= 1.5 * min(kappas) if min(kappas) > 0 else False
    res.add({"check": "holder-modulus", "kappas": kappas, "positive_ci": positive,
             "stable": stable, "verdict": "PASS" if positive and stable else "FAIL"})
    return res


def _run_verify_sandwich(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    phi = model.jump.scale
    box = p.get("box", (-6.0, 6.0))
    gen = build_generator(model, box, p.get("h", 0.04))
    hvs = []
    for base in p.get("bases", [0.0]):
        hvs.extend(evolve_many(gen, np.atleast_1d(base), p.get("t-list", [0.05, 0.2, 1.0]),
                               p.get("tol", 1e-10)))
    data = est.sandwich_data_from_heatvectors(hvs, window=p.get("window", 2.0))
    fit = est.fit_sandwich(data, phi, model.dim)
    rows = [[fit.c1, fit.c2, fit.c3, fit.c4, fit.ratio, int(fit.feasible)]]
    res.tables["sandwich.csv"] = (["c1", "c2", "c3", "c4", "ratio", "feasible"], rows)
    budget = p.get("ratio-budget", 1e3)
    res.add({
        "check": "sandwich-fit", "c1": fit.c1, "c2": fit.c2, "c3": fit.c3, "c4": fit.c4,
        "ratio": fit.ratio, "witness_upper": fit.witness_upper,
        "witness_lower": fit.witness_lower, "n_points": fit.n_points,
        "verdict": "PASS" if fit.feasible and fit.ratio <= budget else "FAIL",
    })
    return res


def _run_verify_tightness(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    cfg = _sim_config(p, seed, dt=p.get("dt", 1e-3), eps=p.get("eps", 0.025))
    result = est.tightness_check(
        model, p.get("t-list", [0.02, 0.06]), p.get("factors", [1.0, 1.5]),
        cfg, target_count=int(p.get("target-count", 60)),
        n_cap=int(p.get("n-cap", 200000)),
    )
    if result.skipped:
        res.add({"check": "tightness", "verdict": "PASS", "skipped": True,
                 "reason": result.reason})
        return res
    rows = [[g["t"], g["displacement"], g["n"], g["hits"], g["p_hat"],
             g["predicted_shape"], g["ratio"], g["ratio_low"]] for g in result.grid]
    res.tables["tightness.csv"] = (
        ["t", "displacement", "n", "hits", "p_hat", "predicted_shape", "ratio", "ratio_low"],
        rows,
    )
    res.add({"check": "tightness", "min_ratio_low": result.min_ratio_low,
             "verdict": "PASS" if result.min_ratio_low > 0 else "FAIL"})
    return res


def _run_verify_all(model: Model, p: dict, seed: int) -> ExperimentResult:
    res = ExperimentResult()
    sub = {
        "oracle": _run_oracle,
        "regions": _run_regions,
        "bounds": _run_bounds,
        "verify-exit": _run_verify_exit,
        "verify-hitting": _run_verify_hitting,
        "verify-harnack": _run_verify_harnack,
        "verify-holder": _run_verify_holder,
        "verify-sandwich": _run_verify_sandwich,
        "verify-tightness": _run_verify_tightness,
    }
    overrides = {
        "regions": {"grid": int(p.get("grid", 128))},
        "bounds": {"grid": int(p.get("grid", 32))},
        "verify-exit": {"paths": int(p.get("paths", 800))},
        "verify-hitting": {"paths": int(p.get("paths", 800)) * 10, "r": 0.05},
        "verify-harnack": {"h": p.get("h", 0.05), "box": (-4.0, 4.0)},
        "verify-holder": {"h": p.get("h", 0.05), "box": (-4.0, 4.0)},
        "verify-sandwich": {"h": p.get("h", 0.05), "box": (-6.0, 6.0),
                            "t-list": p.get("t-list", [0.05, 0.2])},
        "verify-tightness": {"target-count": int(p.get("target-count", 40))},
        "oracle": {"h": p.get("h", 0.05)},
    }
    for name, fn in sub.items():
        params = dict(p)
        params.update(overrides.get(name, {}))
        part = fn(model, params, seed)
        for rec in part.records:
            rec = dict(rec)
            rec["family"] = name
            res.add(rec)
        for tname, tab in part.tables.items():
            res.tables[f"{name}_{tname}"] = tab
    return res


EXPERIMENT_KINDS = {
    "simulate": _run_simulate,
    "density": _run_density,
    "oracle": _run_oracle,
    "bounds": _run_bounds,
    "regions": _run_regions,
    "verify-exit": _run_verify_exit,
    "verify-hitting": _run_verify_hitting,
    "verify-harnack": _run_verify_harnack,
    "verify-holder": _run_verify_holder,
    "verify-sandwich": _run_verify_sandwich,
    "verify-tightness": _run_verify_tightness,
    "verify-all": _run_verify_all,
}


def run_experiment(kind: str, model: Model, params: dict, seed: int) -> ExperimentResult:
    if kind not in EXPERIMENT_KINDS:
        raise ValueError(f"unknown experiment kind {kind!r}")
    return EXPERIMENT_KINDS[kind](model, params, seed)
