"""Batch front door: declarative configs, subcommands, reproducible artifacts.

Subcommands: run, replay, validate-model, list-models.  Configs are flat
key-value text with typed fields; numeric values may carry an explicit
unit suffix (time | length | count) which is checked against the key's
declared unit.  Every run writes a manifest embedding the full config, the
seed and artifact hashes, so that ``replay`` can re-execute it and assert
bitwise-identical outputs.

Exit codes: 0 all verdicts pass, 1 verdict failure, 2 config error,
3 model validation failure, 4 resource budget exceeded, 5 replay mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time

import numpy
import scipy

from . import __version__
from .experiments import EXPERIMENT_KINDS, run_experiment
from .kernels import ValidationError
from .models import MODEL_ZOO, load_model
from .reportio import atomic_write_text, csv_text, report_text, sha256_file, sha256_text

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_BUDGET = 4
EXIT_REPLAY = 5

UNITS = ("time", "length", "count")

# key -> (type, unit); types: int, float, floats, str, bool
KEY_SPECS = {
    "kind": ("str", None),
    "model": ("str", None),
    "seed": ("int", None),
    "horizon": ("float", "time"),
    "dt": ("float", "time"),
    "eps": ("float", "length"),
    "rmax": ("float", "length"),
    "paths": ("int", "count"),
    "x0": ("float", "length"),
    "times": ("floats", "time"),
    "t": ("float", "time"),
    "t-list": ("floats", "time"),
    "s-list": ("floats", "length"),
    "radii": ("floats", "length"),
    "r": ("float", "length"),
    "bases": ("floats", "length"),
    "y-refs": ("floats", "length"),
    "y-ref": ("float", "length"),
    "box": ("floats", "length"),
    "h": ("float", "length"),
    "tol": ("float", None),
    "grid": ("int", "count"),
    "t-min": ("float", "time"),
    "t-max": ("float", "time"),
    "r-min": ("float", "length"),
    "r-max": ("float", "length"),
    "delta": ("float", None),
    "t0": ("float", "time"),
    "factor": ("float", None),
    "factors": ("floats", None),
    "dt-divisor": ("float", None),
    "target-count": ("int", "count"),
    "n-cap": ("int", "count"),
    "window": ("float", "length"),
    "ratio-budget": ("float", None),
    "max-events": ("int", "count"),
    "export-events": ("bool", None),
    "c-star": ("float", None),
    "lambda": ("float", "length"),
}

STOCHASTIC_KINDS = {
    "simulate", "verify-exit", "verify-hitting", "verify-tightness",
    "verify-holder", "verify-all",
}


class ConfigParseError(ValueError):
    pass


def parse_config(text: str) -> dict:
    """Parse and type-check a flat key-value config; errors carry line numbers."""
    params: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEY_SPECS:
            raise ConfigParseError(f"line {lineno}: unknown field {key!r}")
        typ, unit = KEY_SPECS[key]
        tokens = value.split()
        if not tokens:
            raise ConfigParseError(f"line {lineno}: field {key!r} has no value")
        if typ != "str" and tokens[-1].isalpha() and tokens[-1] not in ("inf", "nan", "true", "false"):
            suffix = tokens[-1]
            if suffix not in UNITS:
                raise ConfigParseError(f"line {lineno}: unknown unit suffix {suffix!r}")
            if suffix != unit:
                raise ConfigParseError(
                    f"line {lineno}: field {key!r} expects unit {unit!r}, got {suffix!r}"
                )
            tokens = tokens[:-1]
            if not tokens:
                raise ConfigParseError(f"line {lineno}: field {key!r} has only a unit")
        try:
            if typ == "int":
                (tok,) = tokens
                params[key] = int(tok)
            elif typ == "float":
                (tok,) = tokens
                params[key] = float(tok)
            elif typ == "floats":
                params[key] = tuple(float(tok) for tok in tokens)
            elif typ == "bool":
                (tok,) = tokens
                if tok.lower() not in ("true", "false", "0", "1"):
                    raise ValueError(tok)
                params[key] = tok.lower() in ("true", "1")
            else:
                params[key] = value
        except ValueError as exc:
            raise ConfigParseError(f"line {lineno}: bad value for {key!r}: {exc}")
    if "kind" not in params:
        raise ConfigParseError("config must declare a kind")
    if params["kind"] not in EXPERIMENT_KINDS:
        raise ConfigParseError(f"unknown kind {params['kind']!r}")
    if "model" not in params:
        raise ConfigParseError("config must declare a model")
    if params["kind"] in STOCHASTIC_KINDS and "seed" not in params:
        raise ConfigParseError(f"stochastic kind {params['kind']!r} requires a seed")
    return params


def _write_artifacts(outdir: str, config_text: str, params: dict, result) -> list[str]:
    os.makedirs(outdir, exist_ok=True)
    names = []
    atomic_write_text(os.path.join(outdir, "report.json"), report_text(result.records))
    names.append("report.json")
    for name, (header, rows) in sorted(result.tables.items()):
        if header is None:  # line-delimited records
            text = "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
        else:
            text = csv_text(header, rows)
        atomic_write_text(os.path.join(outdir, name), text)
        names.append(name)
    manifest = [
        "manifest-version = 1",
        f"kind = {params['kind']}",
        f"model = {params['model']}",
        f"seed = {params.get('seed', 0)}",
        f"config-sha256 = {sha256_text(config_text)}",
        f"package-version = {__version__}",
        f"numpy-version = {numpy.__version__}",
        f"scipy-version = {scipy.__version__}",
    ]
    for name in names:
        manifest.append(f"artifact = {name} {sha256_file(os.path.join(outdir, name))}")
    manifest.append("config-begin")
    manifest.append(config_text.rstrip("\n"))
    manifest.append("config-end")
    atomic_write_text(os.path.join(outdir, "manifest.txt"), "\n".join(manifest) + "\n")
    return names


def _execute(config_text: str, outdir: str, seed_override=None, budget_minutes=None) -> int:
    try:
        params = parse_config(config_text)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if seed_override is not None:
        params["seed"] = int(seed_override)
        config_lines = [l for l in config_text.splitlines() if not l.strip().startswith("seed")]
        config_lines.append(f"seed = {seed_override}")
        config_text = "\n".join(config_lines) + "\n"
    try:
        model = load_model(params["model"])
        model.validate()
    except (ValidationError, Exception) as exc:
        if isinstance(exc, (ValidationError, FileNotFoundError)):
            print(f"model error: {exc}", file=sys.stderr)
            return EXIT_MODEL
        raise
    start = time.monotonic()
    result = run_experiment(params["kind"], model, params, int(params.get("seed", 0)))
    elapsed = time.monotonic() - start
    if budget_minutes is not None and elapsed > 60.0 * budget_minutes:
        print(f"budget exceeded: {elapsed:.1f}s > {budget_minutes} min; no artifacts written",
              file=sys.stderr)
        return EXIT_BUDGET
    names = _write_artifacts(outdir, config_text, params, result)
    verdicts = [r.get("verdict") for r in result.records if "verdict" in r]
    n_pass = sum(v == "PASS" for v in verdicts)
    print(f"{params['kind']}: {n_pass}/{len(verdicts)} checks passed; "
          f"{len(names)} artifacts in {outdir} ({elapsed:.1f}s)")
    return EXIT_OK if result.all_pass else EXIT_VERDICT


def _cmd_run(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            config_text = fh.read()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(config_text, args.out, args.seed, args.budget_minutes)


def _parse_manifest(path: str) -> tuple[dict, list[tuple[str, str]], str]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    fields: dict = {}
    artifacts: list[tuple[str, str]] = []
    config_lines: list[str] = []
    in_config = False
    for line in lines:
        if line == "config-begin":
            in_config = True
            continue
        if line == "config-end":
            in_config = False
            continue
        if in_config:
            config_lines.append(line)
            continue
        if "=" in line:
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "artifact":
                name, digest = value.rsplit(" ", 1)
                artifacts.append((name.strip(), digest))
            else:
                fields[key] = value
    return fields, artifacts, "\n".join(config_lines) + "\n"


def _cmd_replay(args) -> int:
    try:
        fields, artifacts, config_text = _parse_manifest(args.manifest)
    except OSError as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    workdir = args.out or tempfile.mkdtemp(prefix="jumplab-replay-")
    status = _execute(config_text, workdir, args.seed, args.budget_minutes)
    if status not in (EXIT_OK, EXIT_VERDICT):
        return status
    mismatches = []
    for name, digest in artifacts:
        path = os.path.join(workdir, name)
        if not os.path.exists(path):
            mismatches.append((name, digest, "missing"))
            continue
        new_digest = sha256_file(path)
        if new_digest != digest:
            mismatches.append((name, digest, new_digest))
    if mismatches:
        print("replay mismatch:", file=sys.stderr)
        for name, old, new in mismatches:
            print(f"  {name}: recorded {old[:16]}.. recomputed {new[:16]}..", file=sys.stderr)
        return EXIT_REPLAY
    print(f"replay identical: {len(artifacts)} artifacts match ({workdir})")
    return EXIT_OK


def _cmd_validate_model(args) -> int:
    try:
        model = load_model(args.model)
        report = model.validate()
    except (ValidationError, FileNotFoundError) as exc:
        print(f"model validation failed: {exc}", file=sys.stderr)
        return EXIT_MODEL
    print(f"model {model.name or args.model!r} valid: {json.dumps(report, sort_keys=True)}")
    return EXIT_OK


def _cmd_list_models(args) -> int:
    for name in sorted(MODEL_ZOO):
        model = MODEL_ZOO[name]()
        print(f"{name}: d={model.dim}; A: {model.diffusion.description}; "
              f"J: {model.jump.description}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="jumplab",
        description="Jump-diffusion heat-kernel laboratory: batch experiments and verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True, help="path to the key-value config")
    p_run.add_argument("--out", required=True, help="output directory for artifacts")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--threads", type=int, default=None,
                       help="thread budget (results are independent of it)")
    p_run.add_argument("--budget-minutes", type=float, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser("replay", help="re-run a manifest and compare artifacts bitwise")
    p_rep.add_argument("--manifest", required=True)
    p_rep.add_argument("--out", default=None, help="replay directory (default: temp)")
    p_rep.add_argument("--seed", type=int, default=None,
                       help="override the seed (mismatch expected)")
    p_rep.add_argument("--threads", type=int, default=None)
    p_rep.add_argument("--budget-minutes", type=float, default=None)
    p_rep.set_defaults(func=_cmd_replay)

    p_val = sub.add_parser("validate-model", help="run the kernel/field hypothesis checks")
    p_val.add_argument("--model", required=True, help="zoo name or record file")
    p_val.set_defaults(func=_cmd_validate_model)

    p_list = sub.add_parser("list-models", help="list the shipped model zoo")
    p_list.set_defaults(func=_cmd_list_models)

    args = parser.parse_args(argv)
    if getattr(args, "threads", None):
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
