"""``bnu`` command-line driver.

Usage::

    bnu simulate|unmix|evaluate|pipeline [--config FILE] [--key value ...] --out DIR [--seed N]

Any field of the scene or sampler configuration can be set in the config file
(``key = value`` lines) or as ``--key value``; flags win over the file.
Exit status is 0 on success, 1 for bad input and 2 for failures while running.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import io
from .exceptions import InputError, ParseError
from .metrics import dimensionality_scores, evaluate, rmse_over_runs
from .model import HyperConfig, ObservedImage
from .sampler import run
from .simkit import SceneSpec, compose_scene

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2
COMMANDS = ("simulate", "unmix", "evaluate", "pipeline")

# keys that belong to neither SceneSpec nor HyperConfig
RUN_KEYS = {
    "seed": int,
    "input": str,
    "truth": str,
    "estimate": str,
    "monte_carlo_runs": int,
    "sweep_key": str,
    "sweep_values": str,
}
SCENE_KINDS = {"K": int, "D": int, "width": int, "height": int, "snr_db": "optional_float",
               "beta_ip": "optional_float", "dirichlet_alpha": "optional_float",
               "library": str, "seed": int}
SUMMARY_METRICS = ("accuracy", "rmse_K", "rmse_theta_F", "rmse_theta_S", "rmse_sid")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _hyper_kinds():
    return {f.name: {"float": float, "int": int, "bool": bool}.get(f.type, f.type)
            for f in fields(HyperConfig)}


def _all_keys():
    keys = dict(RUN_KEYS)
    keys.update(SCENE_KINDS)
    keys.update(_hyper_kinds())
    return keys


def build_parser():
    parser = _Parser(prog="bnu", description="Bayesian nonparametric spectral unmixing")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key = value file")
    parser.add_argument("--out", help="output directory")
    for key in _all_keys():
        flags = {f"--{key}", f"--{key.replace('_', '-')}"}
        parser.add_argument(*sorted(flags), dest=key, default=None)
    return parser


def resolve(argv):
    """Parse ``argv`` into (command, out_dir, resolved value dict)."""
    ns = build_parser().parse_args(argv)
    raw = io.read_config(ns.config) if ns.config else {}
    kinds = _all_keys()
    unknown = sorted(set(raw) - set(kinds) - {"out"})
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(unknown)}")
    for key in kinds:
        v = getattr(ns, key)
        if v is not None:
            raw[key] = v
    out = ns.out if ns.out is not None else raw.get("out")
    if out is None:
        raise InputError("--out is required")
    values = {k: io.coerce(v, kinds[k], k) for k, v in raw.items() if k in kinds}
    values.setdefault("seed", 0)
    return ns.command, Path(out), values


def scene_from(values, seed=None):
    kw = {k: v for k, v in values.items() if k in SCENE_KINDS}
    if seed is not None:
        kw["seed"] = seed
    return SceneSpec(**kw)


def hyper_from(values):
    names = {f.name for f in fields(HyperConfig)}
    return HyperConfig(**{k: v for k, v in values.items() if k in names})


def _resolved_values(command, values):
    full = {"command": command}
    if command in ("simulate", "pipeline"):
        full.update({k: v for k, v in asdict(scene_from(values)).items() if v is not None})
    if command in ("unmix", "pipeline"):
        full.update(asdict(hyper_from(values)))
    full.update({k: v for k, v in values.items() if v is not None})
    return full


def worker_count(n_tasks):
    """Workers allowed by ``BNU_THREADS`` (default 1), never more than the tasks."""
    raw = os.environ.get("BNU_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"BNU_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputError("BNU_THREADS must be >= 1")
    return max(1, min(n, n_tasks))


# ------------------------------------------------------------------ commands

def write_scene(gt, out):
    io.save_matrix(out / "Z.csv", gt.Z_noisy)
    io.save_matrix(out / "F_true.csv", gt.F_true)
    io.save_matrix(out / "S_true.csv", gt.S_true)
    if gt.S_scaled is not None:
        io.save_matrix(out / "S_scaled.csv", gt.S_scaled)


def cmd_simulate(values, out):
    spec = scene_from(values)
    write_scene(compose_scene(spec), out)
    return EXIT_OK


def cmd_unmix(values, out):
    if "input" not in values:
        raise InputError("unmix needs --input (CSV of pixel spectra)")
    image = ObservedImage(io.load_matrix(values["input"]))
    result = run(image, hyper_from(values), seed=values["seed"])
    io.save_result(result, out)
    return EXIT_OK


def cmd_evaluate(values, out):
    if "estimate" not in values or "truth" not in values:
        raise InputError("evaluate needs --estimate (unmix output dir) and --truth (simulate output dir)")
    est, tru = Path(values["estimate"]), Path(values["truth"])
    rep = evaluate(io.load_matrix(est / "endmembers.csv"), io.load_matrix(est / "abundances.csv"),
                   io.load_matrix(tru / "F_true.csv"), io.load_matrix(tru / "S_true.csv"))
    with open(out / "report.json", "w") as fh:
        json.dump(rep.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def _one_run(task):
    values, run_dir, seed = task
    with threadpool_limits(limits=1):
        spec = scene_from(values, seed=seed)
        gt = compose_scene(spec)
        result = run(gt.Z_noisy, hyper_from(values), seed=seed)
        report = io.save_result(result, run_dir, ground_truth=gt)
    return report


def _sweep_points(values):
    key = values.get("sweep_key")
    if key is None:
        return None, [None]
    if key not in SCENE_KINDS and key not in _hyper_kinds():
        raise InputError(f"sweep_key {key!r} is not a scene or sampler field")
    raw = values.get("sweep_values")
    if not raw:
        raise InputError("sweep_key given without sweep_values")
    kind = SCENE_KINDS.get(key) or _hyper_kinds()[key]
    return key, [io.coerce(v, kind, key) for v in raw.split(",") if v.strip()]


def cmd_pipeline(values, out):
    n_runs = values.get("monte_carlo_runs", 1)
    if n_runs < 1:
        raise InputError("monte_carlo_runs must be >= 1")
    key, points = _sweep_points(values)
    tasks, groups = [], []
    for p_idx, point in enumerate(points):
        v = dict(values)
        if key is not None:
            v[key] = point
        # validate before spending any compute
        scene_from(v)
        hyper_from(v)
        label = "base" if key is None else f"{key}={point}"
        for i in range(n_runs):
            seed = values["seed"] + i
            tasks.append((v, out / "runs" / label / f"seed{seed}", seed))
            groups.append(p_idx)
    n_workers = worker_count(len(tasks))
    if n_workers == 1:
        reports = [_one_run(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            reports = list(pool.map(_one_run, tasks))

    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sweep_key", "sweep_value", "metric", "value", "n_runs"])
        for p_idx, point in enumerate(points):
            reps = [r for r, g in zip(reports, groups) if g == p_idx]
            k_true = reps[0]["K_true"]
            acc, rmse_k = dimensionality_scores([r["estimated_K"] for r in reps], k_true)
            row = {
                "accuracy": acc,
                "rmse_K": rmse_k,
                "rmse_theta_F": rmse_over_runs(r["theta_F"] for r in reps),
                "rmse_theta_S": rmse_over_runs(r["theta_S"] for r in reps),
                "rmse_sid": rmse_over_runs(r["mean_sid"] for r in reps),
            }
            for metric in SUMMARY_METRICS:
                writer.writerow([key or "", "" if point is None else point, metric,
                                 io.format_float(row[metric]), len(reps)])
    return EXIT_OK


HANDLERS = {"simulate": cmd_simulate, "unmix": cmd_unmix,
            "evaluate": cmd_evaluate, "pipeline": cmd_pipeline}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, out, values = resolve(argv)
        out = io.ensure_writable_dir(out)
        io.write_resolved_config(out / "config.resolved", _resolved_values(command, values))
    except (InputError, ParseError) as exc:
        print(f"bnu: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"bnu: error: cannot write to output directory: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return HANDLERS[command](values, out)
    except (InputError, ParseError) as exc:
        print(f"bnu: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # anything else is a failure of the run itself
        print(f"bnu: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
