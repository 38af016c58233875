"""Command-line entry point.

Subcommands ``langevin``, ``pdmp``, ``convergence`` and ``gibbs-ref`` read a
config file, apply per-key flag overrides and write CSVs with manifests to
``--out``. Exit status: 0 success, 2 configuration error, 3 more failed
replicates than ``failure_budget``, 4 I/O error.
"""

import argparse
import datetime
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .config import KEYS, ConfigError, parse_config
from .experiments import (
    DEFAULT_LEVELS,
    best_of_k_timeseries,
    convergence_study,
    marginal_w2_timeseries,
    per_replicate_w2,
    reference_quantile_table,
    run_replicates,
    update_diagnostics,
)
from .gibbs import GibbsReference1D
from .io import emit_csv, write_manifest

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("otanneal")


def _add_common(p):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    for key in KEYS:
        if key == "method":
            continue
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=key, default=None, metavar="VALUE",
                       help=f"override [{KEYS[key][0]}] {key}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="otanneal", description="Transport-controlled annealing samplers."
    )
    parser.add_argument("--version", action="version", version=f"otanneal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("langevin", "controlled or independent annealed Langevin replicates"),
        ("pdmp", "controlled or independent annealed bouncy particle replicates"),
        ("convergence", "time-averaged W2 over a grid of n and h"),
        ("gibbs-ref", "ground-truth Gibbs density table"),
    ):
        _add_common(sub.add_parser(name, help=text, description=text))
    return parser


def _overrides(args):
    return {key: getattr(args, key) for key in KEYS if getattr(args, key, None) is not None}


def _manifest(spec, command, overrides, failures, started, outputs):
    return {
        "command": command,
        "version": f"otanneal {__version__}",
        "seed": spec.values["seed"],
        "config": spec.echo,
        "overrides": sorted(overrides),
        "failures": failures,
        "failure_budget": spec.values["failure_budget"],
        "started": datetime.datetime.fromtimestamp(started, datetime.timezone.utc).isoformat(),
        "wall_clock_seconds": round(time.time() - started, 3),
        "outputs": outputs,
    }


def _workers(spec):
    w = spec.values["workers"]
    return w if w > 0 else (os.cpu_count() or 1)


def _trajectory_rows(runs, stride):
    for tr in runs:
        idx = np.arange(0, len(tr.times), stride)
        for j in idx:
            t = tr.times[j]
            for i, x in enumerate(tr.positions[j]):
                yield (tr.replicate, t, i, *x)


def _diagnostic_rows(runs, spec, ref, stride):
    good = [tr for tr in runs if not tr.failed]
    if not good:
        return []
    rows = list(update_diagnostics(good)) if spec.values["control"] else []
    pot = spec.config.potential
    sl = slice(None, None, stride)
    sub = [_strided(tr, sl) for tr in good]
    times, best = best_of_k_timeseries(sub, pot)
    rows += [(t, "best_of_k", b) for t, b in zip(times, best)]
    if ref is not None:
        qtable = reference_quantile_table(ref, times, DEFAULT_LEVELS)
        _, w2 = marginal_w2_timeseries(sub, ref, qtable=qtable)
        rows += [(t, "w2_1d", v) for t, v in zip(times, w2)]
        rep = per_replicate_w2(sub, ref, qtable=qtable).mean(axis=0)
        rows += [(t, "w2_1d_replicate_mean", v) for t, v in zip(times, rep)]
        lm = np.mean(np.concatenate([tr.positions[:, :, 0] < 0 for tr in sub], axis=1), axis=1)
        rows += [(t, "leftmass", v) for t, v in zip(times, lm)]
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def _strided(tr, sl):
    return replace(tr, times=tr.times[sl], positions=tr.positions[sl])


def _reference(spec):
    if spec.config.potential.dim != 1:
        return None
    return GibbsReference1D(spec.config.potential, spec.config.schedule)


def _cmd_run(spec, out, command, overrides, started):
    ref = _reference(spec)
    runs = run_replicates(
        spec.config, spec.values["replicates"], workers=_workers(spec), reference=ref
    )
    failures = sum(tr.failed for tr in runs)
    for tr in runs:
        if tr.failed:
            log.warning("replicate %d failed: %s", tr.replicate, tr.failure)
    stride = spec.values["record_stride"]
    d = spec.config.potential.dim
    paths = {}
    header = ["replicate", "t", "particle"] + [f"coord_{i}" for i in range(d)]
    paths["trajectories"] = emit_csv(
        header, _trajectory_rows(runs, stride), os.path.join(out, "trajectories.csv")
    )
    paths["diagnostics"] = emit_csv(
        ["t", "metric", "value"],
        _diagnostic_rows(runs, spec, ref, stride),
        os.path.join(out, "diagnostics.csv"),
    )
    for p in paths.values():
        write_manifest(p, _manifest(spec, command, overrides, failures, started, [os.path.basename(p)]))
    return failures


def _cmd_convergence(spec, out, command, overrides, started):
    ref = GibbsReference1D(spec.config.potential, spec.config.schedule)
    table = convergence_study(
        spec.config, ref, spec.values["n_list"], spec.values["h_list"],
        spec.values["replicates"], pool_size=spec.values["pool_size"], workers=_workers(spec),
    )
    failures = sum(spec.values["replicates"] - r.replicates for r in table.rows)
    path = emit_csv(table.columns, table.as_rows(), os.path.join(out, "convergence.csv"))
    write_manifest(path, _manifest(spec, command, overrides, failures, started, [os.path.basename(path)]))
    return failures


def _cmd_gibbs_ref(spec, out, command, overrides, started):
    ref = GibbsReference1D(spec.potential, spec.schedule)
    v = spec.values
    xs = np.linspace(v["x_min"], v["x_max"], v["x_points"])
    rows = []
    for t in v["times"]:
        dens = ref.density(float(t), xs)
        rows += [(float(t), x, f) for x, f in zip(xs, dens)]
    path = emit_csv(["t", "x", "density"], rows, os.path.join(out, "gibbs_ref.csv"))
    write_manifest(path, _manifest(spec, command, overrides, 0, started, [os.path.basename(path)]))
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    started = time.time()
    overrides = _overrides(args)
    command = args.command
    method = command if command in ("langevin", "pdmp") else None
    try:
        spec = parse_config(args.config, overrides, method=method,
                            dynamics=command != "gibbs-ref")
        if command in ("convergence", "gibbs-ref") and spec.potential.dim != 1:
            raise ConfigError(f"{command} needs a 1-D potential (dim=1)")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handler = {
        "langevin": _cmd_run,
        "pdmp": _cmd_run,
        "convergence": _cmd_convergence,
        "gibbs-ref": _cmd_gibbs_ref,
    }[command]
    try:
        os.makedirs(args.out, exist_ok=True)
        failures = handler(spec, args.out, command, overrides, started)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if failures > spec.values["failure_budget"]:
        print(
            f"{failures} replicates diverged (budget {spec.values['failure_budget']})",
            file=sys.stderr,
        )
        return EXIT_DIVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
