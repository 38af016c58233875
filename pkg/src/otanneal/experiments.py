"""Replicate drivers and the diagnostics built on their trajectories.

All reductions run over replicates sorted by index, so results do not depend
on the order in which workers return them.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .langevin import LangevinConfig, run_controlled_langevin
from .pdmp import PdmpConfig, run_controlled_pdmp

__all__ = [
    "ConvergenceRow",
    "ConvergenceTable",
    "ExperimentSpec",
    "best_of_k_per_replicate",
    "best_of_k_timeseries",
    "bootstrap_median_gap",
    "convergence_study",
    "histogram_export",
    "left_mass",
    "marginal_w2_timeseries",
    "per_replicate_w2",
    "reference_quantile_table",
    "run_replicate",
    "run_replicates",
    "time_average",
    "update_diagnostics",
]

DEFAULT_LEVELS = 1000
METRICS = ("w2_1d", "leftmass", "best_of_k", "histogram", "ess", "lp_cost")


@dataclass(frozen=True)
class ExperimentSpec:
    """A method config plus what to run and report."""

    config: object
    replicates: int = 1
    metrics: tuple = ("w2_1d",)
    workers: int = 1

    def __post_init__(self):
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise ValueError("replicates must be a positive integer")
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise ValueError(f"unknown metrics {sorted(bad)}")

    @property
    def method(self):
        kind = "langevin" if isinstance(self.config, LangevinConfig) else "pdmp"
        return kind, "controlled" if self.config.control else "independent"


def run_replicate(cfg, replicate, reference=None):
    if isinstance(cfg, LangevinConfig):
        return run_controlled_langevin(cfg, replicate, reference)
    if isinstance(cfg, PdmpConfig):
        return run_controlled_pdmp(cfg, replicate, reference)
    raise TypeError(f"unsupported config type {type(cfg).__name__}")


def _run_chunk(args):
    cfg, reps, reference = args
    return [run_replicate(cfg, r, reference) for r in reps]


def run_replicates(cfg, replicates, workers=1, reference=None, start=0):
    """Run replicates ``start .. start + replicates - 1``, returned in index order.

    Each replicate draws only from its own streams, so ``workers`` changes
    the wall clock and nothing else.
    """
    reps = list(range(start, start + replicates))
    if workers <= 1 or replicates == 1:
        return _run_chunk((cfg, reps, reference))
    nchunks = min(len(reps), 4 * workers)
    chunks = [reps[i::nchunks] for i in range(nchunks)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [(cfg, c, reference) for c in chunks]))
    runs = [tr for part in parts for tr in part]
    runs.sort(key=lambda tr: tr.replicate)
    return runs


def _ok(runs):
    good = [tr for tr in runs if not tr.failed]
    if not good:
        raise ValueError("no successful replicates")
    return good


def _pooled(runs):
    """Stack successful runs into ``(times, particles, d)`` plus the time grid."""
    good = _ok(runs)
    times = good[0].times
    for tr in good[1:]:
        if tr.times.shape != times.shape or not np.array_equal(tr.times, times):
            raise ValueError("runs are recorded on different time grids")
    return times, np.concatenate([tr.positions for tr in good], axis=1)


def _levels(k):
    return (np.arange(1, k + 1) - 0.5) / k


def reference_quantile_table(ref, times, k):
    """Reference quantiles at midpoint levels ``(j - 1/2)/k`` for every time."""
    u = _levels(k)
    return np.stack([ref.quantile(float(t), u) for t in times])


def _w2_rows(samples, qtable):
    """W2 per row between row samples ``(T, m)`` and quantile rows ``(T, k)``."""
    srt = np.sort(samples, axis=1)
    m = srt.shape[1]
    k = qtable.shape[1]
    idx = np.clip(np.ceil(_levels(k) * m).astype(int) - 1, 0, m - 1)
    diff = srt[:, idx] - qtable
    return np.sqrt(np.mean(diff * diff, axis=1))


def marginal_w2_timeseries(runs, ref, k=None, qtable=None):
    """W2 between the pooled particle marginal and the reference at each time.

    Parameters
    ----------
    runs : list of Trajectory
        One-dimensional runs on a common time grid. Failed runs are skipped.
    ref : GibbsReference1D
    k : int, optional
        Quantile levels, ``DEFAULT_LEVELS`` by default. The levels resolve
        the reference law, so they do not shrink with the sample size.
    qtable : array, optional
        Precomputed ``reference_quantile_table(ref, times, k)``.

    Returns
    -------
    times, w2 : arrays
    """
    times, pos = _pooled(runs)
    if pos.shape[2] != 1:
        raise ValueError("marginal W2 is only defined for 1-D runs")
    samples = pos[:, :, 0]
    if qtable is None:
        k = DEFAULT_LEVELS if k is None else k
        qtable = reference_quantile_table(ref, times, k)
    return times, _w2_rows(samples, qtable)


def per_replicate_w2(runs, ref, k=None, qtable=None):
    """W2 time series of every successful run on its own; shape ``(runs, times)``."""
    good = _ok(runs)
    if qtable is None:
        k = DEFAULT_LEVELS if k is None else k
        qtable = reference_quantile_table(ref, good[0].times, k)
    return np.stack([marginal_w2_timeseries([tr], ref, qtable=qtable)[1] for tr in good])


def time_average(times, values):
    """Trapezoid time average over the recorded interval."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    span = times[-1] - times[0]
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)) / span)


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    h: float
    w2bar_mean: float
    w2bar_se: float
    replicates: int
    batches: int = 1


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)

    columns = ("n", "h", "w2bar_mean", "w2bar_se", "replicates")

    def as_rows(self):
        return [tuple(getattr(r, c) for c in self.columns) for r in self.rows]

    def lookup(self, n, h):
        for r in self.rows:
            if r.n == n and math.isclose(r.h, h):
                return r
        raise KeyError((n, h))


def _batch_w2bar(runs, ref, pool_size, qcache):
    """Time-averaged W2 of pooled batches holding about ``pool_size`` particles."""
    good = _ok(runs)
    n = good[0].positions.shape[1]
    per = max(1, int(round(pool_size / n)))
    nb = max(1, len(good) // per)
    times = good[0].times
    k = DEFAULT_LEVELS
    key = (times.shape[0], float(times[0]), float(times[-1]), k)
    if key not in qcache:
        qcache[key] = reference_quantile_table(ref, times, k)
    qtable = qcache[key]
    vals = []
    for b in range(nb):
        batch = good[b * per : (b + 1) * per]
        vals.append(time_average(*marginal_w2_timeseries(batch, ref, qtable=qtable)))
    return np.array(vals), len(good)


def convergence_study(base, ref, n_list, h_list, replicates, pool_size=200, workers=1):
    """Time-averaged marginal W2 over a grid of ensemble sizes and update intervals.

    For each ``(n, h)`` the replicates are split into consecutive batches
    pooling about ``pool_size`` particles; each batch gives one time-averaged
    pooled W2, and the table reports the batch mean and its standard error.
    Equal pooled sizes keep the finite-sample floor of the estimator the
    same across ``n``.

    Parameters
    ----------
    base : LangevinConfig or PdmpConfig
        Template; ``n`` and the update interval are overridden.
    ref : GibbsReference1D
    n_list, h_list : sequences
    replicates : int
    """
    table = ConvergenceTable()
    qcache = {}
    for h in h_list:
        for n in n_list:
            if isinstance(base, LangevinConfig):
                k = int(round(h / base.dt))
                if k < 1 or abs(k * base.dt - h) > 1e-9:
                    raise ValueError(f"h={h} is not a multiple of dt={base.dt}")
                cfg = replace(base, n=int(n), k=k)
            else:
                cfg = replace(base, n=int(n), h=float(h))
            runs = run_replicates(cfg, replicates, workers=workers, reference=ref)
            vals, used = _batch_w2bar(runs, ref, pool_size, qcache)
            se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
            table.rows.append(
                ConvergenceRow(int(n), float(h), float(np.mean(vals)), se, used, len(vals))
            )
    return table


def best_of_k_per_replicate(runs, potential):
    """``min_i U(X_t^i)`` for each successful run; shape ``(runs, times)``."""
    good = _ok(runs)
    return np.stack([np.min(potential.value(tr.positions), axis=1) for tr in good])


def best_of_k_timeseries(runs, potential):
    """Median over replicates of the ensemble minimum of ``U`` at each time."""
    good = _ok(runs)
    return good[0].times, np.median(best_of_k_per_replicate(good, potential), axis=0)


def bootstrap_median_gap(a, b, n_boot=2000, level=0.95, rng=None):
    """Bootstrap the difference of medians ``median(a) - median(b)``.

    Returns ``(gap, lo, hi)`` where ``[lo, hi]`` is the percentile interval.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng
    ia = rng.integers(a.size, size=(n_boot, a.size))
    ib = rng.integers(b.size, size=(n_boot, b.size))
    d = np.median(a[ia], axis=1) - np.median(b[ib], axis=1)
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(d, [alpha, 1.0 - alpha])
    return float(np.median(a) - np.median(b)), float(lo), float(hi)


def histogram_export(runs, edges, time_index=None):
    """Binned particle masses per recorded time.

    Parameters
    ----------
    runs : list of Trajectory
        One-dimensional runs on a common grid.
    edges : array
        Increasing bin edges; particles outside are counted in the end bins.
    time_index : array of int, optional
        Subset of recorded times.

    Returns
    -------
    times, table : arrays
        ``table[i, b]`` is the fraction of pooled particles in bin ``b`` at
        ``times[i]``; each row sums to 1.
    """
    times, pos = _pooled(runs)
    if pos.shape[2] != 1:
        raise ValueError("histograms are only defined for 1-D runs")
    if time_index is not None:
        times, pos = times[time_index], pos[time_index]
    edges = np.asarray(edges, dtype=float)
    nb = edges.size - 1
    if nb < 1 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be strictly increasing with at least one bin")
    x = pos[:, :, 0]
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, nb - 1)
    m = x.shape[1]
    table = np.stack([np.bincount(row, minlength=nb) for row in idx]) / m
    return times, table


def left_mass(runs, time_index=-1, threshold=0.0):
    """Per-replicate fraction of particles below ``threshold`` at one recorded time."""
    good = _ok(runs)
    return np.array([np.mean(tr.positions[time_index, :, 0] < threshold) for tr in good])


def update_diagnostics(runs):
    """Mean weight ESS and LP cost per update time as ``(t, metric, value)`` rows."""
    good = _ok(runs)
    acc = {}
    for tr in good:
        for u in tr.updates:
            acc.setdefault(u.t, []).append((u.ess, u.lp_cost))
    rows = []
    for t in sorted(acc):
        vals = np.array(acc[t])
        rows.append((t, "ess", float(np.mean(vals[:, 0]))))
        rows.append((t, "lp_cost", float(np.mean(vals[:, 1]))))
    return rows
