"""Synchronous controlled bouncy particle sampler for annealing.

Each particle moves along ``x + s (y + v)`` where ``y`` is its bouncy
direction (norm ``lam``) and ``v`` the piecewise-constant control velocity.
Bounces happen at the first arrival of the inhomogeneous rate
``max(0, beta(t) <grad U(x), y>)``, refreshments at total ensemble rate
``refresh_rate``, and all control velocities are re-estimated at the fixed
times ``k h``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .gibbs import GibbsReference1D
from .langevin import (
    DIVERGENCE_THRESHOLD,
    DivergenceError,
    InitSpec,
    Trajectory,
    UpdateRecord,
    control_update,
    initial_positions,
)
from .streams import ensemble_stream, particle_stream

__all__ = [
    "PdmpConfig",
    "PdmpState",
    "ThinningConfig",
    "advance_flow",
    "bounce_rate",
    "expected_bps_event_rate",
    "reflect",
    "run_controlled_pdmp",
    "sample_event_time",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ThinningConfig:
    """Envelope for thinning: ``points`` rate evaluations per ``lookahead``
    window, inflated by ``safety``. ``lookahead=None`` means one control
    interval ``h``."""

    lookahead: float = None
    points: int = 16
    safety: float = 1.5

    def __post_init__(self):
        if self.lookahead is not None and not self.lookahead > 0:
            raise ValueError("thinning lookahead must be positive")
        if int(self.points) != self.points or self.points < 2:
            raise ValueError("thinning needs at least 2 grid points")
        if not self.safety > 1:
            raise ValueError("thinning safety factor must exceed 1")


@dataclass(frozen=True)
class PdmpConfig:
    potential: object
    schedule: object
    n: int
    lam: float = 1.0
    refresh_rate: float = 1.0
    h: float = 0.02
    horizon: float = 1.0
    seed: int = 0
    init: InitSpec = field(default_factory=InitSpec)
    control: bool = True
    thinning: ThinningConfig = field(default_factory=ThinningConfig)
    output_points: int = 1000
    record_events: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.refresh_rate >= 0:
            raise ValueError("refresh_rate must be non-negative")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if int(self.output_points) != self.output_points or self.output_points < 1:
            raise ValueError("output_points must be a positive integer")
        if self.init.kind == "gibbs_mu0" and self.potential.dim != 1:
            raise ValueError("gibbs_mu0 initialization needs a 1-D potential")

    @property
    def lookahead(self):
        return self.thinning.lookahead if self.thinning.lookahead is not None else self.h

    @property
    def output_grid(self):
        return np.linspace(0.0, self.horizon, self.output_points + 1)


@dataclass(frozen=True)
class PdmpState:
    positions: np.ndarray
    directions: np.ndarray
    control_velocities: np.ndarray
    t: float = 0.0


def reflect(gradient, y):
    """Specular reflection of ``y`` off the level set with normal ``gradient``.

    Works on single vectors or row-wise on ``(n, d)`` arrays; rows with a
    zero gradient are returned unchanged.
    """
    g = np.asarray(gradient, dtype=float)
    y = np.asarray(y, dtype=float)
    gg = np.sum(g * g, axis=-1, keepdims=True)
    gy = np.sum(g * y, axis=-1, keepdims=True)
    safe = np.where(gg > 0, gg, 1.0)
    return np.where(gg > 0, y - 2.0 * gy / safe * g, y)


def bounce_rate(t, x, y, potential, schedule):
    """``max(0, beta(t) <grad U(x), y>)``, row-wise for stacked inputs."""
    g = potential.gradient(x)
    return np.maximum(0.0, schedule.value(t) * np.sum(g * np.asarray(y), axis=-1))


def advance_flow(state, s):
    """Move every particle along ``y + v`` for a duration ``s >= 0``."""
    if s < 0:
        raise ValueError(f"flow duration must be non-negative, got {s}")
    x = state.positions + s * (state.directions + state.control_velocities)
    return PdmpState(x, state.directions, state.control_velocities, state.t + s)


def sample_event_time(rate, horizon, thinning, rng, lookahead=None, stats=None):
    """First arrival time of a Poisson process with intensity ``rate(s)``.

    Parameters
    ----------
    rate : float or callable
        A constant intensity, inverted exactly, or a vectorized map from
        offsets ``s`` in ``[0, horizon]`` to intensities.
    horizon : float
        Arrivals after ``horizon`` are not resolved; ``inf`` is returned.
    thinning : ThinningConfig
    rng : numpy.random.Generator
    lookahead : float, optional
        Window length; defaults to ``thinning.lookahead`` or the horizon.
    stats : dict, optional
        Incremented with ``proposals`` and ``violations`` counts.

    Returns
    -------
    float
        Arrival offset in ``[0, horizon]``, or ``inf``.
    """
    if not callable(rate):
        r = float(rate)
        if r <= 0:
            return math.inf
        s = -math.log(rng.random()) / r
        return s if s <= horizon else math.inf
    if lookahead is None:
        lookahead = thinning.lookahead if thinning.lookahead is not None else horizon
    m = thinning.points
    start = 0.0
    while start < horizon:
        end = min(start + lookahead, horizon)
        grid = np.linspace(start, end, m)
        r = np.asarray(rate(grid), dtype=float)
        cell = np.maximum(r[:-1], r[1:])
        safety = thinning.safety
        hit = _thin_window(rate, grid, cell, safety, rng, stats)
        while hit is None:
            # envelope violated: rebuild this window with doubled safety
            safety *= 2.0
            log.warning("thinning envelope violated on [%g, %g]; safety -> %g", start, end, safety)
            if stats is not None:
                stats["violations"] = stats.get("violations", 0) + 1
            hit = _thin_window(rate, grid, cell, safety, rng, stats)
        if hit < math.inf:
            return hit
        start = end
    return math.inf


def _thin_window(rate, grid, cell, safety, rng, stats):
    """Thin one window; ``None`` flags an envelope violation."""
    env = safety * cell
    s = grid[0]
    j = 0
    while j < len(env):
        if env[j] <= 0:
            j += 1
            s = grid[j] if j < len(grid) else s
            continue
        s = s + rng.exponential(1.0 / env[j])
        if s >= grid[j + 1]:
            # memoryless: restart the clock at the next cell
            j += 1
            s = grid[j]
            continue
        r = float(np.asarray(rate(np.array([s])), dtype=float)[0])
        if stats is not None:
            stats["proposals"] = stats.get("proposals", 0) + 1
        if r > env[j]:
            return None
        if rng.random() * env[j] < r:
            return s
    return math.inf


def _segment_rate(x, y, v, t0, potential, schedule):
    w = y + v

    def rate(s):
        s = np.asarray(s, dtype=float)
        pts = x + s[:, None] * w
        g = potential.gradient(pts)
        return np.maximum(0.0, schedule.value(t0 + s) * (g @ y))

    return rate


def _random_direction(rng, d, lam):
    while True:
        z = rng.standard_normal(d)
        nz = np.linalg.norm(z)
        if nz > 0:
            return lam * z / nz


def _check_finite(x, t):
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_THRESHOLD):
        raise DivergenceError(f"ensemble diverged at t={t:.6g}")


def run_controlled_pdmp(cfg, replicate=0, reference=None):
    """Simulate the synchronous ensemble on ``[0, horizon]``.

    Random events (one bounce or one refreshment) and the scheduled control
    updates at ``k h`` are processed in time order. Positions are recorded
    on ``cfg.output_grid`` by evaluating the linear flow, so the output is
    exact up to floating point. A divergence ends the run early with
    ``failure`` set.
    """
    pot, sched = cfg.potential, cfg.schedule
    n, d, lam = cfg.n, pot.dim, cfg.lam
    streams = [particle_stream(cfg.seed, replicate, i) for i in range(n)]
    ens_rng = ensemble_stream(cfg.seed, replicate)
    if cfg.init.kind == "gibbs_mu0" and reference is None:
        reference = GibbsReference1D(pot, sched)
    x = initial_positions(cfg.init, pot, sched, streams, reference)
    y = np.stack([_random_direction(rng, d, lam) for rng in streams])
    v = np.zeros_like(x)
    t = 0.0
    grid = cfg.output_grid
    out = np.empty((len(grid), n, d))
    out[0] = x
    next_out = 1
    stats = {"bounces": 0, "refreshes": 0, "proposals": 0, "violations": 0}
    events = [] if cfg.record_events else None
    updates = []
    failure = None
    T, h = cfg.horizon, cfg.h
    n_sched = int(math.floor(T / h + 1e-9))
    k = 0
    t_sched = 0.0
    cand = np.full(n, math.inf)
    t_refresh = math.inf
    try:
        while True:
            if t == t_sched:
                # scheduled event: control update, all candidates invalidated
                if cfg.control:
                    h_eff = min(h, T - t)
                    dbeta = float(sched.value(t + h_eff) - sched.value(t))
                    v, wts, plan = control_update(x, pot.value(x), dbeta, h_eff)
                    updates.append(UpdateRecord(t, wts.ess, plan.cost, plan.pivots))
                k += 1
                t_sched = k * h if k <= n_sched and k * h < T else T
                window = t_sched - t
                for i in range(n):
                    r = _segment_rate(x[i], y[i], v[i], t, pot, sched)
                    s = sample_event_time(r, window, cfg.thinning, streams[i], cfg.lookahead, stats)
                    cand[i] = t + s
                s = sample_event_time(cfg.refresh_rate, window, cfg.thinning, ens_rng)
                t_refresh = t + s
            i_min = int(np.argmin(cand))
            t_next = min(cand[i_min], t_refresh, t_sched)
            # record the output grid along the linear flow
            w = y + v
            while next_out < len(grid) and grid[next_out] <= t_next:
                out[next_out] = x + (grid[next_out] - t) * w
                next_out += 1
            x = x + (t_next - t) * w
            _check_finite(x, t_next)
            t = t_next
            if t >= T and t == t_sched:
                break
            if t == t_sched:
                continue
            if t_refresh <= cand[i_min]:
                j = int(ens_rng.integers(n))
                y[j] = _random_direction(ens_rng, d, lam)
                stats["refreshes"] += 1
                if events is not None:
                    events.append((t, "refresh", j))
                s = sample_event_time(cfg.refresh_rate, t_sched - t, cfg.thinning, ens_rng)
                t_refresh = t + s
            else:
                j = i_min
                y[j] = reflect(pot.gradient(x[j]), y[j])
                stats["bounces"] += 1
                if events is not None:
                    events.append((t, "bounce", j))
            # only particle j changed its direction: redraw its candidate
            r = _segment_rate(x[j], y[j], v[j], t, pot, sched)
            s = sample_event_time(r, t_sched - t, cfg.thinning, streams[j], cfg.lookahead, stats)
            cand[j] = t + s
    except DivergenceError as exc:
        failure = str(exc)
        out = out[:next_out]
        grid = grid[:next_out]
    traj = Trajectory(
        replicate=replicate,
        times=grid.copy(),
        positions=out,
        updates=updates,
        failure=failure,
        stats=stats,
        final=None if failure else PdmpState(x, y, v, t),
    )
    if events is not None:
        traj.stats["events"] = events
    return traj


def expected_bps_event_rate(reference, t, lam, refresh_rate):
    """Stationary expected event rate of the 1-D sampler at a fixed ``beta``.

    Directions are ``+-lam`` with equal probability, so the bounce rate
    averages to ``beta lam E|U'| / 2``; refreshments add ``refresh_rate``.
    """
    pot = reference.potential
    L = reference.L
    xs = np.linspace(-L, L, 400001)
    dens = reference.density(t, xs)
    grad = np.abs(pot.gradient(xs[:, None])[:, 0])
    f = grad * dens
    mean_abs_grad = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(xs)))
    beta = float(reference.schedule.value(t))
    return 0.5 * beta * lam * mean_abs_grad + refresh_rate
