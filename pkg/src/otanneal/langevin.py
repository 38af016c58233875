"""Controlled annealed Langevin dynamics for an ensemble of particles.

Every ``k`` Euler-Maruyama steps the ensemble re-estimates its control
velocities from the optimal transport plan between its current empirical
measure and the reweighting towards ``beta(t + h)``; the velocities then stay
fixed while the particles integrate

    X <- X + dt (V - lam grad U(X)) + sqrt(2 lam dt / beta(t)) zeta.

With ``control=False`` the velocities stay zero and the particles are
independent annealed Langevin chains.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .gibbs import GibbsReference1D
from .streams import particle_stream
from .transport import (
    anneal_weights,
    barycentric_velocity,
    cost_matrix,
    lexicographic_order,
    solve_transport_lp,
)

__all__ = [
    "DIVERGENCE_THRESHOLD",
    "DivergenceError",
    "Ensemble",
    "InitSpec",
    "LangevinConfig",
    "StepRecord",
    "Trajectory",
    "UpdateRecord",
    "control_update",
    "estimate_control",
    "initial_positions",
    "langevin_records",
    "langevin_step",
    "run_controlled_langevin",
]

DIVERGENCE_THRESHOLD = 1e8
NOISE_SCALINGS = ("time_change", "literal")


class DivergenceError(FloatingPointError):
    """The ensemble left the finite region; the run is aborted."""


@dataclass(frozen=True)
class InitSpec:
    """Initial law: exact Gibbs samples at ``t = 0`` or an isotropic Gaussian."""

    kind: str = "gibbs_mu0"
    mean: tuple = (0.0,)
    variance: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gibbs_mu0", "gaussian"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.kind == "gaussian" and not self.variance > 0:
            raise ValueError("init variance must be positive")


@dataclass(frozen=True)
class Ensemble:
    positions: np.ndarray
    control_velocities: np.ndarray
    t: float = 0.0

    @property
    def n(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]


@dataclass(frozen=True)
class LangevinConfig:
    potential: object
    schedule: object
    n: int
    dt: float
    k: int
    lam: float = 1.0
    horizon: float = 1.0
    seed: int = 0
    init: InitSpec = field(default_factory=InitSpec)
    control: bool = True
    noise_scaling: str = "time_change"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"horizon/dt = {steps} is not a whole number of steps")
        if self.noise_scaling not in NOISE_SCALINGS:
            raise ValueError(f"noise_scaling must be one of {NOISE_SCALINGS}")
        if self.init.kind == "gibbs_mu0" and self.potential.dim != 1:
            raise ValueError("gibbs_mu0 initialization needs a 1-D potential")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    @property
    def h(self):
        return self.k * self.dt


@dataclass(frozen=True)
class StepRecord:
    step: int
    t: float
    positions: np.ndarray


@dataclass(frozen=True)
class UpdateRecord:
    t: float
    ess: float
    lp_cost: float
    pivots: int


@dataclass
class Trajectory:
    """Positions of one replicate on its output grid plus per-update diagnostics."""

    replicate: int
    times: np.ndarray
    positions: np.ndarray
    updates: list = field(default_factory=list)
    failure: str = None
    stats: dict = field(default_factory=dict)
    final: object = None

    @property
    def failed(self):
        return self.failure is not None

    def at(self, t):
        idx = int(np.argmin(np.abs(self.times - t)))
        return self.positions[idx]


def initial_positions(init, potential, schedule, streams, reference=None):
    """Draw one initial position per particle, each from its own stream."""
    n, d = len(streams), potential.dim
    if init.kind == "gaussian":
        mean = np.broadcast_to(np.asarray(init.mean, dtype=float), (d,))
        sd = math.sqrt(init.variance)
        return np.stack([mean + sd * rng.standard_normal(d) for rng in streams])
    if reference is None:
        reference = GibbsReference1D(potential, schedule)
    u = np.array([rng.random() for rng in streams])
    u = np.where(u > 0.0, u, np.nextafter(0.0, 1.0))
    return reference.quantile(0.0, u).reshape(n, 1)


def _check_finite(x, t):
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_THRESHOLD):
        raise DivergenceError(f"ensemble diverged at t={t:.6g}")


def control_update(positions, energies, delta_beta, h):
    """Velocities from the optimal plan to the reweighted ensemble.

    Returns ``(V, weights, plan)``.
    """
    w = anneal_weights(energies, delta_beta)
    plan = solve_transport_lp(cost_matrix(positions), w, order=lexicographic_order(positions))
    return barycentric_velocity(plan, positions, h), w, plan


def estimate_control(ens, potential, schedule, h):
    """Control velocities for the interval ``[t, t + h]``."""
    t = ens.t
    dbeta = float(schedule.value(t + h) - schedule.value(t))
    v, _, _ = control_update(ens.positions, potential.value(ens.positions), dbeta, h)
    return v


def _noise_scale(beta, dt, lam, scaling):
    if scaling == "time_change":
        return math.sqrt(2.0 * lam * dt / beta)
    return lam * math.sqrt(2.0 * dt / beta)


def langevin_step(ens, potential, schedule, dt, lam, noise, noise_scaling="time_change"):
    """One Euler-Maruyama step; ``beta`` is taken at the start of the step.

    ``noise_scaling='time_change'`` uses ``sqrt(2 lam dt / beta)``, the
    diffusion of the time-rescaled process, so ``exp(-beta U)`` stays
    invariant for any ``lam``. ``'literal'`` multiplies the unit-clock noise
    ``sqrt(2 dt / beta)`` by ``lam``. The control velocity is never scaled
    by ``lam``.
    """
    x = ens.positions
    beta = float(schedule.value(ens.t))
    x_new = (
        x
        + dt * (ens.control_velocities - lam * potential.gradient(x))
        + _noise_scale(beta, dt, lam, noise_scaling) * noise
    )
    t_new = ens.t + dt
    _check_finite(x_new, t_new)
    return Ensemble(x_new, ens.control_velocities, t_new)


def langevin_records(cfg, replicate=0, reference=None):
    """Generate the run as a stream of ``UpdateRecord`` and ``StepRecord``.

    Yields one ``UpdateRecord`` at the start of every velocity interval
    (only when the control is on) followed by one ``StepRecord`` per
    integration step. Raises ``DivergenceError`` if the ensemble blows up.
    The initial positions are available as ``StepRecord(step=0)``, which is
    yielded first.
    """
    pot, sched = cfg.potential, cfg.schedule
    streams = [particle_stream(cfg.seed, replicate, i) for i in range(cfg.n)]
    x0 = initial_positions(cfg.init, pot, sched, streams, reference)
    n_steps, d = cfg.n_steps, pot.dim
    # step-indexed noise: block ell of particle i's stream drives step ell
    noise = np.stack([rng.standard_normal((n_steps, d)) for rng in streams], axis=1)
    ens = Ensemble(x0, np.zeros_like(x0), 0.0)
    yield StepRecord(0, 0.0, x0)
    for step in range(n_steps):
        if step % cfg.k == 0:
            if cfg.control:
                t = step * cfg.dt
                h = min(cfg.k, n_steps - step) * cfg.dt
                dbeta = float(sched.value(t + h) - sched.value(t))
                v, w, plan = control_update(ens.positions, pot.value(ens.positions), dbeta, h)
                ens = Ensemble(ens.positions, v, t)
                yield UpdateRecord(t, w.ess, plan.cost, plan.pivots)
        ens = langevin_step(ens, pot, sched, cfg.dt, cfg.lam, noise[step], cfg.noise_scaling)
        # exact grid time, no accumulated rounding
        ens = Ensemble(ens.positions, ens.control_velocities, (step + 1) * cfg.dt)
        yield StepRecord(step + 1, ens.t, ens.positions)


def run_controlled_langevin(cfg, replicate=0, reference=None):
    """Run one replicate and collect it into a ``Trajectory``.

    A divergence stops the run; the trajectory then holds the states up to
    the failure and ``failure`` carries the diagnostic.
    """
    times, positions, updates = [], [], []
    failure = None
    final = None
    try:
        for rec in langevin_records(cfg, replicate, reference):
            if isinstance(rec, StepRecord):
                times.append(rec.t)
                positions.append(rec.positions)
            else:
                updates.append(rec)
    except DivergenceError as exc:
        failure = str(exc)
    if failure is None:
        final = Ensemble(positions[-1], np.zeros_like(positions[-1]), times[-1])
    return Trajectory(
        replicate=replicate,
        times=np.array(times),
        positions=np.array(positions),
        updates=updates,
        failure=failure,
        final=final,
    )
