"""Ground truth for Gibbs curves ``mu_t ∝ exp(-beta(t) U)``.

``GibbsReference1D`` computes normalizers, CDFs, quantiles and the minimal
velocity field of a one-dimensional curve by adaptive Simpson quadrature on a
truncated interval ``[-L, L]``. ``GaussianCurve`` holds the closed forms for a
quadratic potential in any dimension.
"""

import threading
from collections import OrderedDict

import numpy as np

from .numerics import QuadratureError, adaptive_simpson

__all__ = [
    "GaussianCurve",
    "GibbsReference1D",
    "GibbsSlice",
    "QuadratureError",
    "TailEvaluationError",
    "truncation_radius",
]


class TailEvaluationError(ArithmeticError):
    """The Gibbs density underflows at the query point, so ``v_t`` is 0/0."""


class _energy_1d:
    """Scalar view ``x -> U(x)`` of a 1-D potential (picklable)."""

    def __init__(self, potential):
        self.potential = potential

    def __call__(self, x):
        return self.potential.value(np.asarray(x, dtype=float)[..., None])


def truncation_radius(potential, beta, tail_mass=1e-12, start=2.0, growth=1.25, max_radius=1e4):
    """Smallest radius on a geometric ladder whose outside mass is negligible.

    A radius ``L`` is accepted when the mass of ``exp(-beta U)`` on
    ``[-2L, -L] ∪ [L, 2L]`` is below ``tail_mass`` times the mass on
    ``[-L, L]``. Returns ``(L, u_floor)`` where ``u_floor`` is the minimum of
    ``U`` on a dense grid of ``[-L, L]``.
    """
    u = _energy_1d(potential)
    radius = start
    while radius <= max_radius:
        grid = np.linspace(-2 * radius, 2 * radius, 8001)
        u_floor = float(np.min(u(grid)))

        def f(x, radius=radius, u_floor=u_floor):
            return np.exp(-beta * (u(x) - u_floor))

        inner = adaptive_simpson(f, -radius, radius, tol=1e-10).total
        tol = 1e-3 * tail_mass * inner
        outer = (
            adaptive_simpson(f, radius, 2 * radius, tol=tol).total
            + adaptive_simpson(f, -2 * radius, -radius, tol=tol).total
        )
        if outer < tail_mass * inner:
            grid = np.linspace(-radius, radius, 20001)
            return radius, float(np.min(u(grid)))
        radius *= growth
    raise QuadratureError(f"no truncation radius below {max_radius} for beta={beta}")


class GibbsSlice:
    """Quadrature table of ``mu_t`` at one time.

    Stores the adaptive leaves of the stabilized density
    ``f0 = exp(-beta (U - u_floor))`` and of ``U f0`` on a shared panel set,
    with cumulative sums from both ends.
    """

    def __init__(self, ref, t):
        self.t = float(t)
        self.beta = float(ref.schedule.value(t))
        self.rate = float(ref.schedule.rate(t))
        self._u = ref._u
        self._floor = ref.u_floor
        self.L = ref.L
        beta, floor, u = self.beta, self._floor, self._u

        def f(x):
            ux = u(x)
            f0 = np.exp(-beta * (ux - floor))
            return np.stack([f0, ux * f0])

        panels = adaptive_simpson(f, -self.L, self.L, tol=ref.tol, max_panels=ref.max_panels)
        self.panels = panels
        ints = panels.integrals
        self._ints = ints
        self.mass0, self.mass1 = (float(v) for v in ints.sum(axis=1))
        if not self.mass0 > 0:
            raise QuadratureError(f"zero Gibbs mass at t={t}")
        self.mean_energy = self.mass1 / self.mass0
        # cumulative integrals at the leaf boundaries, accumulated from each end
        zero = np.zeros((2, 1))
        self._cum = np.concatenate([zero, np.cumsum(ints, axis=1)], axis=1)
        self._rcum = np.concatenate([np.cumsum(ints[:, ::-1], axis=1)[:, ::-1], zero], axis=1)
        self.edges = np.append(panels.left, panels.right[-1])
        self._cdf_edges = self._cum[0] / self.mass0

    @property
    def normalizer(self):
        return float(np.exp(-self.beta * self._floor)) * self.mass0

    def f0(self, x):
        return np.exp(-self.beta * (self._u(x) - self._floor))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = self.f0(x) / self.mass0
        return np.where(np.abs(x) <= self.L, out, 0.0)

    def _locate(self, x):
        idx = np.searchsorted(self.edges, x, side="right") - 1
        return np.clip(idx, 0, len(self.panels) - 1)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, -self.L, self.L)
        idx = self._locate(xc)
        a = self.panels.left[idx]
        fa = self.panels.f_left[0, idx]
        part = (xc - a) / 6.0 * (fa + 4.0 * self.f0(0.5 * (a + xc)) + self.f0(xc))
        return np.clip((self._cum[0, idx] + part) / self.mass0, 0.0, 1.0)

    def quantile(self, u, max_iter=200):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)) or np.any(~np.isfinite(u)):
            raise ValueError("quantile level must lie in the open interval (0, 1)")
        idx = np.clip(np.searchsorted(self._cdf_edges, u, side="right") - 1, 0, len(self.panels) - 1)
        lo = self.panels.left[idx].copy()
        hi = self.panels.right[idx].copy()
        xtol = 1e-12 * self.L
        for _ in range(max_iter):
            if np.all(hi - lo <= xtol):
                break
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def _centered(self, which):
        # J(x) = ∫_{-L}^x (U - m) f0 at the leaf boundaries
        cum = self._cum if which == "left" else self._rcum
        j = cum[1] - self.mean_energy * cum[0]
        return j if which == "left" else -j

    def centered_integral(self, x):
        """Table estimate of ``J(x) = ∫_{-L}^x (U - m) f0`` at arbitrary points."""
        x = np.clip(np.asarray(x, dtype=float), -self.L, self.L)
        idx = self._locate(x)
        a, b = self.panels.left[idx], self.panels.right[idx]
        m = self.mean_energy

        def g(y):
            return (self._u(y) - m) * self.f0(y)

        ga, gb, gx = g(a), g(b), g(x)
        left_part = (x - a) / 6.0 * (ga + 4.0 * g(0.5 * (a + x)) + gx)
        right_part = (b - x) / 6.0 * (gx + 4.0 * g(0.5 * (x + b)) + gb)
        jl = self._centered("left")[idx] + left_part
        jr = self._centered("right")[idx + 1] - right_part
        return np.where(self.cdf(x) <= 0.5, jl, jr)

    def velocity_table(self):
        """Velocity field at leaf boundaries and midpoints.

        Returns ``(x, v, f0)`` on the sorted node set. Each node sums the
        centred integrand from the end of the interval with less mass, so the
        quotient by ``f0`` is formed from same-signed tail contributions.
        """
        p = self.panels
        m = self.mean_energy
        a, b = p.left, p.right
        mid = 0.5 * (a + b)
        g_a = p.f_left[1] - m * p.f_left[0]
        g_m = p.f_mid[1] - m * p.f_mid[0]
        g_b = p.f_right[1] - m * p.f_right[0]
        jl = self._centered("left")
        jr = self._centered("right")
        cdf_e = self._cdf_edges
        j_edges = np.where(cdf_e <= 0.5, jl, jr)

        q1, q3 = 0.5 * (a + mid), 0.5 * (mid + b)
        uq1, uq3 = self._u(q1), self._u(q3)
        gq1 = (uq1 - m) * self.f0(q1)
        gq3 = (uq3 - m) * self.f0(q3)
        half = 0.5 * (b - a)
        left_half = half / 6.0 * (g_a + 4.0 * gq1 + g_m)
        right_half = half / 6.0 * (g_m + 4.0 * gq3 + g_b)
        cdf_mid = 0.5 * (cdf_e[:-1] + cdf_e[1:])
        j_mid = np.where(cdf_mid <= 0.5, jl[:-1] + left_half, jr[1:] - right_half)

        x = np.empty(2 * len(a) + 1)
        x[0::2] = self.edges
        x[1::2] = mid
        j = np.empty_like(x)
        j[0::2] = j_edges
        j[1::2] = j_mid
        f0 = np.empty_like(x)
        f0[0::2] = np.append(p.f_left[0], p.f_right[0, -1])
        f0[1::2] = p.f_mid[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(f0 > 0, self.rate * j / f0, 0.0)
        return x, v, f0

    def metric_derivative(self):
        if self.rate == 0.0:
            return 0.0
        _, v, f0 = self.velocity_table()
        p = self.panels
        integrand = v * v * f0
        w = p.right - p.left
        total = np.sum(w / 6.0 * (integrand[0:-1:2] + 4.0 * integrand[1::2] + integrand[2::2]))
        return float(np.sqrt(total / self.mass0))


class GibbsReference1D:
    """Exact one-dimensional Gibbs curve for a potential and cooling schedule.

    Parameters
    ----------
    potential : Potential
        One-dimensional potential.
    schedule : CoolingSchedule
        Cooling schedule; its horizon bounds the admissible times.
    radius : float, optional
        Truncation half-width ``L``. Chosen from the warmest inverse
        temperature on the horizon when omitted.
    tol : float
        Absolute adaptive-Simpson tolerance on stabilized integrands.
    max_panels : int
        Panel budget per quadrature before ``QuadratureError`` is raised.
    cache_size : int
        Number of per-time quadrature tables kept in memory.
    """

    def __init__(self, potential, schedule, radius=None, tol=1e-10, max_panels=1 << 18,
                 cache_size=64):
        if potential.dim != 1:
            raise ValueError(f"GibbsReference1D needs a 1-D potential, got dim={potential.dim}")
        self.potential = potential
        self.schedule = schedule
        self.tol = tol
        self.max_panels = max_panels
        self.cache_size = cache_size
        self._u = _energy_1d(potential)
        ts = np.linspace(0.0, schedule.horizon, 201)
        try:
            betas = schedule.value(ts)
        except ValueError:
            betas = schedule.value(ts[:-1])
        self.beta_min = float(np.min(betas))
        self.beta_max = float(np.max(betas))
        if radius is None:
            self.L, self.u_floor = truncation_radius(potential, self.beta_min)
        else:
            self.L = float(radius)
            self.u_floor = float(np.min(self._u(np.linspace(-self.L, self.L, 20001))))
        self._cache = OrderedDict()
        self._lock = threading.Lock()

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = OrderedDict()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def _check_time(self, t):
        if not 0.0 <= t <= self.schedule.horizon + 1e-12:
            raise ValueError(f"t={t} outside the horizon [0, {self.schedule.horizon}]")

    def slice(self, t):
        t = float(t)
        self._check_time(t)
        with self._lock:
            hit = self._cache.get(t)
            if hit is not None:
                self._cache.move_to_end(t)
                return hit
        sl = GibbsSlice(self, t)
        with self._lock:
            self._cache[t] = sl
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return sl

    def normalizer(self, t):
        """``Z = ∫ exp(-beta(t) U(x)) dx`` over ``[-L, L]``."""
        return self.slice(t).normalizer

    def density(self, t, x):
        return self.slice(t).density(x)

    def cdf(self, t, x):
        return self.slice(t).cdf(x)

    def quantile(self, t, u):
        """Inverse CDF by bisection inside the bracketing leaf panel."""
        return self.slice(t).quantile(u)

    def sample(self, t, rng, size=None):
        """Inverse-CDF draws from ``mu_t`` using ``rng.random``."""
        u = rng.random(size)
        u = np.where(u > 0.0, u, np.nextafter(0.0, 1.0))
        return self.quantile(t, u)

    def mean_potential(self, t):
        """``∫ U dmu_t``."""
        return self.slice(t).mean_energy

    def velocity(self, t, x):
        """Minimal velocity field of the curve at time ``t``.

        ``v_t(x) = beta'(t) / pi_t(x) * ∫_{-L}^x (U(y) - ∫U dmu_t) pi_t(y) dy``.
        The integral is taken over the side of ``x`` that carries less mass,
        with a tolerance scaled to the local density so the far tails keep
        relative accuracy. Raises ``TailEvaluationError`` where the density
        underflows.
        """
        sl = self.slice(t)
        xs = np.asarray(x, dtype=float)
        out = np.array([self._velocity_point(sl, float(xi)) for xi in xs.ravel()])
        return out.reshape(xs.shape) if xs.ndim else float(out[0])

    def _velocity_point(self, sl, x):
        if abs(x) > self.L:
            raise ValueError(f"x={x} outside the truncation interval [-{self.L}, {self.L}]")
        if sl.rate == 0.0:
            return 0.0
        m = sl.mean_energy
        fx = float(sl.f0(x))
        if not fx > 0.0:
            raise TailEvaluationError(f"Gibbs density underflows at x={x}, t={sl.t}")
        # tolerance relative to the one-sided integral itself, floored by the
        # local density so zero crossings of the integral stay cheap
        j_est = abs(float(sl.centered_integral(x)))
        tol = self.tol * max(j_est, fx)

        def g(y):
            return (self._u(y) - m) * sl.f0(y)

        if float(sl.cdf(x)) <= 0.5:
            j = adaptive_simpson(g, -self.L, x, tol=tol, max_panels=self.max_panels).total if x > -self.L else 0.0
        else:
            j = -adaptive_simpson(g, x, self.L, tol=tol, max_panels=self.max_panels).total if x < self.L else 0.0
        v = sl.rate * j / fx
        if not np.isfinite(v):
            raise TailEvaluationError(f"non-finite velocity at x={x}, t={sl.t}")
        return v

    def velocity_grid(self, t):
        """``(x, v)`` on the quadrature nodes where the density is positive."""
        x, v, f0 = self.slice(t).velocity_table()
        keep = f0 > 0
        return x[keep], v[keep]

    def metric_derivative(self, t):
        """Wasserstein speed ``||v_t||_{L^2(mu_t)}`` of the curve."""
        return self.slice(t).metric_derivative()


class GaussianCurve:
    """Curve ``t -> N(0, Sigma / beta(t))`` of a quadratic potential."""

    def __init__(self, covariance, schedule):
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
            raise ValueError("covariance must be a symmetric square matrix")
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise ValueError("covariance must be positive definite")
        self.covariance = cov
        self.schedule = schedule
        self.dim = cov.shape[0]
        self.sqrt_trace = float(np.sqrt(np.trace(cov)))

    def velocity(self, t, x):
        """``v_t(x) = -beta'(t) / (2 beta(t)) x``, independent of ``Sigma``.

        For ``beta = a exp(c t)`` this is ``-(c/2) x``.
        """
        return -0.5 * self.schedule.rate(t) / self.schedule.value(t) * np.asarray(x, dtype=float)

    def w2(self, t, s):
        """``W2(mu_t, mu_s) = ||Sigma^{1/2}||_F |beta(t)^{-1/2} - beta(s)^{-1/2}|``."""
        bt, bs = self.schedule.value(t), self.schedule.value(s)
        return self.sqrt_trace * abs(bt**-0.5 - bs**-0.5)

    def metric_derivative(self, t):
        return 0.5 * self.sqrt_trace * self.schedule.rate(t) * self.schedule.value(t) ** -1.5

    def monge_map(self, t, s, x):
        """Optimal map from ``mu_t`` to ``mu_s``: ``sqrt(beta(t)/beta(s)) x``."""
        return np.sqrt(self.schedule.value(t) / self.schedule.value(s)) * np.asarray(x, dtype=float)

    def sample(self, t, rng, size=1):
        chol = np.linalg.cholesky(self.covariance / self.schedule.value(t))
        z = rng.standard_normal((size, self.dim))
        return z @ chol.T
