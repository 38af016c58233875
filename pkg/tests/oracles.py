"""Independent reference computations used only by the tests.

None of these share code with the package: the LP oracle enumerates basic
feasible solutions by brute force, the quadrature oracle uses scipy's QUADPACK
wrapper, and the rest are closed forms.
"""

import itertools
import math

import numpy as np
from scipy import integrate, optimize


def transport_vertex_oracle(C, w):
    """Minimum of ``<C, G>`` over vertices of ``{G >= 0, G 1 = 1, G^T 1 = n w}``.

    Every vertex is a basic solution supported on ``2n - 1`` cells. All cell
    subsets are enumerated; the redundant last column constraint is dropped
    so each basis gives a square system, batched through determinants.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if n == 1:
        return float(C[0, 0]), np.ones((1, 1))
    demand = n * np.asarray(w, dtype=float)
    A = np.zeros((2 * n - 1, n * n))
    for i in range(n):
        A[i, i * n : (i + 1) * n] = 1.0
    for j in range(n - 1):
        A[n + j, j::n] = 1.0
    b = np.concatenate([np.ones(n), demand[: n - 1]])
    m = 2 * n - 1
    subsets = np.array(list(itertools.combinations(range(n * n), m)))
    mats = A[:, subsets].transpose(1, 0, 2)
    dets = np.linalg.det(mats)
    ok = np.abs(dets) > 1e-10
    subsets, mats = subsets[ok], mats[ok]
    sol = np.linalg.solve(mats, np.broadcast_to(b, (len(mats), m))[..., None])[..., 0]
    feas = np.all(sol >= -1e-11, axis=1)
    subsets, sol = subsets[feas], sol[feas]
    costs = np.sum(C.ravel()[subsets] * sol, axis=1)
    best = int(np.argmin(costs))
    G = np.zeros(n * n)
    G[subsets[best]] = sol[best]
    return float(costs[best]), G.reshape(n, n)


def transport_linprog_oracle(C, w):
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    A_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        A_eq[i, i * n : (i + 1) * n] = 1.0
        A_eq[n + i, i::n] = 1.0
    b_eq = np.concatenate([np.ones(n), n * np.asarray(w, dtype=float)])
    res = optimize.linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    assert res.success
    return float(res.fun), res.x.reshape(n, n)


def gibbs_mass(potential, beta, a=-math.inf, b=math.inf):
    """``∫_a^b exp(-beta U)`` by adaptive QUADPACK on a 1-D potential."""

    def f(x):
        return math.exp(-beta * float(potential.value(np.array([x]))))

    val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=500, points=None)
    return val


def gibbs_split_mass(potential, beta, cut, span=40.0):
    """Mass left of ``cut`` and total mass, with the split points as breakpoints."""

    def f(x):
        return math.exp(-beta * float(potential.value(np.array([x]))))

    left, _ = integrate.quad(f, -span, cut, epsabs=0.0, epsrel=1e-13, limit=1000)
    right, _ = integrate.quad(f, cut, span, epsabs=0.0, epsrel=1e-13, limit=1000)
    return left, left + right


def gibbs_mean(potential, beta, g, span=40.0):
    """``∫ g dmu_beta`` for a scalar function ``g`` by QUADPACK."""

    def f(x):
        return math.exp(-beta * float(potential.value(np.array([x]))))

    z, _ = integrate.quad(f, -span, span, epsabs=0.0, epsrel=1e-13, limit=1000)
    num, _ = integrate.quad(lambda x: g(x) * f(x), -span, span, epsabs=0.0, epsrel=1e-13, limit=1000)
    return num / z


def dense_velocity(potential, schedule, t, x, span=20.0, npts=2_000_001):
    """Velocity field by a dense cumulative trapezoid on ``[-span, span]``.

    Returns ``v`` at the points ``x`` by linear interpolation of the table.
    """
    beta, rate = float(schedule.value(t)), float(schedule.rate(t))
    ys = np.linspace(-span, span, npts)
    u = potential.value(ys[:, None])
    logf = -beta * (u - u.min())
    f = np.exp(logf)
    dy = ys[1] - ys[0]
    z = np.sum(0.5 * (f[1:] + f[:-1])) * dy
    pi = f / z
    mean_u = np.sum(0.5 * ((u * pi)[1:] + (u * pi)[:-1])) * dy
    integrand = (u - mean_u) * pi
    seg = 0.5 * (integrand[1:] + integrand[:-1]) * dy
    left = np.concatenate([[0.0], np.cumsum(seg)])
    right = -np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    mass = np.concatenate([[0.0], np.cumsum(0.5 * (pi[1:] + pi[:-1]) * dy)])
    cum = np.where(mass <= 0.5, left, right)
    v = np.zeros_like(ys)
    keep = pi > 1e-300
    v[keep] = rate * cum[keep] / pi[keep]
    return np.interp(x, ys, v)


def dense_speed(potential, schedule, t, span=20.0, npts=400_001):
    """``||v_t||_{L^2(mu_t)}`` by dense trapezoid sums.

    The centered integral is accumulated from both ends and each point uses
    the side with less mass, which keeps cancellation out of the tails.
    """
    beta, rate = float(schedule.value(t)), float(schedule.rate(t))
    ys = np.linspace(-span, span, npts)
    dy = ys[1] - ys[0]
    u = potential.value(ys[:, None])
    f = np.exp(-beta * (u - u.min()))
    z = np.trapezoid(f, dx=dy)
    pi = f / z
    mean_u = np.trapezoid(u * pi, dx=dy)
    g = (u - mean_u) * pi
    seg = 0.5 * (g[1:] + g[:-1]) * dy
    left = np.concatenate([[0.0], np.cumsum(seg)])
    right = -np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    mass = np.concatenate([[0.0], np.cumsum(0.5 * (pi[1:] + pi[:-1]) * dy)])
    cum = np.where(mass <= 0.5, left, right)
    keep = pi > 1e-300
    v = np.zeros_like(ys)
    v[keep] = rate * cum[keep] / pi[keep]
    return math.sqrt(np.trapezoid(v * v * pi, dx=dy))


def ar1_stationary_variance(lam, dt, beta, literal=False):
    """Fixed point of ``X <- (1 - lam dt) X + s zeta`` for ``U = x^2/2``.

    ``s^2 = 2 lam^2 dt / beta`` for the literal scaling, ``2 lam dt / beta``
    for the time-change scaling.
    """
    s2 = (2.0 * lam * lam * dt / beta) if literal else (2.0 * lam * dt / beta)
    return s2 / (1.0 - (1.0 - lam * dt) ** 2)


def ks_statistic(samples, cdf):
    """Two-sided Kolmogorov-Smirnov statistic against a vectorized CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_critical(n, alpha=0.01):
    """Asymptotic one-sample KS critical value."""
    c = {0.01: 1.6276, 0.05: 1.3581}[alpha]
    return c / math.sqrt(n)
