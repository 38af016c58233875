"""Discrete optimal transport between an ensemble and its annealing reweighting.

The pieces compose into the control-velocity estimator: self-normalized
weights ``w_i ∝ exp(-U(x_i) dbeta)``, squared-distance costs, the exact
transportation LP with unit supplies and demands ``n w``, and the barycentric
projection of its optimal plan.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AnnealWeights",
    "TransportInfeasibleError",
    "TransportPlan",
    "anneal_weights",
    "barycentric_targets",
    "barycentric_velocity",
    "cost_matrix",
    "empirical_quantile",
    "lexicographic_order",
    "map_l2_norm",
    "pushforward_moments",
    "solve_transport_lp",
    "w2_empirical_1d",
]

FEASIBILITY_TOL = 1e-9


class TransportInfeasibleError(RuntimeError):
    """A returned plan violates its marginals; indicates a solver bug."""


@dataclass(frozen=True)
class AnnealWeights:
    w: np.ndarray

    def __post_init__(self):
        w = self.w
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to one")

    def __len__(self):
        return self.w.size

    @property
    def ess(self):
        """Effective sample size ``1 / sum w_i^2``."""
        return float(1.0 / np.sum(self.w**2))


@dataclass(frozen=True)
class TransportPlan:
    """Coupling ``G`` with ``G 1 = 1`` and ``G^T 1 = n w``, and its cost ``<C, G>``."""

    G: np.ndarray
    cost: float
    pivots: int = field(default=0, compare=False)

    @property
    def n(self):
        return self.G.shape[0]


def anneal_weights(energies, delta_beta):
    """Self-normalized weights ``w_i ∝ exp(-delta_beta * energies[i])``.

    Computed in log space, so energy spreads far beyond the exponent range
    are safe.
    """
    e = np.asarray(energies, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("need at least one energy")
    if delta_beta < 0:
        raise ValueError(
            f"delta_beta={delta_beta} < 0: the cooling schedule decreases over the update interval"
        )
    if not np.all(np.isfinite(e)):
        raise ValueError("energies must be finite")
    logw = -delta_beta * e
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    return AnnealWeights(w)


def cost_matrix(positions):
    """Squared Euclidean distances ``C_ij = |x_i - x_j|^2``."""
    x = np.asarray(positions, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    sq = np.sum(x * x, axis=1)
    c = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(c, 0.0, out=c)
    np.fill_diagonal(c, 0.0)
    # symmetrize away rounding from the Gram expansion
    return 0.5 * (c + c.T)


def lexicographic_order(positions):
    """Permutation sorting points lexicographically, first coordinate first."""
    x = np.asarray(positions, dtype=float)
    if x.ndim == 1:
        return np.argsort(x, kind="stable")
    return np.lexsort(x.T[::-1])


def _northwest_corner(supply, demand):
    m, n = supply.size, demand.size
    s = supply.astype(float).copy()
    d = demand.astype(float).copy()
    rows, cols, flows = [], [], []
    i = j = 0
    while True:
        amt = min(s[i], d[j])
        rows.append(i)
        cols.append(j)
        flows.append(amt)
        s[i] -= amt
        d[j] -= amt
        if i == m - 1 and j == n - 1:
            break
        if j == n - 1 or (i < m - 1 and s[i] <= d[j]):
            i += 1
        else:
            j += 1
    # remaining float residue goes to the last cell so the row sums stay exact
    flows[-1] += s[m - 1]
    return np.array(rows), np.array(cols), np.array(flows)


class _Basis:
    """Spanning tree of basic cells over ``m`` row nodes and ``n`` column nodes."""

    def __init__(self, rows, cols, flows, m, n):
        self.m, self.n = m, n
        self.rows = list(rows)
        self.cols = list(cols)
        self.flows = list(flows)
        self.row_adj = [[] for _ in range(m)]
        self.col_adj = [[] for _ in range(n)]
        for k, (i, j) in enumerate(zip(self.rows, self.cols)):
            self.row_adj[i].append(k)
            self.col_adj[j].append(k)

    def potentials(self, C):
        m, n = self.m, self.n
        u = np.full(m, np.nan)
        v = np.full(n, np.nan)
        u[0] = 0.0
        queue = deque([("r", 0)])
        while queue:
            kind, a = queue.popleft()
            if kind == "r":
                for k in self.row_adj[a]:
                    j = self.cols[k]
                    if np.isnan(v[j]):
                        v[j] = C[a, j] - u[a]
                        queue.append(("c", j))
            else:
                for k in self.col_adj[a]:
                    i = self.rows[k]
                    if np.isnan(u[i]):
                        u[i] = C[i, a] - v[a]
                        queue.append(("r", i))
        return u, v

    def cycle(self, i, j):
        """Basic cells on the tree path from column ``j`` back to row ``i``."""
        parent = {("c", j): None}
        queue = deque([("c", j)])
        target = ("r", i)
        while queue:
            node = queue.popleft()
            if node == target:
                break
            kind, a = node
            adj = self.col_adj[a] if kind == "c" else self.row_adj[a]
            for k in adj:
                nxt = ("r", self.rows[k]) if kind == "c" else ("c", self.cols[k])
                if nxt not in parent:
                    parent[nxt] = (node, k)
                    queue.append(nxt)
        path = []
        node = target
        while parent[node] is not None:
            node, k = parent[node]
            path.append(k)
        # path runs from row i back to column j; reverse so it starts at column j
        return path[::-1]

    def pivot(self, i, j, path):
        minus = path[0::2]
        plus = path[1::2]
        theta = min(self.flows[k] for k in minus)
        # Bland: among tied leaving cells take the smallest flat index
        cand = [k for k in minus if self.flows[k] <= theta]
        leave = min(cand, key=lambda k: self.rows[k] * self.n + self.cols[k])
        for k in minus:
            self.flows[k] -= theta
        for k in plus:
            self.flows[k] += theta
        li, lj = self.rows[leave], self.cols[leave]
        self.row_adj[li].remove(leave)
        self.col_adj[lj].remove(leave)
        self.rows[leave], self.cols[leave], self.flows[leave] = i, j, theta
        self.row_adj[i].append(leave)
        self.col_adj[j].append(leave)


def solve_transport_lp(C, w, order=None, max_pivots=None):
    """Exact optimal plan between ``n^-1 sum delta_i`` and ``sum w_j delta_j``.

    Solves ``min <C, G>`` subject to ``G >= 0``, ``G 1 = 1`` and
    ``G^T 1 = n w`` with the transportation simplex: a north-west-corner
    initial basis, dual potentials on the basis tree, and Bland's rule for
    both the entering cell (first improving cell in row-major order) and the
    leaving cell.

    Parameters
    ----------
    C : (n, n) array
        Cost matrix with finite entries.
    w : AnnealWeights or array
        Target weights.
    order : array of int, optional
        Permutation applied to rows and columns before the north-west
        corner. Sorting one-dimensional points makes the initial basis the
        monotone coupling, which is already optimal.
    max_pivots : int, optional
        Safety cap on simplex iterations.

    Returns
    -------
    TransportPlan
    """
    C = np.asarray(C, dtype=float)
    w = w.w if isinstance(w, AnnealWeights) else np.asarray(w, dtype=float)
    n = C.shape[0]
    if C.shape != (n, n) or w.shape != (n,):
        raise ValueError(f"cost {C.shape} and weights {w.shape} do not match")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    perm = np.arange(n) if order is None else np.asarray(order)
    Cp = C[np.ix_(perm, perm)]
    supply = np.ones(n)
    demand = n * w[perm]
    rows, cols, flows = _northwest_corner(supply, demand)
    basis = _Basis(rows, cols, flows, n, n)

    eps = 1e-12 * max(1.0, float(np.max(np.abs(Cp))))
    limit = max_pivots if max_pivots is not None else 50 * n * n + 100
    pivots = 0
    while True:
        u, v = basis.potentials(Cp)
        reduced = Cp - u[:, None] - v[None, :]
        flat = np.flatnonzero(reduced.ravel() < -eps)
        if flat.size == 0:
            break
        if pivots >= limit:
            raise RuntimeError(f"transportation simplex did not converge in {limit} pivots")
        i, j = divmod(int(flat[0]), n)
        basis.pivot(i, j, basis.cycle(i, j))
        pivots += 1

    G = np.zeros((n, n))
    bi = perm[np.asarray(basis.rows)]
    bj = perm[np.asarray(basis.cols)]
    np.add.at(G, (bi, bj), np.asarray(basis.flows))
    G[np.abs(G) < 1e-15] = 0.0
    if (
        np.any(G < -1e-12)
        or np.max(np.abs(G.sum(axis=1) - 1.0)) > FEASIBILITY_TOL
        or np.max(np.abs(G.sum(axis=0) - n * w)) > FEASIBILITY_TOL
    ):
        raise TransportInfeasibleError("transport plan violates its marginals")
    return TransportPlan(G=G, cost=float(np.sum(C * G)), pivots=pivots)


def barycentric_targets(plan, positions):
    """``T(x_i) = sum_j G_ij x_j``."""
    x = np.asarray(positions, dtype=float)
    return plan.G @ x


def barycentric_velocity(plan, positions, h):
    """Velocities moving each particle to its barycentric target in time ``h``."""
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    x = np.asarray(positions, dtype=float)
    return (plan.G @ x - x) / h


def pushforward_moments(plan, positions, orders):
    """Coordinate moments ``n^-1 sum_i T(x_i)^p`` for each ``p`` in ``orders``.

    Returns an array of shape ``(len(orders), d)`` for ``d``-dimensional
    positions, or ``(len(orders),)`` for a 1-D position vector.
    """
    t = barycentric_targets(plan, positions)
    return np.stack([np.mean(t**p, axis=0) for p in orders])


def map_l2_norm(plan, positions):
    """``||T||_{L^2(mu^n)}`` of the barycentric map under the uniform source."""
    t = barycentric_targets(plan, positions)
    if t.ndim == 1:
        t = t[:, None]
    return float(np.sqrt(np.mean(np.sum(t * t, axis=1))))


def empirical_quantile(samples):
    """Left-continuous inverse of the empirical CDF of ``samples``."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise ValueError("empirical quantile of an empty sample")

    def q(u):
        idx = np.ceil(np.asarray(u) * s.size).astype(int) - 1
        return s[np.clip(idx, 0, s.size - 1)]

    return q


def w2_empirical_1d(samples, quantile, k=None):
    """Quantile-coupling W2 distance between samples and a 1-D law.

    ``( k^-1 sum_j (Q_n(u_j) - Q(u_j))^2 )^{1/2}`` with midpoint levels
    ``u_j = (j - 1/2) / k``, where ``Q_n`` is the sample quantile.

    Parameters
    ----------
    samples : array
        Real samples.
    quantile : callable or array
        Quantile function of the reference law, vectorized over levels. An
        array is treated as a second sample set.
    k : int, optional
        Number of levels; defaults to the number of samples, which gives the
        exact sorted-matching distance between two equal-size sample sets.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("w2_empirical_1d needs at least one sample")
    if not callable(quantile):
        quantile = empirical_quantile(quantile)
    k = s.size if k is None else int(k)
    if k < 1:
        raise ValueError("k must be at least 1")
    u = (np.arange(1, k + 1) - 0.5) / k
    diff = empirical_quantile(s)(u) - np.asarray(quantile(u), dtype=float)
    return float(np.sqrt(np.mean(diff * diff)))
