"""Small numerical kernels: adaptive Simpson quadrature and golden-section search."""

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["QuadratureError", "SimpsonPanels", "adaptive_simpson", "golden_section"]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach its tolerance within the panel budget."""


@dataclass(frozen=True)
class SimpsonPanels:
    """Accepted leaf panels of an adaptive Simpson run.

    Each leaf ``[left[i], right[i]]`` carries the integrand at its end points
    and midpoint, so partial integrals can be rebuilt without new evaluations.
    """

    left: np.ndarray
    right: np.ndarray
    f_left: np.ndarray
    f_mid: np.ndarray
    f_right: np.ndarray

    @property
    def integrals(self):
        return (self.right - self.left) / 6.0 * (self.f_left + 4.0 * self.f_mid + self.f_right)

    @property
    def total(self):
        tot = np.sum(self.integrals, axis=-1)
        return float(tot) if np.ndim(tot) == 0 else tot

    def __len__(self):
        return len(self.left)


def adaptive_simpson(f, a, b, tol=1e-10, initial_panels=256, max_panels=1 << 20):
    """Integrate a vectorized function on ``[a, b]`` by adaptive Simpson.

    Panels are refined breadth-first: every round evaluates ``f`` once on the
    quarter points of all panels that are still active. A panel of width
    ``w`` is accepted when its two-level Simpson difference is below
    ``15 * tol * w / (b - a)`` for every component.

    Parameters
    ----------
    f : callable
        Maps a 1-D array of abscissae of length ``N`` to an array of shape
        ``(N,)`` or ``(k, N)`` for ``k`` integrands sharing the panels.
    a, b : float
        Integration bounds, ``a < b``.
    tol : float
        Absolute tolerance on each integral.
    initial_panels : int
        Number of uniform panels before refinement starts.
    max_panels : int
        Budget on the number of simultaneously active panels.

    Returns
    -------
    SimpsonPanels
        Accepted leaves sorted by abscissa. ``total`` is the integral.
    """
    if not b > a:
        raise ValueError(f"empty integration interval [{a}, {b}]")
    scalar = np.ndim(f(np.array([0.5 * (a + b)]))) == 1

    def ev(x):
        return np.atleast_2d(np.asarray(f(x), dtype=float))

    edges = np.linspace(a, b, initial_panels + 1)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    f_edges = ev(edges)
    flo, fhi = f_edges[:, :-1], f_edges[:, 1:]
    fmid = ev(mid)
    scale = 15.0 * tol / (b - a)
    wfloor = 64.0 * np.finfo(float).eps * max(abs(a), abs(b), 1.0)

    leaves = []
    while lo.size:
        if lo.size > max_panels:
            raise QuadratureError(
                f"adaptive Simpson exceeded {max_panels} active panels on [{a}, {b}]"
            )
        q1 = 0.5 * (lo + mid)
        q3 = 0.5 * (mid + hi)
        fq = ev(np.concatenate([q1, q3]))
        fq1, fq3 = fq[:, : lo.size], fq[:, lo.size :]
        w = hi - lo
        coarse = w / 6.0 * (flo + 4.0 * fmid + fhi)
        fine = w / 12.0 * (flo + 4.0 * fq1 + 2.0 * fmid + 4.0 * fq3 + fhi)
        if not np.all(np.isfinite(fine)):
            raise QuadratureError("non-finite integrand value")
        done = np.all(np.abs(fine - coarse) <= scale * w, axis=0) | (w <= wfloor)
        if np.any(done):
            d = done
            leaves.append((lo[d], mid[d], flo[:, d], fq1[:, d], fmid[:, d]))
            leaves.append((mid[d], hi[d], fmid[:, d], fq3[:, d], fhi[:, d]))
        keep = ~done
        lo, mid, hi, q1, q3 = lo[keep], mid[keep], hi[keep], q1[keep], q3[keep]
        flo, fmid, fhi = flo[:, keep], fmid[:, keep], fhi[:, keep]
        fq1, fq3 = fq1[:, keep], fq3[:, keep]
        # split each remaining panel in two
        lo, mid, hi = (
            np.concatenate([lo, mid]),
            np.concatenate([q1, q3]),
            np.concatenate([mid, hi]),
        )
        flo, fmid, fhi = (
            np.concatenate([flo, fmid], axis=1),
            np.concatenate([fq1, fq3], axis=1),
            np.concatenate([fmid, fhi], axis=1),
        )

    left = np.concatenate([c[0] for c in leaves])
    right = np.concatenate([c[1] for c in leaves])
    fl, fm, fr = (np.concatenate([c[i] for c in leaves], axis=1) for i in (2, 3, 4))
    order = np.argsort(left, kind="stable")
    left, right, fl, fm, fr = left[order], right[order], fl[:, order], fm[:, order], fr[:, order]
    if scalar:
        fl, fm, fr = fl[0], fm[0], fr[0]
    return SimpsonPanels(left=left, right=right, f_left=fl, f_mid=fm, f_right=fr)


def golden_section(f, a, b, tol=1e-10, max_iter=500):
    """Minimize a unimodal scalar function on ``[a, b]``.

    Returns the midpoint of the final bracket, whose width is below ``tol``.
    """
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)
