"""Objective potentials and cooling schedules.

Potentials evaluate on arrays of shape ``(..., dim)``: ``value`` returns shape
``(...)`` and ``gradient`` returns the input shape. All built-in potentials are
offset so that their global minimum is exactly zero.
"""

import math

import numpy as np

from .numerics import golden_section

__all__ = [
    "CoolingSchedule",
    "DoubleWell",
    "ExponentialSchedule",
    "FunctionPotential",
    "GaussianUnitSpeedSchedule",
    "LinearSchedule",
    "Potential",
    "Quadratic",
    "QuadraticSchedule",
    "Rastrigin",
    "Rosenbrock",
    "builtin_potential",
    "builtin_schedule",
    "potential_gradient",
    "potential_value",
]


class Potential:
    """Energy landscape ``U`` with analytic gradient.

    Subclasses implement ``_value`` and ``_gradient`` on arrays whose last
    axis has length ``dim``; the public methods check the shape.
    """

    name = "potential"

    def __init__(self, dim):
        if int(dim) != dim or dim < 1:
            raise ValueError(f"dim must be a positive integer, got {dim!r}")
        self.dim = int(dim)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise ValueError(
                f"{self.name}: expected points with last axis {self.dim}, got shape {x.shape}"
            )
        return x

    def value(self, x):
        return self._value(self._check(x))

    def gradient(self, x):
        return self._gradient(self._check(x))

    def __call__(self, x):
        return self.value(x)

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class FunctionPotential(Potential):
    """Potential built from user callables (used for tests and ad-hoc studies).

    Both callables must accept arrays of shape ``(..., dim)``. They must be
    module-level functions for the potential to be picklable.
    """

    def __init__(self, value, gradient, dim, name="custom"):
        super().__init__(dim)
        self._value_fn = value
        self._gradient_fn = gradient
        self.name = name

    def _value(self, x):
        return np.asarray(self._value_fn(x), dtype=float)

    def _gradient(self, x):
        return np.asarray(self._gradient_fn(x), dtype=float)


class Quadratic(Potential):
    """``U(x) = x^T Sigma^{-1} x / 2``; the Gibbs curve is ``N(0, Sigma / beta)``."""

    name = "quadratic"

    def __init__(self, dim, covariance=None):
        super().__init__(dim)
        if covariance is None:
            cov = np.eye(self.dim)
        else:
            cov = np.asarray(covariance, dtype=float)
            if cov.ndim == 0:
                cov = float(cov) * np.eye(self.dim)
            elif cov.ndim == 1:
                cov = np.diag(cov)
        if cov.shape != (self.dim, self.dim):
            raise ValueError(f"covariance must be {self.dim}x{self.dim}, got {cov.shape}")
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise ValueError("covariance must be positive definite")
        self.covariance = cov
        self.precision = np.linalg.inv(cov)

    def _value(self, x):
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.precision, x)

    def _gradient(self, x):
        return x @ self.precision


class DoubleWell(Potential):
    """``U(x) = x^2/2 + cos(2x - 1/2) + C`` on the real line.

    The constant ``C`` is found once by golden-section search for the global
    minimizer on ``[-3, 0]``.
    """

    name = "double_well"

    def __init__(self, dim=1):
        if dim != 1:
            raise ValueError(f"double_well is one-dimensional, got dim={dim}")
        super().__init__(1)
        raw = self._raw
        self.argmin = golden_section(raw, -3.0, 0.0, tol=1e-10)
        self.offset = -raw(self.argmin)

    @staticmethod
    def _raw(x):
        return 0.5 * x * x + np.cos(2.0 * x - 0.5)

    def _value(self, x):
        x = x[..., 0]
        return self._raw(x) + self.offset

    def _gradient(self, x):
        return x - 2.0 * np.sin(2.0 * x - 0.5)


class Rosenbrock(Potential):
    """``sum_i 5 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2``, minimum 0 at ``(1, ..., 1)``."""

    name = "rosenbrock"

    def __init__(self, dim):
        super().__init__(dim)
        if self.dim < 2:
            raise ValueError("rosenbrock needs dim >= 2")

    def _value(self, x):
        head, tail = x[..., :-1], x[..., 1:]
        return np.sum(5.0 * (tail - head**2) ** 2 + (1.0 - head) ** 2, axis=-1)

    def _gradient(self, x):
        head, tail = x[..., :-1], x[..., 1:]
        r = tail - head**2
        g = np.zeros_like(x)
        g[..., :-1] += -20.0 * head * r - 2.0 * (1.0 - head)
        g[..., 1:] += 10.0 * r
        return g


class Rastrigin(Potential):
    """``|x|^2 + sum_i (1 - cos(2 pi x_i))``, minimum 0 at the origin."""

    name = "rastrigin"

    def _value(self, x):
        return np.sum(x**2 + 1.0 - np.cos(2.0 * np.pi * x), axis=-1)

    def _gradient(self, x):
        return 2.0 * x + 2.0 * np.pi * np.sin(2.0 * np.pi * x)


_POTENTIALS = {
    "double_well": DoubleWell,
    "rosenbrock": Rosenbrock,
    "rastrigin": Rastrigin,
    "quadratic": Quadratic,
}


def builtin_potential(name, dim, params=()):
    """Construct a built-in potential by identifier.

    ``params`` is only used by ``quadratic``: empty for the identity
    covariance, one value for ``s * I``, ``dim`` values for a diagonal, or
    ``dim * dim`` values for a full row-major covariance.
    """
    try:
        cls = _POTENTIALS[name]
    except KeyError:
        raise ValueError(
            f"unknown potential {name!r}; expected one of {sorted(_POTENTIALS)}"
        ) from None
    params = list(params)
    if name == "quadratic":
        if not params:
            cov = None
        elif len(params) == 1:
            cov = params[0]
        elif len(params) == dim:
            cov = np.asarray(params, dtype=float)
        elif len(params) == dim * dim:
            cov = np.asarray(params, dtype=float).reshape(dim, dim)
        else:
            raise ValueError(f"quadratic: cannot build a covariance from {len(params)} params")
        return Quadratic(dim, cov)
    if params:
        raise ValueError(f"{name} takes no params, got {params}")
    return cls(dim)


def potential_value(p, x):
    return p.value(x)


def potential_gradient(p, x):
    return p.gradient(x)


class CoolingSchedule:
    """Inverse temperature ``beta(t)`` with analytic rate on ``[0, horizon]``."""

    name = "schedule"

    def __init__(self, params, horizon=1.0):
        self.params = tuple(float(p) for p in params)
        self.horizon = float(horizon)
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {horizon}")

    def value(self, t):
        return self._value(self._check(t))

    def rate(self, t):
        return self._rate(self._check(t))

    def __call__(self, t):
        return self.value(t)

    def _check(self, t):
        return np.asarray(t, dtype=float) if np.ndim(t) else float(t)

    def _validate(self):
        ts = np.linspace(0.0, self.horizon, 1001)
        beta = self.value(ts)
        if np.any(beta <= 0):
            raise ValueError(f"{self.name}{self.params}: beta must stay positive on the horizon")
        if np.any(self.rate(ts) < 0):
            raise ValueError(f"{self.name}{self.params}: schedule must be non-decreasing")

    def __repr__(self):
        return f"{type(self).__name__}{self.params}"


class QuadraticSchedule(CoolingSchedule):
    """``beta(t) = a + b t^2``."""

    name = "quadratic"

    def _value(self, t):
        a, b = self.params
        return a + b * t * t

    def _rate(self, t):
        return 2.0 * self.params[1] * t


class LinearSchedule(CoolingSchedule):
    """``beta(t) = a + b t``; ``b = 0`` gives a constant temperature."""

    name = "linear"

    def _value(self, t):
        a, b = self.params
        return a + b * t

    def _rate(self, t):
        return self.params[1] * np.ones_like(t) if np.ndim(t) else self.params[1]


class ExponentialSchedule(CoolingSchedule):
    """``beta(t) = a exp(c t)``. On a Gaussian potential its field is ``-(c/2) x``."""

    name = "exponential"

    def _value(self, t):
        a, c = self.params
        return a * np.exp(c * t)

    def _rate(self, t):
        a, c = self.params
        return a * c * np.exp(c * t)


class GaussianUnitSpeedSchedule(CoolingSchedule):
    """``beta(t) = a^2 (a - t)^{-2}``, defined for ``t < a``.

    With ``a = ||Sigma^{1/2}||_F`` the Gaussian Gibbs curve moves at unit
    Wasserstein speed and collapses to a point mass at ``t = a``.
    """

    name = "gaussian_unit_speed"

    def _check(self, t):
        t = super()._check(t)
        if np.any(np.asarray(t) >= self.params[0]):
            raise ValueError(f"unit-speed schedule undefined at t >= a = {self.params[0]}")
        return t

    def _validate(self):
        if self.params[0] <= 0:
            raise ValueError("unit-speed schedule needs a > 0")

    def _value(self, t):
        a = self.params[0]
        return a * a / (a - t) ** 2

    def _rate(self, t):
        a = self.params[0]
        return 2.0 * a * a / (a - t) ** 3


_SCHEDULES = {
    "quadratic": (QuadraticSchedule, 2),
    "linear": (LinearSchedule, 2),
    "exponential": (ExponentialSchedule, 2),
    "gaussian_unit_speed": (GaussianUnitSpeedSchedule, 1),
}


def builtin_schedule(name, params, horizon=1.0):
    """Construct a built-in cooling schedule.

    Parameters
    ----------
    name : {'quadratic', 'linear', 'exponential', 'gaussian_unit_speed'}
    params : sequence of float
        ``(a, b)`` for quadratic and linear, ``(a, c)`` for exponential,
        ``(a,)`` for the unit-speed schedule.
    horizon : float
        End of the time interval, 1 by default.
    """
    try:
        cls, nparams = _SCHEDULES[name]
    except KeyError:
        raise ValueError(
            f"unknown schedule {name!r}; expected one of {sorted(_SCHEDULES)}"
        ) from None
    params = tuple(params)
    if len(params) != nparams:
        raise ValueError(f"schedule {name!r} takes {nparams} params, got {len(params)}")
    if not all(math.isfinite(p) for p in params):
        raise ValueError(f"schedule {name!r} params must be finite")
    sched = cls(params, horizon)
    sched._validate()
    return sched
