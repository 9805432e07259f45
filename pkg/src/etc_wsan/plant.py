"""Plant models: a small abstract interface plus the quadruple-tank process with
two nonlinear integrator states and its passivity-based state feedback.

State layout of the extended tank model (levels in cm, integrators dimensionless)::

    x = [x1, x2, x3, x4, x5, x6]

``x1``/``x2`` are the lower tanks, ``x3``/``x4`` the upper tanks, ``x5``/``x6`` the
integrators that remove steady-state offset in ``x1``/``x2``. The input ``u`` is the
pair of pump flows in cm^3/s.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CapabilityError, ConfigError, DomainError, SimulationWarning, SingularValveError

GRAVITY = 981.0  # cm/s^2


class PlantModel:
    """Minimal capability expected by the integrator and the adaptation heuristic.

    Subclasses set ``n`` and ``m`` and implement ``f``. ``jvp`` (directional
    derivative of ``f`` with respect to the state) is optional; it is only needed
    for second-order gap estimates. ``rhs_list`` is an optional fast path taking and
    returning plain lists; the integrator prefers it when present.
    """

    n: int
    m: int
    rhs_list = None

    def f(self, x, u):
        raise NotImplementedError

    def jvp(self, x, u, v):
        raise CapabilityError(f"{type(self).__name__} does not provide jvp")

    @property
    def has_jvp(self):
        return type(self).jvp is not PlantModel.jvp


class FunctionModel(PlantModel):
    """Wrap a plain ``f(x, u)`` callable, optionally with its ``jvp``."""

    def __init__(self, f, n, m=0, jvp=None):
        self._f = f
        self._jvp = jvp
        self.n = n
        self.m = m

    def f(self, x, u):
        return np.asarray(self._f(x, u), dtype=float)

    def jvp(self, x, u, v):
        if self._jvp is None:
            raise CapabilityError("no jvp supplied")
        return np.asarray(self._jvp(x, u, v), dtype=float)

    @property
    def has_jvp(self):
        return self._jvp is not None


@dataclass(frozen=True)
class QuadrupleTankParams:
    """Physical and controller-design constants for the extended tank model.

    Areas in cm^2, gravity in cm/s^2. ``k`` are the design scalars k1..k4 that
    shape both ``P`` and the Lyapunov function, ``k_I`` the integrator gains and
    ``Q`` the 2x2 positive definite factor of ``K = Q P``.
    """

    A: tuple = (7.0, 8.0, 7.0, 8.0)
    a: tuple = (0.071, 0.057, 0.071, 0.057)
    gamma: tuple = (0.7, 0.6)
    g: float = GRAVITY
    k_I: tuple = (0.4, 0.4)
    k: tuple = (1.0, 1.0, 2.0, 2.0)
    Q: tuple = ((5.0, 0.0), (0.0, 5.0))

    def violations(self):
        """Return a list of human-readable invariant violations (empty when valid)."""
        out = []
        if len(self.A) != 4 or len(self.a) != 4:
            out.append("plant.A and plant.a must each have 4 entries")
        else:
            for name, vals in (("A", self.A), ("a", self.a)):
                for i, v in enumerate(vals, start=1):
                    if not (math.isfinite(v) and v > 0):
                        out.append(f"plant.{name}{i} must be > 0 (got {v!r})")
        if len(self.gamma) != 2:
            out.append("plant.gamma must have 2 entries")
        else:
            for i, gm in enumerate(self.gamma, start=1):
                if not 0.0 <= gm <= 1.0:
                    out.append(f"plant.gamma{i} must lie in [0, 1] (got {gm!r})")
            if abs(self.gamma[0] + self.gamma[1] - 1.0) < 1e-9:
                out.append("singular valve matrix: gamma1 + gamma2 == 1")
        if not (math.isfinite(self.g) and self.g > 0):
            out.append(f"plant.g must be > 0 (got {self.g!r})")
        if len(self.k_I) != 2:
            out.append("plant.k_I must have 2 entries")
        if len(self.k) != 4:
            out.append("controller.k must have 4 entries")
        Q = np.asarray(self.Q, dtype=float)
        if Q.shape != (2, 2):
            out.append("controller.Q must be 2x2")
        elif not np.allclose(Q, Q.T, rtol=0, atol=1e-12):
            out.append("controller.Q must be symmetric")
        elif np.linalg.eigvalsh(Q).min() <= 0:
            out.append("controller.Q must be positive definite")
        return out


@dataclass(frozen=True)
class Setpoint:
    """Commanded lower-tank levels and everything derived from them."""

    x_star: np.ndarray = field(repr=False)  # full 6-vector
    u_star: np.ndarray = field(repr=False)

    @property
    def x1(self):
        return float(self.x_star[0])

    @property
    def x2(self):
        return float(self.x_star[1])


@dataclass(frozen=True)
class ControllerGains:
    P: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)


def equilibrium_inputs(params, x1_star, x2_star):
    """Equilibrium pump flows and upper-tank levels for commanded ``x1*``, ``x2*``.

    Returns ``(u_star, x3_star, x4_star)``. Raises :class:`SingularValveError`
    when the valve matrix is singular.
    """
    g1, g2 = params.gamma
    if abs(g1 + g2 - 1.0) < 1e-9:
        raise SingularValveError("gamma1 + gamma2 == 1: valve matrix is singular")
    a1, a2, a3, a4 = params.a
    s2g = math.sqrt(2.0 * params.g)
    q1 = a1 * s2g * math.sqrt(x1_star)
    q2 = a2 * s2g * math.sqrt(x2_star)
    det = g1 * g2 - (1.0 - g1) * (1.0 - g2)
    u1 = (g2 * q1 - (1.0 - g2) * q2) / det
    u2 = (g1 * q2 - (1.0 - g1) * q1) / det
    # upper tanks drain exactly what the pumps route to them
    x3 = ((1.0 - g2) * u2 / (a3 * s2g)) ** 2
    x4 = ((1.0 - g1) * u1 / (a4 * s2g)) ** 2
    return np.array([u1, u2]), x3, x4


def make_setpoint(params, x1_star, x2_star, x5_hat=0.0, x6_hat=0.0):
    u_star, x3, x4 = equilibrium_inputs(params, x1_star, x2_star)
    x_star = np.array([x1_star, x2_star, x3, x4, x5_hat, x6_hat], dtype=float)
    return Setpoint(x_star=x_star, u_star=u_star)


def controller_gains(params):
    """Assemble ``P`` from the valve splits and k1..k4, and ``K = Q P``."""
    g1, g2 = params.gamma
    k1, k2, k3, k4 = params.k
    P = np.array([
        [g1 * k1, (1 - g1) * k2, 0.0, (1 - g1) * k4, g1 * k1, (1 - g1) * k2],
        [(1 - g2) * k1, g2 * k2, (1 - g2) * k3, 0.0, (1 - g2) * k1, g2 * k2],
    ])
    Q = np.asarray(params.Q, dtype=float)
    return ControllerGains(P=P, K=Q @ P)


def _sqrt_levels(x, strict):
    """Square roots of the four levels, clamping (with a warning) or raising on negatives."""
    levels = [float(x[0]), float(x[1]), float(x[2]), float(x[3])]
    out = []
    for i, v in enumerate(levels):
        if v < 0.0:
            if strict:
                raise DomainError(f"negative tank level x{i + 1} = {v!r}", index=i)
            warnings.warn(f"tank level x{i + 1} = {v!r} clamped at 0", SimulationWarning,
                          stacklevel=3)
            v = 0.0
        out.append(math.sqrt(v))
    return out


def tank_dynamics(params, x, u, x1_star, x2_star, strict=False):
    """Right-hand side of the extended quadruple-tank model."""
    A1, A2, A3, A4 = params.A
    a1, a2, a3, a4 = params.a
    g1, g2 = params.gamma
    kI1, kI2 = params.k_I
    s2g = math.sqrt(2.0 * params.g)
    r1, r2, r3, r4 = _sqrt_levels(x, strict)
    q1, q2, q3, q4 = a1 * s2g * r1, a2 * s2g * r2, a3 * s2g * r3, a4 * s2g * r4
    u1, u2 = float(u[0]), float(u[1])
    return np.array([
        (-q1 + q3 + g1 * u1) / A1,
        (-q2 + q4 + g2 * u2) / A2,
        (-q3 + (1.0 - g2) * u2) / A3,
        (-q4 + (1.0 - g1) * u1) / A4,
        kI1 * a1 * s2g * (r1 - math.sqrt(x1_star)),
        kI2 * a2 * s2g * (r2 - math.sqrt(x2_star)),
    ])


def feedback_law(gains, setpoint, x):
    """``u = -K (x - x*) + u*``."""
    return setpoint.u_star - gains.K @ (np.asarray(x, dtype=float) - setpoint.x_star)


def lyapunov_hd(params, gains, setpoint, x, strict=True):
    """Closed-loop energy function whose minimum sits at the setpoint."""
    x = np.asarray(x, dtype=float)
    r = _sqrt_levels(x, strict)
    s2g = math.sqrt(2.0 * params.g)
    k1, k2, k3, k4 = params.k
    a1, a2, a3, a4 = params.a
    d = x - setpoint.x_star
    Pd = gains.P @ d
    quad = 0.5 * float(Pd @ (np.asarray(params.Q, dtype=float) @ Pd))
    lin = float(setpoint.u_star @ (gains.P @ x))
    storage = sum((2.0 / 3.0) * ki * ai * ri ** 3 * s2g
                  for ki, ai, ri in zip((k1, k2, k3, k4), (a1, a2, a3, a4), r))
    integ = (k1 * a1 * x[4] * math.sqrt(2.0 * params.g * setpoint.x1)
             + k2 * a2 * x[5] * math.sqrt(2.0 * params.g * setpoint.x2))
    return quad - lin + storage + integ


def lyapunov_hd_gradient(params, gains, setpoint, x):
    x = np.asarray(x, dtype=float)
    s2g = math.sqrt(2.0 * params.g)
    Q = np.asarray(params.Q, dtype=float)
    grad = gains.P.T @ (Q @ (gains.P @ (x - setpoint.x_star))) - gains.P.T @ setpoint.u_star
    k, a = params.k, params.a
    for i in range(4):
        grad[i] += k[i] * a[i] * s2g * math.sqrt(max(x[i], 0.0))
    grad[4] += k[0] * a[0] * math.sqrt(2.0 * params.g * setpoint.x1)
    grad[5] += k[1] * a[1] * math.sqrt(2.0 * params.g * setpoint.x2)
    return grad


# Operating set used by the gradient-bound checker: levels in [1, 20], integrators in [0, 20].
OPERATING_SET = ((1.0, 20.0),) * 4 + ((0.0, 20.0),) * 2


def estimate_rho_m(params, gains, setpoint, n_samples=20000, rng=None, bounds=OPERATING_SET):
    """Sampled estimate of ``min |grad Hd(x)| / |x - x*|`` over a box.

    This is an upper estimate of the true infimum (it only sees the samples); the
    returned dict also holds the minimising sample.
    """
    rng = np.random.default_rng(rng)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    best, arg = math.inf, None
    for _ in range(n_samples):
        x = lo + (hi - lo) * rng.random(len(lo))
        dist = np.linalg.norm(x - setpoint.x_star)
        if dist == 0:
            continue
        ratio = np.linalg.norm(lyapunov_hd_gradient(params, gains, setpoint, x)) / dist
        if ratio < best:
            best, arg = ratio, x
    return {"rho_m": best, "argmin": arg, "n_samples": n_samples}


class QuadrupleTank(PlantModel):
    """Extended quadruple-tank process bound to a setpoint.

    ``strict=True`` turns negative levels into :class:`DomainError`; otherwise the
    square-root arguments are clamped at zero and a :class:`SimulationWarning` is
    emitted.
    """

    n = 6
    m = 2

    def __init__(self, params=None, x1_star=15.0, x2_star=13.0, x5_hat=0.0, x6_hat=0.0,
                 strict=False):
        self.params = params if params is not None else QuadrupleTankParams()
        problems = self.params.violations()
        if problems:
            raise ConfigError(problems)
        self.setpoint = make_setpoint(self.params, x1_star, x2_star, x5_hat, x6_hat)
        self.gains = controller_gains(self.params)
        self.strict = strict
        p = self.params
        s2g = math.sqrt(2.0 * p.g)
        # cached scalars; f runs millions of times per simulation
        self._c = (
            p.a[0] * s2g, p.a[1] * s2g, p.a[2] * s2g, p.a[3] * s2g,
            1.0 / p.A[0], 1.0 / p.A[1], 1.0 / p.A[2], 1.0 / p.A[3],
            p.gamma[0], p.gamma[1],
            p.k_I[0] * p.a[0] * s2g, p.k_I[1] * p.a[1] * s2g,
            math.sqrt(x1_star), math.sqrt(x2_star),
        )

    def rhs_list(self, x, u):
        """``f`` on plain lists (small vectors are much faster without numpy)."""
        c1, c2, c3, c4, iA1, iA2, iA3, iA4, g1, g2, ki1, ki2, rs1, rs2 = self._c
        x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
        if x1 < 0 or x2 < 0 or x3 < 0 or x4 < 0:
            r1, r2, r3, r4 = _sqrt_levels(x, self.strict)
        else:
            r1, r2, r3, r4 = math.sqrt(x1), math.sqrt(x2), math.sqrt(x3), math.sqrt(x4)
        u1, u2 = u[0], u[1]
        q1, q2, q3, q4 = c1 * r1, c2 * r2, c3 * r3, c4 * r4
        return [
            (q3 - q1 + g1 * u1) * iA1,
            (q4 - q2 + g2 * u2) * iA2,
            ((1.0 - g2) * u2 - q3) * iA3,
            ((1.0 - g1) * u1 - q4) * iA4,
            ki1 * (r1 - rs1),
            ki2 * (r2 - rs2),
        ]

    def f(self, x, u):
        x = x.tolist() if isinstance(x, np.ndarray) else list(x)
        u = u.tolist() if isinstance(u, np.ndarray) else list(u)
        return np.array(self.rhs_list(x, u))

    def jvp(self, x, u, v):
        """Derivative of ``f`` with respect to the state along ``v`` (input held)."""
        c1, c2, c3, c4, iA1, iA2, iA3, iA4, g1, g2, ki1, ki2, rs1, rs2 = self._c
        r = _sqrt_levels(x, self.strict)
        if min(r) == 0.0:
            raise DomainError("jvp undefined at an empty tank")
        # d sqrt(x)/dx = 1 / (2 sqrt(x))
        dr = [v[i] / (2.0 * r[i]) for i in range(4)]
        dq1, dq2, dq3, dq4 = c1 * dr[0], c2 * dr[1], c3 * dr[2], c4 * dr[3]
        return np.array([
            (dq3 - dq1) * iA1,
            (dq4 - dq2) * iA2,
            -dq3 * iA3,
            -dq4 * iA4,
            ki1 * dr[0],
            ki2 * dr[1],
        ])

    def control(self, x):
        return feedback_law(self.gains, self.setpoint, x)

    def hd(self, x):
        return lyapunov_hd(self.params, self.gains, self.setpoint, x, strict=False)

    def equilibrium_residual(self):
        x = self.setpoint.x_star
        return float(np.max(np.abs(self.f(x, self.setpoint.u_star)[:6])))
