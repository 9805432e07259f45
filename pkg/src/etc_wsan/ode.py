"""Fixed-step RK4 integration under a held input, with guard-based event localization.

A guard is a callable ``guard(s, x) -> float`` where ``s`` is the time elapsed since
the last controller update and ``x`` the current state. A guard fires when its value
reaches zero from below. ``integrate_until_event`` also accepts a single callable
returning an array of guard values, which is how the simulation engine evaluates all
node conditions in one vectorised call.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import NumericError, PreconditionError

Guard = Callable[[float, np.ndarray], float]
GuardSet = Union[Sequence[Guard], Callable[[float, np.ndarray], np.ndarray]]


def rk4_step(model, x, u_held, h):
    """Advance ``x`` by one classic Runge-Kutta step of length ``h`` under ``u_held``."""
    if not h > 0:
        raise PreconditionError(f"step size must be positive, got {h!r}")
    x = np.asarray(x, dtype=float)
    if model.rhs_list is not None:
        return np.array(_rk4_list(model.rhs_list, x.tolist(), np.asarray(u_held).tolist(), h))
    f = model.f
    k1 = f(x, u_held)
    k2 = f(x + (0.5 * h) * k1, u_held)
    k3 = f(x + (0.5 * h) * k2, u_held)
    k4 = f(x + h * k3, u_held)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_list(f, x, u, h):
    # same operations in the same order as the array version, so results match bit for bit
    hh = 0.5 * h
    k1 = f(x, u)
    k2 = f([a + hh * b for a, b in zip(x, k1)], u)
    k3 = f([a + hh * b for a, b in zip(x, k2)], u)
    k4 = f([a + h * b for a, b in zip(x, k3)], u)
    h6 = h / 6.0
    return [a + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)]


def _guard_values(guards, s, x):
    if callable(guards):
        return np.atleast_1d(np.asarray(guards(s, x), dtype=float))
    return np.array([g(s, x) for g in guards], dtype=float)


def _check_finite(x, s):
    # a sum is non-finite iff some entry is (short of overflow near 1e308), and is cheap
    if not math.isfinite(sum(x.tolist())):
        raise NumericError(f"non-finite state at s={s!r}: {x!r}")


def integrate_until_event(model, x0, u_held, guards, h, t_max, tol_t,
                          on_step=None):
    """Integrate until the first guard reaches zero or ``t_max`` elapses.

    Steps with :func:`rk4_step`. On the first step whose endpoint has some guard
    ``>= 0`` the crossing is bisected inside that step (re-integrating from the
    step start with a shortened step) until the bracket is no wider than ``tol_t``.

    Returns ``(t_event, x_event, fired)``. ``t_event`` is the right end of the
    final bracket, so every index in ``fired`` is nonnegative there; simultaneous
    firings are reported together. When nothing fires, ``t_event`` is ``None``,
    ``x_event`` is the state at ``t_max`` and ``fired`` is empty.

    ``on_step(s, x)`` is called after every accepted full step (not at the event).
    """
    if not tol_t > 0:
        raise PreconditionError("tol_t must be positive")
    if not t_max >= h:
        raise PreconditionError(f"t_max ({t_max!r}) must be at least h ({h!r})")
    x = np.asarray(x0, dtype=float)
    g0 = _guard_values(guards, 0.0, x)
    if np.any(g0 >= 0):
        raise PreconditionError(
            f"guards {np.flatnonzero(g0 >= 0).tolist()} already nonnegative at s=0")

    s = 0.0
    # step counter avoids drift from repeated s += h
    n = 0
    while s < t_max:
        s_next = min((n + 1) * h, t_max)
        step = s_next - s
        if step <= 0:
            break
        x_next = rk4_step(model, x, u_held, step)
        _check_finite(x_next, s_next)
        g = _guard_values(guards, s_next, x_next)
        if np.any(g >= 0):
            lo, hi = 0.0, step
            x_hi, g_hi = x_next, g
            while hi - lo > tol_t:
                mid = 0.5 * (lo + hi)
                x_mid = rk4_step(model, x, u_held, mid)
                _check_finite(x_mid, s + mid)
                g_mid = _guard_values(guards, s + mid, x_mid)
                if np.any(g_mid >= 0):
                    hi, x_hi, g_hi = mid, x_mid, g_mid
                else:
                    lo = mid
            fired = np.flatnonzero(g_hi >= 0).tolist()
            return s + hi, x_hi, fired
        x, s = x_next, s_next
        n += 1
        if on_step is not None:
            on_step(s, x)
    return None, x, []


def integrate(model, x0, u_held, h, duration, on_step=None):
    """Integrate exactly ``duration`` seconds with steps of at most ``h``; return the end state."""
    x = np.asarray(x0, dtype=float)
    if duration <= 0:
        return x
    n_full = int(duration // h)
    s = 0.0
    for n in range(n_full):
        s_next = (n + 1) * h
        x = rk4_step(model, x, u_held, s_next - s)
        s = s_next
        if on_step is not None:
            _check_finite(x, s)
            on_step(s, x)
    rest = duration - s
    # skip remainders that are pure rounding noise
    if rest > 1e-12 * max(1.0, duration):
        x = rk4_step(model, x, u_held, rest)
        if on_step is not None:
            _check_finite(x, duration)
            on_step(duration, x)
    # non-finite values propagate, so one check at the end catches a blow-up
    _check_finite(x, duration)
    return x


def sample_trajectory(model, x0, u_held, h, duration):
    """Return ``[(t, x), ...]`` at every integration step from 0 to ``duration``."""
    x0 = np.asarray(x0, dtype=float)
    samples = [(0.0, x0.copy())]
    integrate(model, x0, u_held, h, duration,
              on_step=lambda s, x: samples.append((s, x.copy())))
    return samples
