"""On-line adjustment of the per-node threshold offsets.

At each update the controller node predicts, with a truncated Taylor expansion under
the held input, each node's decision gap at ``t_k + t_e`` and picks the offsets that
make those predicted gaps equal while summing to zero. Infeasible offsets (a node
that would fire immediately) fall back first to ``t_e = tau_min``, then to zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CapabilityError, ConfigError, NumericError, PreconditionError
from .trigger import ThetaVector

TE_PREVIOUS = "previous-interval"
TE_TAU_MIN = "tau-min"
TE_FIXED = "fixed"
TE_RULES = (TE_PREVIOUS, TE_TAU_MIN, TE_FIXED)


@dataclass(frozen=True)
class AdaptationConfig:
    enabled: bool = True
    q: int = 1
    te_rule: str = TE_PREVIOUS
    te_fixed_seconds: Optional[float] = None
    fd_fallback: bool = True

    def violations(self):
        out = []
        if not isinstance(self.q, int) or self.q not in (1, 2):
            out.append(f"adaptation.q must be 1 or 2 (got {self.q!r})")
        if self.te_rule not in TE_RULES:
            out.append(f"adaptation.te_rule must be one of {', '.join(TE_RULES)} (got {self.te_rule!r})")
        if self.te_rule == TE_FIXED and not (self.te_fixed_seconds is not None and self.te_fixed_seconds > 0):
            out.append("adaptation.te_fixed_seconds must be > 0 for the fixed rule")
        return out

    def validate(self):
        problems = self.violations()
        if problems:
            raise ConfigError(problems)
        return self


def _second_derivative(model, x, u, xdot, fd_fallback):
    if model.has_jvp:
        return model.jvp(x, u, xdot)
    if not fd_fallback:
        raise CapabilityError("order 2 needs model.jvp or the finite-difference fallback")
    # central difference of f along xdot, step scaled to the state magnitude
    eps = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    nv = float(np.linalg.norm(xdot))
    if nv == 0.0:
        return np.zeros_like(x)
    v = xdot / nv
    return nv * (model.f(x + eps * v, u) - model.f(x - eps * v, u)) / (2.0 * eps)


def taylor_estimates(model, x_k, u_k, q, tau, fd_fallback=True):
    """Predict state and measurement error ``tau`` seconds after an update.

    Returns ``(xi_hat, eps_hat)`` with ``eps_hat = x_k - xi_hat``.
    """
    if q not in (1, 2):
        raise PreconditionError(f"approximation order must be 1 or 2, got {q!r}")
    if tau < 0:
        raise PreconditionError("tau must be nonnegative")
    x_k = np.asarray(x_k, dtype=float)
    xdot = model.f(x_k, u_k)
    step = xdot * tau
    if q == 2:
        xddot = _second_derivative(model, x_k, u_k, xdot, fd_fallback)
        step = step + 0.5 * xddot * tau * tau
    xi_hat = x_k + step
    return xi_hat, x_k - xi_hat


def gap_estimates(xi_hat, eps_hat, trig):
    """Theta-independent part of each node's predicted gap."""
    d = xi_hat - trig.center_array(xi_hat.size)
    c = np.empty(trig.n_nodes)
    for i, group in enumerate(trig.grouping):
        idx = list(group)
        c[i] = eps_hat[idx] @ eps_hat[idx] - trig.sigma * (d[idx] @ d[idx])
    return c


def solve_theta(gaps, k=0):
    """Offsets equalising ``gaps[i] - theta[i]`` across nodes with ``sum(theta) == 0``."""
    c = np.asarray(gaps, dtype=float)
    if c.ndim != 1 or c.size < 1:
        raise PreconditionError("need at least one node gap")
    if not np.all(np.isfinite(c)):
        raise NumericError(f"non-finite gap estimate: {c!r}")
    theta = c - np.mean(c)
    tol = 1e-12 * c.size * max(float(np.max(np.abs(c))), np.finfo(float).tiny)
    if abs(float(np.sum(theta))) > tol:
        # re-centre once; the mean of a large-magnitude vector can leave a residue
        theta = theta - np.mean(theta)
    return ThetaVector(theta, k)


def immediate_violation(x_k, theta, trig):
    """Nodes whose condition would already be violated at ``t_k`` with this ``theta``."""
    d = np.asarray(x_k, dtype=float) - trig.center_array(len(x_k))
    th = theta.values if isinstance(theta, ThetaVector) else np.asarray(theta)
    bad = []
    for i, group in enumerate(trig.grouping):
        idx = list(group)
        if -trig.sigma * (d[idx] @ d[idx]) > th[i]:
            bad.append(i)
    return bad


def equalization_times(cfg, t_prev, t_k, tau_min):
    """Ordered list of equalization horizons to try before falling back to zero."""
    if cfg.te_rule == TE_PREVIOUS:
        first = tau_min if t_prev is None else t_k - t_prev
        if t_prev is not None and not first > 0:
            raise PreconditionError("t_k must be later than t_{k-1}")
    elif cfg.te_rule == TE_TAU_MIN:
        first = tau_min
    else:
        first = cfg.te_fixed_seconds
    return [first] if first == tau_min else [first, tau_min]


def adapt_theta(model, x_k, u_k, history, cfg, trig, k=0):
    """Run the adaptation heuristic for one update.

    ``history`` is ``(t_prev, t_k)``; ``t_prev`` is ``None`` for the first update.
    Returns ``(theta, step)`` where ``step`` records which branch produced theta:
    1 (first horizon), 2 (``tau_min`` retry) or 3 (zero fallback).
    """
    t_prev, t_k = history
    for step, te in enumerate(equalization_times(cfg, t_prev, t_k, trig.tau_min), start=1):
        xi_hat, eps_hat = taylor_estimates(model, x_k, u_k, cfg.q, te, cfg.fd_fallback)
        theta = solve_theta(gap_estimates(xi_hat, eps_hat, trig), k)
        if not immediate_violation(x_k, theta, trig):
            return theta, step
    # when the first horizon already is tau_min the retry would repeat it, so it is skipped
    return ThetaVector.zeros(trig.n_nodes, k), 3
