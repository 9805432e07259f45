"""Centralized and per-node event-triggering conditions and the update scheduler.

Sign convention: every ``*_gap`` function returns a value that is negative while the
condition holds and reaches zero when the controller must be recomputed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, PreconditionError

CENTRALIZED = "centralized"
DECENTRALIZED = "decentralized"


def partition_violations(grouping, n):
    """List problems with ``grouping`` as a partition of the 0-based indices ``0..n-1``.

    Messages name indices 1-based, the way they appear in configuration files.
    """
    out = []
    seen = {}
    for gi, group in enumerate(grouping):
        if len(group) == 0:
            out.append(f"group {gi + 1} is empty")
        for j in group:
            if not 0 <= j < n:
                out.append(f"group {gi + 1} contains out-of-range state index {j + 1}")
            elif j in seen:
                out.append(f"state index {j + 1} appears in groups {seen[j] + 1} and {gi + 1}")
            else:
                seen[j] = gi
    missing = [j + 1 for j in range(n) if j not in seen]
    if missing:
        out.append("grouping does not cover state index " + ", ".join(map(str, missing)))
    return out


@dataclass(frozen=True)
class TriggerConfig:
    """Triggering parameters.

    ``grouping`` holds 0-based state indices, one tuple per sensor node.
    ``center`` is subtracted from the state before any norm is taken (the
    setpoint for regulation problems); ``None`` means the origin.
    ``gap_floor`` is an absolute dead-zone added to the centralized threshold
    and split evenly over the nodes; 0 gives the bare conditions.
    """

    sigma: float
    tau_min: float
    grouping: tuple
    mode: str = DECENTRALIZED
    center: Optional[tuple] = None
    gap_floor: float = 0.0
    rho: Optional[float] = None
    rho_m: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "grouping", tuple(tuple(int(j) for j in g) for g in self.grouping))
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def n_nodes(self):
        return len(self.grouping)

    @property
    def n_states(self):
        return sum(len(g) for g in self.grouping)

    def violations(self, n=None):
        n = self.n_states if n is None else n
        out = []
        if not self.sigma > 0:
            out.append(f"trigger.sigma must be > 0 (got {self.sigma!r})")
        if not self.tau_min > 0:
            out.append(f"trigger.tau_min must be > 0 (got {self.tau_min!r})")
        if self.mode not in (CENTRALIZED, DECENTRALIZED):
            out.append(f"trigger.mode must be centralized or decentralized (got {self.mode!r})")
        if self.gap_floor < 0:
            out.append("trigger.gap_floor must be >= 0")
        out.extend(partition_violations(self.grouping, n))
        if self.center is not None and len(self.center) != n:
            out.append(f"trigger.center has {len(self.center)} entries, expected {n}")
        return out

    def validate(self, n=None):
        problems = self.violations(n)
        if problems:
            raise ConfigError(problems)
        return self

    def center_array(self, n):
        if self.center is None:
            return np.zeros(n)
        return np.asarray(self.center, dtype=float)

    def membership(self):
        """0/1 matrix ``M`` of shape (nodes, states) with ``M[i, j] = 1`` when node i senses state j."""
        M = np.zeros((self.n_nodes, self.n_states))
        for i, group in enumerate(self.grouping):
            M[i, list(group)] = 1.0
        return M


def singleton_grouping(n):
    return tuple((j,) for j in range(n))


@dataclass
class ThetaVector:
    """Per-node threshold offsets for epoch ``k``; entries must sum to zero."""

    values: np.ndarray
    k: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @classmethod
    def zeros(cls, n_nodes, k=0):
        return cls(np.zeros(n_nodes), k)

    def sum_tolerance(self):
        return 1e-12 * len(self.values) * float(np.max(np.abs(self.values), initial=0.0))

    def is_balanced(self):
        return abs(float(np.sum(self.values))) <= self.sum_tolerance()


def _theta_array(theta, n_nodes):
    vals = theta.values if isinstance(theta, ThetaVector) else np.asarray(theta, dtype=float)
    if vals.shape != (n_nodes,):
        raise PreconditionError(f"theta has shape {vals.shape}, grouping has {n_nodes} nodes")
    return vals


def centralized_gap(x, e, cfg):
    """``|e|^2 - sigma |x - center|^2``."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    d = x - cfg.center_array(x.size)
    return float(e @ e - cfg.sigma * (d @ d))


def local_gaps(x, e, theta, cfg):
    """Per-node gaps ``|e_i|^2 - sigma |x_i - c_i|^2 - theta_i`` over each node's states."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    th = _theta_array(theta, cfg.n_nodes)
    d = x - cfg.center_array(x.size)
    out = np.empty(cfg.n_nodes)
    for i, group in enumerate(cfg.grouping):
        idx = list(group)
        ei, di = e[idx], d[idx]
        out[i] = ei @ ei - cfg.sigma * (di @ di) - th[i]
    return out


def implication_holds(x, e, theta, cfg):
    """Check that all local conditions holding implies the centralized one holds.

    Both sides are evaluated in floating point, so the centralized side is allowed
    a rounding slack proportional to the magnitudes being summed.
    """
    gaps = local_gaps(x, e, theta, cfg)
    if np.any(gaps > 0):
        return True
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    d = x - cfg.center_array(x.size)
    th = _theta_array(theta, cfg.n_nodes)
    scale = float(e @ e + cfg.sigma * (d @ d) + np.sum(np.abs(th)) + np.sum(np.abs(gaps)))
    slack = 8.0 * np.finfo(float).eps * (x.size + cfg.n_nodes) * scale
    return centralized_gap(x, e, cfg) <= slack


def schedule_next_update(t_k, t_candidate_event, cfg):
    """Next update time: the candidate event, but never sooner than ``tau_min`` after ``t_k``."""
    if t_candidate_event < t_k:
        raise PreconditionError("candidate event precedes the last update")
    return t_k + max(cfg.tau_min, t_candidate_event - t_k)


class GapGuard:
    """Vectorised guard for :func:`etc_wsan.ode.integrate_until_event`.

    Evaluates every node condition for one epoch, with the held sample ``x_held``
    and that epoch's ``theta``. In centralized mode a single value is returned.
    """

    def __init__(self, cfg, x_held, theta=None):
        self.cfg = cfg
        self.x_held = np.asarray(x_held, dtype=float)
        n = self.x_held.size
        self.center = cfg.center_array(n)
        self.centralized = cfg.mode == CENTRALIZED
        if self.centralized:
            self.offset = np.array([cfg.gap_floor])
            self.M = np.ones((1, n))
        else:
            th = np.zeros(cfg.n_nodes) if theta is None else _theta_array(theta, cfg.n_nodes)
            self.offset = th + cfg.gap_floor / cfg.n_nodes
            self.M = cfg.membership()

    def raw(self, x):
        """Gaps without the dead-zone (what gets logged)."""
        e = self.x_held - x
        d = x - self.center
        return self.M @ (e * e - self.cfg.sigma * (d * d)) - (self.offset - self._floor_share())

    def _floor_share(self):
        if self.centralized:
            return self.cfg.gap_floor
        return self.cfg.gap_floor / self.cfg.n_nodes

    def __call__(self, s, x):
        e = self.x_held - x
        d = x - self.center
        return self.M @ (e * e - self.cfg.sigma * (d * d)) - self.offset
