"""Closed-loop sample-and-hold simulation under event-triggered or periodic updates.

One run alternates two phases. At an update instant ``t_k`` the state is sampled
(resetting the measurement error), the feedback law is evaluated and, in the
adaptive mode, new node offsets are chosen. Between updates the plant is
integrated under the held input until a node condition fires; the next update is
then scheduled no sooner than ``tau_min`` after ``t_k``.
"""

from __future__ import annotations

import math
import warnings
from array import array
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import ode
from .adaptation import AdaptationConfig, adapt_theta
from .errors import ConfigError, DivergenceError, NumericError, SimulationWarning
from .plant import QuadrupleTank, QuadrupleTankParams
from .trigger import (CENTRALIZED, DECENTRALIZED, GapGuard, ThetaVector, TriggerConfig,
                      centralized_gap, schedule_next_update)

MODE_CENTRALIZED = "centralized"
MODE_THETA0 = "decentralized-theta0"
MODE_ADAPTIVE = "decentralized-adaptive"
MODE_PERIODIC = "periodic"
MODES = (MODE_CENTRALIZED, MODE_THETA0, MODE_ADAPTIVE, MODE_PERIODIC)
ET_MODES = (MODE_CENTRALIZED, MODE_THETA0, MODE_ADAPTIVE)

DEFAULT_MAX_SAMPLES = 100_000


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a single run needs; value-like and safe to ship to worker processes.

    ``center`` is ``"setpoint"``, ``"origin"`` or an explicit state vector.
    ``h=None`` selects ``tau_min / 10``; ``log_interval=None`` keeps at most
    ``DEFAULT_MAX_SAMPLES`` trajectory samples.
    """

    params: QuadrupleTankParams
    trigger: TriggerConfig
    adaptation: AdaptationConfig
    x0: tuple
    horizon: float
    x1_star: float = 15.0
    x2_star: float = 13.0
    x5_hat: float = 0.0
    x6_hat: float = 0.0
    center: object = "setpoint"
    h: Optional[float] = None
    tol_t: float = 1e-6
    log_interval: Optional[float] = None
    delay: float = 0.0
    delay_sigma_factor: float = 0.25
    seed: int = 0
    strict_domain: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if not isinstance(self.center, str):
            object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    @property
    def step(self):
        return self.trigger.tau_min / 10.0 if self.h is None else self.h

    @property
    def sample_interval(self):
        if self.log_interval is not None:
            return self.log_interval
        return max(self.step, self.horizon / DEFAULT_MAX_SAMPLES)

    def build_model(self):
        return QuadrupleTank(self.params, self.x1_star, self.x2_star, self.x5_hat, self.x6_hat,
                             strict=self.strict_domain)

    def resolved_trigger(self, model=None):
        """Trigger config with ``center`` filled in (setpoint, origin or explicit)."""
        if isinstance(self.center, str):
            if self.center == "setpoint":
                model = model or self.build_model()
                center = tuple(model.setpoint.x_star.tolist())
            else:
                center = None
        else:
            center = self.center
        return replace(self.trigger, center=center)

    def violations(self):
        out = []
        out.extend(self.params.violations())
        n = 6
        out.extend(self.trigger.violations(n))
        out.extend(self.adaptation.violations())
        if len(self.x0) != n:
            out.append(f"simulation.x0 must have {n} entries (got {len(self.x0)})")
        if not self.horizon > 0:
            out.append(f"simulation.horizon must be > 0 (got {self.horizon!r})")
        if self.h is not None and not self.h > 0:
            out.append(f"simulation.h must be > 0 (got {self.h!r})")
        if not self.tol_t > 0:
            out.append("simulation.tol_t must be > 0")
        if self.log_interval is not None and not self.log_interval > 0:
            out.append("simulation.log_interval must be > 0")
        if self.delay < 0:
            out.append("simulation.delay must be >= 0")
        elif self.delay > 0 and self.trigger.tau_min > 0 and not self.delay < self.trigger.tau_min:
            out.append(f"simulation.delay ({self.delay!r}) must be smaller than tau_min "
                       f"({self.trigger.tau_min!r})")
        if not 0 < self.delay_sigma_factor <= 1:
            out.append("simulation.delay_sigma_factor must lie in (0, 1]")
        if isinstance(self.center, str):
            if self.center not in ("setpoint", "origin"):
                out.append(f"trigger.center must be 'setpoint', 'origin' or a vector (got {self.center!r})")
        elif len(self.center) != n:
            out.append(f"trigger.center must have {n} entries")
        if not self.x1_star > 0 or not self.x2_star > 0:
            out.append("setpoint levels x1, x2 must be > 0")
        if not out:
            # only meaningful once the parameters themselves are sane
            model = self.build_model()
            res = model.equilibrium_residual()
            if not res < 1e-10:
                out.append(f"equilibrium residual {res:.3e} exceeds 1e-10")
            if np.any(model.setpoint.u_star < 0):
                out.append("equilibrium inputs u* must be nonnegative "
                           f"(got {model.setpoint.u_star.tolist()})")
        return out

    def validate(self):
        problems = self.violations()
        if problems:
            raise ConfigError(problems)
        return self


def with_mode(cfg, mode):
    """Return ``cfg`` with trigger/adaptation switches set for ``mode``."""
    if mode == MODE_CENTRALIZED:
        return replace(cfg, trigger=replace(cfg.trigger, mode=CENTRALIZED),
                       adaptation=replace(cfg.adaptation, enabled=False))
    if mode == MODE_THETA0:
        return replace(cfg, trigger=replace(cfg.trigger, mode=DECENTRALIZED),
                       adaptation=replace(cfg.adaptation, enabled=False))
    if mode == MODE_ADAPTIVE:
        return replace(cfg, trigger=replace(cfg.trigger, mode=DECENTRALIZED),
                       adaptation=replace(cfg.adaptation, enabled=True))
    if mode == MODE_PERIODIC:
        return cfg
    raise ConfigError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")


def apply_actuation_delay(cfg):
    """Effective trigger config for a constant sensing-to-actuation delay.

    With ``delay > 0`` the trigger gain is shrunk by ``delay_sigma_factor``;
    with no delay the trigger config is returned unchanged.
    """
    if cfg.delay < 0 or (cfg.delay > 0 and not cfg.delay < cfg.trigger.tau_min):
        raise ConfigError(f"delay ({cfg.delay!r}) must lie in [0, tau_min)")
    if cfg.delay == 0:
        return cfg.trigger
    return replace(cfg.trigger, sigma=cfg.trigger.sigma * cfg.delay_sigma_factor)


class EventLog:
    """Column store of update instants; compact enough for millions of periodic updates."""

    def __init__(self, n, m, n_nodes, keep_theta):
        self.n, self.m, self.n_nodes = n, m, n_nodes
        self.keep_theta = keep_theta
        self.t = array("d")
        self.dt = array("d")
        self.t_candidate = array("d")
        self.clamped = array("b")
        self.x = array("d")
        self.u = array("d")
        self.hd = array("d")
        self.theta = array("d")
        self.adapt_step = array("b")
        self.central_gap = array("d")
        self.nodes = []
        self.gaps = []

    def __len__(self):
        return len(self.t)

    def append(self, t, dt, x, u, hd=math.nan, nodes=(), gaps=(), theta=None,
               t_candidate=math.nan, clamped=False, adapt_step=0, central_gap=math.nan):
        self.t.append(t)
        self.dt.append(dt)
        self.t_candidate.append(t_candidate)
        self.clamped.append(1 if clamped else 0)
        # frombytes avoids iterating numpy scalars one by one
        self.x.frombytes(np.asarray(x, dtype=float).tobytes())
        self.u.frombytes(np.asarray(u, dtype=float).tobytes())
        self.hd.append(hd)
        if self.keep_theta:
            vals = np.zeros(self.n_nodes) if theta is None else np.asarray(theta, dtype=float)
            self.theta.frombytes(vals.tobytes())
        self.adapt_step.append(adapt_step)
        self.central_gap.append(central_gap)
        self.nodes.append(nodes)
        self.gaps.append(gaps)

    def times(self):
        return np.frombuffer(self.t, dtype=float).copy()

    def intervals(self):
        return np.frombuffer(self.dt, dtype=float).copy()

    def states(self):
        return np.frombuffer(self.x, dtype=float).reshape(-1, self.n).copy()

    def inputs(self):
        return np.frombuffer(self.u, dtype=float).reshape(-1, self.m).copy()

    def thetas(self):
        if not self.keep_theta:
            return np.zeros((len(self), self.n_nodes))
        return np.frombuffer(self.theta, dtype=float).reshape(-1, self.n_nodes).copy()

    def hd_values(self):
        return np.frombuffer(self.hd, dtype=float).copy()


class _Recorder:
    """Decimated trajectory samples ``(t, x, u, Hd)``."""

    def __init__(self, interval, hd):
        self.interval = interval
        self.hd = hd
        self.t, self.x, self.u, self.h = [], [], [], []
        self.next_t = 0.0
        self.n_logged = 0

    def add(self, t, x, u, force=False):
        if not force and t < self.next_t:
            return
        if self.t and t <= self.t[-1]:
            return
        self.t.append(t)
        self.x.append(np.array(x, dtype=float))
        self.u.append(np.array(u, dtype=float))
        self.h.append(self.hd(x) if self.hd is not None else math.nan)
        self.n_logged += 1
        self.next_t = self.n_logged * self.interval
        while self.next_t <= t:
            self.n_logged += 1
            self.next_t = self.n_logged * self.interval

    def observer(self, t0, u):
        return lambda s, x: self.add(t0 + s, x, u)


@dataclass
class SimResult:
    mode: str
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    hd: np.ndarray
    events: EventLog
    x_star: np.ndarray
    grouping: tuple
    metadata: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def update_count(self):
        return len(self.events)

    def summary(self):
        ev = self.events
        dts = ev.intervals()[1:]
        final = self.x[-1]
        hdk = ev.hd_values()
        finite = hdk[np.isfinite(hdk)]
        if finite.size > 1:
            rises = np.diff(finite) - 1e-6 * np.abs(finite[:-1])
            hd_monotone = bool(np.all(rises <= 0))
            hd_max_rise = float(np.max(np.diff(finite)))
        elif finite.size == 1:
            hd_monotone, hd_max_rise = True, 0.0
        else:
            # periodic runs do not evaluate Hd at updates
            hd_monotone, hd_max_rise = None, None
        steps = np.frombuffer(ev.adapt_step, dtype=np.int8)
        return {
            "mode": self.mode,
            "update_count": self.update_count,
            "interval_min": float(dts.min()) if dts.size else None,
            "interval_mean": float(dts.mean()) if dts.size else None,
            "interval_max": float(dts.max()) if dts.size else None,
            "clamped_updates": int(np.frombuffer(ev.clamped, dtype=np.int8).sum()),
            "final_time": float(self.t[-1]),
            "final_state": [float(v) for v in final],
            "final_error_norm": float(np.linalg.norm(final - self.x_star)),
            "final_abs_error_x1": float(abs(final[0] - self.x_star[0])),
            "final_abs_error_x2": float(abs(final[1] - self.x_star[1])),
            "hd_initial": float(self.hd[0]),
            "hd_final": float(self.hd[-1]),
            "hd_updates_monotone": hd_monotone,
            "hd_updates_max_rise": hd_max_rise,
            "adaptation_steps": {str(s): int((steps == s).sum()) for s in (1, 2, 3)},
            "warnings": len(self.warnings),
            "metadata": self.metadata,
        }


def _metadata(cfg, mode, trig, model, period=None):
    return {
        "mode": mode,
        "sigma": cfg.trigger.sigma,
        "sigma_effective": trig.sigma,
        "rho": cfg.trigger.rho,
        "rho_m": cfg.trigger.rho_m,
        "tau_min": trig.tau_min,
        "gap_floor": trig.gap_floor,
        "grouping": [[j + 1 for j in g] for g in trig.grouping],
        "horizon": cfg.horizon,
        "h": cfg.step,
        "tol_t": cfg.tol_t,
        "log_interval": cfg.sample_interval,
        "delay": cfg.delay,
        "adaptation": {"enabled": cfg.adaptation.enabled, "q": cfg.adaptation.q,
                       "te_rule": cfg.adaptation.te_rule,
                       "te_fixed_seconds": cfg.adaptation.te_fixed_seconds},
        "period": period,
        "x_star": model.setpoint.x_star.tolist(),
        "u_star": model.setpoint.u_star.tolist(),
    }


def _nudge_after(t_prev, t_next, dt):
    """Smallest float >= ``t_next`` such that ``t_next - t_prev >= dt`` in floating point."""
    while t_next - t_prev < dt:
        t_next = math.nextafter(t_next, math.inf)
    return float(t_next)


def run_event_triggered(cfg, mode=None):
    """Simulate one event-triggered mode (defaults to whatever ``cfg`` selects)."""
    if mode is not None:
        cfg = with_mode(cfg, mode)
    cfg.validate()
    if mode is None:
        if cfg.trigger.mode == CENTRALIZED:
            mode = MODE_CENTRALIZED
        else:
            mode = MODE_ADAPTIVE if cfg.adaptation.enabled else MODE_THETA0
    model = cfg.build_model()
    trig = replace(cfg.resolved_trigger(model), sigma=apply_actuation_delay(cfg).sigma)
    centralized = trig.mode == CENTRALIZED
    adaptive = cfg.adaptation.enabled and not centralized
    h, tol_t, horizon, tau_min = cfg.step, cfg.tol_t, cfg.horizon, trig.tau_min
    rec = _Recorder(cfg.sample_interval, model.hd)
    log = EventLog(model.n, model.m, trig.n_nodes, keep_theta=True)
    central_cfg = replace(trig, mode=CENTRALIZED)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SimulationWarning)
        t, x = 0.0, np.array(cfg.x0, dtype=float)
        t_prev = None
        u_active = None
        dt = 0.0
        info = {}
        k = 0
        while True:
            u_new = model.control(x)
            theta = ThetaVector.zeros(trig.n_nodes, k)
            adapt_step = 0
            if adaptive:
                theta, adapt_step = adapt_theta(model, x, u_new, (t_prev, t), cfg.adaptation, trig, k)
            log.append(t, dt, x, u_new, hd=model.hd(x), theta=theta.values, adapt_step=adapt_step,
                       **info)
            if u_active is None or cfg.delay == 0:
                u_active = u_new
            rec.add(t, x, u_active, force=True)

            guard = GapGuard(trig, x, None if centralized else theta)
            x_k = x
            remaining = horizon - t
            s0, x_s = 0.0, x
            try:
                if cfg.delay > 0 and k > 0:
                    d = min(cfg.delay, remaining)
                    x_s = ode.integrate(model, x, u_active, h, d, on_step=rec.observer(t, u_active))
                    s0 = d
                u_active = u_new
                if s0 >= remaining:
                    x_final = x_s
                    break
                g0 = guard(s0, x_s)
                if np.any(g0 >= 0):
                    s_ev, x_ev, fired = s0, x_s, np.flatnonzero(g0 >= 0).tolist()
                else:
                    span = remaining - s0
                    s_ev, x_ev, fired = ode.integrate_until_event(
                        model, x_s, u_active, guard, min(h, span), span, tol_t,
                        on_step=rec.observer(t + s0, u_active))
                    if s_ev is None:
                        x_final = x_ev
                        break
                    s_ev += s0
                dt = max(tau_min, s_ev)
                if dt >= remaining:
                    # next update would fall beyond the horizon
                    x_final = ode.integrate(model, x_ev, u_active, h, remaining - s_ev,
                                            on_step=rec.observer(t + s_ev, u_active))
                    break
                x_next = x_ev
                if s_ev < tau_min:
                    x_next = ode.integrate(model, x_ev, u_active, h, tau_min - s_ev,
                                           on_step=rec.observer(t + s_ev, u_active))
            except NumericError as exc:
                raise DivergenceError(str(exc), last_good_time=rec.t[-1] if rec.t else t) from exc

            raw = guard.raw(x_ev)
            info = {
                "nodes": ("central",) if centralized else tuple(i + 1 for i in fired),
                "gaps": tuple(float(raw[i]) for i in fired),
                "t_candidate": t + s_ev,
                "clamped": s_ev < tau_min,
                "central_gap": centralized_gap(x_ev, x_k - x_ev, central_cfg),
            }
            t_next = _nudge_after(t, schedule_next_update(t, t + s_ev, trig), dt)
            t_prev, t, x = t, t_next, x_next
            k += 1
        rec.add(horizon, x_final, u_active, force=True)
    return _finish(cfg, mode, model, trig, rec, log, caught)


def _finish(cfg, mode, model, trig, rec, log, caught, period=None):
    messages = sorted({str(w.message) for w in caught if issubclass(w.category, SimulationWarning)})
    return SimResult(
        mode=mode,
        t=np.array(rec.t),
        x=np.array(rec.x),
        u=np.array(rec.u),
        hd=np.array(rec.h),
        events=log,
        x_star=model.setpoint.x_star.copy(),
        grouping=trig.grouping,
        metadata=_metadata(cfg, mode, trig, model, period),
        warnings=messages,
    )


def periodic_update_count(horizon, period):
    """Number of updates at ``0, p, 2p, ...`` strictly before ``horizon``."""
    return max(1, math.ceil(round(horizon / period, 9)))


def run_periodic(cfg, period):
    """Fixed-period sample-and-hold baseline with the same logging as the event-triggered runs."""
    cfg.validate()
    if not period >= cfg.trigger.tau_min:
        raise ConfigError(f"period ({period!r}) must be >= tau_min ({cfg.trigger.tau_min!r})")
    model = cfg.build_model()
    trig = cfg.resolved_trigger(model)
    h = min(cfg.step, period)
    rec = _Recorder(cfg.sample_interval, model.hd)
    log = EventLog(model.n, model.m, trig.n_nodes, keep_theta=False)
    n_updates = periodic_update_count(cfg.horizon, period)
    nodes = ("periodic",)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SimulationWarning)
        x = np.array(cfg.x0, dtype=float)
        u_active = None
        # rounding can leave t_k an ulp short of period after t_{k-1}; nudge it up
        times = [0.0]
        for _ in range(1, n_updates):
            times.append(_nudge_after(times[-1], times[-1] + period, period))
        times.append(max(cfg.horizon, times[-1]))
        for k in range(n_updates):
            t = times[k]
            u_new = model.control(x)
            log.append(t, period if k else 0.0, x, u_new, nodes=nodes)
            if u_active is None or cfg.delay == 0:
                u_active = u_new
            rec.add(t, x, u_active, force=(k == 0))
            t_end = min(times[k + 1], cfg.horizon)
            try:
                if cfg.delay > 0 and k > 0:
                    d = min(cfg.delay, t_end - t)
                    x = ode.integrate(model, x, u_active, h, d, on_step=rec.observer(t, u_active))
                    t += d
                u_active = u_new
                x = ode.integrate(model, x, u_active, h, t_end - t, on_step=rec.observer(t, u_active))
            except NumericError as exc:
                raise DivergenceError(str(exc), last_good_time=t) from exc
        rec.add(cfg.horizon, x, u_active, force=True)
    return _finish(cfg, MODE_PERIODIC, model, trig, rec, log, caught, period)


def run_mode(cfg, mode, period=None):
    if mode == MODE_PERIODIC:
        return run_periodic(cfg, cfg.trigger.tau_min if period is None else period)
    return run_event_triggered(cfg, mode)


@dataclass
class ComparisonReport:
    modes: list
    summaries: dict
    update_counts: dict
    count_ratios: dict
    pairwise_deviation: dict
    max_deviation_et: Optional[float]
    ordering: list
    failures: dict
    partial: bool

    def to_dict(self):
        return {
            "modes": self.modes,
            "update_counts": self.update_counts,
            "count_ratios": self.count_ratios,
            "pairwise_max_deviation_x1x2": self.pairwise_deviation,
            "max_deviation_et_modes": self.max_deviation_et,
            "ordering": self.ordering,
            "failures": self.failures,
            "partial": self.partial,
            "summaries": self.summaries,
        }


def trajectory_deviation(a, b, grid):
    """Max Euclidean distance between the (x1, x2) traces of two results on ``grid``."""
    da = np.column_stack([np.interp(grid, a.t, a.x[:, i]) for i in (0, 1)])
    db = np.column_stack([np.interp(grid, b.t, b.x[:, i]) for i in (0, 1)])
    return float(np.max(np.linalg.norm(da - db, axis=1)))


def _run_named(args):
    cfg, mode, period = args
    try:
        return mode, run_mode(cfg, mode, period), None
    except Exception as exc:  # reported per mode, the comparison carries on
        return mode, None, f"{type(exc).__name__}: {exc}"


def compare_modes(cfg, modes, period=None, jobs=1):
    """Run several modes on the same scenario and tabulate counts and trajectory gaps."""
    if len(modes) < 2:
        raise ConfigError("compare needs at least two modes")
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"unknown mode {m!r}")
    tasks = [(cfg, m, period) for m in modes]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_named, tasks))
    else:
        outcomes = [_run_named(t) for t in tasks]

    # label duplicates so comparing a mode with itself keeps both runs
    labels, results, failures = [], {}, {}
    for i, (m, res, err) in enumerate(outcomes):
        label = m if m not in labels else f"{m}#{i}"
        labels.append(label)
        if err is None:
            results[label] = res
        else:
            failures[label] = err

    grid = np.arange(0.0, cfg.horizon, cfg.sample_interval)
    grid = np.append(grid, cfg.horizon)
    counts = {k: r.update_count for k, r in results.items()}
    ratios, devs = {}, {}
    names = list(results)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if counts[a]:
                ratios[f"{b}/{a}"] = counts[b] / counts[a]
            if counts[b]:
                ratios[f"{a}/{b}"] = counts[a] / counts[b]
            devs[f"{a}|{b}"] = trajectory_deviation(results[a], results[b], grid)
    et = [n for n in names if n.split("#")[0] in ET_MODES]
    et_devs = [devs[f"{a}|{b}"] for i, a in enumerate(et) for b in et[i + 1:]
               if f"{a}|{b}" in devs]
    ordering = sorted(names, key=lambda n: (counts[n], names.index(n)))
    return ComparisonReport(
        modes=labels,
        summaries={k: r.summary() for k, r in results.items()},
        update_counts=counts,
        count_ratios=ratios,
        pairwise_deviation=devs,
        max_deviation_et=max(et_devs) if et_devs else None,
        ordering=ordering,
        failures=failures,
        partial=bool(failures),
    ), results
