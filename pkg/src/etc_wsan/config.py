"""JSON configuration documents: parsing, validation and emission.

Documents carry a ``schema_version``; unknown keys are rejected in strict mode and
reported as warnings otherwise. Validation never stops at the first problem: every
violation found is returned together in one :class:`ConfigError`.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .adaptation import AdaptationConfig
from .engine import MODES, ScenarioConfig
from .errors import ConfigError
from .plant import GRAVITY, QuadrupleTankParams
from .trigger import TriggerConfig

SCHEMA_VERSION = 1

_SECTIONS = {
    "schema_version": None,
    "plant": {"A", "a", "gamma", "g", "k_I", "strict_domain"},
    "controller": {"k", "Q"},
    "setpoint": {"x1", "x2", "x5_hat", "x6_hat"},
    "trigger": {"sigma", "tau_min", "mode", "grouping", "center", "gap_floor", "rho", "rho_m"},
    "adaptation": {"enabled", "q", "te_rule", "te_fixed_seconds", "fd_fallback"},
    "simulation": {"x0", "horizon", "h", "tol_t", "log_interval", "delay",
                   "delay_sigma_factor", "seed"},
    "run": {"mode", "period", "out_dir"},
}


@dataclass(frozen=True)
class ConfigDocument:
    scenario: ScenarioConfig
    mode: str = "decentralized-adaptive"
    period: Optional[float] = None
    out_dir: Optional[str] = None


class _Reader:
    """Pulls typed fields out of nested dicts while collecting every problem."""

    def __init__(self, strict):
        self.strict = strict
        self.errors = []
        self.unknown = []

    def section(self, doc, name, required=True):
        sec = doc.get(name)
        if sec is None:
            if required:
                self.errors.append(f"missing section '{name}'")
            return {}
        if not isinstance(sec, dict):
            self.errors.append(f"section '{name}' must be an object")
            return {}
        for key in sec:
            if key not in _SECTIONS[name]:
                self.unknown.append(f"{name}.{key}")
        return sec

    def get(self, sec, path, key, kind, default=..., length=None):
        if key not in sec or sec[key] is None:
            if default is ...:
                self.errors.append(f"missing field '{path}.{key}'")
                return None
            return default
        value = sec[key]
        where = f"{path}.{key}"
        try:
            if kind == "float":
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise TypeError
                return float(value)
            if kind == "int":
                if isinstance(value, bool) or not isinstance(value, int):
                    raise TypeError
                return value
            if kind == "bool":
                if not isinstance(value, bool):
                    raise TypeError
                return value
            if kind == "str":
                if not isinstance(value, str):
                    raise TypeError
                return value
            if kind == "vector":
                if not isinstance(value, list) or any(
                        isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
                    raise TypeError
                if length is not None and len(value) != length:
                    self.errors.append(f"field '{where}' must have {length} entries")
                    return None
                return tuple(float(v) for v in value)
            if kind == "matrix":
                rows = tuple(tuple(float(v) for v in row) for row in value)
                if length is not None and (len(rows) != length or any(len(r) != length for r in rows)):
                    self.errors.append(f"field '{where}' must be {length}x{length}")
                    return None
                return rows
        except (TypeError, ValueError):
            pass
        self.errors.append(f"field '{where}' has the wrong type (expected {kind})")
        return None


def _grouping(value, reader):
    if not isinstance(value, list) or not all(
            isinstance(g, list) and all(isinstance(j, int) and not isinstance(j, bool) for j in g)
            for g in value):
        reader.errors.append("field 'trigger.grouping' must be a list of lists of 1-based state indices")
        return None
    return tuple(tuple(j - 1 for j in g) for g in value)


def parse_document(text, strict=True):
    """Parse and validate a configuration document; raise :class:`ConfigError` on any problem."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a JSON object")

    r = _Reader(strict)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        r.errors.append(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    for key in doc:
        if key not in _SECTIONS:
            r.unknown.append(key)

    pl = r.section(doc, "plant")
    ct = r.section(doc, "controller")
    sp = r.section(doc, "setpoint")
    tr = r.section(doc, "trigger")
    ad = r.section(doc, "adaptation", required=False)
    sm = r.section(doc, "simulation")
    rn = r.section(doc, "run", required=False)

    params = dict(
        A=r.get(pl, "plant", "A", "vector", length=4),
        a=r.get(pl, "plant", "a", "vector", length=4),
        gamma=r.get(pl, "plant", "gamma", "vector", length=2),
        g=r.get(pl, "plant", "g", "float", GRAVITY),
        k_I=r.get(pl, "plant", "k_I", "vector", length=2),
        k=r.get(ct, "controller", "k", "vector", length=4),
        Q=r.get(ct, "controller", "Q", "matrix", length=2),
    )
    strict_domain = r.get(pl, "plant", "strict_domain", "bool", False)

    grouping = _grouping(tr["grouping"], r) if "grouping" in tr else None
    if "grouping" not in tr:
        r.errors.append("missing field 'trigger.grouping'")
    center = tr.get("center", "setpoint")
    if isinstance(center, list):
        center = r.get(tr, "trigger", "center", "vector")
    elif not isinstance(center, str):
        r.errors.append("field 'trigger.center' must be 'setpoint', 'origin' or a list")
        center = None
    trig_kwargs = dict(
        sigma=r.get(tr, "trigger", "sigma", "float"),
        tau_min=r.get(tr, "trigger", "tau_min", "float"),
        grouping=grouping,
        mode=r.get(tr, "trigger", "mode", "str", "decentralized"),
        gap_floor=r.get(tr, "trigger", "gap_floor", "float", 0.0),
        rho=r.get(tr, "trigger", "rho", "float", None),
        rho_m=r.get(tr, "trigger", "rho_m", "float", None),
    )
    adapt = dict(
        enabled=r.get(ad, "adaptation", "enabled", "bool", True),
        q=r.get(ad, "adaptation", "q", "int", 1),
        te_rule=r.get(ad, "adaptation", "te_rule", "str", "previous-interval"),
        te_fixed_seconds=r.get(ad, "adaptation", "te_fixed_seconds", "float", None),
        fd_fallback=r.get(ad, "adaptation", "fd_fallback", "bool", True),
    )
    sim = dict(
        x0=r.get(sm, "simulation", "x0", "vector"),
        horizon=r.get(sm, "simulation", "horizon", "float"),
        h=r.get(sm, "simulation", "h", "float", None),
        tol_t=r.get(sm, "simulation", "tol_t", "float", 1e-6),
        log_interval=r.get(sm, "simulation", "log_interval", "float", None),
        delay=r.get(sm, "simulation", "delay", "float", 0.0),
        delay_sigma_factor=r.get(sm, "simulation", "delay_sigma_factor", "float", 0.25),
        seed=r.get(sm, "simulation", "seed", "int", 0),
    )
    setpoint = dict(
        x1_star=r.get(sp, "setpoint", "x1", "float"),
        x2_star=r.get(sp, "setpoint", "x2", "float"),
        x5_hat=r.get(sp, "setpoint", "x5_hat", "float", 0.0),
        x6_hat=r.get(sp, "setpoint", "x6_hat", "float", 0.0),
    )
    mode = r.get(rn, "run", "mode", "str", "decentralized-adaptive")
    period = r.get(rn, "run", "period", "float", None)
    out_dir = r.get(rn, "run", "out_dir", "str", None)
    if mode is not None and mode not in MODES:
        r.errors.append(f"run.mode must be one of {', '.join(MODES)} (got {mode!r})")

    if r.unknown:
        msg = "unknown keys: " + ", ".join(r.unknown)
        if strict:
            r.errors.append(msg)
        else:
            warnings.warn(msg, UserWarning, stacklevel=2)
    if r.errors:
        raise ConfigError(r.errors)

    scenario = ScenarioConfig(
        params=QuadrupleTankParams(**params),
        trigger=TriggerConfig(**trig_kwargs),
        adaptation=AdaptationConfig(**adapt),
        center=center,
        strict_domain=strict_domain,
        **sim, **setpoint,
    )
    problems = scenario.violations()
    if period is not None and period < scenario.trigger.tau_min:
        problems.append(f"run.period ({period!r}) must be >= tau_min")
    if problems:
        raise ConfigError(problems)
    return ConfigDocument(scenario=scenario, mode=mode, period=period, out_dir=out_dir)


def parse_and_validate(text, strict=True):
    """Parse a configuration document and return its validated :class:`ScenarioConfig`."""
    return parse_document(text, strict).scenario


def to_dict(cfg, mode="decentralized-adaptive", period=None, out_dir=None):
    p, t, a = cfg.params, cfg.trigger, cfg.adaptation
    center = cfg.center if isinstance(cfg.center, str) else list(cfg.center)
    return {
        "schema_version": SCHEMA_VERSION,
        "plant": {"A": list(p.A), "a": list(p.a), "gamma": list(p.gamma), "g": p.g,
                  "k_I": list(p.k_I), "strict_domain": cfg.strict_domain},
        "controller": {"k": list(p.k), "Q": [list(row) for row in p.Q]},
        "setpoint": {"x1": cfg.x1_star, "x2": cfg.x2_star,
                     "x5_hat": cfg.x5_hat, "x6_hat": cfg.x6_hat},
        "trigger": {"sigma": t.sigma, "tau_min": t.tau_min, "mode": t.mode,
                    "grouping": [[j + 1 for j in g] for g in t.grouping],
                    "center": center, "gap_floor": t.gap_floor, "rho": t.rho, "rho_m": t.rho_m},
        "adaptation": {"enabled": a.enabled, "q": a.q, "te_rule": a.te_rule,
                       "te_fixed_seconds": a.te_fixed_seconds, "fd_fallback": a.fd_fallback},
        "simulation": {"x0": list(cfg.x0), "horizon": cfg.horizon, "h": cfg.h,
                       "tol_t": cfg.tol_t, "log_interval": cfg.log_interval, "delay": cfg.delay,
                       "delay_sigma_factor": cfg.delay_sigma_factor, "seed": cfg.seed},
        "run": {"mode": mode, "period": period, "out_dir": out_dir},
    }


def emit_config(cfg, mode="decentralized-adaptive", period=None, out_dir=None):
    """Serialise a scenario; ``parse_and_validate`` of the result reproduces ``cfg``."""
    # json writes floats with repr(), the shortest string that round-trips exactly
    return json.dumps(to_dict(cfg, mode, period, out_dir), indent=2) + "\n"


def reference_scenario_text():
    return resources.files("etc_wsan").joinpath("scenarios/reference_scenario.json").read_text()


def load_reference_scenario():
    return parse_document(reference_scenario_text())
