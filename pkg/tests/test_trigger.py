import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etc_wsan.errors import ConfigError, PreconditionError
from etc_wsan.ode import integrate_until_event
from etc_wsan.plant import QuadrupleTank
from etc_wsan.trigger import (CENTRALIZED, GapGuard, ThetaVector, TriggerConfig, centralized_gap,
                              implication_holds, local_gaps, partition_violations,
                              schedule_next_update, singleton_grouping)
from helpers import random_draw

SIGMA_REF = 0.0054 ** 2


def cfg_for(n, sigma=1.0, grouping=None, **kw):
    return TriggerConfig(sigma=sigma, tau_min=1e-4, grouping=grouping or singleton_grouping(n), **kw)


def test_fresh_sample_never_fires():
    cfg = cfg_for(3, sigma=0.3)
    x = np.array([1.0, -2.0, 0.5])
    assert centralized_gap(x, np.zeros(3), cfg) == pytest.approx(-0.3 * 5.25)
    assert np.all(local_gaps(x, np.zeros(3), np.zeros(3), cfg) <= 0)


def test_centralized_boundary_at_reference_sigma():
    cfg = cfg_for(2, sigma=SIGMA_REF)
    gap = centralized_gap(np.array([1.0, 0.0]), np.array([0.0054, 0.0]), cfg)
    assert abs(gap) <= 1e-18


def test_centralized_fired_example():
    cfg = cfg_for(3, sigma=0.25)
    assert centralized_gap(np.array([1.0, 0, 0]), np.array([1.0, 0, 0]), cfg) == 0.75


def test_centering_is_applied():
    cfg = cfg_for(2, sigma=1.0, center=(1.0, 1.0))
    assert centralized_gap(np.array([1.0, 1.0]), np.zeros(2), cfg) == 0.0


def test_local_gaps_hand_example():
    cfg = cfg_for(2, sigma=1.0)
    gaps = local_gaps(np.array([1.0, 1.0]), np.array([2.0, 0.0]), np.array([3.0, -3.0]), cfg)
    assert gaps.tolist() == [0.0, 2.0]


def test_singleton_sum_equals_centralized():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, e = rng.normal(size=6), rng.normal(size=6)
        cfg = cfg_for(6, sigma=0.1)
        assert np.sum(local_gaps(x, e, np.zeros(6), cfg)) == pytest.approx(
            centralized_gap(x, e, cfg), rel=1e-12, abs=1e-14)


def test_theta_size_mismatch():
    with pytest.raises(PreconditionError):
        local_gaps(np.zeros(2), np.zeros(2), np.zeros(3), cfg_for(2))


def test_all_locals_at_zero_boundary():
    cfg = cfg_for(2, sigma=1.0)
    x, e = np.array([1.0, 2.0]), np.array([1.0, 2.0])
    assert local_gaps(x, e, np.zeros(2), cfg).tolist() == [0.0, 0.0]
    assert centralized_gap(x, e, cfg) == 0.0
    assert implication_holds(x, e, np.zeros(2), cfg)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), tight=st.booleans())
def test_implication_property(seed, tight):
    x, e, theta, cfg = random_draw(np.random.default_rng(seed), tight)
    assert implication_holds(x, e, theta, cfg)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_decomposition_identity_property(seed):
    x, e, theta, cfg = random_draw(np.random.default_rng(seed))
    total = np.sum(local_gaps(x, e, theta, cfg))
    central = centralized_gap(x, e, cfg)
    mag = np.sum(e * e) + cfg.sigma * np.sum((x - cfg.center_array(x.size)) ** 2) + np.sum(np.abs(theta))
    assert abs(total - (central - np.sum(theta))) <= 1e-12 * (1 + mag)


def test_adversarial_hill_climb_finds_no_violation():
    rng = np.random.default_rng(11)
    violations = 0
    for _ in range(40):
        n = int(rng.integers(2, 7))
        cfg = cfg_for(n, sigma=10.0 ** rng.uniform(-4, 0),
                      grouping=tuple((j,) for j in range(n)) if rng.random() < 0.5
                      else ((0,), tuple(range(1, n))))
        theta = rng.normal(size=cfg.n_nodes)
        theta -= theta.mean()
        x, e = rng.normal(size=n), rng.normal(size=n) * 0.1

        def score(x, e):
            gaps = local_gaps(x, e, theta, cfg)
            return centralized_gap(x, e, cfg) - 1e3 * max(0.0, float(gaps.max()))

        best = score(x, e)
        for _ in range(300):
            x2 = x + rng.normal(size=n) * 0.1
            e2 = e + rng.normal(size=n) * 0.1
            s = score(x2, e2)
            if s > best:
                x, e, best = x2, e2, s
        if not implication_holds(x, e, theta, cfg):
            violations += 1
    assert violations == 0


def test_schedule_clamps_and_passes_through():
    cfg = cfg_for(1)
    tau = cfg.tau_min
    assert schedule_next_update(2.0, 2.0 + tau / 2, cfg) == 2.0 + tau
    assert schedule_next_update(2.0, 2.0 + 5 * tau, cfg) == pytest.approx(2.0 + 5 * tau, abs=1e-15)
    assert schedule_next_update(0.0, 0.05e-3, cfg) == pytest.approx(0.1e-3, abs=1e-18)
    with pytest.raises(PreconditionError):
        schedule_next_update(1.0, 0.5, cfg)


@settings(max_examples=100, deadline=None)
@given(t_k=st.floats(0, 1e3), offset=st.floats(0, 1.0), tau=st.floats(1e-6, 1e-1))
def test_schedule_respects_tau_min(t_k, offset, tau):
    cfg = TriggerConfig(sigma=1.0, tau_min=tau, grouping=((0,),))
    t_next = schedule_next_update(t_k, t_k + offset, cfg)
    # exact in real arithmetic; floating point may lose the last ulp of t_k + tau
    assert t_next - t_k >= tau * (1 - 1e-9) - 4 * np.spacing(t_k)


@pytest.mark.parametrize("grouping, needle", [
    (((0, 4), (1, 5), (2,)), "does not cover state index 4"),
    (((0, 4), (1, 5), (2, 3), (3,)), "appears in groups"),
    (((0, 1, 2, 3, 4, 5), ()), "is empty"),
    (((0, 1, 2, 3, 4, 5, 6),), "out-of-range state index 7"),
])
def test_partition_errors(grouping, needle):
    problems = partition_violations(grouping, 6)
    assert any(needle in p for p in problems)
    cfg = TriggerConfig(sigma=1.0, tau_min=1e-4, grouping=grouping)
    with pytest.raises(ConfigError):
        cfg.validate(6)


def test_config_rejects_bad_scalars():
    cfg = TriggerConfig(sigma=0.0, tau_min=-1.0, grouping=((0,),), mode="sometimes")
    assert len(cfg.violations()) == 3


def test_theta_vector_balance():
    assert ThetaVector.zeros(4).is_balanced()
    assert ThetaVector(np.array([1.0, -0.5, -0.5])).is_balanced()
    assert not ThetaVector(np.array([1.0, -0.5])).is_balanced()


def test_gap_guard_matches_pure_functions():
    rng = np.random.default_rng(5)
    cfg = TriggerConfig(sigma=0.01, tau_min=1e-4, grouping=((0, 4), (1, 5), (2,), (3,)),
                        center=tuple(rng.normal(size=6)), gap_floor=1e-12)
    x_held, x = rng.normal(size=6), rng.normal(size=6)
    theta = np.array([0.1, -0.2, 0.3, -0.2])
    guard = GapGuard(cfg, x_held, theta)
    ref = local_gaps(x, x_held - x, theta, cfg)
    assert np.allclose(guard.raw(x), ref, rtol=1e-13, atol=1e-15)
    assert np.allclose(guard(0.0, x), ref - 1e-12 / 4, rtol=1e-13, atol=1e-15)
    central = GapGuard(TriggerConfig(**{**cfg.__dict__, "mode": CENTRALIZED}), x_held)
    assert central.raw(x)[0] == pytest.approx(centralized_gap(x, x_held - x, cfg), rel=1e-13)


def test_local_fires_no_later_than_centralized():
    tank = QuadrupleTank()
    rng = np.random.default_rng(9)
    grouping = ((0, 4), (1, 5), (2,), (3,))
    for _ in range(10):
        x0 = np.concatenate([rng.uniform(3, 18, 4), rng.uniform(-2, 2, 2)])
        u = tank.control(x0)
        center = tuple(tank.setpoint.x_star)
        kw = dict(sigma=1e-3, tau_min=1e-4, grouping=grouping, center=center)
        t_local, _, _ = integrate_until_event(tank, x0, u, GapGuard(TriggerConfig(**kw), x0),
                                              0.01, 30.0, 1e-9)
        t_central, _, _ = integrate_until_event(
            tank, x0, u, GapGuard(TriggerConfig(mode=CENTRALIZED, **kw), x0), 0.01, 30.0, 1e-9)
        assert t_local is not None and t_central is not None
        assert t_local <= t_central + 1e-9
