import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etc_wsan.errors import NumericError, PreconditionError
from etc_wsan.ode import integrate, integrate_until_event, rk4_step, sample_trajectory
from etc_wsan.plant import FunctionModel

ZERO = FunctionModel(lambda x, u: np.zeros_like(x), 1)
ONE = FunctionModel(lambda x, u: np.ones_like(x), 1)
DECAY = FunctionModel(lambda x, u: -x, 1)


def test_rk4_zero_field_keeps_state():
    assert rk4_step(ZERO, np.array([5.0]), None, 0.3)[0] == 5.0


def test_rk4_constant_field():
    assert rk4_step(ONE, np.array([0.0]), None, 0.25)[0] == pytest.approx(0.25, abs=1e-15)


def test_rk4_decay_one_step():
    # RK4 for x' = -x is the 4th-order Taylor polynomial of exp(-h)
    h = 0.1
    poly = 1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24
    x = rk4_step(DECAY, np.array([1.0]), None, h)[0]
    assert x == pytest.approx(poly, abs=1e-15)
    assert abs(x - 0.9048374) <= 1e-7
    assert abs(x - math.exp(-0.1)) < 1e-7


def test_rk4_rejects_nonpositive_step():
    with pytest.raises(PreconditionError):
        rk4_step(DECAY, np.array([1.0]), None, 0.0)


def test_rk4_global_order_is_four():
    def err(h):
        return abs(integrate(DECAY, np.array([1.0]), None, h, 1.0)[0] - math.exp(-1.0))

    ratio = err(0.1) / err(0.05)
    assert 12.0 <= ratio <= 20.0


def test_event_constant_field_crosses_at_one():
    t, x, fired = integrate_until_event(ONE, np.array([0.0]), None, [lambda s, x: x[0] - 1.0],
                                        h=0.3, t_max=10.0, tol_t=1e-9)
    assert abs(t - 1.0) <= 1e-9
    assert fired == [0]
    assert x[0] >= 1.0


def test_event_decay_crosses_at_ln2():
    t, _, fired = integrate_until_event(DECAY, np.array([1.0]), None, [lambda s, x: 0.5 - x[0]],
                                        h=0.1, t_max=5.0, tol_t=1e-6)
    assert abs(t - math.log(2.0)) <= 1e-6
    assert fired == [0]


def test_simultaneous_guards_reported_together():
    guards = [lambda s, x: x[0] - 1.0, lambda s, x: x[0] - 1.0, lambda s, x: x[0] - 3.0]
    t, _, fired = integrate_until_event(ONE, np.array([0.0]), None, guards, 0.1, 5.0, 1e-8)
    assert fired == [0, 1]


def test_vector_guard_callable():
    guard = lambda s, x: np.array([x[0] - 2.0, x[0] - 1.5])  # noqa: E731
    t, _, fired = integrate_until_event(ONE, np.array([0.0]), None, guard, 0.1, 5.0, 1e-8)
    assert abs(t - 1.5) <= 1e-8
    assert fired == [1]


def test_no_event_returns_end_state():
    t, x, fired = integrate_until_event(ONE, np.array([0.0]), None, [lambda s, x: x[0] - 100.0],
                                        0.1, 2.0, 1e-6)
    assert t is None and fired == []
    assert x[0] == pytest.approx(2.0, abs=1e-12)


def test_time_guard_fires_at_threshold():
    t, _, fired = integrate_until_event(ZERO, np.array([0.0]), None, [lambda s, x: s - 0.37],
                                        0.1, 1.0, 1e-10)
    assert abs(t - 0.37) <= 1e-10


def test_event_preconditions():
    x0 = np.array([0.0])
    with pytest.raises(PreconditionError):
        integrate_until_event(ONE, x0, None, [lambda s, x: 1.0], 0.1, 1.0, 1e-6)
    with pytest.raises(PreconditionError):
        integrate_until_event(ONE, x0, None, [lambda s, x: -1.0], 0.1, 1.0, 0.0)
    with pytest.raises(PreconditionError):
        integrate_until_event(ONE, x0, None, [lambda s, x: -1.0], 0.1, 0.05, 1e-6)


def test_non_finite_state_raises():
    blow = FunctionModel(lambda x, u: np.array([np.inf]), 1)
    with pytest.raises(NumericError):
        integrate_until_event(blow, np.array([0.0]), None, [lambda s, x: -1.0], 0.1, 1.0, 1e-6)
    with pytest.raises(NumericError):
        integrate(blow, np.array([0.0]), None, 0.1, 1.0)


def test_sample_trajectory_endpoints():
    samples = sample_trajectory(DECAY, np.array([1.0]), None, 1e-3, 1.0)
    assert samples[0][0] == 0.0 and samples[0][1][0] == 1.0
    assert samples[-1][0] == pytest.approx(1.0, abs=1e-12)
    assert abs(samples[-1][1][0] - math.exp(-1.0)) <= 1e-9


def test_sample_trajectory_zero_duration():
    samples = sample_trajectory(DECAY, np.array([2.0]), None, 0.1, 0.0)
    assert len(samples) == 1 and samples[0][1][0] == 2.0


def test_integrate_reaches_exact_duration_with_remainder():
    x = integrate(ONE, np.array([0.0]), None, 0.3, 1.0)
    assert x[0] == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(rate=st.floats(0.5, 5.0), level=st.floats(0.05, 3.0), h=st.floats(0.01, 0.5),
       tol=st.sampled_from([1e-4, 1e-6, 1e-8]))
def test_event_bracket_property(rate, level, h, tol):
    """The reported time has the guard nonnegative; tol earlier it was still negative."""
    model = FunctionModel(lambda x, u: np.array([rate]), 1)
    guard = [lambda s, x: x[0] - level]
    t, x, fired = integrate_until_event(model, np.array([0.0]), None, guard, h, 10.0, tol)
    assert fired == [0] and x[0] - level >= 0
    assert t - level / rate <= tol * (1 + 1e-9) + 1e-12
    assert t >= level / rate - 1e-12


@settings(max_examples=30, deadline=None)
@given(x0=st.floats(-5, 5), h=st.floats(0.001, 0.2), duration=st.floats(0.0, 3.0))
def test_integration_is_deterministic(x0, h, duration):
    a = integrate(DECAY, np.array([x0]), None, h, duration)
    b = integrate(DECAY, np.array([x0]), None, h, duration)
    assert a.tobytes() == b.tobytes()
