from __future__ import annotations

import math

import numpy as np
import pytest

from suscept.dynamics import ModelConfig, rhs
from suscept.ode import (
    IntegratorSettings,
    NoCrossing,
    NonFiniteState,
    StepLimitExceeded,
    find_crossing,
    integrate,
)


def exp_decay(t, y):
    return -y


def rotation(t, y):
    return np.array([-y[1], y[0]])


def vdp_field(mu):
    cfg = ModelConfig(mu=mu, order=1)

    def fun(t, z):
        return rhs(z, None, cfg)

    return fun


def test_settings_validation():
    with pytest.raises(ValueError):
        IntegratorSettings(rtol=1.0)
    with pytest.raises(ValueError):
        IntegratorSettings(atol=0.0)
    with pytest.raises(ValueError):
        IntegratorSettings(max_steps=0)
    with pytest.raises(ValueError):
        IntegratorSettings(initial_step=-1.0)


def test_exponential_decay():
    settings = IntegratorSettings(rtol=1e-10, atol=1e-12)
    traj = integrate(exp_decay, [1.0], (0.0, 1.0), settings)
    assert traj(1.0)[0] == pytest.approx(math.exp(-1.0), rel=1e-10)


def test_rotation_returns_to_start():
    settings = IntegratorSettings(rtol=1e-10, atol=1e-12)
    traj = integrate(rotation, [1.0, 0.0], (0.0, 2.0 * math.pi), settings)
    assert np.max(np.abs(traj.states[-1] - [1.0, 0.0])) < 10 * settings.rtol


def test_stiff_vdp_one_period_completes():
    # stiffness ratio 1e4; endpoint must be stable under tolerance tightening
    loose = IntegratorSettings(rtol=1e-10, atol=1e-12)
    tight = IntegratorSettings(rtol=1e-11, atol=1e-13)
    span = (0.0, 1.63)
    end_loose = integrate(vdp_field(100.0), [2.0, 0.0], span, loose).states[-1]
    end_tight = integrate(vdp_field(100.0), [2.0, 0.0], span, tight).states[-1]
    assert np.max(np.abs(end_loose - end_tight)) < 1e-8


@pytest.mark.parametrize(
    "fun,y0,span",
    [(exp_decay, [1.0], (0.0, 1.0)), (rotation, [1.0, 0.0], (0.0, 6.0))],
)
def test_self_convergence(fun, y0, span):
    # halving the tolerances moves the endpoint by less than 10x the looser one
    loose = IntegratorSettings(rtol=2e-10, atol=2e-12)
    tight = IntegratorSettings(rtol=1e-10, atol=1e-12)
    end_loose = integrate(fun, y0, span, loose).states[-1]
    end_tight = integrate(fun, y0, span, tight).states[-1]
    assert np.max(np.abs(end_loose - end_tight)) < 10 * loose.rtol * np.abs(end_tight).max() + 10 * loose.atol


def test_interpolant_reproduces_knots():
    traj = integrate(rotation, [1.0, 0.0], (0.0, 5.0))
    for t, y in zip(traj.times, traj.states):
        np.testing.assert_allclose(traj(t), y, rtol=1e-12, atol=1e-14)


def test_dense_output_continuity_at_step_boundaries():
    settings = IntegratorSettings(rtol=1e-10, atol=1e-12)
    traj = integrate(vdp_field(1.0), [2.0, 0.0], (0.0, 6.0), settings)
    eps = 1e-13
    for t in traj.times[1:-1]:
        left = traj(t - eps)
        right = traj(t + eps)
        assert np.max(np.abs(left - right)) < settings.atol + settings.rtol * np.abs(left).max() + 1e-11


def test_step_limit_exceeded():
    with pytest.raises(StepLimitExceeded):
        integrate(vdp_field(100.0), [2.0, 0.0], (0.0, 1.6), IntegratorSettings(max_steps=50))


def test_non_finite_state_on_blowup():
    def blowup(t, y):
        return y * y

    with pytest.raises(NonFiniteState):
        integrate(blowup, [1.0], (0.0, 3.0))


def test_bad_span_rejected():
    with pytest.raises(ValueError):
        integrate(exp_decay, [1.0], (1.0, 0.0))


def section_y(t, y):
    return y[1]


def test_crossing_rotation_full_turn():
    traj = integrate(rotation, [1.0, 0.0], (0.0, 8.0))
    t_star, y_star = find_crossing(traj, section_y, "rising")
    assert t_star == pytest.approx(2.0 * math.pi, abs=1e-9)
    assert y_star[0] > 0


def test_no_crossing_constant_sign():
    traj = integrate(exp_decay, [1.0], (0.0, 1.0))
    with pytest.raises(NoCrossing):
        find_crossing(traj, lambda t, y: y[0], "rising")


def test_crossing_event_value_small():
    traj = integrate(rotation, [1.0, 0.0], (0.0, 8.0))
    t_star, y_star = find_crossing(traj, section_y, "rising")
    assert abs(y_star[1]) < 1e-12


def test_falling_direction():
    traj = integrate(rotation, [1.0, 0.0], (0.0, 8.0))
    t_star, _ = find_crossing(traj, section_y, "falling")
    assert t_star == pytest.approx(math.pi, abs=1e-9)


def test_successive_vdp_crossings_equal_period():
    # successive rising-section returns of the settled oscillator agree
    settings = IntegratorSettings(rtol=1e-11, atol=1e-13)
    fun = vdp_field(1.0)
    warm = integrate(fun, [2.0, 0.0], (0.0, 40.0), settings)
    start = warm.states[-1]
    traj = integrate(fun, start, (0.0, 21.0), settings)
    t1, _ = find_crossing(traj, section_y, "rising")
    t2, _ = find_crossing(traj, section_y, "rising", t_from=t1 + 1e-6)
    t3, _ = find_crossing(traj, section_y, "rising", t_from=t2 + 1e-6)
    assert t2 - t1 == pytest.approx(t3 - t2, abs=1e-8)


def test_rerun_finds_next_crossing_not_same():
    traj = integrate(rotation, [1.0, 0.0], (0.0, 15.0))
    t1, _ = find_crossing(traj, section_y, "rising")
    t2, _ = find_crossing(traj, section_y, "rising", t_from=t1 + 1e-9)
    assert t2 > t1 + 1.0
    assert t2 - t1 == pytest.approx(2.0 * math.pi, abs=1e-8)


def test_start_on_section_not_reported():
    # g(t0) = 0 exactly: the start point is not its own crossing
    traj = integrate(rotation, [1.0, 0.0], (0.0, 8.0))
    t_star, _ = find_crossing(traj, section_y, "rising")
    assert t_star > 1.0
