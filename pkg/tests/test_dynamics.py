from __future__ import annotations

import numpy as np
import pytest

from suscept.dynamics import (
    ModelConfig,
    PerturbationIndex,
    enumerate_parameters,
    jacobian_params,
    jacobian_state,
    param_count,
    rhs,
    slow_count,
    zero_parameters,
)


def test_enumeration_order_four_has_fourteen_indices():
    assert len(enumerate_parameters(4)) == 14
    assert param_count(4) == 14


def test_enumeration_order_one():
    assert enumerate_parameters(1) == [PerturbationIndex(0, 0), PerturbationIndex(0, 1)]


def test_enumeration_order_two_exact():
    assert enumerate_parameters(2) == [
        PerturbationIndex(0, 0),
        PerturbationIndex(0, 1),
        PerturbationIndex(0, 2),
        PerturbationIndex(1, 1),
        PerturbationIndex(2, 0),
    ]


def test_mu_duplicating_index_excluded():
    for order in range(1, 9):
        assert PerturbationIndex(1, 0) not in enumerate_parameters(order)


def test_order_zero_rejected():
    with pytest.raises(ValueError):
        enumerate_parameters(0)
    with pytest.raises(ValueError):
        ModelConfig(mu=1.0, order=0)


@pytest.mark.parametrize("order", range(1, 9))
def test_count_formula_and_slow_block(order):
    idx = enumerate_parameters(order)
    assert len(idx) == (order + 1) * (order + 2) // 2 - 1 == param_count(order)
    slow = [i for i in idx if i.is_slow]
    assert len(slow) == slow_count(order) == order + 1
    # canonical ordering: ascending m then n, slow block first
    assert idx[: order + 1] == slow
    assert idx == sorted(idx)


def test_rhs_on_critical_manifold():
    cfg = ModelConfig(mu=1.0, order=4)
    out = rhs(np.array([1.0, 2.0 / 3.0]), None, cfg)
    np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-15)


def test_rhs_fast_branch_value():
    cfg = ModelConfig(mu=10.0, order=4)
    out = rhs(np.array([2.0, 0.0]), None, cfg)
    np.testing.assert_allclose(out, [-200.0 / 3.0, 2.0], rtol=1e-15)


def test_fast_terms_vanish_on_critical_manifold():
    # every fast-only perturbation leaves the field bit-identical on u = 0
    cfg = ModelConfig(mu=1.0, order=4)
    idx = enumerate_parameters(4)
    rng = np.random.default_rng(7)
    for _ in range(50):
        x = rng.uniform(-3, 3)
        state = np.array([x, x - x * x * x / 3.0])
        a = rng.uniform(-1, 1, size=len(idx))
        a[[i.is_slow for i in idx]] = 0.0
        assert np.array_equal(rhs(state, a, cfg), rhs(state, None, cfg))


def test_jacobian_state_values():
    cfg = ModelConfig(mu=1.0, order=4)
    np.testing.assert_allclose(
        jacobian_state(np.zeros(2), None, cfg), [[1.0, -1.0], [1.0, 0.0]], atol=1e-15
    )
    cfg10 = ModelConfig(mu=10.0, order=4)
    np.testing.assert_allclose(
        jacobian_state(np.array([2.0, 0.0]), None, cfg10),
        [[-300.0, -100.0], [1.0, 0.0]],
        rtol=1e-14,
    )


def test_jacobian_state_bottom_row_constant():
    cfg = ModelConfig(mu=3.0, order=3)
    rng = np.random.default_rng(3)
    for _ in range(20):
        state = rng.uniform(-3, 3, size=2)
        a = rng.uniform(-0.01, 0.01, size=cfg.n_params)
        np.testing.assert_array_equal(jacobian_state(state, a, cfg)[1], [1.0, 0.0])


def test_jacobian_params_columns():
    cfg = ModelConfig(mu=1.0, order=4)
    idx = enumerate_parameters(4)
    J = jacobian_params(np.array([2.0, 0.0]), cfg)
    col = {i: k for k, i in enumerate(idx)}
    assert J[0, col[PerturbationIndex(0, 2)]] == pytest.approx(4.0)
    assert J[0, col[PerturbationIndex(0, 0)]] == pytest.approx(1.0)
    assert np.all(J[1] == 0.0)
    # fast columns vanish on the critical manifold
    x = 1.7
    on_manifold = jacobian_params(np.array([x, x - x**3 / 3.0]), cfg)
    for k, i in enumerate(idx):
        if not i.is_slow:
            assert on_manifold[0, k] == 0.0


def test_constant_column_is_mu_squared_everywhere():
    cfg = ModelConfig(mu=7.0, order=2)
    rng = np.random.default_rng(11)
    for _ in range(10):
        state = rng.uniform(-3, 3, size=2)
        assert jacobian_params(state, cfg)[0, 0] == pytest.approx(49.0)


def _fd_jacobians(state, a, cfg, h=1e-6):
    jac_z = np.empty((2, 2))
    for j in range(2):
        dz = np.zeros(2)
        dz[j] = h
        jac_z[:, j] = (rhs(state + dz, a, cfg) - rhs(state - dz, a, cfg)) / (2 * h)
    P = cfg.n_params
    jac_a = np.empty((2, P))
    for j in range(P):
        da = np.zeros(P)
        da[j] = h
        jac_a[:, j] = (rhs(state, a + da, cfg) - rhs(state, a - da, cfg)) / (2 * h)
    return jac_z, jac_a


@pytest.mark.parametrize("mu", [1.0, 10.0])
def test_jacobians_match_finite_differences(mu):
    cfg = ModelConfig(mu=mu, order=4)
    rng = np.random.default_rng(int(mu))
    for _ in range(10):
        state = rng.uniform(-3, 3, size=2)
        a = rng.uniform(-0.01, 0.01, size=cfg.n_params)
        fd_z, fd_a = _fd_jacobians(state, a, cfg)
        an_z = jacobian_state(state, a, cfg)
        an_a = jacobian_params(state, cfg)
        np.testing.assert_allclose(an_z, fd_z, rtol=1e-6, atol=1e-6 * np.abs(fd_z).max())
        # parameter columns: analytic derivative is exact in a, so compare
        # against the same tolerance on the shared scale
        np.testing.assert_allclose(an_a, fd_a, rtol=1e-6, atol=1e-6 * np.abs(fd_a).max())


def test_parameter_vector_length_enforced():
    cfg = ModelConfig(mu=1.0, order=4)
    with pytest.raises(ValueError):
        rhs(np.zeros(2), np.zeros(5), cfg)


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(mu=0.0)
    with pytest.raises(ValueError):
        ModelConfig(mu=-1.0)
    assert ModelConfig(mu=10.0).epsilon == pytest.approx(0.01)
    assert zero_parameters(4).shape == (14,)
