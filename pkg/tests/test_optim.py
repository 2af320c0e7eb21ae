import math

import numpy as np
import pytest

from localhealth.optim import OptimizerState, TrainConfig, adamw_step, lr_schedule


def test_zero_grad_zero_decay_is_identity():
    cfg = TrainConfig(weight_decay=0.0)
    theta = np.array([1.5, -2.0, 0.25])
    theta2, state = adamw_step(theta, np.zeros(3), OptimizerState.zeros(3), 1e-3, cfg)
    assert np.array_equal(theta2, theta)
    assert state.t == 1


def test_single_step_hand_derived():
    # theta=1, g=1, lr=0.1, decay=0.1, defaults beta/eps:
    # m_hat=1, v_hat=1 -> theta' = 1 - 0.1*(1/(1+1e-8) + 0.1*1)
    cfg = TrainConfig(weight_decay=0.1)
    theta2, _ = adamw_step(np.array([1.0]), np.array([1.0]), OptimizerState.zeros(1), 0.1, cfg)
    expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8) + 0.1)
    assert abs(theta2[0] - expected) < 1e-12


def test_decoupled_weight_decay():
    cfg = TrainConfig(weight_decay=0.3)
    theta = np.array([2.0, -4.0])
    lr = 0.01
    theta2, _ = adamw_step(theta, np.zeros(2), OptimizerState.zeros(2), lr, cfg)
    assert np.allclose(theta2, theta - lr * 0.3 * theta, rtol=0, atol=1e-15)


def test_two_steps_bias_correction():
    # second step with constant gradient: m=g, v=g^2 after correction -> unit step direction
    cfg = TrainConfig(weight_decay=0.0)
    theta = np.array([0.0])
    state = OptimizerState.zeros(1)
    g = np.array([0.5])
    theta, state = adamw_step(theta, g, state, 0.1, cfg)
    theta, state = adamw_step(theta, g, state, 0.1, cfg)
    # with constant gradient, m_hat/v_hat^0.5 == sign(g) regardless of magnitude
    assert abs(theta[0] + 0.2 * (0.5 / (0.5 + 1e-8))) < 1e-9
    assert state.t == 2
    assert np.all(state.v >= 0.0)


def test_nonfinite_grads_rejected():
    cfg = TrainConfig()
    with pytest.raises(FloatingPointError):
        adamw_step(np.array([1.0]), np.array([np.nan]), OptimizerState.zeros(1), 1e-3, cfg)
    with pytest.raises(ValueError):
        adamw_step(np.array([1.0]), np.array([1.0, 2.0]), OptimizerState.zeros(1), 1e-3, cfg)


def test_step_is_pure():
    cfg = TrainConfig()
    theta = np.array([1.0])
    state = OptimizerState.zeros(1)
    adamw_step(theta, np.array([1.0]), state, 0.1, cfg)
    assert theta[0] == 1.0
    assert state.t == 0 and state.m[0] == 0.0


def test_lr_schedule_endpoints():
    cfg = TrainConfig(peak_lr=1e-3, warmup_frac=0.2)
    total = 1000
    warmup = math.ceil(0.2 * total)
    assert lr_schedule(0, total, cfg) == 0.0
    assert lr_schedule(warmup, total, cfg) == 1e-3
    assert lr_schedule(total, total, cfg) == 0.0


def test_lr_schedule_linear_interpolation():
    cfg = TrainConfig(peak_lr=1e-3, warmup_frac=0.2)
    total = 1000
    warmup = math.ceil(0.2 * total)
    assert abs(lr_schedule(warmup // 2, total, cfg) - 1e-3 * (warmup // 2) / warmup) < 1e-18
    mid_decay = (warmup + total) // 2
    assert abs(lr_schedule(mid_decay, total, cfg) - 0.5e-3) < 1e-12
    with pytest.raises(ValueError):
        lr_schedule(-1, total, cfg)
    with pytest.raises(ValueError):
        lr_schedule(total + 1, total, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(warmup_frac=0.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
