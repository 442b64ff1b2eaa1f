import numpy as np
import pytest

from eegfactor.autodiff import Tensor
from eegfactor.optim import AdamW


def make_param(value, grad=None):
    p = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
    if grad is not None:
        p.grad = np.asarray(grad, dtype=np.float64)
    return p


def test_single_step_hand_value():
    # p=1, g=1, step 1: m_hat = v_hat = 1, so
    # p' = 1 - lr * 1/(sqrt(1)+eps) - lr*wd*1 = 1 - 0.001/(1+1e-8) - 1e-5
    p = make_param([1.0], grad=[1.0])
    opt = AdamW({"p": p}, lr=0.001, weight_decay=0.01)
    opt.step()
    expected = 1.0 - 0.001 / (1.0 + 1e-8) - 0.001 * 0.01 * 1.0
    assert abs(p.data[0] - expected) < 1e-12


def test_zero_grad_zero_decay_is_identity():
    p = make_param([3.0], grad=[0.0])
    opt = AdamW({"p": p}, lr=0.001, weight_decay=0.0)
    opt.step()
    assert p.data[0] == 3.0


def test_pure_decoupled_decay():
    p = make_param([1.0], grad=[0.0])
    opt = AdamW({"p": p}, lr=0.001, weight_decay=0.01)
    opt.step()
    assert abs(p.data[0] - 0.99999) < 1e-15


def test_missing_grad_treated_as_zero():
    p = make_param([2.0])  # grad never set
    opt = AdamW({"p": p}, lr=0.001, weight_decay=0.0)
    opt.step()
    assert p.data[0] == 2.0


def test_decay_uses_pre_update_value():
    # With a large gradient the decay term must still be lr*wd*p_old,
    # not lr*wd*(p_old - gradient_update).
    p = make_param([1.0], grad=[100.0])
    opt = AdamW({"p": p}, lr=0.1, weight_decay=0.5)
    opt.step()
    # m_hat/sqrt(v_hat) = 100/100 = 1 (eps negligible at 1e-8 rel)
    expected = 1.0 - 0.1 * (100.0 / (100.0 + 1e-8)) - 0.1 * 0.5 * 1.0
    assert abs(p.data[0] - expected) < 1e-12


def test_nonfinite_gradient_raises():
    p = make_param([1.0], grad=[float("inf")])
    opt = AdamW({"p": p})
    with pytest.raises(FloatingPointError):
        opt.step()


def test_bias_correction_over_steps():
    # Constant gradient g: m_hat == g and v_hat == g^2 at every step, so each
    # update is lr * g/(|g|+eps) + decay regardless of beta warm-up.
    p = make_param([0.0], grad=[2.0])
    opt = AdamW({"p": p}, lr=0.01, weight_decay=0.0)
    for k in range(1, 6):
        opt.step()
        p.grad = np.array([2.0])
        assert abs(p.data[0] - (-0.01 * k)) < 1e-9


def test_zero_grad_clears():
    p = make_param([1.0], grad=[1.0])
    opt = AdamW({"p": p})
    opt.zero_grad()
    assert p.grad is None or np.all(p.grad == 0.0)
