import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqtag.nn.functional import NonFiniteError
from seqtag.optim import (
    ADAM_WARM_SCHEDULE, GradientPolicy, LrSchedule, Optimizer, apply_policy, global_norm,
    scheduled_lr,
)


def test_clip_example():
    out = apply_policy({"g": np.array([2.0, -0.5])}, GradientPolicy("clip_elementwise", 1.0))
    assert np.array_equal(out["g"], [1.0, -0.5])


def test_normalize_examples():
    out = apply_policy({"g": np.array([3.0, 4.0])}, GradientPolicy("normalize_l2", 1.0))
    assert np.allclose(out["g"], [0.6, 0.8], atol=1e-15)
    g = {"g": np.array([3.0, 4.0])}
    assert np.array_equal(apply_policy(g, GradientPolicy("normalize_l2", 5.0))["g"], g["g"])


def test_normalize_is_global():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    out = apply_policy(g, GradientPolicy("normalize_l2", 1.0))
    assert out["a"][0] == pytest.approx(0.6) and out["b"][0] == pytest.approx(0.8)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=10), st.sampled_from([1.0, 3.0, 5.0, 10.0]))
def test_policy_properties(values, tau):
    g = {"g": np.array(values)}
    norm = apply_policy(g, GradientPolicy("normalize_l2", tau))
    assert abs(global_norm(norm) - min(global_norm(g), tau)) < 1e-12
    again = apply_policy(norm, GradientPolicy("normalize_l2", tau))
    assert np.allclose(again["g"], norm["g"], rtol=0, atol=1e-12)
    clip = apply_policy(g, GradientPolicy("clip_elementwise", tau))
    assert np.all(np.abs(clip["g"]) <= tau)
    assert np.array_equal(apply_policy(clip, GradientPolicy("clip_elementwise", tau))["g"], clip["g"])


def test_policy_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        apply_policy({"g": np.array([np.inf])}, GradientPolicy("none"))


def test_sgd_example():
    p = {"w": np.array([1.0])}
    Optimizer("sgd").step(p, {"w": np.array([2.0])}, lr=0.1)
    assert p["w"][0] == pytest.approx(0.8)


def test_adam_first_step():
    p = {"w": np.array([0.0])}
    Optimizer("adam").step(p, {"w": np.array([0.5])})
    assert abs(p["w"][0] - (-0.001 * 0.5 / (0.5 + 1e-8))) < 1e-12


def test_nadam_differs_from_adam_on_second_step():
    ws = {}
    for kind in ("adam", "nadam"):
        opt = Optimizer(kind, lr=0.001)
        p = {"w": np.array([1.0])}
        for _ in range(2):
            opt.step(p, {"w": 2 * p["w"]})
        ws[kind] = p["w"][0]
    assert ws["adam"] != ws["nadam"]


def test_nadam_first_step_by_hand():
    b1, b2, eps, lr, d = 0.9, 0.999, 1e-8, 0.002, 0.004
    g = 0.5
    mu1 = b1 * (1 - 0.5 * 0.96 ** d)
    mu2 = b1 * (1 - 0.5 * 0.96 ** (2 * d))
    m, v = (1 - b1) * g, (1 - b2) * g * g
    m_bar = (1 - mu1) * g / (1 - mu1) + mu2 * m / (1 - mu1 * mu2)
    expected = -lr * m_bar / (np.sqrt(v / (1 - b2)) + eps)
    p = {"w": np.array([0.0])}
    Optimizer("nadam").step(p, {"w": np.array([g])})
    assert p["w"][0] == pytest.approx(expected, abs=1e-15)


def test_step_counts_once_and_touches_only_given_params():
    opt = Optimizer("adam")
    p = {"a": np.ones(2), "b": np.ones(2)}
    opt.step(p, {"a": np.ones(2)})
    assert opt.state.t == 1 and np.array_equal(p["b"], np.ones(2))
    with pytest.raises(ValueError):
        opt.step(p, {"a": np.ones(2)}, lr=0.0)


def test_optimizer_is_deterministic():
    out = []
    for _ in range(2):
        p = {"w": np.array([1.0, -2.0])}
        opt = Optimizer("rmsprop")
        for _ in range(5):
            opt.step(p, {"w": 2 * p["w"]})
        out.append(p["w"].copy())
    assert np.array_equal(out[0], out[1])


def test_schedule_examples():
    assert [scheduled_lr(ADAM_WARM_SCHEDULE, e) for e in (2, 5, 9)] == [0.01, 0.005, 0.001]
    with pytest.raises(ValueError):
        LrSchedule(((1, 3, 0.01), (5, None, 0.001)))
    with pytest.raises(ValueError):
        LrSchedule(((1, 3, 0.01),))
