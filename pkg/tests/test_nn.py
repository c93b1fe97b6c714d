import itertools
import math

import numpy as np
import pytest

from seqtag import nn
from seqtag.nn import crf
from seqtag.nn.dropout import DropoutSpec, output_mask, recurrent_mask
from seqtag.nn.functional import NonFiniteError
from seqtag.nn.gradcheck import numerical_gradient, relative_error


def lstm_params(rng, d, u, scale=0.5):
    return {"W": rng.normal(0, scale, (d, 4 * u)), "U": rng.normal(0, scale, (u, 4 * u)),
            "b": rng.normal(0, scale, 4 * u)}


def test_lstm_zero_params_give_zero_states(rng):
    out, _ = nn.lstm_forward(nn.zero_lstm(3, 4), rng.normal(size=(5, 2, 3)))
    assert np.all(out == 0)


def test_lstm_single_unit_closed_form():
    p = {"W": np.array([[0.5, -0.3, 0.8, 0.2]]), "U": np.zeros((1, 4)), "b": np.array([0.1, 0.2, -0.1, 0.3])}
    x = 1.5
    z = x * p["W"][0] + p["b"]
    sig = lambda v: 1 / (1 + math.exp(-v))
    c = sig(z[0]) * math.tanh(z[3])
    h = sig(z[2]) * math.tanh(c)
    out, _ = nn.lstm_forward(p, np.array([[x]]))
    assert out[0, 0] == pytest.approx(h, abs=1e-15)


def test_lstm_zero_dropout_is_identity(rng):
    p = lstm_params(rng, 3, 4)
    x = rng.normal(size=(6, 2, 3))
    ref, _ = nn.lstm_forward(p, x)
    drop, _ = nn.lstm_forward(p, x, dropout=DropoutSpec("variational", 0.0, 0.0), rng=rng)
    assert np.array_equal(ref, drop)


def test_lstm_padding_carries_state(rng):
    p = lstm_params(rng, 2, 3)
    x = rng.normal(size=(4, 1, 2))
    full, _ = nn.lstm_forward(p, x[:2])
    padded, _ = nn.lstm_forward(p, x, mask=np.array([[1], [1], [0], [0]]))
    assert np.allclose(padded[3], full[1])


@pytest.mark.parametrize("seed", range(3))
def test_lstm_gradients(seed):
    rng = np.random.default_rng(seed)
    p = lstm_params(rng, 3, 2)
    x = rng.normal(size=(3, 2, 3))
    mask = np.array([[1, 1], [1, 1], [1, 0]])
    spec = DropoutSpec("variational", 0.25, 0.25)
    om = output_mask(spec, (3, 2, 2), rng)
    rm = recurrent_mask(spec, (2, 2), rng)
    w = rng.normal(size=(3, 2, 2))
    f = lambda: float(np.sum(nn.lstm_forward(p, x, mask, out_mask=om, rec_mask=rm)[0] * w))
    out, cache = nn.lstm_forward(p, x, mask, out_mask=om, rec_mask=rm)
    grads, dx = nn.lstm_backward(cache, w)
    for k in p:
        assert relative_error(grads[k], numerical_gradient(f, p[k])) < 1e-6
    assert relative_error(dx, numerical_gradient(f, x)) < 1e-6


def test_lstm_zero_upstream(rng):
    p = lstm_params(rng, 3, 2)
    _, cache = nn.lstm_forward(p, rng.normal(size=(4, 1, 3)))
    grads, dx = nn.lstm_backward(cache, np.zeros((4, 1, 2)))
    assert all(np.all(g == 0) for g in grads.values()) and np.all(dx == 0)


def test_lstm_non_finite_input(rng):
    x = np.full((2, 1, 3), np.nan)
    with pytest.raises(NonFiniteError):
        nn.lstm_forward(lstm_params(rng, 3, 2), x)


def test_reverse_index_is_involution():
    rev = nn.lstm.reverse_index(np.array([3, 1, 4]), 4)
    x = np.arange(12.0).reshape(4, 3, 1)
    back = nn.lstm.reverse_padded(nn.lstm.reverse_padded(x, rev), rev)
    assert np.array_equal(back, x)
    assert list(rev[:, 0]) == [2, 1, 0, 3]


def test_bilstm_gradients(rng):
    fw, bw = lstm_params(rng, 3, 2), lstm_params(rng, 3, 2)
    x = rng.normal(size=(4, 2, 3))
    lengths = np.array([4, 2])
    w = rng.normal(size=(4, 2, 4)) * (np.arange(4)[:, None] < lengths)[:, :, None]
    f = lambda: float(np.sum(nn.bilstm_forward(fw, bw, x, lengths)[0] * w))
    _, cache = nn.bilstm_forward(fw, bw, x, lengths)
    g_f, g_b, dx = nn.bilstm_backward(cache, w)
    for k in fw:
        assert relative_error(g_f[k], numerical_gradient(f, fw[k])) < 1e-6
        assert relative_error(g_b[k], numerical_gradient(f, bw[k])) < 1e-6
    assert relative_error(dx, numerical_gradient(f, x)) < 1e-6


def test_naive_mask_changes_per_step_variational_does_not(rng):
    naive = output_mask(DropoutSpec("naive", 0.5, 0.0), (20, 1, 10), rng)
    var = output_mask(DropoutSpec("variational", 0.5, 0.0), (20, 1, 10), rng)
    assert not np.all(naive == naive[0])
    assert np.all(var == var[0])
    assert recurrent_mask(DropoutSpec("naive", 0.5, 0.5), (1, 10), rng) is None


def test_dropout_spec_validates():
    with pytest.raises(ValueError):
        DropoutSpec("variational", 0.3, 0.0)
    with pytest.raises(ValueError):
        DropoutSpec("zoneout")


def test_char_cnn_examples(rng):
    zero = {"W": np.zeros((90, 30)), "b": np.arange(30.0)}
    out, _ = nn.char_cnn_forward(zero, rng.normal(size=(2, 5, 30)), np.array([5, 2]))
    assert np.array_equal(out, np.tile(np.arange(30.0), (2, 1)))
    p = nn.init_char_cnn(rng)
    x = rng.normal(size=(1, 3, 30))
    out, _ = nn.char_cnn_forward(p, x)
    assert np.allclose(out[0], x.reshape(-1) @ p["W"] + p["b"])


def test_char_cnn_gradients(rng):
    p = {"W": rng.normal(size=(3 * 4, 5)), "b": rng.normal(size=5)}
    x = rng.normal(size=(3, 6, 4))
    lengths = np.array([6, 2, 4])
    w = rng.normal(size=(3, 5))
    f = lambda: float(np.sum(nn.char_cnn_forward(p, x, lengths)[0] * w))
    _, cache = nn.char_cnn_forward(p, x, lengths)
    grads, dx = nn.char_cnn_backward(cache, w)
    for k in p:
        assert relative_error(grads[k], numerical_gradient(f, p[k])) < 1e-6
    assert relative_error(dx, numerical_gradient(f, x)) < 1e-6


def test_char_bilstm_examples(rng):
    zero = {"fw": nn.zero_lstm(30, 25), "bw": nn.zero_lstm(30, 25)}
    out, _ = nn.char_bilstm_forward(zero, rng.normal(size=(2, 4, 30)))
    assert out.shape == (2, 50) and np.all(out == 0)
    p = nn.init_char_bilstm(rng)
    p["bw"] = {k: v.copy() for k, v in p["fw"].items()}
    out, _ = nn.char_bilstm_forward(p, rng.normal(size=(1, 1, 30)))
    assert np.allclose(out[0, :25], out[0, 25:])


def test_char_bilstm_gradients(rng):
    p = {"fw": lstm_params(rng, 4, 3), "bw": lstm_params(rng, 4, 3)}
    x = rng.normal(size=(2, 5, 4))
    lengths = np.array([5, 3])
    w = rng.normal(size=(2, 6))
    f = lambda: float(np.sum(nn.char_bilstm_forward(p, x, lengths)[0] * w))
    _, cache = nn.char_bilstm_forward(p, x, lengths)
    grads, dx = nn.char_bilstm_backward(cache, w)
    for d in ("fw", "bw"):
        for k in p[d]:
            assert relative_error(grads[d][k], numerical_gradient(f, p[d][k])) < 1e-6
    assert relative_error(dx, numerical_gradient(f, x)) < 1e-6


def brute_force(em, trans):
    T, K = em.shape
    scores = {path: crf.path_score(em, path, trans) for path in itertools.product(range(K), repeat=T)}
    logz = np.logaddexp.reduce(list(scores.values()))
    return logz, max(scores, key=scores.get)


def test_crf_uniform_example():
    em = np.zeros((2, 2))
    trans = crf.init_transitions(2)
    loss, _, _ = nn.crf_negative_log_likelihood(em, [0, 1], trans)
    assert crf.log_partition(em, trans) == pytest.approx(math.log(4), abs=1e-12)
    assert loss == pytest.approx(math.log(4), abs=1e-12)
    assert nn.crf_viterbi(np.zeros((3, 3)), crf.init_transitions(3))[0] == [0, 0, 0]
    assert nn.crf_viterbi(np.ones((4, 1)), crf.init_transitions(1))[0] == [0, 0, 0, 0]


@pytest.mark.parametrize("seed", range(5))
def test_crf_against_enumeration(seed):
    rng = np.random.default_rng(seed)
    T, K = int(rng.integers(1, 6)), int(rng.integers(1, 5))
    em = rng.normal(size=(T, K))
    trans = crf.init_transitions(K, rng, 1.0)
    logz, best = brute_force(em, trans)
    assert abs(crf.log_partition(em, trans) - logz) < 1e-8
    assert tuple(nn.crf_viterbi(em, trans)[0]) == best


def test_crf_gradients(rng):
    em = rng.normal(size=(4, 3))
    trans = crf.init_transitions(3, rng, 1.0)
    tags = [2, 0, 0, 1]
    f = lambda: nn.crf_negative_log_likelihood(em, tags, trans)[0]
    _, d_em, d_tr = nn.crf_negative_log_likelihood(em, tags, trans)
    assert relative_error(d_em, numerical_gradient(f, em)) < 1e-6
    mask = crf.transition_grad_mask(3).astype(bool)
    assert relative_error(d_tr[mask], numerical_gradient(f, trans)[mask]) < 1e-6


def test_crf_strong_gold_emissions_decode_gold(rng):
    gold = [1, 0, 2, 2]
    em = rng.normal(size=(4, 3))
    em[np.arange(4), gold] += 10
    assert nn.crf_viterbi(em, crf.init_transitions(3, rng, 1.0))[0] == gold


def test_dense_softmax_examples(rng):
    K = 5
    loss, grads, preds = nn.dense_softmax(rng.normal(size=(3, 4)), nn.init_dense(rng, 4, K, zero=True), [0, 1, 2])
    assert loss == pytest.approx(math.log(K))
    assert list(preds) == [0, 0, 0]
    loss, d, probs, _ = nn.softmax_cross_entropy(np.array([[1000.0, 0.0, 0.0]]), [0])
    assert probs[0, 0] == pytest.approx(1.0) and loss == pytest.approx(0.0, abs=1e-12)


def test_dense_softmax_gradients(rng):
    x = rng.normal(size=(4, 3))
    p = {"W": rng.normal(size=(3, 4)), "b": rng.normal(size=4)}
    labels = [0, 3, 1, 1]
    f = lambda: nn.dense_softmax(x, p, labels)[0]
    _, grads, _ = nn.dense_softmax(x, p, labels)
    assert relative_error(grads["W"], numerical_gradient(f, p["W"])) < 1e-6
    assert relative_error(grads["b"], numerical_gradient(f, p["b"])) < 1e-6
    assert relative_error(grads["inputs"], numerical_gradient(f, x)) < 1e-6
