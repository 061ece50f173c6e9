import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gistcompress import tensor as T
from gistcompress.gradcheck import grad_check
from gistcompress.tensor import ContractError, Distribution, NumericError, Tensor
from primitive_cases import primitive_cases


def test_square_derivative():
    x = Tensor(3.0, requires_grad=True)
    y = x * x
    y.backward()
    assert x.grad == pytest.approx(6.0)


def test_backward_accumulates_until_zeroed():
    x = Tensor(3.0, requires_grad=True)
    y = x * x
    y.backward()
    y.backward()
    assert x.grad == pytest.approx(12.0)
    x.zero_grad()
    (x * x).backward()
    assert x.grad == pytest.approx(6.0)


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        T.backward(x * 2.0)


def test_every_reachable_tensor_gets_grad():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones((3, 2)), requires_grad=True)
    h = T.matmul(a, b)
    loss = T.tsum(T.gelu(h))
    loss.backward()
    for t in (a, b, h, loss):
        assert t.grad is not None and t.grad.shape == t.shape


def test_softmax_cross_entropy_gradient_identity(rng):
    logits = rng.normal(size=(1, 7))
    target = 4
    x = Tensor(logits, requires_grad=True)
    T.cross_entropy(x, [target], [True]).backward()
    p = np.exp(logits - logits.max())
    p /= p.sum()
    expected = p.copy()
    expected[0, target] -= 1.0
    np.testing.assert_allclose(x.grad, expected, atol=1e-6)


def test_matmul_matches_finite_differences(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    w = rng.normal(size=(3, 2))
    err = grad_check(lambda: T.tsum(T.matmul(a, b) * w), [a, b])
    assert err < 1e-4


# -- losses ----------------------------------------------------------------


def _dist(probs, mask=None):
    probs = np.asarray(probs, dtype=np.float64)
    if mask is None:
        mask = np.ones(probs.shape[:-1], dtype=bool)
    with T.float64_mode():
        return Distribution(Tensor(np.log(probs)), mask)


def test_kl_identical_uniform_is_zero():
    p = _dist([[0.25] * 4])
    assert float(T.kl_divergence(p, p).data) == pytest.approx(0.0, abs=1e-12)


def test_kl_hand_case_ln2():
    p = _dist([[1.0, 1e-300]])
    q = _dist([[0.5, 0.5]])
    assert float(T.kl_divergence(p, q).data) == pytest.approx(math.log(2), abs=1e-6)


def test_kl_masked_row_ignored():
    p = _dist([[1.0, 1e-300], [0.1, 0.9]], mask=[True, False])
    q = _dist([[0.5, 0.5], [0.9, 0.1]], mask=[True, False])
    assert float(T.kl_divergence(p, q).data) == pytest.approx(math.log(2), abs=1e-6)


def test_kl_reversed_direction():
    p = _dist([[0.2, 0.8]])
    q = _dist([[0.5, 0.5]])
    expected = 0.5 * math.log(0.5 / 0.2) + 0.5 * math.log(0.5 / 0.8)
    assert float(T.kl_divergence(p, q, direction="reversed").data) == pytest.approx(expected, abs=1e-9)


def test_kl_gradient_flows_into_p_only(rng):
    lp = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    p = Distribution(T.log_softmax(lp), np.ones(3, dtype=bool))
    q = Distribution(Tensor(np.log(np.full((3, 5), 0.2))), np.ones(3, dtype=bool))
    T.kl_divergence(p, q).backward()
    assert lp.grad is not None and np.abs(lp.grad).sum() > 0
    assert q.logprobs.grad is None


def test_kl_errors():
    p = _dist([[0.5, 0.5]])
    with pytest.raises(ContractError):
        T.kl_divergence(p, _dist([[0.2, 0.3, 0.5]]))
    with pytest.raises(ContractError):
        T.kl_divergence(_dist([[0.5, 0.5], [0.5, 0.5]], [True, False]), _dist([[0.5, 0.5], [0.5, 0.5]]))
    bad = Distribution(Tensor(np.array([[0.0, -np.inf]])), np.ones(1, dtype=bool))
    with pytest.raises(NumericError):
        T.kl_divergence(bad, p)
    attached = Distribution(Tensor(np.log([[0.5, 0.5]]), requires_grad=True), np.ones(1, dtype=bool))
    with pytest.raises(ContractError):
        T.kl_divergence(p, attached)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(1, 4),
    st.integers(2, 6),
    st.integers(0, 2**32 - 1),
)
def test_kl_self_zero_and_nonnegative(n, v, seed):
    rng = np.random.default_rng(seed)
    with T.float64_mode():
        lp = T.log_softmax(Tensor(rng.normal(scale=3.0, size=(n, v))))
        lq = T.log_softmax(Tensor(rng.normal(scale=3.0, size=(n, v))))
    mask = np.ones(n, dtype=bool)
    p, q = Distribution(lp, mask), Distribution(lq, mask)
    assert abs(float(T.kl_divergence(p, p).data)) <= 1e-9
    assert float(T.kl_divergence(p, q).data) >= -1e-9


def test_cross_entropy_zero_at_certain_target():
    logits = Tensor(np.array([[0.0, -1e4, -1e4]]))
    assert float(T.cross_entropy(logits, [0], [True]).data) == pytest.approx(0.0, abs=1e-6)


def test_cross_entropy_uniform_is_log_v():
    v = 11
    logits = Tensor(np.zeros((3, v)))
    assert float(T.cross_entropy(logits, [1, 2, 3], [True] * 3).data) == pytest.approx(math.log(v), rel=1e-6)


def test_cross_entropy_errors():
    logits = Tensor(np.zeros((2, 4)))
    with pytest.raises(ContractError, match="empty mask"):
        T.cross_entropy(logits, [0, 1], [False, False])
    with pytest.raises(ContractError):
        T.cross_entropy(logits, [0, 9], [True, True])


# -- normalisation properties ------------------------------------------------

finite_rows = arrays(
    np.float64,
    st.tuples(st.integers(1, 5), st.integers(1, 8)),
    elements=st.floats(-50, 50, allow_nan=False),
)


@given(finite_rows)
def test_softmax_rows_sum_to_one(x):
    out = T.softmax(Tensor(x)).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)


@given(finite_rows)
def test_log_softmax_rows_exp_sum_to_one(x):
    out = T.log_softmax(Tensor(x)).data
    np.testing.assert_allclose(np.exp(out.astype(np.float64)).sum(axis=-1), 1.0, atol=1e-5)


# -- gradient soundness over the primitive inventory ---------------------------


PRIMITIVES = sorted(primitive_cases(np.random.default_rng(0)))


@pytest.mark.parametrize("name", PRIMITIVES)
def test_primitive_gradients_sound(name):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        params, fn = primitive_cases(rng)[name]
        worst = max(worst, grad_check(fn, params, seed=seed))
    assert worst < 1e-4, f"{name}: {worst}"
