"""Small randomized cases for every tape primitive, shared by the gradient tests."""

import numpy as np

from gistcompress import tensor as T
from gistcompress.tensor import Tensor


def primitive_cases(rng):
    """Each case: (params, loss closure). Losses weight outputs randomly."""

    def weighted(out_fn, *ps):
        w = rng.normal(size=out_fn().shape)
        return list(ps), lambda: T.tsum(T.mul(out_fn(), w))

    def p(*shape, positive=False):
        x = rng.normal(size=shape)
        return Tensor(np.abs(x) + 0.5 if positive else x, requires_grad=True)

    n, m, k = (int(v) for v in rng.integers(3, 6, size=3))
    a, b, c = p(n, m), p(m, k), p(n, m)
    bias = p(m)
    x3 = p(2, n, m)
    gamma, beta = p(m), p(m)
    emb = p(7, m)
    ids = rng.integers(0, 7, size=(2, n))
    pos = p(n, m, positive=True)
    idx = rng.integers(0, m, size=n)
    return {
        "matmul": weighted(lambda: T.matmul(a, b), a, b),
        "matmul_batched": weighted(lambda: T.matmul(x3, b), x3, b),
        "matmul_4d": weighted(lambda: T.matmul(x3, T.swapaxes(x3, -1, -2)), x3),
        "add_broadcast": weighted(lambda: T.add(a, bias), a, bias),
        "sub": weighted(lambda: T.sub(a, c), a, c),
        "mul": weighted(lambda: T.mul(a, c), a, c),
        "neg": weighted(lambda: T.neg(a), a),
        "exp": weighted(lambda: T.exp(a), a),
        "log": weighted(lambda: T.log(pos), pos),
        "gelu": weighted(lambda: T.gelu(a), a),
        "softmax": weighted(lambda: T.softmax(a), a),
        "log_softmax": weighted(lambda: T.log_softmax(x3), x3),
        "layer_norm": weighted(lambda: T.layer_norm(x3, gamma, beta), x3, gamma, beta),
        "embedding": weighted(lambda: T.embedding(emb, ids), emb),
        "concat": weighted(lambda: T.concat([a, c], axis=0), a, c),
        "getitem": weighted(lambda: x3[:, 1:, :], x3),
        "reshape": weighted(lambda: T.reshape(x3, (2, n * m)), x3),
        "transpose": weighted(lambda: T.transpose(x3, (2, 0, 1)), x3),
        "broadcast_to": weighted(lambda: T.broadcast_to(bias, (3, n, m)), bias),
        "sum_axis": weighted(lambda: T.tsum(x3, axis=1), x3),
        "mean": weighted(lambda: T.mean(x3, axis=-1, keepdims=True), x3),
        "take_last": weighted(lambda: T.take_last(a, idx), a),
    }
