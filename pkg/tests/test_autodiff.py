import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import numeric_grad, rel_error, rnn_reference
from seqlab.autodiff import DimensionError, GRUCell, LSTMCell, Tensor, no_grad, parameter
from seqlab.autodiff import functional as F

TOL = 1e-4


def gradcheck(fn, *shapes, seed=0, positive=False):
    """Compare backprop of sum(fn(*xs) * R) against central differences for every input."""
    rng = np.random.default_rng(seed)
    xs = [parameter(rng.uniform(0.5, 1.5, s) if positive else rng.normal(0, 1, s)) for s in shapes]
    out = fn(*xs)
    weights = rng.normal(0, 1, out.shape)

    def loss():
        with no_grad():
            return float((fn(*xs).data * weights).sum())

    (fn(*xs) * weights).sum().backward()
    for x in xs:
        num = numeric_grad(loss, x.data)
        assert rel_error(x.grad, num) < TOL, (fn, x.shape)


OP_CASES = [
    (lambda a, b: a + b, [(3, 4), (4,)]),
    (lambda a, b: a - b, [(3, 1), (3, 4)]),
    (lambda a, b: a * b, [(2, 3), (2, 3)]),
    (lambda a: -a, [(5,)]),
    (lambda a: 2.0 - a * 3.0, [(2, 2)]),
    (lambda a, b: a @ b, [(3, 4), (4, 2)]),
    (lambda a: a[1:, ::2], [(3, 5)]),
    (lambda a: a[np.array([0, 2, 0])], [(3, 4)]),
    (lambda a: a.sum(axis=1), [(3, 4)]),
    (lambda a: a.mean(axis=0, keepdims=True), [(3, 4)]),
    (lambda a: a.max(axis=1), [(3, 4)]),
    (lambda a: a.reshape(4, 3), [(2, 6)]),
    (lambda a: a.transpose(2, 0, 1), [(2, 3, 4)]),
    (lambda a: a.T, [(2, 3)]),
    (lambda a: a.exp(), [(3,)]),
    (lambda a: a.tanh(), [(3, 2)]),
    (lambda a: a.sigmoid(), [(3, 2)]),
    (lambda a: F.relu(a + 0.05), [(4, 3)]),
    (lambda x, w, b: F.linear(x, w, b), [(2, 3, 4), (4, 5), (5,)]),
    (lambda a, b: F.matmul(a, b), [(2, 3), (3, 3)]),
    (lambda a, b: F.concat([a, b], axis=1), [(2, 3), (2, 1)]),
    (lambda a, b: F.stack([a, b], axis=1), [(2, 3), (2, 3)]),
    (lambda a, b: F.where(np.array([[True, False, True]]), a, b), [(2, 3), (2, 3)]),
    (lambda a: F.mask_fill(a, np.array([True, False, False]), -5.0), [(2, 3)]),
    (lambda a: F.logsumexp(a, axis=1), [(3, 4)]),
    (lambda a: F.softmax(a, axis=0), [(3, 4)]),
    (lambda a: F.log_softmax(a, axis=-1), [(2, 5)]),
    (lambda a: F.gather(a, np.array([[1], [0], [2]]), axis=1), [(3, 4)]),
    (lambda t: F.embedding_lookup(t, np.array([[1, 2], [2, 3]])), [(5, 3)]),
    (lambda x, k, b: F.conv1d(x, k, b), [(2, 5, 3), (3, 3, 4), (4,)]),
    (lambda x, k, b: F.conv1d_maxpool(x, k, b, np.array([[1, 1, 1, 0], [1, 1, 0, 0]], bool)),
     [(2, 4, 3), (3, 3, 2), (2,)]),
]
POSITIVE_CASES = [
    (lambda a: a.log(), [(3, 2)]),
    (lambda a, b: a / b, [(2, 3), (2, 3)]),
    (lambda a: 1.0 / a, [(4,)]),
    (lambda a: a ** 1.5, [(3,)]),
]


@pytest.mark.parametrize("fn,shapes", OP_CASES)
def test_op_gradients(fn, shapes):
    gradcheck(fn, *shapes)


@pytest.mark.parametrize("fn,shapes", POSITIVE_CASES)
def test_positive_domain_ops(fn, shapes):
    gradcheck(fn, *shapes, positive=True)


def test_recurrent_cell_gradients():
    H = 3
    gradcheck(lambda x, h, c, wi, wh, b: F.concat(list(F.lstm_cell(x, h, c, wi, wh, b)), axis=1),
              (2, 4), (2, H), (2, H), (4, 4 * H), (H, 4 * H), (4 * H,))
    gradcheck(lambda x, h, wi, wh, bi, bh: F.gru_cell(x, h, wi, wh, bi, bh),
              (2, 4), (2, H), (4, 3 * H), (H, 3 * H), (3 * H,), (3 * H,))


@pytest.mark.parametrize("cell_cls", [LSTMCell, GRUCell])
def test_masked_scan_gradients(cell_cls):
    rng = np.random.default_rng(1)
    cell = cell_cls(rng, 3, 2)
    fwd = cell_cls(rng, 3, 2)
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=bool)
    x = parameter(rng.normal(0, 1, (2, 4, 3)))
    weights = rng.normal(0, 1, (2, 4, 4))

    def run():
        out, final = F.bidirectional_scan(x, fwd, cell, mask)
        return (out * weights).sum() + final.sum()

    run().backward()
    for p in [x, *cell.parameters().values(), *fwd.parameters().values()]:
        def loss():
            with no_grad():
                return float(run().data)
        assert rel_error(p.grad, numeric_grad(loss, p.data)) < TOL


@pytest.mark.parametrize("kind", ["LSTM", "GRU"])
def test_scan_matches_manual_unroll(kind):
    rng = np.random.default_rng(2)
    cell = (LSTMCell if kind == "LSTM" else GRUCell)(rng, 3, 4)
    cell.w_ih.data += rng.normal(0, 0.1, cell.w_ih.shape)
    x = rng.normal(0, 1, (1, 5, 3))
    out, final = F.scan(cell, Tensor(x))
    if kind == "LSTM":
        ref = rnn_reference(kind, x[0], cell.w_ih.data, cell.w_hh.data, cell.bias.data, np.zeros(16))
    else:
        ref = rnn_reference(kind, x[0], cell.w_ih.data, cell.w_hh.data, cell.b_ih.data, cell.b_hh.data)
    np.testing.assert_allclose(out.data[0], ref, atol=1e-12)
    np.testing.assert_allclose(final.data[0], ref[-1], atol=1e-12)


def test_scan_carries_state_through_padding():
    rng = np.random.default_rng(3)
    cell = LSTMCell(rng, 2, 3)
    x = rng.normal(0, 1, (2, 4, 2))
    x[1, 2:] = 99.0  # garbage under the mask
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=bool)
    out, final = F.scan(cell, Tensor(x), mask)
    short, short_final = F.scan(cell, Tensor(x[1:, :2]))
    np.testing.assert_allclose(final.data[1], short_final.data[0])
    np.testing.assert_allclose(out.data[1, :2], short.data[0])
    assert np.all(out.data[1, 2:] == 0)


def test_gradient_accumulates_across_uses():
    a = parameter(np.array([2.0, -1.0]))
    (a * a + a).sum().backward()
    np.testing.assert_allclose(a.grad, 2 * a.data + 1)
    (a * 3.0).sum().backward()
    np.testing.assert_allclose(a.grad, 2 * a.data + 1 + 3)


def test_no_grad_records_nothing():
    a = parameter(np.ones(3))
    with no_grad():
        b = a * 2
    assert not b.requires_grad and b._parents == ()


def test_matmul_dimension_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 2\)"):
        F.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_embedding_padding_row_gets_no_gradient_and_bad_ids_raise():
    table = parameter(np.ones((4, 2)))
    F.embedding_lookup(table, np.array([[0, 1, 1]]), padding_idx=0).sum().backward()
    np.testing.assert_array_equal(table.grad[0], 0)
    np.testing.assert_array_equal(table.grad[1], 2)
    with pytest.raises(IndexError):
        F.embedding_lookup(table, np.array([4]))


def test_dropout_is_inverted_and_identity_at_eval():
    x = Tensor(np.ones((2000,)))
    y = F.dropout(x, 0.5, np.random.default_rng(0), train=True)
    assert set(np.unique(y.data)) <= {0.0, 2.0}
    assert abs(y.data.mean() - 1.0) < 0.1
    assert F.dropout(x, 0.5, None, train=False) is x


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 5)),
              elements=st.floats(-50, 50, allow_nan=False)))
def test_logsumexp_and_softmax_properties(x):
    lse = F.logsumexp(Tensor(x), axis=1).data
    assert np.all(lse >= x.max(axis=1) - 1e-12)
    assert np.all(lse <= x.max(axis=1) + np.log(x.shape[1]) + 1e-9)
    sm = F.softmax(Tensor(x), axis=1).data
    np.testing.assert_allclose(sm.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.exp(F.log_softmax(Tensor(x), axis=1).data), sm, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 10_000))
def test_broadcast_add_gradient_shapes(rows, cols, seed):
    rng = np.random.default_rng(seed)
    a = parameter(rng.normal(size=(rows, cols)))
    b = parameter(rng.normal(size=(cols,)))
    (a + b).sum().backward()
    assert a.grad.shape == a.shape and b.grad.shape == b.shape
    np.testing.assert_allclose(b.grad, rows)
