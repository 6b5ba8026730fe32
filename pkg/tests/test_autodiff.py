import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from waml import autodiff as ad
from waml.autodiff import NonFiniteError, Tensor

from helpers import numeric_grad

RNG = np.random.default_rng(0)


def leaf(shape, scale=1.0):
    return Tensor(RNG.normal(0, scale, shape), requires_grad=True, dtype=np.float64)


def check(build, *leaves, tol=1e-6):
    """Compare tape gradients of sum(w * build()) with central differences."""
    out_shape = build().shape
    w = RNG.normal(size=out_shape)

    def scalar():
        return ad.sum(ad.mul(build(), Tensor(w, dtype=np.float64)))

    for t in leaves:
        t.zero_grad()
    with ad.recording() as tape:
        ad.backward(scalar(), tape)
    for t in leaves:
        with ad.no_grad():
            num = numeric_grad(lambda: scalar().item(), t.data)
        np.testing.assert_allclose(t.grad, num, rtol=tol, atol=tol)


def test_add_sub_mul_broadcast():
    a, b, r = leaf((3, 4)), leaf((3, 4)), leaf((1, 4))
    check(lambda: ad.add(a, b), a, b)
    check(lambda: ad.sub(a, r), a, r)
    check(lambda: ad.mul(a, b), a, b)
    check(lambda: ad.mul(a, r), a, r)
    check(lambda: ad.add_row_broadcast(a, r), a, r)


def test_scalar_ops():
    a, s = leaf((2, 3)), leaf((1, 1))
    check(lambda: ad.scale(a, s), a, s)
    check(lambda: ad.add_scalar(a, 2.5), a)
    check(lambda: ad.mul(a, 0.3), a)
    check(lambda: ad.neg(a), a)


@pytest.mark.parametrize("fn", [ad.sigmoid, ad.gelu, ad.relu])
def test_activations(fn):
    a = leaf((3, 5))
    a.data[np.abs(a.data) < 1e-3] = 0.5  # keep relu away from its kink
    check(lambda: fn(a), a)


def test_matmul_transpose():
    a, b = leaf((3, 4)), leaf((4, 2))
    check(lambda: ad.matmul(a, b), a, b)
    check(lambda: ad.transpose(a), a)


def test_reductions():
    a, b = leaf((3, 4)), leaf((3, 4))
    check(lambda: ad.sum(a), a)
    check(lambda: ad.mean(a), a)
    check(lambda: ad.row_sum(a), a)
    check(lambda: ad.row_dot(a, b), a, b)


def test_concat_pick_gather_segment():
    a, b = leaf((2, 3)), leaf((3, 3))
    check(lambda: ad.concat_rows([a, b]), a, b)
    check(lambda: ad.pick(b, [2, 0, 1]), b)
    check(lambda: ad.gather_rows(b, [0, 2, 2, 1, 0]), b)
    check(lambda: ad.segment_sum(b, [1, 1, 0], 3), b)


def test_logsumexp_with_mask():
    a = leaf((3, 4), scale=3.0)
    mask = np.array([[1, 0, 1, 1], [1, 1, 1, 1], [0, 0, 1, 0]], dtype=bool)
    check(lambda: ad.logsumexp_rows(a, mask), a)
    with ad.no_grad():
        got = ad.logsumexp_rows(a, mask).data[:, 0]
    want = [np.log(np.exp(a.data[i, mask[i]]).sum()) for i in range(3)]
    np.testing.assert_allclose(got, want)


def test_logsumexp_stable_for_large_inputs():
    with ad.no_grad():
        out = ad.logsumexp_rows(Tensor(np.array([[1000.0, 1000.0]])))
    assert out.item() == pytest.approx(1000 + np.log(2))


def test_logsumexp_empty_row_rejected():
    with pytest.raises(ValueError):
        ad.logsumexp_rows(Tensor(np.zeros((1, 2))), np.zeros((1, 2), dtype=bool))


def test_row_l2_normalize():
    a = leaf((4, 3))
    check(lambda: ad.row_l2_normalize(a), a)
    with ad.no_grad():
        y = ad.row_l2_normalize(a).data
    np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0)


def test_row_l2_normalize_zero_row_stays_zero():
    a = Tensor(np.array([[0.0, 0.0], [3.0, 4.0]]), requires_grad=True)
    with ad.recording() as tape:
        y = ad.row_l2_normalize(a)
        ad.backward(ad.sum(y), tape)
    assert np.array_equal(y.data[0], [0.0, 0.0])
    assert np.all(np.isfinite(a.grad))


def test_layer_norm():
    a, g, b = leaf((3, 5)), leaf((1, 5)), leaf((1, 5))
    check(lambda: ad.layer_norm(a, g, b), a, g, b, tol=1e-5)
    with ad.no_grad():
        y = ad.layer_norm(a, Tensor(np.ones((1, 5))), Tensor(np.zeros((1, 5)))).data
    np.testing.assert_allclose(y.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=1), 1.0, rtol=1e-6)


def test_shared_subexpression_accumulates():
    a = leaf((2, 2))
    check(lambda: ad.mul(ad.add(a, a), a), a)


def test_grad_accumulates_across_backward_calls():
    a = leaf((2, 2))
    for _ in range(2):
        with ad.recording() as tape:
            ad.backward(ad.sum(a), tape)
    np.testing.assert_allclose(a.grad, 2.0)


def test_backward_requires_scalar():
    a = leaf((2, 2))
    with ad.recording() as tape:
        out = ad.add(a, a)
        with pytest.raises(ValueError):
            ad.backward(out, tape)


def test_no_grad_records_nothing():
    a = leaf((2, 2))
    with ad.recording() as tape:
        with ad.no_grad():
            out = ad.mul(a, a)
    assert len(tape) == 0
    assert not out.requires_grad


def test_backward_clears_tape():
    a = leaf((2, 2))
    with ad.recording() as tape:
        ad.backward(ad.sum(ad.mul(a, a)), tape)
        assert len(tape) == 0


def test_non_finite_forward_raises():
    with pytest.raises(NonFiniteError):
        ad.mul(Tensor(np.array([[np.inf]])), 1.0)


def test_shape_errors():
    with pytest.raises(ValueError):
        ad.add(leaf((2, 3)), leaf((3, 2)))
    with pytest.raises(IndexError):
        ad.gather_rows(leaf((2, 2)), [5])
    with pytest.raises(ValueError):
        Tensor(np.zeros((2, 2, 2)))


def test_integer_input_becomes_float():
    assert Tensor([[1, 2]]).dtype == np.float32


def test_dropout_mask_is_inverted():
    m = ad.dropout_mask((200, 200), 0.25, np.random.default_rng(1), np.float64)
    assert set(np.unique(m)) <= {0.0, 1.0 / 0.75}
    assert abs(m.mean() - 1.0) < 0.02


finite = st.floats(-5, 5, allow_nan=False, width=64)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 4)), elements=finite))
def test_normalize_then_dot_matches_cosine(x):
    norms = np.linalg.norm(x, axis=1)
    with ad.no_grad():
        y = ad.row_l2_normalize(Tensor(x)).data
    for i in range(len(x)):
        if norms[i] > 1e-12:
            assert np.linalg.norm(y[i]) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 1000))
def test_matmul_gradient_matches_closed_form(n, k, m, seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=(n, k)), requires_grad=True)
    b = Tensor(rng.normal(size=(k, m)), requires_grad=True)
    with ad.recording() as tape:
        ad.backward(ad.sum(ad.matmul(a, b)), tape)
    np.testing.assert_allclose(a.grad, np.ones((n, m)) @ b.data.T)
    np.testing.assert_allclose(b.grad, a.data.T @ np.ones((n, m)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 1000))
def test_segment_sum_matches_loop(n_rows, n_out, seed):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(n_rows, 3))
    seg = rng.integers(0, n_out, n_rows)
    with ad.no_grad():
        got = ad.segment_sum(Tensor(vals), seg, n_out).data
    want = np.zeros((n_out, 3))
    for r, s in enumerate(seg):
        want[s] += vals[r]
    np.testing.assert_allclose(got, want)


def test_hand_examples():
    with ad.no_grad():
        np.testing.assert_array_equal(ad.matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]])).data,
                                      [[1, 2], [3, 4]])
        np.testing.assert_array_equal(ad.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]])).data,
                                      [[17], [39]])
        np.testing.assert_allclose(ad.row_l2_normalize(Tensor([[3.0, 4.0]])).data, [[0.6, 0.8]])
        ln = ad.layer_norm(Tensor(np.array([[1.0, 3.0], [2.0, 2.0]])), Tensor(np.ones((1, 2))),
                           Tensor(np.zeros((1, 2))))
        np.testing.assert_allclose(ln.data, [[-1, 1], [0, 0]], atol=1e-6)
        assert ad.gelu(Tensor(np.zeros((1, 1)))).item() == 0.0
        assert abs(ad.gelu(Tensor(np.full((1, 1), 10.0))).item() - 10.0) < 1e-6
        np.testing.assert_array_equal(ad.segment_sum(Tensor([[1.0], [2.0], [3.0]]), [0, 0, 1], 3).data,
                                      [[3], [3], [0]])


def test_gather_duplicate_index_doubles_gradient():
    a = leaf((3, 2))
    with ad.recording() as tape:
        ad.backward(ad.sum(ad.gather_rows(a, [2, 2])), tape)
    np.testing.assert_array_equal(a.grad, [[0, 0], [0, 0], [2, 2]])
