import numpy as np
import pytest

from hetmatch import autodiff as ad
from hetmatch.autodiff import Tensor, backward, finite_diff_check
from hetmatch.errors import NumericError
from hetmatch.optim import (AdamW, ParamStore, checkpoint_bytes,
                            load_checkpoint, save_checkpoint)


def fd_check(build, shapes, seed, eps=1e-6):
    """Gradient-check `build` applied to fresh random tensors."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    tensors = [store.add(f"p{i}", rng.normal(size=s)) for i, s in enumerate(shapes)]
    weights = rng.normal  # frozen per call sites below
    return finite_diff_check(lambda _: build(tensors, rng), store, eps=eps)


def scalarize(t, rng):
    w = Tensor(np.full(t.data.shape, 0.5) + 0.01 * np.arange(t.data.size).reshape(t.data.shape))
    return ad.sum_axis(ad.mul(t, w))


OP_CASES = {
    "matmul": (lambda ts, rng: scalarize(ad.matmul(ts[0], ts[1]), rng), [(3, 4), (4, 2)]),
    "matmul_batched": (lambda ts, rng: scalarize(ad.matmul(ts[0], ts[1]), rng),
                       [(2, 3, 4), (2, 4, 2)]),
    "matmul_broadcast": (lambda ts, rng: scalarize(ad.matmul(ts[0], ts[1]), rng),
                         [(2, 3, 5, 4), (4, 2)]),
    "add": (lambda ts, rng: scalarize(ad.add(ts[0], ts[1]), rng), [(3, 4), (4,)]),
    "sub": (lambda ts, rng: scalarize(ad.sub(ts[0], ts[1]), rng), [(3, 4), (3, 4)]),
    "mul": (lambda ts, rng: scalarize(ad.mul(ts[0], ts[1]), rng), [(3, 4), (3, 1)]),
    "concat": (lambda ts, rng: scalarize(ad.concat([ts[0], ts[1]], axis=-1), rng),
               [(2, 3), (2, 5)]),
    "row_softmax": (lambda ts, rng: scalarize(ad.row_softmax(ts[0]), rng), [(4, 6)]),
    "sigmoid": (lambda ts, rng: scalarize(ad.sigmoid(ts[0]), rng), [(3, 5)]),
    "tanh": (lambda ts, rng: scalarize(ad.tanh(ts[0]), rng), [(3, 5)]),
    "relu": (lambda ts, rng: scalarize(ad.relu(ts[0]), rng), [(3, 5)]),
    "sum_axis": (lambda ts, rng: scalarize(ad.sum_axis(ts[0], axis=1), rng), [(3, 4, 2)]),
    "mean": (lambda ts, rng: ad.mean(ad.mul(ts[0], ts[0])), [(3, 4)]),
    "masked_mul": (lambda ts, rng: scalarize(
        ad.masked_mul(ts[0], (np.arange(12).reshape(3, 4) % 2).astype(float)), rng),
        [(3, 4)]),
    "conv2d": (lambda ts, rng: scalarize(ad.conv2d(ts[0], ts[1], ts[2]), rng),
               [(2, 2, 5, 5), (3, 2, 3, 3), (3,)]),
    "maxpool2d": (lambda ts, rng: scalarize(ad.maxpool2d(ts[0]), rng), [(2, 2, 6, 6)]),
    "maxpool2d_odd": (lambda ts, rng: scalarize(ad.maxpool2d(ts[0]), rng), [(1, 1, 5, 7)]),
    "flatten": (lambda ts, rng: scalarize(ad.flatten(ts[0]), rng), [(2, 3, 4)]),
    "reshape": (lambda ts, rng: scalarize(ad.reshape(ts[0], (6, 2)), rng), [(3, 4)]),
    "transpose": (lambda ts, rng: scalarize(ad.transpose(ts[0], (1, 0, 2)), rng),
                  [(2, 3, 4)]),
    "narrow": (lambda ts, rng: scalarize(ad.narrow(ts[0], 1, 3), rng), [(5, 3)]),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_many_seeds(name):
    # eps=1e-5 keeps float64 central-difference roundoff near 1e-6 relative;
    # an actual gradient defect shows up orders of magnitude above 1e-4
    build, shapes = OP_CASES[name]
    for seed in range(20):
        err = fd_check(build, shapes, seed=seed, eps=1e-5)
        assert err < 1e-4, f"{name} seed {seed}: {err}"


class TestForwardValues:
    def test_softmax_singleton_row(self):
        out = ad.row_softmax(Tensor([[3.7]]))
        assert out.data.tolist() == [[1.0]]

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        out = ad.row_softmax(Tensor(rng.normal(size=(50, 7)) * 30))
        assert np.abs(out.data.sum(axis=-1) - 1.0).max() < 1e-12

    def test_matmul_identity(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(4, 4))
        out = ad.matmul(Tensor(np.eye(4)), Tensor(a))
        assert np.array_equal(out.data, a)

    def test_sigmoid_tanh_ranges(self):
        rng = np.random.default_rng(2)
        # |x| kept below ~37 where float64 sigmoid saturates to exactly 1.0
        x = Tensor(rng.normal(size=(100,)) * 8)
        s = ad.sigmoid(x).data
        t = ad.tanh(x).data
        assert ((s > 0) & (s < 1)).all()
        assert ((t >= -1) & (t <= 1)).all()

    def test_shape_mismatch_names_op(self):
        with pytest.raises(NumericError, match="matmul"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


class TestBackward:
    def test_constant_loss_no_gradients(self):
        store = ParamStore()
        p = store.add("w", np.ones((2, 2)))
        loss = Tensor(np.zeros(()))  # constant: no inputs reachable
        backward(loss)
        assert p.grad is None

    def test_fanout_accumulation(self):
        x = Tensor(np.array([[5.0]]), requires_grad=True)
        y = ad.add(x, x)
        backward(ad.sum_axis(y))
        assert x.grad[0, 0] == 2.0

    def test_two_layer_chain_rule_by_hand(self):
        # L = sum(B @ relu(A @ x)): dL/dB = 1 outer relu(Ax)^T,
        # dL/dA = (B^T @ 1) * relu'(Ax) outer x^T, derived symbolically
        rng = np.random.default_rng(3)
        a = rng.normal(size=(2, 2))
        b = rng.normal(size=(2, 2))
        x = rng.normal(size=(2, 1))
        ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
        hidden = ad.relu(ad.matmul(ta, Tensor(x)))
        loss = ad.sum_axis(ad.matmul(tb, hidden))
        backward(loss)
        h = np.maximum(a @ x, 0.0)
        ones = np.ones((2, 1))
        grad_b = ones @ h.T
        grad_a = ((b.T @ ones) * (a @ x > 0)) @ x.T
        assert np.allclose(tb.grad, grad_b, atol=1e-12)
        assert np.allclose(ta.grad, grad_a, atol=1e-12)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(NumericError):
            backward(Tensor(np.ones(3), requires_grad=True))

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(4)
            w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
            x = Tensor(rng.normal(size=(3, 2)))
            loss = ad.mean(ad.sigmoid(ad.matmul(w, x)))
            backward(loss)
            return w.grad.copy()
        assert np.array_equal(run(), run())


class TestAdamW:
    def test_zero_grad_no_decay_unchanged(self):
        store = ParamStore()
        p = store.add("w", np.array([1.0, 2.0]))
        opt = AdamW(store, lr=0.01)
        p.grad = np.zeros(2)
        opt.step()
        assert np.array_equal(p.data, [1.0, 2.0])

    def test_zero_grad_decay_scales(self):
        store = ParamStore()
        p = store.add("w", np.array([4.0, -8.0]))
        opt = AdamW(store, lr=0.1, weight_decay=0.25)
        p.grad = np.zeros(2)
        opt.step()
        assert np.allclose(p.data, np.array([4.0, -8.0]) * (1 - 0.1 * 0.25), atol=1e-15)

    def test_first_step_closed_form(self):
        store = ParamStore()
        start = np.array([0.5, -1.5, 3.0])
        p = store.add("w", start.copy())
        opt = AdamW(store, lr=0.05)
        g = np.array([0.2, -0.4, 1.0])
        p.grad = g.copy()
        opt.step()
        expected = start - 0.05 * g / (np.abs(g) + 1e-8)
        assert np.allclose(p.data, expected, atol=1e-9)

    def test_missing_gradient_named(self):
        store = ParamStore()
        store.add("w.some_name", np.ones(2))
        opt = AdamW(store)
        with pytest.raises(NumericError, match="w.some_name"):
            opt.step()

    def test_gradients_cleared_after_step(self):
        store = ParamStore()
        p = store.add("w", np.ones(2))
        opt = AdamW(store)
        p.grad = np.ones(2)
        opt.step()
        assert p.grad is None


class TestFiniteDiff:
    def test_square_at_three(self):
        store = ParamStore()
        x = store.add("x", np.array(3.0))
        err = finite_diff_check(lambda _: ad.mul(x, x), store, eps=1e-6)
        assert err < 1e-8
        # and the analytic derivative itself
        loss = ad.mul(x, x)
        backward(loss)
        assert abs(x.grad - 6.0) < 1e-12

    def test_linear_machine_precision(self):
        store = ParamStore()
        x = store.add("x", np.array([1.0, 2.0, 3.0]))
        w = np.array([0.5, -1.5, 2.5])
        err = finite_diff_check(
            lambda _: ad.sum_axis(ad.mul(x, w)), store, eps=1e-6)
        assert err < 1e-8

    def test_sigmoid_layer(self):
        rng = np.random.default_rng(5)
        store = ParamStore()
        w = store.add("w", rng.normal(size=(4, 3)))
        x = np.asarray(rng.normal(size=(3, 2)))
        err = finite_diff_check(
            lambda _: ad.sum_axis(ad.sigmoid(ad.matmul(w, x))), store, eps=1e-6)
        assert err < 1e-6


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(6)
        values = {"a.w": rng.normal(size=(4, 3)),
                  "b": np.array([1.0 / 3.0, 1e-200, -7e300])}
        path = tmp_path / "ck.json"
        save_checkpoint(path, values, {"hidden": 8})
        loaded, cfg = load_checkpoint(path)
        assert cfg == {"hidden": 8}
        for name, arr in values.items():
            assert np.array_equal(loaded[name], arr)

    def test_byte_determinism(self):
        rng = np.random.default_rng(7)
        values = {"w": rng.normal(size=(5, 5))}
        assert checkpoint_bytes(values, {"s": 1}) == checkpoint_bytes(values, {"s": 1})

    def test_rejects_non_finite(self):
        with pytest.raises(NumericError):
            checkpoint_bytes({"w": np.array([np.inf])}, {})
