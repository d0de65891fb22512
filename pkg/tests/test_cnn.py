import numpy as np
import pytest
from hypothesis import given, strategies as st

from subbandnet import cnn, data, harness
from subbandnet.cnn import Conv2D, Dense, MaxPool2D, Network, ReLU, Softmax, TrainConfig
from subbandnet.errors import BadMagic, EmptyDataset, ShapeMismatch, ShapeUnderflow, TruncatedFile


def synthetic(n, shape=(1, 16, 16), seed=0):
    rng = np.random.default_rng(seed)
    return data.Dataset(rng.random((n,) + shape).astype(np.float32), rng.integers(0, 10, n))


def tiny(shape=(1, 16, 16), seed=0, dtype=np.float32):
    return cnn.build_lenet(shape, (2, 3), 5, rng=np.random.default_rng(seed), dtype=dtype)


def assert_same_params(a, b):
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)


class TestShapes:
    @pytest.mark.parametrize("shape,dense_in", [((1, 28, 28), 800), ((3, 32, 32), 1250), ((1, 14, 14), 50)])
    def test_dense_input(self, shape, dense_in):
        net = cnn.build_lenet(shape)
        assert int(np.prod(net.shapes[5])) == dense_in
        assert net.layers[6].weight.shape == (dense_in, 500)

    def test_mnist_stages(self):
        net = cnn.build_lenet((1, 28, 28))
        assert net.shapes[:6] == [(20, 24, 24), (20, 24, 24), (20, 12, 12), (50, 8, 8), (50, 8, 8), (50, 4, 4)]

    def test_g1_band_uses_ceil_pooling(self):
        net = cnn.build_lenet((1, 14, 14))
        assert net.shapes[2] == (20, 5, 5) and net.shapes[3] == (50, 1, 1) and net.shapes[5] == (50, 1, 1)

    @given(st.integers(1, 3), st.integers(13, 24), st.integers(13, 24))
    def test_forward_agrees_with_inference(self, c, h, w):
        net = tiny((c, h, w))
        x = np.random.default_rng(0).random((2, c, h, w))
        for shape, out in zip(net.shapes, _outputs(net, x)):
            assert out.shape[1:] == shape
        assert cnn.forward(net, x)[1].shape == (2, 10)

    def test_too_small(self):
        with pytest.raises(ShapeUnderflow):
            cnn.build_lenet((1, 8, 8))

    def test_wrong_batch_shape(self):
        with pytest.raises(ShapeMismatch):
            cnn.forward(tiny(), np.zeros((2, 1, 15, 16)))

    def test_order_and_init(self):
        net = cnn.build_lenet((1, 28, 28), rng=np.random.default_rng(0))
        assert [l.kind for l in net.layers] == ["conv", "relu", "pool", "conv", "relu", "pool",
                                                "dense", "relu", "dense", "softmax"]
        w = net.layers[6].weight
        bound = np.sqrt(6 / (800 + 500))
        assert np.abs(w).max() <= bound and np.abs(w).max() > 0.99 * bound
        assert all(np.all(layer.bias == 0) for layer in net.trainable_layers())

    def test_build_is_deterministic(self):
        assert_same_params(tiny(seed=4), tiny(seed=4))


def _outputs(net, x):
    outs = []
    x = x.astype(net.dtype)
    for layer in net.layers:
        x, _ = layer.forward(x)
        outs.append(x)
    return outs


class TestForward:
    def test_zero_weights_give_uniform(self):
        net = tiny()
        for p in net.params():
            p[...] = 0
        _, probs = cnn.forward(net, np.random.default_rng(0).random((3, 1, 16, 16)))
        np.testing.assert_allclose(probs, 0.1, atol=1e-7)

    def test_conv_matches_loops(self):
        rng = np.random.default_rng(1)
        layer = Conv2D(3)
        layer.init_params((2, 6, 6), rng, np.float64)
        layer.bias[...] = rng.standard_normal(3)
        x = rng.standard_normal((2, 2, 6, 6))
        y, _ = layer.forward(x)
        ref = np.zeros((2, 3, 2, 2))
        for n in range(2):
            for f in range(3):
                for i in range(2):
                    for j in range(2):
                        acc = layer.bias[f]
                        for c in range(2):
                            for ki in range(5):
                                for kj in range(5):
                                    acc += layer.weight[f, c, ki, kj] * x[n, c, i + ki, j + kj]
                        ref[n, f, i, j] = acc
        np.testing.assert_allclose(y, ref, atol=1e-12)

    def test_maxpool_single_window(self):
        y, _ = MaxPool2D().forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        assert y.shape == (1, 1, 1, 1) and y[0, 0, 0, 0] == 4.0

    def test_maxpool_odd_edge_window(self):
        x = np.arange(15, dtype=np.float64).reshape(1, 1, 3, 5)
        y, _ = MaxPool2D().forward(x)
        np.testing.assert_array_equal(y[0, 0], [[6, 8, 9], [11, 13, 14]])

    @given(st.floats(-1e4, 1e4), st.floats(1, 1e4))
    def test_softmax_rows_with_large_logits(self, shift, scale):
        logits = shift + scale * np.random.default_rng(0).standard_normal((4, 10))
        p, _ = Softmax().forward(logits)
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)

    def test_probability_rows(self):
        _, probs = cnn.forward(cnn.build_lenet((1, 28, 28)), np.random.default_rng(0).random((5, 1, 28, 28)))
        assert probs.dtype == np.float32
        np.testing.assert_allclose(probs.sum(axis=1), 1, atol=1e-6)


class TestBackward:
    def test_output_gradient_closed_form(self):
        net = tiny(dtype=np.float64)
        x = np.random.default_rng(2).random((4, 1, 16, 16))
        y = np.array([1, 0, 9, 3])
        cache, probs = cnn.forward(net, x)
        grads = cnn.backward(net, cache, y)
        delta = (probs - np.eye(10)[y]) / 4
        hidden = _outputs(net, x)[7]  # input to the last dense layer
        np.testing.assert_allclose(grads[-1], delta.sum(axis=0), atol=1e-15)
        np.testing.assert_allclose(grads[-2], hidden.T @ delta, atol=1e-14)

    def test_gradient_shapes(self):
        net = tiny()
        cache, _ = cnn.forward(net, np.zeros((2, 1, 16, 16), np.float32))
        grads = cnn.backward(net, cache, np.array([0, 1]))
        assert [g.shape for g in grads] == [p.shape for p in net.params()]

    def test_zero_input(self):
        net = tiny(dtype=np.float64)
        cache, _ = cnn.forward(net, np.zeros((3, 1, 16, 16)))
        grads = cnn.backward(net, cache, np.array([2, 5, 7]))
        np.testing.assert_array_equal(grads[0], 0)  # conv1 kernel
        np.testing.assert_array_equal(grads[2], 0)  # conv2 kernel (zero biases upstream)
        assert np.any(grads[-1] != 0)

    def test_label_count_mismatch(self):
        net = tiny()
        cache, _ = cnn.forward(net, np.zeros((2, 1, 16, 16), np.float32))
        with pytest.raises(ShapeMismatch):
            cnn.backward(net, cache, np.array([1, 2, 3]))

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_check(self, seed):
        report = harness.gradcheck_network(seed)
        assert report.kink_crossings == 0
        assert report.max_rel_error < 1e-4

    def test_gradient_check_zero_tolerance_fails(self):
        assert not cnn.gradient_check(tiny(), (np.random.default_rng(0).random((1, 1, 16, 16)), [3]), 0.0).passed

    def test_linear_model(self):
        rng = np.random.default_rng(3)
        net = Network([Dense(10), Softmax()], (1, 1, 4), rng=rng, dtype=np.float64)
        net.layers[0].weight[...] = 0.01 * rng.standard_normal((4, 10))
        # one-hot input: weight rows either copy the bias gradient or are exactly zero.
        # No kinks, so a smaller step is safe; truncation error falls as h^2.
        x = np.eye(4)[[2]].reshape(1, 1, 1, 4)
        report = cnn.gradient_check(net, (x, [7]), h=1e-4)
        assert report.max_rel_error < 1e-8

    def test_gradient_check_leaves_network_alone(self):
        net = tiny()
        before = net.copy()
        cnn.gradient_check(net, (np.random.default_rng(0).random((1, 1, 16, 16)), [3]))
        assert_same_params(net, before)


class TestTraining:
    def test_sgd_zero_gradient(self):
        net = tiny()
        before = net.copy()
        cnn.sgd_step(net, [np.zeros_like(p) for p in net.params()], 0.1)
        assert_same_params(net, before)

    def test_sgd_arithmetic(self):
        net = Network([Dense(10), Softmax()], (1, 1, 1), dtype=np.float64)
        net.layers[0].weight[...] = 1.0
        grads = [np.full((1, 10), 0.5), np.zeros(10)]
        cnn.sgd_step(net, grads, 0.1)
        np.testing.assert_allclose(net.layers[0].weight, 0.95)

    def test_sgd_shape_mismatch(self):
        net = tiny()
        with pytest.raises(ShapeMismatch):
            cnn.sgd_step(net, [np.zeros(3)] * len(net.params()), 0.1)

    def test_partial_last_batch_is_used(self, monkeypatch):
        sizes = []
        real = cnn.forward

        def spy(network, batch):
            sizes.append(len(batch))
            return real(network, batch)

        monkeypatch.setattr(cnn, "forward", spy)
        cnn.train_epoch(tiny(), synthetic(100), TrainConfig(batch_size=64), np.random.default_rng(0))
        assert sizes == [64, 36]

    def test_zero_learning_rate(self):
        net, ds = tiny(), synthetic(150)
        before = net.copy()
        _, err = cnn.train_epoch(net, ds, TrainConfig(learning_rate=0.0), np.random.default_rng(0))
        assert_same_params(net, before)
        assert err == pytest.approx(cnn.evaluate(net, ds))

    def test_deterministic(self):
        ds = synthetic(200)
        runs = []
        for _ in range(2):
            net = tiny(seed=9)
            rng = np.random.default_rng(11)
            errs = [cnn.train_epoch(net, ds, TrainConfig(), rng)[1] for _ in range(2)]
            runs.append((net, errs))
        assert runs[0][1] == runs[1][1]
        assert_same_params(runs[0][0], runs[1][0])

    def test_loss_decreases(self):
        ds = synthetic(100, seed=3)
        net = tiny(seed=3)

        def loss():
            return cnn.cross_entropy(cnn.forward(net, ds.images)[1], ds.labels)

        start = loss()
        for _ in range(50):
            cache, _ = cnn.forward(net, ds.images)
            cnn.sgd_step(net, cnn.backward(net, cache, ds.labels), 0.01)
        assert loss() < start

    def test_empty_dataset(self):
        empty = data.Dataset(np.zeros((0, 1, 16, 16), np.float32), np.zeros(0, np.int64))
        with pytest.raises(EmptyDataset):
            cnn.train_epoch(tiny(), empty, TrainConfig(), np.random.default_rng(0))
        with pytest.raises(EmptyDataset):
            cnn.evaluate(tiny(), empty)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=-0.1)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)

    def test_copy_is_independent(self):
        net = tiny()
        twin = net.copy()
        twin.params()[0][...] = 7
        assert not np.any(net.params()[0] == 7)


def one_hot_classifier(bias_class=None):
    net = Network([Dense(10), Softmax()], (1, 1, 10), dtype=np.float64)
    net.layers[0].weight[...] = 10 * np.eye(10) if bias_class is None else 0
    if bias_class is not None:
        net.layers[0].bias[bias_class] = 5.0
    return net


class TestEvaluate:
    def balanced(self):
        labels = np.repeat(np.arange(10), 7)
        return data.Dataset(np.eye(10)[labels].reshape(-1, 1, 1, 10), labels)

    def test_constant_predictor(self):
        assert cnn.evaluate(one_hot_classifier(bias_class=0), self.balanced()) == pytest.approx(0.9)

    def test_perfect_predictor(self):
        assert cnn.evaluate(one_hot_classifier(), self.balanced()) == 0.0

    def test_ties_go_low(self):
        assert cnn.error_rate(np.full((1, 10), 0.1), np.array([0])) == 0.0

    def test_random_init_on_mnist_is_chance(self, mnist_dir):
        test = data.load_dataset("mnist", mnist_dir, "test")
        err = cnn.evaluate(cnn.build_lenet((1, 28, 28), rng=np.random.default_rng(0)), test)
        assert 0.8 <= err <= 0.95


class TestParamCount:
    def test_layers(self):
        conv = Network([Conv2D(20), Dense(10), Softmax()], (1, 5, 5))
        assert conv.layers[0].weight.size + conv.layers[0].bias.size == 520
        dense = Network([Dense(500), Dense(10), Softmax()], (50, 4, 4))
        assert dense.layers[0].weight.size + dense.layers[0].bias.size == 400500
        assert cnn.param_count(Network([Dense(10), Softmax()], (1, 1, 10))) == 110

    def test_mnist_baseline(self):
        assert cnn.param_count(cnn.build_lenet((1, 28, 28))) == 520 + 25050 + 400500 + 5010 == 431080


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = tiny(seed=1)
        path = tmp_path / "net.lpnn"
        cnn.save_checkpoint(net, path, word_bits=8)
        other = tiny(seed=2)
        assert cnn.load_checkpoint(other, path) == 8
        assert_same_params(net, other)
        raw = path.read_bytes()
        assert raw[:4] == b"LPNN"
        assert np.frombuffer(raw[4:16], "<u4").tolist() == [1, 8, 4]

    def test_truncated(self, tmp_path):
        path = tmp_path / "net.lpnn"
        cnn.save_checkpoint(tiny(), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(TruncatedFile):
            cnn.load_checkpoint(tiny(), path)

    def test_wrong_file(self, tmp_path):
        path = tmp_path / "x"
        path.write_bytes(b"SBND" + bytes(20))
        with pytest.raises(BadMagic):
            cnn.load_checkpoint(tiny(), path)

    def test_architecture_mismatch(self, tmp_path):
        path = tmp_path / "net.lpnn"
        cnn.save_checkpoint(tiny((1, 16, 16)), path)
        with pytest.raises(ShapeMismatch):
            cnn.load_checkpoint(tiny((1, 20, 20)), path)
