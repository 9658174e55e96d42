import json

import numpy as np
import pytest

from drnet.data import BinaryPair, Dataset, generate_equality_dataset, stratified_split
from drnet.network import (
    DivergenceError,
    Fusion,
    Network,
    NetworkSpec,
    TrainConfig,
    build_network,
    evaluate,
    gradient_check,
    train,
)
from drnet.tensor import Rng, ShapeError

ARCHS = ["plain", "early", "mid"]


class TestShapes:
    def test_plain_n10(self):
        spec = NetworkSpec("plain", 10)
        assert spec.layer_shapes() == [(10, 20), (2, 10)]
        assert spec.parameter_count() == 20 * 10 + 10 + 10 * 2 + 2 == 232
        assert build_network(spec, Rng(0)).theta.size == 232

    def test_early_n3(self):
        assert NetworkSpec("early", 3).layer_shapes()[0] == (10, 9)

    def test_mid_n3(self):
        assert NetworkSpec("mid", 3).layer_shapes() == [(10, 6), (2, 13)]

    @pytest.mark.parametrize("n", [2, 5, 30])
    @pytest.mark.parametrize("hidden", [(10,), (20, 20), (30, 30, 30)])
    def test_parameter_count_relations(self, n, hidden):
        plain = NetworkSpec("plain", n, hidden).parameter_count()
        early = NetworkSpec("early", n, hidden).parameter_count()
        mid = NetworkSpec("mid", n, hidden).parameter_count()
        assert early == plain + hidden[0] * n
        # DR outputs feed the layer after the first hidden layer
        nxt = hidden[1] if len(hidden) > 1 else 2
        assert mid == plain + nxt * n
        if len(hidden) == 1:
            assert mid - plain == n * 2

    def test_multi_layer_mid_appends_dr_once(self):
        assert NetworkSpec("mid", 4, (20, 20, 20)).layer_shapes() == [(20, 8), (20, 24), (20, 20), (2, 20)]

    def test_bad_specs(self):
        with pytest.raises(ValueError):
            NetworkSpec("late", 3)
        with pytest.raises(ValueError):
            NetworkSpec("plain", 3, ())
        with pytest.raises(ValueError):
            NetworkSpec("plain", 3, output_size=3)

    def test_forward_shape_error(self):
        net = build_network(NetworkSpec("mid", 3), Rng(0))
        with pytest.raises(ShapeError):
            net.forward(np.zeros(5))

    def test_init_schemes(self):
        spec = NetworkSpec("mid", 4)
        he = build_network(spec, Rng(0))
        assert not he.biases[0].any()
        assert np.abs(he.weights[0]).max() <= np.sqrt(6 / 8)
        assert np.abs(he.weights[1]).max() <= np.sqrt(6 / (14 + 2))
        torch_like = build_network(spec, Rng(0), init="torch")
        assert np.abs(torch_like.weights[0]).max() <= 1 / np.sqrt(8)
        assert torch_like.biases[0].any()
        with pytest.raises(ValueError):
            build_network(spec, Rng(0), init="orthogonal")


class TestForward:
    def test_mid_matches_manual(self):
        net = build_network(NetworkSpec("mid", 3), Rng(4))
        x = np.array([1.0, 0, 1, 0, 0, 1])
        w1, w2 = net.weights
        b1, b2 = net.biases
        h = np.maximum(w1 @ x + b1, 0)
        dr = np.abs(x[:3] - x[3:])
        np.testing.assert_allclose(net.forward(x), w2 @ np.concatenate([h, dr]) + b2)

    def test_early_matches_manual(self):
        net = build_network(NetworkSpec("early", 3), Rng(4))
        x = np.array([1.0, 0, 1, 0, 0, 1])
        w1, w2 = net.weights
        b1, b2 = net.biases
        a = np.concatenate([x, np.abs(x[:3] - x[3:])])
        np.testing.assert_allclose(net.forward(x), w2 @ np.maximum(w1 @ a + b1, 0) + b2)

    def test_batch_equals_rows(self):
        net = build_network(NetworkSpec("mid", 5, (20, 20)), Rng(1))
        x = Rng(2).bits((7, 10)).astype(float)
        np.testing.assert_allclose(net.forward(x), np.array([net.forward(r) for r in x]))

    def test_dr_probe_zero_on_equal_pairs(self):
        ds = generate_equality_dataset(5, Rng(0))
        tr, _ = stratified_split(ds, 0.75, Rng(0))
        net = build_network(NetworkSpec("mid", 5), Rng(0))
        pos = ds.inputs[ds.labels == 1]
        assert not net.probe_dr(pos).any()
        train(net, tr, TrainConfig(epochs=5))
        assert not net.probe_dr(pos).any()
        assert net.probe_dr(ds.inputs[ds.labels == 0]).sum(axis=1).min() >= 1


class TestGradientCheck:
    @pytest.mark.parametrize("arch", ARCHS)
    @pytest.mark.parametrize("n", [2, 10])
    def test_architectures(self, arch, n):
        rng = Rng(n, arch)
        net = build_network(NetworkSpec(arch, n), rng)
        v = rng.bits(n)
        w = rng.bits(n)
        for a, b in ((v, w), (v, v)):
            pair = BinaryPair(tuple(a.tolist()), tuple(b.tolist()), int(np.array_equal(a, b)))
            assert gradient_check(net, pair, 1e-5) < 1e-4

    @pytest.mark.parametrize("arch", ARCHS)
    def test_deep_and_trained(self, arch):
        ds = generate_equality_dataset(4, Rng(1))
        net = build_network(NetworkSpec(arch, 4, (20, 30)), Rng(2))
        train(net, ds, TrainConfig(epochs=3, lr=0.01, batch_size=4))
        for pair in ds.pairs[::5]:
            assert gradient_check(net, pair, 1e-5) < 1e-4

    @pytest.mark.parametrize("arch", ARCHS)
    def test_relu_kink_skipped(self, arch):
        # zero biases and an all-zero input put every hidden unit at z = 0
        net = build_network(NetworkSpec(arch, 3), Rng(0))
        assert not net.biases[0].any()
        assert gradient_check(net, BinaryPair((0, 0, 0), (0, 0, 0), 1), 1e-5) < 1e-4

    def test_real_valued_inputs(self):
        net = build_network(NetworkSpec("mid", 3), Rng(0))
        x = Rng(1).uniform(-1, 1, 6)
        assert gradient_check(net, x, 1e-6, label=1) < 1e-4

    def test_zero_upstream(self):
        # saturated output: p equals the one-hot target exactly, so every
        # analytic and numeric gradient is 0
        net = build_network(NetworkSpec("mid", 3), Rng(0))
        net.weights[1][...] = 0.0
        net.biases[1][...] = [0.0, 1000.0]
        assert gradient_check(net, BinaryPair((1, 0, 1), (1, 0, 1), 1), 1e-5) == 0.0

    def test_epsilon_range(self):
        net = build_network(NetworkSpec("plain", 2), Rng(0))
        with pytest.raises(ValueError):
            gradient_check(net, BinaryPair((0, 1), (0, 1), 1), 10.0)

    def test_detects_wrong_gradient(self, monkeypatch):
        net = build_network(NetworkSpec("plain", 3), Rng(0))
        real = net.backward

        def skewed(g):
            out = real(g)
            net.dense[0].grad_weights = net.dense[0].grad_weights * 1.01
            return out

        monkeypatch.setattr(net, "backward", skewed)
        assert gradient_check(net, BinaryPair((1, 0, 1), (0, 1, 1), 0), 1e-5) > 1e-3


class TestTrainEvaluate:
    def test_zero_epochs_chance(self):
        ds = generate_equality_dataset(10, Rng(0))
        tr, te = stratified_split(ds, 0.75, Rng(0))
        for arch in ARCHS:
            net = build_network(NetworkSpec(arch, 10), Rng(3))
            _, res = train(net, tr, TrainConfig(epochs=0), te)
            assert res.epoch_losses == []
            assert 0.4 <= res.test_accuracy <= 0.6 or arch != "plain"

    def test_untrained_accuracy_near_chance(self):
        accs = []
        ds = generate_equality_dataset(10, Rng(0))
        for s in range(10):
            net = build_network(NetworkSpec("plain", 10), Rng(s))
            accs.append(evaluate(net, ds))
        assert abs(np.mean(accs) - 0.5) <= 0.1

    def test_mid_n3_fits_training_split(self):
        ds = generate_equality_dataset(3, Rng(0))
        tr, te = stratified_split(ds, 0.75, Rng(0))
        net = build_network(NetworkSpec("mid", 3), Rng(0))
        _, res = train(net, tr, TrainConfig(), te)
        assert res.train_accuracy == 1.0
        assert len(res.epoch_losses) == 20 and np.isfinite(res.epoch_losses).all()

    def test_deterministic(self):
        ds = generate_equality_dataset(5, Rng(0))
        thetas = []
        for _ in range(2):
            net = build_network(NetworkSpec("early", 5), Rng(1))
            _, res = train(net, ds, TrainConfig(seed=3, batch_size=7, lr=0.01))
            thetas.append(net.theta.copy())
        assert np.array_equal(thetas[0], thetas[1])

    def test_constant_prediction_half(self):
        ds = generate_equality_dataset(4, Rng(0))
        net = Network(NetworkSpec("plain", 4))
        net.biases[1][...] = [1.0, 0.0]
        assert evaluate(net, ds) == 0.5

    def test_ties_go_to_class_zero(self):
        net = Network(NetworkSpec("mid", 3))
        assert net.predict(np.ones((4, 6))).tolist() == [0, 0, 0, 0]

    def test_empty_and_mismatched(self):
        net = build_network(NetworkSpec("plain", 3), Rng(0))
        ds = generate_equality_dataset(3, Rng(0))
        with pytest.raises(ValueError):
            evaluate(net, ds.subset([]))
        with pytest.raises(ShapeError):
            evaluate(net, generate_equality_dataset(4, Rng(0)))
        with pytest.raises(ShapeError):
            train(net, generate_equality_dataset(4, Rng(0)), TrainConfig())

    def test_divergence_reported(self):
        ds = generate_equality_dataset(3, Rng(0))
        net = build_network(NetworkSpec("plain", 3), Rng(0))
        net.theta[:] = np.inf
        with pytest.raises(DivergenceError) as info:
            train(net, ds, TrainConfig(epochs=2))
        assert info.value.result.error
        assert not info.value.result.ok

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=-1)


def test_model_round_trip(tmp_path):
    net = build_network(NetworkSpec("mid", 4, (20,)), Rng(5))
    path = tmp_path / "m.json"
    net.save(path, seed=5)
    doc = json.loads(path.read_text())
    assert doc["version"] == 1 and doc["seed"] == 5 and doc["init_scheme"] == "he_xavier"
    back = Network.load(path)
    assert back.spec == net.spec
    assert np.array_equal(back.theta, net.theta)
    x = Rng(0).bits((3, 8)).astype(float)
    np.testing.assert_array_equal(back.forward(x), net.forward(x))
    doc["version"] = 99
    with pytest.raises(ValueError):
        Network.from_dict(doc)
