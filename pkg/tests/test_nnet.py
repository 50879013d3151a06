from __future__ import annotations

import struct
import zlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lemsim.nnet import (
    Adam,
    CheckpointError,
    Dense,
    Head,
    Network,
    TrainConfig,
    TrainingDiverged,
    dumps_network,
    init_network,
    load_checkpoint,
    loads_network,
    save_checkpoint,
    train_step,
)


def random_targets(rng, heads, n):
    out = []
    for h in heads:
        if h.kind == "categorical":
            out.append(rng.integers(0, h.size, n))
        else:
            out.append(rng.integers(0, 2, (n, h.size)))
    return out


def numeric_grads(net, x, targets, h=1e-4):
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = net.loss(x, targets)
            flat[i] = old - h
            down = net.loss(x, targets)
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_error(a, b):
    a, b = np.concatenate([g.ravel() for g in a]), np.concatenate([g.ravel() for g in b])
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


class TestForward:
    def test_zero_net_uniform_four_way(self):
        net = Network([Dense(np.zeros((4, 3)), np.zeros(4))], (Head("categorical", 4),))
        assert np.array_equal(net.forward(np.ones(3)), [0.25] * 4)

    def test_bias_softmax(self):
        net = Network([Dense(np.zeros((2, 3)), np.array([0.0, 0.0]))], (Head("categorical", 2),))
        assert net.forward(np.zeros(3)).tolist() == [0.5, 0.5]
        net.layers[0].bias[:] = [1.0, 2.0]
        e = np.exp([1.0, 2.0])
        assert np.allclose(net.forward(np.zeros(3)), e / e.sum(), rtol=0, atol=1e-15)

    def test_bernoulli_head_independent(self):
        net = Network([Dense(np.zeros((2, 1)), np.array([0.0, 100.0]))], (Head("bernoulli", 2),))
        assert np.allclose(net.forward(np.zeros(1)), [0.5, 1.0])

    def test_random_343_sums_to_one(self):
        rng = np.random.default_rng(0)
        net = init_network([3, 4, 3], "sigmoid", (Head("categorical", 3),), seed=1, dtype=np.float64)
        p = net.forward(rng.normal(size=(1000, 3)))
        assert np.abs(p.sum(axis=1) - 1).max() < 1e-6

    @given(st.lists(st.floats(-1e4, 1e4), min_size=5, max_size=5))
    def test_softmax_stable_for_extreme_logits(self, bias):
        net = Network([Dense(np.zeros((5, 1)), np.array(bias))], (Head("categorical", 5),))
        p = net.forward(np.zeros(1))
        assert np.all(np.isfinite(p)) and np.all(p >= 0) and abs(p.sum() - 1) < 1e-6

    def test_dimension_mismatch(self):
        net = init_network([3, 2], "relu", (Head("categorical", 2),))
        with pytest.raises(ValueError):
            net.forward(np.zeros(4))

    def test_deterministic(self):
        net = init_network([6, 5, 4], "relu", (Head("categorical", 2), Head("bernoulli", 2)), seed=3)
        x = np.random.default_rng(1).normal(size=(10, 6))
        assert np.array_equal(net.forward(x), net.forward(x))


class TestValidation:
    def test_layer_chain(self):
        with pytest.raises(ValueError):
            Network([Dense(np.zeros((4, 3)), np.zeros(4), "relu"), Dense(np.zeros((2, 5)), np.zeros(2))],
                    (Head("categorical", 2),))

    def test_partition_sum(self):
        with pytest.raises(ValueError):
            Network([Dense(np.zeros((4, 3)), np.zeros(4))], (Head("categorical", 3),))

    def test_head_kind(self):
        with pytest.raises(ValueError):
            Head("gaussian", 2)

    def test_train_config(self):
        TrainConfig(0.0, 1, 0)
        with pytest.raises(ValueError):
            TrainConfig(-1.0, 1)
        with pytest.raises(ValueError):
            TrainConfig(0.1, 0)


class TestGradients:
    @pytest.mark.parametrize("act", ["sigmoid", "relu"])
    @pytest.mark.parametrize("seed", range(3))
    def test_finite_difference_574(self, act, seed):
        rng = np.random.default_rng(seed)
        heads = (Head("categorical", 2), Head("bernoulli", 2))
        net = init_network([5, 7, 4], act, heads, seed=seed, dtype=np.float64)
        x = rng.normal(size=(6, 5))
        t = random_targets(rng, heads, 6)
        _, analytic = net.loss_and_grads(x, t)
        assert rel_error(analytic, numeric_grads(net, x, t)) < 1e-4

    def test_loss_matches_loss_and_grads(self):
        rng = np.random.default_rng(2)
        heads = (Head("categorical", 3), Head("bernoulli", 1))
        net = init_network([4, 6, 6, 4], "relu", heads, seed=2, dtype=np.float64)
        x = rng.normal(size=(9, 4))
        t = random_targets(rng, heads, 9)
        assert net.loss_and_grads(x, t)[0] == pytest.approx(net.loss(x, t), rel=1e-12)

    def test_target_out_of_range(self):
        net = init_network([2, 3], "relu", (Head("categorical", 3),))
        with pytest.raises(ValueError):
            net.loss_and_grads(np.zeros((1, 2)), [np.array([3])])


class TestTraining:
    def test_overfit_single_sample(self):
        net = init_network([3, 8, 2], "sigmoid", (Head("categorical", 2),), seed=0)
        opt = Adam(net, 0.05)
        x, t = np.array([[0.3, -1.0, 2.0]]), [np.array([1])]
        for i in range(200):
            train_step(net, x, t, opt, i)
        assert net.forward(x)[0, 1] > 0.99

    def test_fixed_batch_loss_goes_to_zero(self):
        rng = np.random.default_rng(0)
        heads = (Head("categorical", 3),)
        net = init_network([4, 16, 3], "relu", heads, seed=0, dtype=np.float64)
        x, t = rng.normal(size=(8, 4)), random_targets(rng, heads, 8)
        opt = Adam(net, 0.01)
        for i in range(1500):
            train_step(net, x, t, opt, i)
        assert net.loss(x, t) < 1e-2

    def test_zero_learning_rate_is_noop(self):
        rng = np.random.default_rng(0)
        heads = (Head("categorical", 3),)
        net = init_network([4, 5, 3], "relu", heads, seed=0)
        before = [p.copy() for p in net.params()]
        x, t = rng.normal(size=(8, 4)), random_targets(rng, heads, 8)
        loss0 = net.loss(x, t)
        opt = Adam(net, 0.0)
        for i in range(5):
            train_step(net, x, t, opt, i)
        assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))
        assert net.loss(x, t) == loss0

    def test_divergence_reports_batch(self):
        net = init_network([2, 2], "relu", (Head("categorical", 2),))
        with pytest.raises(TrainingDiverged) as info:
            train_step(net, np.array([[np.nan, 0.0]]), [np.array([0])], Adam(net, 0.1), batch_index=17)
        assert info.value.batch_index == 17

    def test_empty_batch(self):
        net = init_network([2, 2], "relu", (Head("categorical", 2),))
        with pytest.raises(ValueError):
            train_step(net, np.zeros((0, 2)), [np.zeros(0, int)], Adam(net, 0.1))

    def test_relu_bias_init(self):
        net = init_network([3, 4, 4, 2], "relu", (Head("categorical", 2),))
        assert np.all(net.layers[0].bias == np.float32(0.01)) and np.all(net.layers[-1].bias == 0)
        assert net.layers[-1].activation == "linear"


class TestCheckpoint:
    def net(self):
        return init_network([5, 7, 4], "sigmoid", (Head("categorical", 2), Head("bernoulli", 2)), seed=9)

    def test_round_trip_exact(self, tmp_path):
        net = self.net()
        net.metadata = {"stage": "type", "lr": 0.001}
        save_checkpoint(net, tmp_path / "n.lem")
        back = load_checkpoint(tmp_path / "n.lem")
        x = np.random.default_rng(0).normal(size=(100, 5)).astype(np.float32)
        assert np.array_equal(net.forward(x), back.forward(x))
        assert back.metadata == net.metadata
        assert all(np.array_equal(a, b) for a, b in zip(net.params(), back.params()))

    def test_layout(self):
        data = dumps_network(self.net())
        assert data[:4] == b"LEM1"
        version, hlen = struct.unpack_from("<II", data, 4)
        assert version == 1
        n_floats = (7 * 5 + 7) + (4 * 7 + 4)
        assert len(data) == 12 + hlen + 4 * n_floats + 4
        assert struct.unpack_from("<I", data, len(data) - 4)[0] == zlib.crc32(data[4:-4])

    @pytest.mark.parametrize("cut", [3, 10, 40, 100, 1])
    def test_truncated(self, cut):
        data = dumps_network(self.net())
        with pytest.raises(CheckpointError):
            loads_network(data[:-cut])

    def test_bit_flip(self):
        data = bytearray(dumps_network(self.net()))
        data[-20] ^= 0x01
        with pytest.raises(CheckpointError, match="checksum"):
            loads_network(bytes(data))

    def test_version_mismatch(self):
        data = bytearray(dumps_network(self.net()))
        data[4:8] = struct.pack("<I", 2)
        with pytest.raises(CheckpointError, match="version"):
            loads_network(bytes(data))

    def test_bad_magic(self):
        with pytest.raises(CheckpointError):
            loads_network(b"XXXX" + dumps_network(self.net())[4:])

    def test_header_dims_inconsistent_with_payload(self):
        import json

        data = dumps_network(self.net())
        _, hlen = struct.unpack_from("<II", data, 4)
        header = json.loads(data[12 : 12 + hlen])
        header["layers"][0]["out"] = 8  # also breaks the chain, but the length check fires first
        blob = json.dumps(header, sort_keys=True).encode()
        payload = struct.pack("<II", 1, len(blob)) + blob + data[12 + hlen : -4]
        forged = b"LEM1" + payload + struct.pack("<I", zlib.crc32(payload))
        with pytest.raises(CheckpointError):
            loads_network(forged)

    def test_extra_bytes(self):
        with pytest.raises(CheckpointError):
            loads_network(dumps_network(self.net()) + b"\0\0\0\0")
