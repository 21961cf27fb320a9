import struct

import numpy as np
import pytest


from neurodx import model, optim, tensor
from neurodx.errors import (ConfigError, DimensionError, FormatError, StateError,
                            VersionError)


def build_toy(seed=1, dtype=None):
    if dtype == "float64":
        with tensor.use_dtype("float64"):
            return model.build_hybrid(model.PRESETS["toy"], tensor.make_rng(seed))
    return model.build_hybrid(model.PRESETS["toy"], tensor.make_rng(seed))


@pytest.fixture(scope="module")
def paper_model():
    return model.build_hybrid(model.PRESETS["paper"], tensor.make_rng(0))


class TestBuild:
    def test_paper_feature_map_shape(self, paper_model):
        table = dict((name, shape) for name, shape, _ in paper_model.layer_table())
        assert table["pool"] == (512, 7, 7)
        assert table["flatten"] == (25088,)

    def test_paper_pool_progression(self, paper_model):
        pools = [shape for name, shape, _ in paper_model.layer_table()
                 if name == "pool"]
        assert [s[1] for s in pools] == [112, 56, 28, 14, 7]

    def test_layer_census(self, paper_model):
        census = paper_model.layer_census()
        assert census["conv"] == 13
        assert census["pool"] == 5
        assert census["lstm"] == 1
        assert census["dense"] >= 1
        assert paper_model.plan[-1]["kind"] == "softmax"

    def test_extractor_param_count_closed_form(self, paper_model):
        expected = model.extractor_param_count(paper_model.config)
        actual = sum(paper_model.params[f"conv{i}.w"].size +
                     paper_model.params[f"conv{i}.b"].size for i in range(1, 14))
        assert actual == expected == 14_714_688

    def test_bad_input_shape_rejected(self):
        with pytest.raises(ConfigError):
            model.build_hybrid(model.ModelConfig(input_shape=(3, 100, 100)),
                               tensor.make_rng(0))

    def test_bad_sequence_mode_rejected(self):
        cfg = model.ModelConfig(input_shape=(3, 32, 32), channels=(4, 8, 8, 16, 16),
                                sequence_mode="bogus")
        with pytest.raises(ConfigError):
            model.build_hybrid(cfg, tensor.make_rng(0))

    def test_single_step_mode_flattens_to_one_timestep(self):
        cfg = model.ModelConfig(input_shape=(3, 32, 32), channels=(4, 8, 8, 16, 16),
                                lstm_hidden=8, head_hidden=8,
                                sequence_mode="single_step")
        m = model.build_hybrid(cfg, tensor.make_rng(0))
        x = tensor.make_rng(1).standard_normal((2, 3, 32, 32)).astype(np.float32)
        probs, _ = m.forward(x)
        assert probs.shape == (2, 4)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)


class TestForwardBackward:
    def test_probability_rows(self):
        m = build_toy()
        x = tensor.make_rng(2).standard_normal((3, 3, 32, 32)).astype(np.float32)
        probs, caches = m.forward(x, mode="train")
        assert probs.shape == (3, 4)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)
        assert caches is not None

    def test_batch_independence(self):
        m = build_toy()
        rng = tensor.make_rng(3)
        x3 = rng.standard_normal((3, 3, 32, 32)).astype(np.float32)
        p3, _ = m.forward(x3, mode="eval")
        p1, _ = m.forward(x3[:1], mode="eval")
        assert np.allclose(p1[0], p3[0], atol=1e-6)

    def test_eval_equals_train_probs(self):
        m = build_toy()
        x = tensor.make_rng(4).standard_normal((2, 3, 32, 32)).astype(np.float32)
        pe, ce = m.forward(x, mode="eval")
        pt, _ = m.forward(x, mode="train")
        assert np.array_equal(pe, pt)
        assert ce is None

    def test_shape_mismatch(self):
        m = build_toy()
        with pytest.raises(DimensionError):
            m.forward(np.zeros((1, 3, 16, 16), dtype=np.float32))

    def test_backward_requires_caches(self):
        m = build_toy()
        x = np.zeros((1, 3, 32, 32), dtype=np.float32)
        probs, caches = m.forward(x, mode="eval")
        with pytest.raises(StateError):
            m.backward(caches, np.zeros_like(probs))

    def test_zero_upstream_zero_grads(self):
        m = build_toy()
        x = tensor.make_rng(5).standard_normal((2, 3, 32, 32)).astype(np.float32)
        probs, caches = m.forward(x)
        grads = m.backward(caches, np.zeros_like(probs))
        assert all(not g.any() for g in grads.values())

    def test_backward_deterministic(self):
        m = build_toy()
        x = tensor.make_rng(6).standard_normal((2, 3, 32, 32)).astype(np.float32)
        probs, caches = m.forward(x)
        up = np.ones_like(probs)
        g1 = m.backward(caches, up)
        g2 = m.backward(caches, up)
        assert all(np.array_equal(g1[k], g2[k]) for k in g1)

    def test_end_to_end_gradcheck_sampled_params(self):
        m = build_toy(dtype="float64")
        rng = tensor.make_rng(7)
        x = rng.standard_normal((2, 3, 32, 32))
        labels = np.zeros((2, 4))
        labels[0, 1] = labels[1, 3] = 1.0

        def loss():
            probs, _ = m.forward(x, mode="eval")
            return optim.cross_entropy(probs, labels)[0]

        probs, caches = m.forward(x)
        _, grad_probs = optim.cross_entropy(probs, labels)
        grads = m.backward(caches, grad_probs)

        all_params = m.all_params()
        names = sorted(all_params)
        pick = tensor.make_rng(8)
        eps = 1e-5
        for _ in range(20):
            name = names[int(pick.integers(len(names)))]
            arr = all_params[name]
            i = int(pick.integers(arr.size))
            orig = arr.reshape(-1)[i]
            arr.reshape(-1)[i] = orig + eps
            fp = loss()
            arr.reshape(-1)[i] = orig - eps
            fm = loss()
            arr.reshape(-1)[i] = orig
            num = (fp - fm) / (2 * eps)
            ana = grads[name].reshape(-1)[i]
            denom = max(abs(num), abs(ana), 1e-6)
            assert abs(num - ana) / denom <= 1e-3, (name, i, num, ana)


class TestCheckpoint:
    def make_state(self, m):
        x = tensor.make_rng(9).standard_normal((2, 3, 32, 32)).astype(np.float32)
        labels = np.zeros((2, 4), dtype=np.float32)
        labels[:, 0] = 1.0
        probs, caches = m.forward(x)
        _, grad_probs = optim.cross_entropy(probs, labels)
        grads = m.backward(caches, grad_probs)
        state = optim.AdamState()
        optim.adam_step(m.all_params(), grads, state, optim.TrainConfig())
        return state

    def test_round_trip_bit_exact(self, tmp_path):
        m = build_toy()
        state = self.make_state(m)
        p1 = tmp_path / "a.bin"
        p2 = tmp_path / "b.bin"
        model.save_checkpoint(m, state, p1, epoch=5, seed=9)
        loaded, lstate, meta = model.load_checkpoint(p1)
        for name, arr in m.all_params().items():
            assert np.array_equal(loaded.all_params()[name], arr)
        assert lstate.t == state.t
        for name in state.m:
            assert np.array_equal(lstate.m[name], state.m[name])
            assert np.array_equal(lstate.v[name], state.v[name])
        model.save_checkpoint(loaded, lstate, p2,
                              epoch=int(meta["epoch"]), seed=int(meta["seed"]))
        assert p1.read_bytes() == p2.read_bytes()

    def test_wrong_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(FormatError):
            model.load_checkpoint(p)

    def test_truncation_rejected(self, tmp_path):
        m = build_toy()
        p = tmp_path / "c.bin"
        model.save_checkpoint(m, None, p)
        (tmp_path / "t.bin").write_bytes(p.read_bytes()[:200])
        with pytest.raises(FormatError):
            model.load_checkpoint(tmp_path / "t.bin")

    def test_unknown_version_rejected(self, tmp_path):
        m = build_toy()
        p = tmp_path / "v.bin"
        model.save_checkpoint(m, None, p)
        raw = bytearray(p.read_bytes())
        raw[8:12] = struct.pack("<I", 99)
        p.write_bytes(bytes(raw))
        with pytest.raises(VersionError):
            model.load_checkpoint(p)

    def test_size_accounting(self, tmp_path):
        m = build_toy()
        p = tmp_path / "s.bin"
        model.save_checkpoint(m, None, p)
        meta = model._config_to_meta(m.config)
        meta.update(epoch="0", seed="0", adam_t="-1")
        meta_len = len("".join(f"{k}={v}\n" for k, v in sorted(meta.items())).encode())
        tensors = m.all_params()
        expected = 8 + 4 + 4 + meta_len + 4
        for name, arr in tensors.items():
            expected += 4 + len(name) + 4 + 8 * arr.ndim + 4 * arr.size
        assert p.stat().st_size == expected
