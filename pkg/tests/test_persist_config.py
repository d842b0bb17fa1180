"""Model container round trips, format errors, config validation."""

import json

import numpy as np
import pytest

from mogan.config import RunConfig
from mogan.clipio import read_clip, write_clip
from mogan.generator import GeneratorNet
from mogan.persist import (BadMagicError, KindMismatchError,
                           ShapeMismatchError, TruncatedPayloadError,
                           load_model, read_manifest, save_model)
from mogan.refiner import DiscriminatorNet, RefinerNet
from mogan.skeleton import MotionClip, reference_skeleton

RNG = np.random.default_rng


class TestModelContainer:
    def test_roundtrip_bit_exact_at_32bit(self, tmp_path):
        net = GeneratorNet(4, hidden=6, mixtures=2, rng=RNG(0))
        path = tmp_path / "g.mg"
        save_model(net, path)
        loaded = load_model(path)
        for k, b in net.blocks().items():
            expect = b.value.astype("<f4").astype(np.float64)
            assert np.array_equal(loaded.blocks()[k].value, expect)
        # a second save/load cycle is the identity
        save_model(loaded, path)
        again = load_model(path)
        for k, b in loaded.blocks().items():
            assert np.array_equal(again.blocks()[k].value, b.value)

    def test_manifest_tensor_count(self, tmp_path):
        net = RefinerNet(5, 4, 3, 3, RNG(1))
        path = tmp_path / "r.mg"
        save_model(net, path, meta={"note": "test"})
        manifest, _ = read_manifest(path)
        assert len(manifest["tensors"]) == len(net.blocks())
        assert manifest["meta"]["note"] == "test"

    def test_size_independent_of_training_volume(self, tmp_path):
        # same architecture trained on different data volumes
        from mogan.generator import RnnTrainConfig, train_generator
        from mogan.synthgait import oscillator_sequences

        rng = RNG(2)
        cfg = RnnTrainConfig(batch_size=2, window=10, epochs=2)
        small, _ = train_generator(oscillator_sequences(2, 30, rng), cfg,
                                   rng, hidden=6, mixtures=2)
        big, _ = train_generator(oscillator_sequences(8, 120, rng), cfg,
                                 rng, hidden=6, mixtures=2)
        p1, p2 = tmp_path / "small.mg", tmp_path / "big.mg"
        save_model(small, p1)
        save_model(big, p2)
        assert p1.stat().st_size == p2.stat().st_size

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.mg"
        path.write_bytes(b"NOTMAG" + b"\x00" * 64)
        with pytest.raises(BadMagicError):
            load_model(path)

    def test_truncated_payload(self, tmp_path):
        net = GeneratorNet(3, hidden=4, mixtures=2, rng=RNG(3))
        path = tmp_path / "g.mg"
        save_model(net, path)
        data = path.read_bytes()
        path.write_bytes(data[:-50])
        with pytest.raises(TruncatedPayloadError):
            load_model(path)

    def test_kind_mismatch(self, tmp_path):
        net = RefinerNet(5, 4, 3, 3, RNG(4))
        path = tmp_path / "r.mg"
        save_model(net, path)
        with pytest.raises(KindMismatchError):
            load_model(path, expect_kind="generator")

    def test_shape_mismatch(self, tmp_path):
        net = GeneratorNet(3, hidden=4, mixtures=2, rng=RNG(5))
        path = tmp_path / "g.mg"
        save_model(net, path)
        import struct

        raw = path.read_bytes()
        (n,) = struct.unpack("<I", raw[6:10])
        manifest = json.loads(raw[10:10 + n])
        manifest["tensors"][0]["shape"][0] += 1
        blob = json.dumps(manifest).encode()
        path.write_bytes(raw[:6] + struct.pack("<I", len(blob)) + blob
                         + raw[10 + n:] + b"\x00" * 512)
        with pytest.raises(ShapeMismatchError):
            load_model(path)

    def test_discriminator_roundtrip(self, tmp_path):
        net = DiscriminatorNet(7, 4, 4, RNG(6))
        save_model(net, tmp_path / "d.mg")
        loaded = load_model(tmp_path / "d.mg", expect_kind="discriminator")
        assert loaded.in_dim == 7


class TestClipFormat:
    def test_roundtrip_exact(self, tmp_path):
        skel = reference_skeleton()
        rng = RNG(7)
        frames = rng.normal(0, 1, (12, skel.dof))
        contacts = (rng.uniform(size=(12, 2)) > 0.5).astype(float)
        clip = MotionClip(skel, 30.0, frames, contacts)
        path = tmp_path / "c.clip"
        write_clip(clip, path)
        back = read_clip(path)
        assert np.array_equal(back.frames, clip.frames)
        assert np.array_equal(back.contacts, clip.contacts)
        assert back.frame_rate == 30.0
        assert [j.name for j in back.skeleton.joints] == \
            [j.name for j in skel.joints]

    def test_column_mismatch_rejected(self, tmp_path):
        skel = reference_skeleton()
        clip = MotionClip(skel, 30.0, np.zeros((3, skel.dof)))
        path = tmp_path / "c.clip"
        write_clip(clip, path)
        lines = path.read_text().splitlines()
        lines[1] += " 1.0"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="line 2"):
            read_clip(path)


class TestRunConfig:
    def test_reference_constants_as_defaults(self):
        cfg = RunConfig.default()
        assert cfg.rnn.batch_size == 20
        assert cfg.rnn.window == 50
        assert cfg.rnn.learning_rate == 0.001
        assert cfg.rnn.lr_decay == 0.95
        assert cfg.rnn.epochs == 300
        assert cfg.rnn.noise_sigma == 0.05
        assert (cfg.rnn.clip_lo, cfg.rnn.clip_hi) == (-5.0, 5.0)
        assert cfg.rnn.rmsprop_rho == 0.9
        assert cfg.nets.mixtures == 5
        assert cfg.gan.lambda_root == 20.0
        assert cfg.gan.lr_refiner == 0.002
        assert cfg.gan.lr_discriminator == 0.005
        assert cfg.gan.rmsprop_rho == 0.9
        assert cfg.gan.warmup_refiner == 75
        assert cfg.gan.warmup_discriminator == 75
        assert cfg.gan.ratio == 5
        assert cfg.gan.balance_low == 0.01
        assert cfg.gan.balance_high == 1.0
        assert cfg.gan.buffer_size == 320
        assert cfg.gan.batch == 32
        assert cfg.map.sigma_noise == 0.05
        assert cfg.map.sigma_fit_sq == 0.5
        assert cfg.map.window == 34
        assert cfg.map.overlap == 17
        assert cfg.data.downsample_factor == 4

    def test_unknown_section_rejected(self):
        with pytest.raises(ValueError, match="unknown config section"):
            RunConfig.from_dict({"bogus": {}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            RunConfig.from_dict({"rnn": {"not_a_field": 1}})

    def test_invalid_value_rejected(self):
        with pytest.raises(ValueError):
            RunConfig.from_dict({"rnn": {"window": 1}})
        with pytest.raises(ValueError):
            RunConfig.from_dict({"map": {"overlap": 40}})

    def test_json_roundtrip(self):
        cfg = RunConfig.default()
        again = RunConfig.from_json(cfg.to_json())
        assert again.to_json() == cfg.to_json()
