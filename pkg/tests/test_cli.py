"""CLI exit codes, pipeline smoke through the subcommands."""

import json

import numpy as np
import pytest

from mogan.bvh import write_bvh
from mogan.cli import run_cli
from mogan.clipio import read_clip, write_clip
from mogan.generator import GeneratorNet
from mogan.persist import save_model
from mogan.synthgait import walking_clip

RNG = np.random.default_rng


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """BVH input, prepped clip and a small untrained generator."""
    root = tmp_path_factory.mktemp("cli")
    clip = walking_clip(200, phase0=0.25)
    (root / "walk.bvh").write_text(write_bvh(clip.skeleton, clip))
    assert run_cli(["prep", str(root / "walk.bvh"), "--out-dir", str(root),
                    "--factor", "1"]) == 0
    prepped = read_clip(root / "walk.clip")
    net = GeneratorNet(prepped.skeleton.dof + 2, hidden=8, mixtures=2,
                       rng=RNG(0))
    save_model(net, root / "gen.mg")
    return root


class TestUsage:
    def test_unknown_flag_exits_1(self, capsys):
        assert run_cli(["sample", "--nonsense"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_command_exits_1(self):
        assert run_cli(["frobnicate"]) == 1

    def test_runtime_failure_exits_2(self, tmp_path, capsys):
        rc = run_cli(["sample", "--generator", str(tmp_path / "missing.mg"),
                      "--init", "x", "--frames", "5", "--out", "y"])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestPrep:
    def test_outputs_labeled_clip(self, workdir):
        clip = read_clip(workdir / "walk.clip")
        assert clip.contacts is not None
        assert 0.3 < clip.contacts.mean() < 0.9

    def test_downsampling(self, workdir, tmp_path):
        assert run_cli(["prep", str(workdir / "walk.bvh"), "--out-dir",
                        str(tmp_path), "--factor", "2"]) == 0
        halved = read_clip(tmp_path / "walk.clip")
        assert np.isclose(halved.frame_rate, 15.0)
        assert halved.n_frames == 100


class TestSample:
    def test_deterministic_output_files(self, workdir, tmp_path):
        a, b = tmp_path / "a.clip", tmp_path / "b.clip"
        for out in (a, b):
            rc = run_cli(["sample", "--generator", str(workdir / "gen.mg"),
                          "--init", str(workdir / "walk.clip"),
                          "--frames", "100", "--seed", "7",
                          "--out", str(out)])
            assert rc == 0
        assert a.read_bytes() == b.read_bytes()

    def test_different_seed_differs(self, workdir, tmp_path):
        a, b = tmp_path / "a.clip", tmp_path / "b.clip"
        for seed, out in (("7", a), ("8", b)):
            run_cli(["sample", "--generator", str(workdir / "gen.mg"),
                     "--init", str(workdir / "walk.clip"),
                     "--frames", "50", "--seed", seed, "--out", str(out)])
        assert a.read_bytes() != b.read_bytes()

    def test_bvh_export(self, workdir, tmp_path):
        out = tmp_path / "o.clip"
        bvh = tmp_path / "o.bvh"
        rc = run_cli(["sample", "--generator", str(workdir / "gen.mg"),
                      "--init", str(workdir / "walk.clip"), "--frames", "10",
                      "--out", str(out), "--bvh", str(bvh)])
        assert rc == 0
        from mogan.bvh import parse_bvh

        _, clip = parse_bvh(bvh.read_text())
        assert clip.n_frames == 11     # init pose + generated frames


class TestDesignDenoise:
    def test_design_writes_clip_and_trace(self, workdir, tmp_path):
        curve = tmp_path / "curve.json"
        curve.write_text(json.dumps([[0.0, 0.0], [0.0, 4.0]]))
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "map": {"window": 10, "overlap": 5, "candidates": 4,
                    "pso_particles": 6, "pso_iterations": 3,
                    "lbfgs_iterations": 3},
        }))
        out = tmp_path / "designed.clip"
        trace = tmp_path / "trace.csv"
        rc = run_cli(["design", "--generator", str(workdir / "gen.mg"),
                      "--init", str(workdir / "walk.clip"),
                      "--curve", str(curve), "--frames", "15",
                      "--out", str(out), "--trace", str(trace),
                      "--config", str(cfg)])
        assert rc == 0
        assert read_clip(out).n_frames == 16
        assert trace.read_text().startswith("window,phase,iteration,loss")

    def test_denoise_roundtrip_shape(self, workdir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "map": {"window": 10, "overlap": 5, "candidates": 4,
                    "pso_particles": 6, "pso_iterations": 3,
                    "lbfgs_iterations": 3},
        }))
        noisy = read_clip(workdir / "walk.clip")
        src = tmp_path / "noisy.clip"
        frames = noisy.frames[:30].copy()
        frames[:, 6:] += RNG(3).normal(0, 0.05, frames[:, 6:].shape)
        from mogan.skeleton import MotionClip

        write_clip(MotionClip(noisy.skeleton, noisy.frame_rate, frames), src)
        out = tmp_path / "clean.clip"
        rc = run_cli(["denoise", "--generator", str(workdir / "gen.mg"),
                      "--in", str(src), "--out", str(out),
                      "--config", str(cfg)])
        assert rc == 0
        assert read_clip(out).n_frames == 30


class TestGradcheckCommand:
    def test_exit_zero_and_table(self, capsys):
        assert run_cli(["gradcheck", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "generator/params" in out
        assert "map-objective/noise" in out
        assert "FAIL" not in out


class TestTrainSmoke:
    def test_train_rnn_writes_model_and_csv(self, workdir, tmp_path):
        out = tmp_path / "trained.mg"
        csv_path = tmp_path / "loss.csv"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "rnn": {"epochs": 2, "batch_size": 2, "window": 20},
        }))
        rc = run_cli(["train-rnn", str(workdir / "walk.clip"),
                      "--out", str(out), "--config", str(cfg),
                      "--hidden", "8", "--loss-csv", str(csv_path)])
        assert rc == 0
        assert out.exists()
        assert csv_path.read_text().startswith("iteration,epoch,nll")

    def test_train_refiner_smoke(self, workdir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "gan": {"window": 12, "batch": 4, "buffer_size": 8, "cycles": 1,
                    "warmup_refiner": 1, "warmup_discriminator": 1},
            "nets": {"refiner_fc": 6, "refiner_lstm": 6,
                     "discriminator_fc": 6, "discriminator_lstm": 6},
        }))
        rc = run_cli(["train-refiner", str(workdir / "walk.clip"),
                      "--generator", str(workdir / "gen.mg"),
                      "--out-refiner", str(tmp_path / "r.mg"),
                      "--out-discriminator", str(tmp_path / "d.mg"),
                      "--config", str(cfg),
                      "--loss-csv", str(tmp_path / "gan.csv")])
        assert rc == 0
        header = (tmp_path / "gan.csv").read_text().splitlines()[0]
        assert header == "phase,iteration,loss,d_softmax_loss,g_multiplier"
