"""Refiner/discriminator contracts, losses, replay buffer, toy training."""

import numpy as np
import pytest

from helpers import noisy_corpus
from mogan.features import end_effector_trajectory
from mogan.generator import GeneratorNet
from mogan.refiner import (AdversarialTrainer, DiscriminatorNet,
                           GanTrainConfig, RefinerNet, ReplayBuffer,
                           buffer_cycle, discriminate, discriminator_loss,
                           refine, refiner_loss)
from mogan.skeleton import reference_skeleton

RNG = np.random.default_rng
SKEL = reference_skeleton()
FEAT = SKEL.dof + 2
AUX = 6 * len(SKEL.end_effectors)


def augmented(seqs):
    out = []
    for s in seqs:
        p, v = end_effector_trajectory(SKEL, s[:, :-2], 30.0)
        out.append(np.concatenate([s, p, v], axis=1))
    return np.stack(out)


class TestRefine:
    def test_residual_identity_with_zero_final_layer(self):
        net = RefinerNet(FEAT, AUX, 8, 8, RNG(0))
        net.fc2.w.value[:] = 0.0
        net.fc2.b.value[:] = 0.0
        seq = RNG(1).normal(0, 0.3, (9, FEAT + AUX))
        assert np.array_equal(refine(net, seq), seq[:, :FEAT])

    @pytest.mark.parametrize("length", [1, 17, 50])
    def test_length_preserved(self, length):
        net = RefinerNet(FEAT, AUX, 6, 6, RNG(2))
        out = refine(net, RNG(3).normal(0, 0.3, (length, FEAT + AUX)))
        assert out.shape == (length, FEAT)

    def test_matches_equation_transcription(self):
        # independent numpy transcription of FC -> LSTM -> FC + residual
        rng = RNG(4)
        net = RefinerNet(FEAT, AUX, 5, 5, rng)
        seq = rng.normal(0, 0.3, (4, FEAT + AUX))
        out = refine(net, seq)
        sig = lambda v: 1.0 / (1.0 + np.exp(-v))
        h = np.zeros(5)
        c = np.zeros(5)
        for t in range(4):
            a = np.maximum(seq[t] @ net.fc1.w.value + net.fc1.b.value, 0.0)
            z = np.concatenate([c, h, a])
            i = sig(z @ net.lstm.w["i"].value + net.lstm.b["i"].value)
            f = sig(z @ net.lstm.w["f"].value + net.lstm.b["f"].value)
            o = sig(z @ net.lstm.w["o"].value + net.lstm.b["o"].value)
            g = np.tanh(z @ net.lstm.w["g"].value + net.lstm.b["g"].value)
            c = f * c + i * g
            h = o * np.tanh(c)
            expect = h @ net.fc2.w.value + net.fc2.b.value + seq[t, :FEAT]
            assert np.abs(out[t] - expect).max() < 1e-12

    def test_dimension_mismatch(self):
        net = RefinerNet(FEAT, AUX, 4, 4, RNG(5))
        with pytest.raises(ValueError):
            refine(net, np.zeros((3, FEAT + AUX + 1)))


class TestDiscriminate:
    def test_zero_weights_half(self):
        net = DiscriminatorNet(AUX + 2, 6, 6, RNG(6))
        for blk in net.blocks().values():
            blk.value[:] = 0.0
        assert discriminate(net, RNG(7).normal(0, 1, (5, AUX + 2))) == 0.5

    def test_open_interval(self):
        net = DiscriminatorNet(AUX + 2, 6, 6, RNG(8))
        for scale in (0.1, 10.0, 1000.0):
            p = discriminate(net, RNG(9).normal(0, scale, (7, AUX + 2)))
            assert 0.0 < p < 1.0

    def test_trained_toy_separation(self):
        # constant sequences vs high-variance noise sequences
        rng = RNG(10)
        dim = AUX + 2
        net = DiscriminatorNet(dim, 8, 8, rng)
        from mogan.optim import RMSProp
        from mogan.refiner import discriminator_loss_nodes
        from mogan.autodiff import Tape

        opt = RMSProp(net.blocks(), lr=0.005)
        for _ in range(120):
            const = np.tile(rng.normal(0, 0.5, (8, 1, dim)), (1, 6, 1))
            noise = rng.normal(0, 1.5, (8, 6, dim))
            tape = Tape()
            bind = net.bind(tape)
            refs = [tape.constant(noise[:, t]) for t in range(6)]
            reals = [tape.constant(const[:, t]) for t in range(6)]
            loss = discriminator_loss_nodes(net, bind, refs, reals)
            for b in net.blocks().values():
                b.zero_grad()
            tape.backward(loss)
            bind.collect()
            opt.step()
        p_const = np.mean([discriminate(net, np.tile(rng.normal(0, 0.5, (1, dim)),
                                                     (6, 1)))
                           for _ in range(20)])
        p_noise = np.mean([discriminate(net, rng.normal(0, 1.5, (6, dim)))
                           for _ in range(20)])
        assert p_const - p_noise >= 0.3

    def test_empty_sequence_error(self):
        net = DiscriminatorNet(AUX + 2, 4, 4, RNG(11))
        from mogan.autodiff import Tape

        tape = Tape()
        with pytest.raises(ValueError):
            net.logits_nodes(net.bind(tape), [])


class TestLosses:
    def test_identity_refinement_zero_regularizer(self):
        rng = RNG(12)
        disc = DiscriminatorNet(AUX + 2, 4, 4, rng)
        seq = rng.normal(0, 0.3, (5, FEAT))
        full = refiner_loss(disc, SKEL, seq, seq, 20.0, 30.0)
        adv_only = refiner_loss(disc, SKEL, seq, seq, 0.0, 30.0)
        assert np.isclose(full, adv_only)

    def test_half_probability_gives_log2(self):
        rng = RNG(13)
        disc = DiscriminatorNet(AUX + 2, 4, 4, rng)
        for blk in disc.blocks().values():
            blk.value[:] = 0.0      # D == 0.5 everywhere
        seq = rng.normal(0, 0.3, (5, FEAT))
        assert np.isclose(refiner_loss(disc, SKEL, seq, seq, 20.0, 30.0),
                          np.log(2.0))

    def test_refiner_loss_term_by_term_oracle(self):
        rng = RNG(14)
        disc = DiscriminatorNet(AUX + 2, 4, 4, rng)
        inp = rng.normal(0, 0.3, (4, FEAT))
        ref = rng.normal(0, 0.3, (4, FEAT))
        lam = 20.0
        got = refiner_loss(disc, SKEL, inp, ref, lam, 30.0)
        # oracle: -log D(refined aux) + lam * sum ||root diff||^2
        p, v = end_effector_trajectory(SKEL, ref[:, :-2], 30.0)
        d_in = np.concatenate([p, v, ref[:, -2:]], axis=1)
        adv = -np.log(discriminate(disc, d_in))
        from mogan.features import GroundTransform, accumulate_transform

        def roots(seq):
            t = GroundTransform.identity()
            out = []
            for f in seq:
                t = accumulate_transform(t, f)
                x, z = t.position_xz()
                out.append([x, f[3], z])
            return np.array(out)

        reg = lam * float(np.sum((roots(inp) - roots(ref)) ** 2))
        assert abs(got - (adv + reg)) < 1e-9

    def test_discriminator_loss_chance_level(self):
        disc = DiscriminatorNet(AUX + 2, 4, 4, RNG(15))
        for blk in disc.blocks().values():
            blk.value[:] = 0.0
        rng = RNG(16)
        loss = discriminator_loss(disc, rng.normal(0, 1, (5, AUX + 2)),
                                  rng.normal(0, 1, (5, AUX + 2)))
        assert np.isclose(loss, 2.0 * np.log(2.0))

    def test_perfect_discriminator_loss_near_zero(self):
        # drive logits directly: clamp at the working precision
        disc = DiscriminatorNet(AUX + 2, 4, 4, RNG(17))
        rng = RNG(18)
        ref = rng.normal(0, 1, (4, AUX + 2))
        real = rng.normal(0, 1, (4, AUX + 2))
        # loss of an ideal classifier is bounded below by clamped logs
        p = 1.0 - 1e-6
        ideal = -np.log(p) - np.log(p)
        assert ideal < 1e-5

    def test_random_case_direct_formula(self):
        rng = RNG(19)
        disc = DiscriminatorNet(AUX + 2, 5, 5, rng)
        ref = rng.normal(0, 1, (6, AUX + 2))
        real = rng.normal(0, 1, (6, AUX + 2))
        got = discriminator_loss(disc, ref, real)
        expect = -np.log(1.0 - discriminate(disc, ref)) \
            - np.log(discriminate(disc, real))
        assert abs(got - expect) < 1e-9


class TestReplayBuffer:
    def test_half_batches(self):
        buf = ReplayBuffer(320)
        buf.fill([np.zeros((3, 4))] * 320)
        fresh = [np.ones((3, 4))] * 16
        a, b = buffer_cycle(buf, fresh, RNG(0), 16)
        assert len(a) == 16 and len(b) == 16

    def test_size_constant_over_cycles(self):
        buf = ReplayBuffer(320)
        buf.fill([np.zeros((2, 2))] * 320)
        rng = RNG(1)
        for _ in range(100):
            buffer_cycle(buf, [np.ones((2, 2))] * 16, rng, 16)
            assert len(buf) == 320

    def test_every_original_eventually_evicted(self):
        buf = ReplayBuffer(64)
        buf.fill([np.full((1, 1), float(i)) for i in range(64)])
        rng = RNG(2)
        for step in range(500):
            fresh = [np.full((1, 1), 1000.0 + step)] * 8
            buffer_cycle(buf, fresh, rng, 8)
        originals = [x for x in buf.data if x[0, 0] < 64]
        assert not originals

    def test_wrong_fresh_count(self):
        buf = ReplayBuffer(32)
        buf.fill([np.zeros((1, 1))] * 32)
        with pytest.raises(ValueError):
            buffer_cycle(buf, [np.zeros((1, 1))] * 5, RNG(3), 16)

    def test_unfilled_buffer_rejected(self):
        buf = ReplayBuffer(32)
        with pytest.raises(RuntimeError):
            buf.cycle([np.zeros((1, 1))] * 4, RNG(4))


class TestGenerateRefined:
    def test_identity_refiner_matches_plain_free_run(self):
        from mogan.design import _decode_clip
        from mogan.generator import free_run
        from mogan.refiner import generate_refined
        from mogan.synthgait import walking_clip
        from helpers import augmented_features

        clip = walking_clip(30)
        aug = augmented_features(clip)
        gen = GeneratorNet(FEAT, hidden=8, mixtures=2, rng=RNG(30))
        refiner = RefinerNet(FEAT, AUX, 6, 6, RNG(31))
        refiner.fc2.w.value[:] = 0.0
        refiner.fc2.b.value[:] = 0.0
        out = generate_refined(gen, refiner, SKEL, aug[:3], clip.frames[3],
                               20, RNG(9))
        plain = free_run(gen, aug[:3], 20, RNG(9))
        expect = _decode_clip(SKEL, 30.0, clip.frames[3], plain)
        assert np.array_equal(out.frames, expect.frames)
        assert np.array_equal(out.contacts, expect.contacts)

    @pytest.mark.parametrize("n", [1, 100])
    def test_output_length(self, n):
        from mogan.refiner import generate_refined
        from mogan.synthgait import walking_clip
        from helpers import augmented_features

        clip = walking_clip(30)
        aug = augmented_features(clip)
        gen = GeneratorNet(FEAT, hidden=6, mixtures=2, rng=RNG(32))
        refiner = RefinerNet(FEAT, AUX, 4, 4, RNG(33))
        out = generate_refined(gen, refiner, SKEL, aug[:3], clip.frames[3],
                               n, RNG(2))
        assert out.n_frames == n + 1   # anchor pose + generated frames


class TestAdversarialSchedule:
    def _trainer(self, cycles, rng):
        gen = GeneratorNet(FEAT, hidden=8, mixtures=2, rng=rng)
        seqs = noisy_corpus(2, 60, rng)
        cfg = GanTrainConfig(window=12, batch=8, buffer_size=16, cycles=cycles,
                             warmup_refiner=2, warmup_discriminator=2)
        return AdversarialTrainer(gen, seqs, SKEL, 30.0, cfg, rng,
                                  refiner_widths=(6, 6), disc_widths=(6, 6))

    def test_zero_steps_leave_networks_unchanged(self):
        rng = RNG(20)
        gen = GeneratorNet(FEAT, hidden=8, mixtures=2, rng=rng)
        seqs = noisy_corpus(2, 60, rng)
        cfg = GanTrainConfig(window=12, batch=8, buffer_size=16, cycles=0,
                             warmup_refiner=0, warmup_discriminator=0)
        tr = AdversarialTrainer(gen, seqs, SKEL, 30.0, cfg, rng,
                                refiner_widths=(6, 6), disc_widths=(6, 6))
        r_before = {k: b.value.copy() for k, b in tr.refiner.blocks().items()}
        d_before = {k: b.value.copy() for k, b in tr.disc.blocks().items()}
        tr.run()
        for k, b in tr.refiner.blocks().items():
            assert np.array_equal(r_before[k], b.value)
        for k, b in tr.disc.blocks().items():
            assert np.array_equal(d_before[k], b.value)

    def test_multiplier_semantics(self):
        tr = self._trainer(0, RNG(21))
        tr.last_d_loss = 0.005
        assert tr.refiner_iterations() == 10
        tr.last_d_loss = 1.5
        assert tr.refiner_iterations() == 2
        tr.last_d_loss = 0.3
        assert tr.refiner_iterations() == 5

    def test_generator_frozen_through_training(self):
        rng = RNG(22)
        tr = self._trainer(2, rng)
        g_before = {k: b.value.copy() for k, b in tr.gen.blocks().items()}
        tr.run()
        for k, b in tr.gen.blocks().items():
            assert np.array_equal(g_before[k], b.value)

    def test_history_schema(self):
        tr = self._trainer(2, RNG(23))
        tr.run()
        phases = {h[0] for h in tr.history}
        assert "refiner-warmup" in phases and "disc-warmup" in phases
        assert "refiner" in phases and "disc" in phases
        for phase, it, loss, dloss, mult in tr.history:
            assert np.isfinite(loss) and np.isfinite(dloss) and mult >= 1
