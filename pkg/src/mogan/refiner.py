"""Adversarial refinement: residual refiner, sequence discriminator,
replay buffer and the balanced alternating training loop.

The refiner maps [features ; contacts ; p_end ; v_end] per frame through
FC -> LSTM -> FC and adds the result back onto the feature+contact
block.  The discriminator reads [p_end ; v_end ; contacts] per frame,
pools a bidirectional LSTM over time and emits two logits whose softmax
is the probability of the sequence being real.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape
from .diffkin import end_effector_nodes, root_path_nodes
from .features import end_effector_trajectory
from .generator import GeneratorNet, free_run_batch
from .layers import BiLSTM, Binding, Dense, LSTMCell, merge_blocks
from .optim import RMSProp
from .skeleton import Skeleton

N_CONTACT = 2
PROB_CLAMP = 1e-6


@dataclass
class GanTrainConfig:
    lambda_root: float = 20.0        # weight of the root self-regularizer
    lr_refiner: float = 0.002
    lr_discriminator: float = 0.005
    rmsprop_rho: float = 0.9
    warmup_refiner: int = 75
    warmup_discriminator: int = 75
    ratio: int = 5                   # refiner updates per discriminator update
    balance_low: float = 0.01        # double refiner iterations below this
    balance_high: float = 1.0        # halve refiner iterations above this
    buffer_size: int = 320
    batch: int = 32
    window: int = 50
    cycles: int = 60                 # post-warmup G:D cycles
    clip_lo: float = -5.0
    clip_hi: float = 5.0

    def __post_init__(self):
        if self.ratio < 1:
            raise ValueError("ratio must be >= 1")
        if self.batch % 2 != 0:
            raise ValueError("batch must be even (half fresh, half buffered)")


class RefinerNet:
    """FC (rectified) -> LSTM -> FC plus a residual skip of the input
    feature+contact block."""

    kind = "refiner"

    def __init__(self, feat_dim: int, aux_dim: int, fc_width: int = 128,
                 lstm_width: int = 128, rng: np.random.Generator | None = None,
                 lstm_form: str = "reference"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.feat_dim = feat_dim          # features + contacts
        self.aux_dim = aux_dim            # p_end + v_end channels
        self.fc_width = fc_width
        self.lstm_width = lstm_width
        self.lstm_form = lstm_form
        self.fc1 = Dense("r_fc1", feat_dim + aux_dim, fc_width, rng, rectified=True)
        self.lstm = LSTMCell("r_lstm", fc_width, lstm_width, rng, lstm_form)
        self.fc2 = Dense("r_fc2", lstm_width, feat_dim, rng)
        self.fc2.w.value *= 0.01    # start close to the identity refiner

    def blocks(self):
        return merge_blocks(self.fc1, self.lstm, self.fc2)

    def config(self) -> dict:
        return {"feat_dim": self.feat_dim, "aux_dim": self.aux_dim,
                "fc_width": self.fc_width, "lstm_width": self.lstm_width,
                "lstm_form": self.lstm_form}

    @classmethod
    def from_config(cls, cfg: dict) -> "RefinerNet":
        return cls(cfg["feat_dim"], cfg["aux_dim"], cfg["fc_width"],
                   cfg["lstm_width"], np.random.default_rng(0), cfg["lstm_form"])

    def bind(self, tape: Tape, trainable: bool = True) -> Binding:
        return Binding(tape, self.blocks(), trainable)

    def apply_nodes(self, bind: Binding, xs: list[Node]) -> list[Node]:
        """Per-frame refined feature+contact nodes (residual included)."""
        batch = None if xs[0].value.ndim == 1 else xs[0].value.shape[0]
        state = self.lstm.zero_state(bind.tape, batch)
        out = []
        for x in xs:
            if x.value.shape[-1] != self.feat_dim + self.aux_dim:
                raise ValueError("refiner input dim mismatch")
            h = self.fc1.apply(bind, x)
            state = self.lstm.step(bind, state, h)
            delta = self.fc2.apply(bind, state.h)
            out.append(ad.add(delta, x[..., : self.feat_dim]))
        return out


def refine(net: RefinerNet, seq: np.ndarray) -> np.ndarray:
    """Refine one augmented sequence (T, feat+aux) -> (T, feat)."""
    seq = np.asarray(seq, dtype=np.float64)
    tape = Tape()
    bind = net.bind(tape)
    outs = net.apply_nodes(bind, [tape.constant(seq[t]) for t in range(seq.shape[0])])
    return np.stack([o.value for o in outs])


def refine_batch(net: RefinerNet, seqs: np.ndarray) -> np.ndarray:
    """(B, T, feat+aux) -> (B, T, feat), values only."""
    tape = Tape()
    bind = net.bind(tape)
    outs = net.apply_nodes(bind, [tape.constant(seqs[:, t])
                                  for t in range(seqs.shape[1])])
    return np.stack([o.value for o in outs], axis=1)


class DiscriminatorNet:
    """FC (rectified) -> BiLSTM -> temporal mean -> FC -> 2 logits."""

    kind = "discriminator"

    def __init__(self, in_dim: int, fc_width: int = 64, lstm_width: int = 64,
                 rng: np.random.Generator | None = None,
                 lstm_form: str = "reference"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.fc_width = fc_width
        self.lstm_width = lstm_width
        self.lstm_form = lstm_form
        self.fc1 = Dense("d_fc1", in_dim, fc_width, rng, rectified=True)
        self.bilstm = BiLSTM("d_bilstm", fc_width, lstm_width, rng, lstm_form)
        self.fc2 = Dense("d_fc2", 2 * lstm_width, 2, rng)

    def blocks(self):
        return merge_blocks(self.fc1, self.bilstm, self.fc2)

    def config(self) -> dict:
        return {"in_dim": self.in_dim, "fc_width": self.fc_width,
                "lstm_width": self.lstm_width, "lstm_form": self.lstm_form}

    @classmethod
    def from_config(cls, cfg: dict) -> "DiscriminatorNet":
        return cls(cfg["in_dim"], cfg["fc_width"], cfg["lstm_width"],
                   np.random.default_rng(0), cfg["lstm_form"])

    def bind(self, tape: Tape, trainable: bool = True) -> Binding:
        return Binding(tape, self.blocks(), trainable)

    def logits_nodes(self, bind: Binding, xs: list[Node]) -> Node:
        if not xs:
            raise ValueError("empty sequence")
        hs = self.bilstm.apply(bind, [self.fc1.apply(bind, x) for x in xs])
        pooled = ad.amean(ad.stack_last(hs), axis=-1)
        return self.fc2.apply(bind, pooled)

    def log_prob_nodes(self, bind: Binding, xs: list[Node]) -> tuple[Node, Node]:
        """(log p_real, log p_refined), numerically safe via log-softmax."""
        logits = self.logits_nodes(bind, xs)
        lse = ad.logsumexp(logits, axis=-1)
        return ad.sub(logits[..., 1], lse), ad.sub(logits[..., 0], lse)


def discriminate(net: DiscriminatorNet, seq: np.ndarray) -> float:
    """Probability in (0, 1) that one sequence (T, in_dim) is real."""
    seq = np.asarray(seq, dtype=np.float64)
    tape = Tape()
    bind = net.bind(tape)
    log_real, _ = net.log_prob_nodes(
        bind, [tape.constant(seq[t]) for t in range(seq.shape[0])])
    p = float(np.exp(log_real.value))
    return float(np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP))


def _root_reg_nodes(input_feats: list[Node], refined: list[Node],
                    lam: float) -> Node:
    """lambda * sum_t ||root(input)_t - root(refined)_t||^2 (world frame)."""
    xi, zi, _ = root_path_nodes(input_feats, 0.0, 0.0, 0.0)
    xr, zr, _ = root_path_nodes(refined, 0.0, 0.0, 0.0)
    terms = []
    for t in range(len(refined)):
        dx = ad.sub(xi[t], xr[t])
        dz = ad.sub(zi[t], zr[t])
        dy = ad.sub(input_feats[t][..., 3], refined[t][..., 3])
        terms.append(ad.add(ad.add(ad.square(dx), ad.square(dy)), ad.square(dz)))
    return ad.mul(ad.asum(ad.stack_last(terms), axis=-1), lam)


def _aux_nodes(skel: Skeleton, refined: list[Node], frame_rate: float) -> list[Node]:
    """Differentiable [p_end ; v_end] channels of refined frames."""
    flat = ad.concat([ad.reshape(r, (1,) + r.value.shape) if r.value.ndim == 1
                      else ad.reshape(r, (r.value.shape[0], 1, r.value.shape[1]))
                      for r in refined], axis=-2)
    b, t = flat.value.shape[0], flat.value.shape[1]
    p = end_effector_nodes(skel, ad.reshape(flat, (b * t, flat.value.shape[2])))
    e = p.value.shape[-1]
    p = ad.reshape(p, (b, t, e))
    if t > 1:
        diffs = ad.mul(ad.sub(p[:, 1:], p[:, :-1]), frame_rate)
        v = ad.concat([diffs[:, 0:1], diffs], axis=1)
    else:
        v = ad.mul(p, 0.0)
    out = []
    for i in range(t):
        pi, vi = p[:, i], v[:, i]
        out.append(ad.concat([pi, vi], axis=-1))
    return out


def refiner_loss_nodes(disc: DiscriminatorNet, dbind: Binding, skel: Skeleton,
                       input_feats: list[Node], refined: list[Node],
                       lam: float, frame_rate: float) -> Node:
    """Adversarial + root self-regularization loss (mean over batch)."""
    aux = _aux_nodes(skel, refined, frame_rate)
    d_in = [ad.concat([a, r[..., -N_CONTACT:]], axis=-1)
            for a, r in zip(aux, refined)]
    log_real, _ = disc.log_prob_nodes(dbind, d_in)
    adv = ad.mul(log_real, -1.0)
    reg = _root_reg_nodes(input_feats, refined, lam)
    return ad.amean(ad.add(adv, reg))


def discriminator_loss_nodes(disc: DiscriminatorNet, bind: Binding,
                             refined_frames: list[Node],
                             real_frames: list[Node]) -> Node:
    """-log(1 - D(refined)) - log D(real), batch means."""
    _, log_fake = disc.log_prob_nodes(bind, refined_frames)
    log_real, _ = disc.log_prob_nodes(bind, real_frames)
    return ad.sub(ad.amean(ad.mul(log_fake, -1.0)),
                  ad.amean(log_real))


def refiner_loss(disc: DiscriminatorNet, skel: Skeleton,
                 input_seq: np.ndarray, refined_seq: np.ndarray,
                 lam: float, frame_rate: float) -> float:
    """Loss value for one (T, feat) input/refined pair."""
    tape = Tape()
    bind = disc.bind(tape)
    ins = [tape.constant(input_seq[t][None, :]) for t in range(input_seq.shape[0])]
    refs = [tape.constant(refined_seq[t][None, :])
            for t in range(refined_seq.shape[0])]
    return float(refiner_loss_nodes(disc, bind, skel, ins, refs,
                                    lam, frame_rate).value)


def discriminator_loss(disc: DiscriminatorNet, refined_seq: np.ndarray,
                       real_seq: np.ndarray) -> float:
    tape = Tape()
    bind = disc.bind(tape)
    refs = [tape.constant(refined_seq[t][None, :])
            for t in range(refined_seq.shape[0])]
    reals = [tape.constant(real_seq[t][None, :])
             for t in range(real_seq.shape[0])]
    return float(discriminator_loss_nodes(disc, bind, refs, reals).value)


class ReplayBuffer:
    """Fixed-capacity store of refined sequences for discriminator mixes."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.data: list[np.ndarray] = []

    def __len__(self):
        return len(self.data)

    def fill(self, seqs: list[np.ndarray]) -> None:
        self.data = [np.asarray(s) for s in seqs]
        if len(self.data) != self.capacity:
            raise ValueError(f"warm fill needs {self.capacity} sequences")

    def cycle(self, fresh: list[np.ndarray], rng: np.random.Generator
              ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Return (fresh, sampled) half-batches, then overwrite |fresh|
        uniformly chosen slots with the fresh sequences."""
        if len(self.data) != self.capacity:
            raise RuntimeError("buffer not warm-filled")
        k = len(fresh)
        sampled_idx = rng.integers(0, self.capacity, size=k)
        sampled = [self.data[i] for i in sampled_idx]
        replace_idx = rng.choice(self.capacity, size=k, replace=False)
        for i, seq in zip(replace_idx, fresh):
            self.data[i] = np.asarray(seq)
        return list(fresh), sampled


def buffer_cycle(buf: ReplayBuffer, fresh: list[np.ndarray],
                 rng: np.random.Generator, half_batch: int
                 ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    if len(fresh) != half_batch:
        raise ValueError(f"expected {half_batch} fresh sequences, got {len(fresh)}")
    return buf.cycle(fresh, rng)


def generate_refined(gen: GeneratorNet, refiner: RefinerNet,
                     skel: Skeleton, init_features: np.ndarray,
                     init_pose: np.ndarray, n_frames: int,
                     rng: np.random.Generator, frame_rate: float = 30.0,
                     zero_noise: bool = False):
    """Free-run the generator, refine the result, decode to a clip.

    Contact labels come from the refined contact bits.
    """
    from .design import _decode_clip
    from .features import local_pose_from_feature
    from .generator import free_run
    from .skeleton import fk_positions

    feats = free_run(gen, init_features, n_frames, rng, zero_noise)
    if n_frames >= 2:
        p, v = end_effector_trajectory(skel, feats[:, :-N_CONTACT], frame_rate)
    else:  # single frame: no motion to difference
        local = local_pose_from_feature(feats[0, :-N_CONTACT])
        p = fk_positions(skel, local)[skel.end_effectors].reshape(1, -1)
        v = np.zeros_like(p)
    refined = refine(refiner, np.concatenate([feats, p, v], axis=1))
    return _decode_clip(skel, frame_rate, init_pose, refined)


def _window_pool(sequences: list[np.ndarray], window: int) -> list[tuple[int, int]]:
    pool = []
    for i, s in enumerate(sequences):
        for lo in range(0, s.shape[0] - window + 1, max(window // 2, 1)):
            pool.append((i, lo))
    if not pool:
        raise ValueError(f"no sequence long enough for window {window}")
    return pool


class AdversarialTrainer:
    """Owns the nets, data plumbing and schedule of the GAN phase."""

    def __init__(self, gen: GeneratorNet, sequences: list[np.ndarray],
                 skel: Skeleton, frame_rate: float, cfg: GanTrainConfig,
                 rng: np.random.Generator,
                 refiner: RefinerNet | None = None,
                 disc: DiscriminatorNet | None = None,
                 refiner_widths: tuple[int, int] = (128, 128),
                 disc_widths: tuple[int, int] = (64, 64)):
        self.gen = gen
        self.sequences = [np.asarray(s, dtype=np.float64) for s in sequences]
        self.skel = skel
        self.frame_rate = frame_rate
        self.cfg = cfg
        self.rng = rng
        self.feat_dim = self.sequences[0].shape[1]
        self.aux_dim = 6 * len(skel.end_effectors)
        self.refiner = refiner or RefinerNet(
            self.feat_dim, self.aux_dim, refiner_widths[0], refiner_widths[1],
            rng, gen.lstm_form)
        self.disc = disc or DiscriminatorNet(
            self.aux_dim + N_CONTACT, disc_widths[0], disc_widths[1],
            rng, gen.lstm_form)
        self.opt_r = RMSProp(self.refiner.blocks(), lr=cfg.lr_refiner,
                             rho=cfg.rmsprop_rho)
        self.opt_d = RMSProp(self.disc.blocks(), lr=cfg.lr_discriminator,
                             rho=cfg.rmsprop_rho)
        self.buffer = ReplayBuffer(cfg.buffer_size)
        self.pool = _window_pool(self.sequences, cfg.window)
        self.history: list[tuple] = []
        self.iteration = 0
        self.last_d_loss = 2.0 * np.log(2.0)  # chance level before any update

    # -- data plumbing -------------------------------------------------
    def real_windows(self, n: int) -> np.ndarray:
        picks = self.rng.integers(0, len(self.pool), size=n)
        out = np.empty((n, self.cfg.window, self.feat_dim))
        for j, p in enumerate(picks):
            i, lo = self.pool[p]
            out[j] = self.sequences[i][lo:lo + self.cfg.window]
        return out

    def generate_raw(self, n: int) -> np.ndarray:
        """Fresh generator free-runs warmed from real windows."""
        warm = self.real_windows(n)[:, :2]
        return free_run_batch(self.gen, warm, self.cfg.window, self.rng)

    def augment(self, seqs: np.ndarray) -> np.ndarray:
        """Append [p_end ; v_end] channels (numpy path, constants)."""
        b, t, _ = seqs.shape
        out = np.empty((b, t, self.feat_dim + self.aux_dim))
        for i in range(b):
            p, v = end_effector_trajectory(self.skel, seqs[i, :, :-N_CONTACT],
                                           self.frame_rate)
            out[i] = np.concatenate([seqs[i], p, v], axis=1)
        return out

    def disc_input(self, seqs: np.ndarray) -> np.ndarray:
        """[p_end ; v_end ; contacts] channels for data sequences."""
        b, t, _ = seqs.shape
        out = np.empty((b, t, self.aux_dim + N_CONTACT))
        for i in range(b):
            p, v = end_effector_trajectory(self.skel, seqs[i, :, :-N_CONTACT],
                                           self.frame_rate)
            out[i] = np.concatenate([p, v, seqs[i, :, -N_CONTACT:]], axis=1)
        return out

    def refined_disc_input(self, n: int) -> np.ndarray:
        raw = self.generate_raw(n)
        refined = refine_batch(self.refiner, self.augment(raw))
        return self.disc_input(refined)

    # -- updates -------------------------------------------------------
    def refiner_update(self) -> float:
        raw = self.generate_raw(self.cfg.batch)
        aug = self.augment(raw)
        tape = Tape()
        rbind = self.refiner.bind(tape)
        dbind = self.disc.bind(tape, trainable=False)  # frozen this phase
        xs = [tape.constant(aug[:, t]) for t in range(aug.shape[1])]
        ins = [tape.constant(raw[:, t]) for t in range(raw.shape[1])]
        refined = self.refiner.apply_nodes(rbind, xs)
        loss = refiner_loss_nodes(self.disc, dbind, self.skel, ins, refined,
                                  self.cfg.lambda_root, self.frame_rate)
        if not np.isfinite(loss.value):
            raise RuntimeError(f"non-finite refiner loss at iteration {self.iteration}")
        for b in self.refiner.blocks().values():
            b.zero_grad()
        tape.backward(loss)
        rbind.collect()  # discriminator stays frozen here
        self.opt_r.step(clip=(self.cfg.clip_lo, self.cfg.clip_hi))
        return float(loss.value)

    def discriminator_update(self) -> float:
        half = self.cfg.batch // 2
        fresh = [s for s in self.refined_disc_input(half)]
        fresh_half, buffered = buffer_cycle(self.buffer, fresh, self.rng, half)
        refined = np.stack(fresh_half + buffered)
        real = self.disc_input(self.real_windows(self.cfg.batch))
        tape = Tape()
        bind = self.disc.bind(tape)
        refs = [tape.constant(refined[:, t]) for t in range(refined.shape[1])]
        reals = [tape.constant(real[:, t]) for t in range(real.shape[1])]
        loss = discriminator_loss_nodes(self.disc, bind, refs, reals)
        if not np.isfinite(loss.value):
            raise RuntimeError(
                f"non-finite discriminator loss at iteration {self.iteration}")
        for b in self.disc.blocks().values():
            b.zero_grad()
        tape.backward(loss)
        bind.collect()
        self.opt_d.step(clip=(self.cfg.clip_lo, self.cfg.clip_hi))
        self.last_d_loss = float(loss.value)
        return self.last_d_loss

    def refiner_iterations(self) -> int:
        """Per-cycle refiner update count from the base ratio and the
        latest discriminator softmax loss."""
        base = self.cfg.ratio
        if self.last_d_loss < self.cfg.balance_low:
            return base * 2
        if self.last_d_loss > self.cfg.balance_high:
            return max(1, base // 2)
        return base

    def _log(self, phase: str, loss: float, mult: int):
        self.iteration += 1
        self.history.append((phase, self.iteration, loss, self.last_d_loss, mult))

    def run(self) -> None:
        if len(self.buffer) != self.cfg.buffer_size:
            fill = [s for s in self.refined_disc_input(self.cfg.buffer_size)]
            self.buffer.fill(fill)
        for _ in range(self.cfg.warmup_refiner):
            self._log("refiner-warmup", self.refiner_update(), 1)
        for _ in range(self.cfg.warmup_discriminator):
            self._log("disc-warmup", self.discriminator_update(), 1)
        for _ in range(self.cfg.cycles):
            g_iters = self.refiner_iterations()
            for _ in range(g_iters):
                self._log("refiner", self.refiner_update(), g_iters)
            self._log("disc", self.discriminator_update(), g_iters)


def train_adversarial(gen: GeneratorNet, sequences: list[np.ndarray],
                      skel: Skeleton, frame_rate: float, cfg: GanTrainConfig,
                      rng: np.random.Generator, csv_path=None,
                      **net_kwargs) -> tuple[RefinerNet, DiscriminatorNet, list]:
    """Full adversarial phase; the generator is used frozen.

    sequences are real (T, feat_dim) feature+contact arrays.  Returns
    the trained refiner and discriminator plus the loss history rows
    (phase, iteration, loss, d_softmax_loss, g_multiplier).
    """
    trainer = AdversarialTrainer(gen, sequences, skel, frame_rate, cfg, rng,
                                 **net_kwargs)
    trainer.run()
    if csv_path is not None:
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["phase", "iteration", "loss",
                             "d_softmax_loss", "g_multiplier"])
            writer.writerows(trainer.history)
    return trainer.refiner, trainer.disc, trainer.history
