"""The generative recurrent model: a Gaussian-mixture density head on a
two-LSTM stack (FC1 -> LSTM1 -> FC2 -> LSTM2 -> FC3).

For an input feature of dimension D the head emits M*(2D+1) raw values,
laid out as [w-hat (M), mu-hat (M*D), log-sigma-hat (M*D)]; softmax and
exp map them to valid mixture weights and deviations.  Training is
teacher forced over fixed windows with Gaussian input noise, clipped
gradients and RMSProp; free-run generation feeds samples back in.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape
from .layers import Binding, Dense, LSTMCell, LSTMState, merge_blocks
from .optim import RMSProp

MIXTURES = 5


class TrainingDiverged(RuntimeError):
    pass


class GenerationDiverged(RuntimeError):
    pass


@dataclass
class RnnTrainConfig:
    batch_size: int = 20
    window: int = 50
    learning_rate: float = 0.001
    lr_decay: float = 0.95        # multiplied in after every epoch
    epochs: int = 300
    noise_sigma: float = 0.05
    clip_lo: float = -5.0
    clip_hi: float = 5.0
    rmsprop_rho: float = 0.9

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be >= 2")
        for name in ("batch_size", "learning_rate", "lr_decay", "epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class GMMParams:
    """Mixture weights, means and diagonal deviations for one frame."""

    w: np.ndarray       # (M,)
    mu: np.ndarray      # (M, D)
    sigma: np.ndarray   # (M, D)

    def __post_init__(self):
        if abs(self.w.sum() - 1.0) > 1e-12 or np.any(self.w <= 0):
            raise ValueError("weights must be positive and sum to 1")
        if np.any(self.sigma <= 0):
            raise ValueError("deviations must be positive")


def gmm_from_raw(raw: np.ndarray, mixtures: int, dim: int) -> GMMParams:
    """Map unconstrained head outputs to valid mixture parameters."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (mixtures * (2 * dim + 1),):
        raise ValueError(f"raw length {raw.shape} != {mixtures * (2 * dim + 1)}")
    w_hat = raw[:mixtures]
    e = np.exp(w_hat - w_hat.max())
    w = e / e.sum()
    mu = raw[mixtures:mixtures * (1 + dim)].reshape(mixtures, dim)
    sigma = np.exp(raw[mixtures * (1 + dim):].reshape(mixtures, dim))
    return GMMParams(w, mu, sigma)


def gmm_nll(g: GMMParams, x: np.ndarray) -> float:
    """Negative log density of x under the mixture (log-sum-exp form)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != g.mu.shape[1:]:
        raise ValueError("dimension mismatch")
    z = (x[None, :] - g.mu) / g.sigma
    comp = np.log(g.w) - np.sum(np.log(g.sigma) + 0.5 * z * z, axis=1) \
        - 0.5 * g.mu.shape[1] * np.log(2.0 * np.pi)
    m = comp.max()
    return float(-(m + np.log(np.exp(comp - m).sum())))


def gmm_sample(g: GMMParams, rng: np.random.Generator
               ) -> tuple[np.ndarray, int, np.ndarray]:
    """Draw one frame; returns (x, component k, standard-normal noise d)
    so that x = mu_k + sigma_k * d can be re-parameterized later."""
    k = int(rng.choice(g.w.shape[0], p=g.w))
    d = rng.standard_normal(g.mu.shape[1])
    return g.mu[k] + g.sigma[k] * d, k, d


def gmm_nll_node(raw: Node, target: Node, mixtures: int, dim: int) -> Node:
    """Per-row NLL (Eq-8 style) straight from raw head outputs.

    raw (..., M*(2D+1)), target (..., D) -> (...,) nodes.  Stable: works
    in log space with log-sum-exp over components.
    """
    lead = raw.value.shape[:-1]
    w_hat = raw[..., :mixtures]
    log_w = ad.sub(w_hat, ad.logsumexp(w_hat, axis=-1, keepdims=True))
    mu = ad.reshape(raw[..., mixtures:mixtures * (1 + dim)], lead + (mixtures, dim))
    log_sig = ad.reshape(raw[..., mixtures * (1 + dim):], lead + (mixtures, dim))
    x = ad.reshape(target, lead + (1, dim))
    z = ad.mul(ad.sub(x, mu), ad.exp(ad.mul(log_sig, -1.0)))
    comp = ad.sub(ad.mul(ad.asum(ad.add(ad.mul(ad.square(z), 0.5), log_sig), axis=-1), -1.0),
                  0.5 * dim * np.log(2.0 * np.pi))
    return ad.mul(ad.logsumexp(ad.add(log_w, comp), axis=-1), -1.0)


@dataclass
class GeneratorState:
    """Concrete (numpy) recurrent state of the two LSTM layers."""

    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray

    def copy(self) -> "GeneratorState":
        return GeneratorState(self.h1.copy(), self.c1.copy(),
                              self.h2.copy(), self.c2.copy())


class GeneratorNet:
    """FC1 -> LSTM1 -> FC2 -> LSTM2 -> FC3 with a GMM head."""

    kind = "generator"

    def __init__(self, dim: int, hidden: int = 128, mixtures: int = MIXTURES,
                 rng: np.random.Generator | None = None,
                 lstm_form: str = "reference"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim = dim
        self.hidden = hidden
        self.mixtures = mixtures
        self.lstm_form = lstm_form
        self.out_dim = mixtures * (2 * dim + 1)
        self.fc1 = Dense("fc1", dim, hidden, rng)
        self.lstm1 = LSTMCell("lstm1", hidden, hidden, rng, lstm_form)
        self.fc2 = Dense("fc2", hidden, hidden, rng)
        self.lstm2 = LSTMCell("lstm2", hidden, hidden, rng, lstm_form)
        self.fc3 = Dense("fc3", hidden, self.out_dim, rng)

    def blocks(self):
        return merge_blocks(self.fc1, self.lstm1, self.fc2, self.lstm2, self.fc3)

    def config(self) -> dict:
        return {"dim": self.dim, "hidden": self.hidden,
                "mixtures": self.mixtures, "lstm_form": self.lstm_form}

    @classmethod
    def from_config(cls, cfg: dict) -> "GeneratorNet":
        return cls(cfg["dim"], cfg["hidden"], cfg["mixtures"],
                   np.random.default_rng(0), cfg["lstm_form"])

    def bind(self, tape: Tape, trainable: bool = True) -> Binding:
        return Binding(tape, self.blocks(), trainable)

    def zero_state(self, batch: int | None = None) -> GeneratorState:
        shape = (self.hidden,) if batch is None else (batch, self.hidden)
        z = np.zeros(shape)
        return GeneratorState(z.copy(), z.copy(), z.copy(), z.copy())

    def state_nodes(self, tape: Tape, state: GeneratorState
                    ) -> tuple[LSTMState, LSTMState]:
        return (LSTMState(tape.constant(state.h1), tape.constant(state.c1)),
                LSTMState(tape.constant(state.h2), tape.constant(state.c2)))

    def step_nodes(self, bind: Binding, s1: LSTMState, s2: LSTMState, x: Node
                   ) -> tuple[Node, LSTMState, LSTMState]:
        """One stack pass on the tape; returns raw head output + states."""
        if x.value.shape[-1] != self.dim:
            raise ValueError(f"input dim {x.value.shape[-1]} != {self.dim}")
        h = self.fc1.apply(bind, x)
        s1 = self.lstm1.step(bind, s1, h)
        h = self.fc2.apply(bind, s1.h)
        s2 = self.lstm2.step(bind, s2, h)
        return self.fc3.apply(bind, s2.h), s1, s2


def generator_step(net: GeneratorNet, state: GeneratorState, x: np.ndarray
                   ) -> tuple[GMMParams, GeneratorState]:
    """Inference step: next-frame mixture plus the advanced state."""
    tape = Tape()
    bind = net.bind(tape)
    s1, s2 = net.state_nodes(tape, state)
    raw, s1, s2 = net.step_nodes(bind, s1, s2, tape.constant(np.asarray(x)))
    out_state = GeneratorState(s1.h.value, s1.C.value, s2.h.value, s2.C.value)
    if raw.value.ndim != 1:
        raise ValueError("generator_step expects a single frame")
    return gmm_from_raw(raw.value, net.mixtures, net.dim), out_state


def _advance_batch(net: GeneratorNet, state: GeneratorState, x: np.ndarray
                   ) -> tuple[np.ndarray, GeneratorState]:
    """Batched inference step on raw outputs ((B, D) -> (B, out))."""
    tape = Tape()
    bind = net.bind(tape)
    s1, s2 = net.state_nodes(tape, state)
    raw, s1, s2 = net.step_nodes(bind, s1, s2, tape.constant(x))
    return raw.value, GeneratorState(s1.h.value, s1.C.value, s2.h.value, s2.C.value)


def warm_up(net: GeneratorNet, init_features: np.ndarray
            ) -> tuple[np.ndarray, GeneratorState]:
    """Feed warmup frames; returns the raw output after the last one."""
    init_features = np.asarray(init_features, dtype=np.float64)
    if init_features.ndim != 2 or init_features.shape[0] < 2:
        raise ValueError("need at least 2 warmup feature frames")
    state = net.zero_state()
    raw = None
    for x in init_features:
        raw, state = _advance_batch(net, state, x)
    return raw, state


def free_run(net: GeneratorNet, init_features: np.ndarray, n_frames: int,
             rng: np.random.Generator, zero_noise: bool = False) -> np.ndarray:
    """Closed-loop generation of n_frames feature frames.

    zero_noise=True gives the mode-following rollout: the highest-weight
    component's mean at every step (d = 0), no sampling.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    raw, state = warm_up(net, init_features)
    out = np.empty((n_frames, net.dim))
    for t in range(n_frames):
        g = gmm_from_raw(raw, net.mixtures, net.dim)
        if zero_noise:
            x = g.mu[int(np.argmax(g.w))]
        else:
            x, _, _ = gmm_sample(g, rng)
        if not np.all(np.isfinite(x)):
            raise GenerationDiverged(f"non-finite sample at step {t}")
        out[t] = x
        if t + 1 < n_frames:
            raw, state = _advance_batch(net, state, x)
    return out


def free_run_batch(net: GeneratorNet, init_features: np.ndarray, n_frames: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Vectorized free run: (B, T0, D) warmups -> (B, n_frames, D)."""
    init_features = np.asarray(init_features, dtype=np.float64)
    b = init_features.shape[0]
    state = net.zero_state(batch=b)
    raw = None
    for t in range(init_features.shape[1]):
        raw, state = _advance_batch(net, state, init_features[:, t])
    out = np.empty((b, n_frames, net.dim))
    m, d = net.mixtures, net.dim
    for t in range(n_frames):
        w_hat = raw[:, :m]
        e = np.exp(w_hat - w_hat.max(axis=1, keepdims=True))
        w = e / e.sum(axis=1, keepdims=True)
        mu = raw[:, m:m * (1 + d)].reshape(b, m, d)
        sigma = np.exp(raw[:, m * (1 + d):].reshape(b, m, d))
        ks = np.array([rng.choice(m, p=w[i]) for i in range(b)])
        noise = rng.standard_normal((b, d))
        rows = np.arange(b)
        x = mu[rows, ks] + sigma[rows, ks] * noise
        if not np.all(np.isfinite(x)):
            raise GenerationDiverged(f"non-finite sample at step {t}")
        out[:, t] = x
        if t + 1 < n_frames:
            raw, state = _advance_batch(net, state, x)
    return out


def contact_bits(features: np.ndarray, n_bits: int = 2) -> np.ndarray:
    """Threshold trailing contact channels of generated features at 0.5."""
    return (np.asarray(features)[..., -n_bits:] > 0.5).astype(np.float64)


def _window_streams(sequences: list[np.ndarray], window: int
                    ) -> tuple[list[np.ndarray], int, int]:
    """Cut sequences into per-clip streams of consecutive windows.

    Returns (streams, effective window, windows per stream).  The
    effective window shrinks to fit the shortest clip so state can be
    carried across a uniform number of windows per epoch.
    """
    if not sequences:
        raise ValueError("no training sequences")
    shortest = min(s.shape[0] for s in sequences)
    if shortest < 3:
        raise ValueError("sequences need at least 3 frames")
    win = min(window, shortest - 1)
    per = min((s.shape[0] - 1) // win for s in sequences)
    streams = [np.asarray(s, dtype=np.float64) for s in sequences]
    return streams, win, per


def train_generator(sequences: list[np.ndarray], cfg: RnnTrainConfig,
                    rng: np.random.Generator,
                    net: GeneratorNet | None = None,
                    hidden: int = 128,
                    mixtures: int = MIXTURES,
                    lstm_form: str = "reference",
                    csv_path=None) -> tuple[GeneratorNet, list[tuple]]:
    """Teacher-forced mixture-density training over noisy windows.

    sequences are (T_i, D) feature arrays (contact bits, when used, are
    extra columns).  A provided net acts as the pre-trained warm start.
    Returns the net and a (iteration, epoch, nll) history.
    """
    dim = sequences[0].shape[1]
    if net is None:
        net = GeneratorNet(dim, hidden, mixtures, rng, lstm_form)
    elif net.dim != dim:
        raise ValueError("warm-start net dimension mismatch")
    streams, win, per_stream = _window_streams(sequences, cfg.window)
    opt = RMSProp(net.blocks(), lr=cfg.learning_rate, rho=cfg.rmsprop_rho)
    history: list[tuple] = []
    iteration = 0
    for epoch in range(cfg.epochs):
        rows = rng.integers(0, len(streams), size=cfg.batch_size)
        state = net.zero_state(batch=cfg.batch_size)
        for w in range(per_stream):
            lo = w * win
            batch = np.stack([streams[r][lo:lo + win + 1] for r in rows])
            inputs = batch[:, :-1]
            if cfg.noise_sigma > 0:
                inputs = inputs + rng.normal(0.0, cfg.noise_sigma, inputs.shape)
            targets = batch[:, 1:]
            tape = Tape()
            bind = net.bind(tape)
            s1, s2 = net.state_nodes(tape, state)
            losses = []
            for t in range(win):
                raw, s1, s2 = net.step_nodes(bind, s1, s2,
                                             tape.constant(inputs[:, t]))
                losses.append(gmm_nll_node(raw, tape.constant(targets[:, t]),
                                           net.mixtures, net.dim))
            loss = ad.amean(ad.stack_last(losses))
            if not np.isfinite(loss.value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, window {w}")
            for b in net.blocks().values():
                b.zero_grad()
            tape.backward(loss)
            bind.collect()
            opt.step(clip=(cfg.clip_lo, cfg.clip_hi))
            state = GeneratorState(s1.h.value, s1.C.value, s2.h.value, s2.C.value)
            iteration += 1
            history.append((iteration, epoch, float(loss.value)))
        opt.lr *= cfg.lr_decay
    if csv_path is not None:
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["iteration", "epoch", "nll"])
            writer.writerows(history)
    return net, history
