"""MAP synthesis: differentiable rollouts of the frozen generator under
constraint terms, assembled into one objective with gradients w.r.t.
the per-frame noise variables.

A rollout fixes the mixture component k_i per frame (argmax weight on
the mode rollout; the categorical choice is not differentiable) and
re-parameterizes each frame as s_i = mu_{k_i} + sigma_{k_i} * d_i, so
the whole generated window is a deterministic, differentiable function
of the noise stack d.  Gradients flow back through the generator, the
ground-transform chain and forward kinematics on the tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape
from .diffkin import char_local_positions, root_path_nodes, world_point_nodes
from .features import GroundTransform, wrap_angle
from .generator import GeneratorNet, GeneratorState, warm_up, _advance_batch
from .layers import LSTMState
from .skeleton import Skeleton

SIGMA_NOISE = 0.05
SPEED_EPS_SQ = 1e-12    # keeps the speed norm differentiable at zero


@dataclass
class RolloutBase:
    """Warm model state and world anchoring that rollouts start from."""

    gen: GeneratorNet
    state: GeneratorState
    raw: np.ndarray                       # head output for the next frame
    ground: tuple[float, float, float]    # world x, z, yaw of the last frame

    @classmethod
    def from_features(cls, gen: GeneratorNet, init_features: np.ndarray,
                      transform: GroundTransform) -> "RolloutBase":
        raw, state = warm_up(gen, init_features)
        x, z = transform.position_xz()
        return cls(gen, state, raw, (x, z, transform.yaw))

    def advance(self, features: np.ndarray) -> "RolloutBase":
        """New base after consuming concrete feature frames."""
        state, raw = self.state, self.raw
        x, z, yaw = self.ground
        for f in np.atleast_2d(features):
            raw, state = _advance_batch(self.gen, state, f)
            c, s = np.cos(yaw), np.sin(yaw)
            x += c * f[0] + s * f[1]
            z += c * f[1] - s * f[0]
            yaw += f[2]
        return RolloutBase(self.gen, state, raw, (x, z, yaw))


def mode_rollout(base: RolloutBase, horizon: int
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Zero-noise rollout following argmax-weight components.

    Returns (components (T,), features (T, D)).
    """
    gen = base.gen
    m, d = gen.mixtures, gen.dim
    raw, state = base.raw, base.state
    comps = np.empty(horizon, dtype=np.int64)
    feats = np.empty((horizon, d))
    for t in range(horizon):
        k = int(np.argmax(raw[:m]))
        comps[t] = k
        feats[t] = raw[m + k * d: m + (k + 1) * d]
        if t + 1 < horizon:
            raw, state = _advance_batch(gen, state, feats[t])
    return comps, feats


# ----------------------------------------------------------------------
# constraint terms


@dataclass
class CurveConstraint:
    """Ground-plane polyline the root path should follow."""

    points: np.ndarray          # (K, 2) of (x, z) meters
    sigma_fit_sq: float = 0.5

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[0] < 2 \
                or self.points.shape[1] != 2:
            raise ValueError("polyline needs at least 2 (x, z) points")
        if self.sigma_fit_sq <= 0:
            raise ValueError("sigma_fit_sq must be positive")


def nearest_on_polyline(curve: CurveConstraint, q: np.ndarray) -> np.ndarray:
    """Closest points on the polyline for query rows q (N, 2).

    Projects onto every segment with endpoint clamping; degenerate
    zero-length segments are skipped.
    """
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    a = curve.points[:-1]
    b = curve.points[1:]
    ab = b - a
    ab2 = (ab * ab).sum(axis=1)
    keep = ab2 > 0
    a, ab, ab2 = a[keep], ab[keep], ab2[keep]
    if a.shape[0] == 0:
        raise ValueError("polyline has no non-degenerate segment")
    t = ((q[:, None, :] - a[None, :, :]) * ab[None, :, :]).sum(axis=2) / ab2
    t = np.clip(t, 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d2 = ((q[:, None, :] - proj) ** 2).sum(axis=2)
    best = np.argmin(d2, axis=1)
    return proj[np.arange(q.shape[0]), best]


@dataclass
class ContactPenaltyConfig:
    sigma_con: float = 0.01
    sigma_con_y: float = 0.01
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    point: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=np.float64)
        self.point = np.asarray(self.point, dtype=np.float64)
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        if self.sigma_con <= 0 or self.sigma_con_y <= 0:
            raise ValueError("contact deviations must be positive")


@dataclass
class OnlineControl:
    speed: float                # m/s
    direction: float            # radians, world yaw
    sigma_speed: float = 0.1
    sigma_dir: float = 0.2

    def __post_init__(self):
        if self.sigma_speed <= 0 or self.sigma_dir <= 0:
            raise ValueError("control deviations must be positive")


@dataclass
class DenoiseTarget:
    """World-space targets distilled from the noisy input clip."""

    roots: np.ndarray       # (T, 3) world root positions
    yaws: np.ndarray        # (T,) world yaw
    angles: np.ndarray      # (T, A) r_x, r_z, theta... block
    sigma_root: float = 0.02
    sigma_angle: float = 0.05

    def __post_init__(self):
        if self.sigma_root <= 0 or self.sigma_angle <= 0:
            raise ValueError("denoise deviations must be positive")


class EvalContext:
    """Shared lazily-computed pieces of one objective evaluation."""

    def __init__(self, problem: "SynthesisProblem", tape: Tape,
                 feats: list[Node], d_node: Node):
        self.problem = problem
        self.tape = tape
        self.feats = feats
        self.d_node = d_node
        self._path = None
        self._toes = None

    @property
    def path(self):
        if self._path is None:
            x0, z0, yaw0 = self.problem.base.ground
            self._path = root_path_nodes(self.feats, x0, z0, yaw0)
        return self._path

    def toe_world(self) -> Node:
        """(P, T, 2, 3) world toe positions, FK over all frames at once."""
        if self._toes is None:
            prob = self.problem
            skel = prob.skeleton
            p_rows = self.feats[0].value.shape[0]
            t_len = len(self.feats)
            flat = ad.concat(
                [ad.reshape(f, (p_rows, 1, f.value.shape[-1])) for f in self.feats],
                axis=1)
            flat = ad.reshape(flat, (p_rows * t_len, self.feats[0].value.shape[-1]))
            toes = skel.toe_indices()
            local = char_local_positions(skel, flat, list(toes))
            xs, zs, yaws = self.path
            xf = ad.reshape(ad.stack_last(xs), (p_rows * t_len,))
            zf = ad.reshape(ad.stack_last(zs), (p_rows * t_len,))
            yf = ad.reshape(ad.stack_last(yaws), (p_rows * t_len,))
            world = [world_point_nodes(local[j], xf, zf, yf) for j in toes]
            stacked = ad.concat([ad.reshape(w, (p_rows, t_len, 1, 3))
                                 for w in world], axis=2)
            self._toes = stacked
        return self._toes


class PriorTerm:
    """Negative log of the noise prior: sum ||d_i||^2 / (2 sigma^2)."""

    def node(self, ctx: EvalContext) -> Node:
        sig = ctx.problem.sigma_noise
        sq = ad.asum(ad.square(ctx.d_node), axis=(1, 2))
        return ad.mul(sq, 1.0 / (2.0 * sig * sig))


class CurveTerm:
    def __init__(self, curve: CurveConstraint):
        self.curve = curve

    def node(self, ctx: EvalContext) -> Node:
        xs, zs, _ = ctx.path
        terms = []
        for x, z in zip(xs, zs):
            q = np.stack([x.value, z.value], axis=-1)
            near = nearest_on_polyline(self.curve, q)
            dx = ad.sub(x, near[:, 0])
            dz = ad.sub(z, near[:, 1])
            terms.append(ad.add(ad.square(dx), ad.square(dz)))
        total = ad.asum(ad.stack_last(terms), axis=-1)
        return ad.mul(total, 1.0 / self.curve.sigma_fit_sq)


class ContactTerm:
    def __init__(self, cfg: ContactPenaltyConfig):
        self.cfg = cfg

    def node(self, ctx: EvalContext) -> Node:
        toes = ctx.toe_world()                       # (P, T, 2, 3)
        p_rows, t_len = toes.value.shape[0], toes.value.shape[1]
        bits = np.stack([f.value[:, -2:] > 0.5 for f in ctx.feats], axis=1)
        cfg = self.cfg
        # point-plane distance on contact frames
        plane = ad.sub(ad.asum(ad.mul(toes, cfg.normal), axis=-1),
                       float(np.dot(cfg.normal, cfg.point)))
        plane_sq = ad.mul(ad.square(plane), bits / (cfg.sigma_con_y ** 2))
        total = ad.asum(ad.reshape(plane_sq, (p_rows, t_len * 2)), axis=-1)
        if t_len > 1:
            both = (bits[:, 1:] & bits[:, :-1]) / (cfg.sigma_con ** 2)
            slide = ad.asum(ad.square(ad.sub(toes[:, 1:], toes[:, :-1])), axis=-1)
            slide = ad.mul(slide, both)
            total = ad.add(total, ad.asum(
                ad.reshape(slide, (p_rows, (t_len - 1) * 2)), axis=-1))
        return total


class ControlTerm:
    def __init__(self, ctrl: OnlineControl, frame_rate: float):
        self.ctrl = ctrl
        self.frame_rate = frame_rate

    def node(self, ctx: EvalContext) -> Node:
        speeds = []
        for f in ctx.feats:
            sq = ad.add(ad.add(ad.square(f[:, 0]), ad.square(f[:, 1])),
                        SPEED_EPS_SQ)
            speeds.append(ad.mul(ad.sqrt(sq), self.frame_rate))
        mean_speed = ad.amean(ad.stack_last(speeds), axis=-1)
        ds = ad.sub(mean_speed, self.ctrl.speed)
        speed_term = ad.mul(ad.square(ds), 1.0 / self.ctrl.sigma_speed ** 2)
        _, _, yaws = ctx.path
        dyaw = ad.wrap_angle(ad.sub(yaws[-1], self.ctrl.direction))
        dir_term = ad.mul(ad.square(dyaw), 1.0 / self.ctrl.sigma_dir ** 2)
        return ad.add(speed_term, dir_term)


class DenoiseTerm:
    def __init__(self, target: DenoiseTarget):
        self.target = target

    def node(self, ctx: EvalContext) -> Node:
        tgt = self.target
        if len(ctx.feats) != tgt.roots.shape[0]:
            raise ValueError("target length != rollout horizon")
        xs, zs, yaws = ctx.path
        terms = []
        n_ang = tgt.angles.shape[1]
        for t, f in enumerate(ctx.feats):
            dx = ad.sub(xs[t], tgt.roots[t, 0])
            dy = ad.sub(f[:, 3], tgt.roots[t, 1])
            dz = ad.sub(zs[t], tgt.roots[t, 2])
            root_sq = ad.add(ad.add(ad.square(dx), ad.square(dy)), ad.square(dz))
            dyaw = ad.wrap_angle(ad.sub(yaws[t], tgt.yaws[t]))
            dang = ad.sub(f[:, 4:4 + n_ang], tgt.angles[t])
            ang_sq = ad.add(ad.asum(ad.square(dang), axis=-1), ad.square(dyaw))
            terms.append(ad.add(ad.mul(root_sq, 1.0 / (2.0 * tgt.sigma_root ** 2)),
                                ad.mul(ang_sq, 1.0 / (2.0 * tgt.sigma_angle ** 2))))
        return ad.asum(ad.stack_last(terms), axis=-1)


@dataclass
class SynthesisProblem:
    """One optimization instance over a noise stack d (horizon x dim).

    noise_mode selects what d means:
      "feature"  -- d is additive noise in feature units, s = mu + d;
                    the same units the model was noise-trained with, so
                    the 0.05 prior leaves genuine steering authority
                    (default).
      "scaled"   -- d is the unit-normal reparameterization variable,
                    s = mu + sigma * d.
    """

    base: RolloutBase
    horizon: int
    components: np.ndarray
    terms: list
    sigma_noise: float = SIGMA_NOISE
    skeleton: Skeleton | None = None
    frame_rate: float = 30.0
    frozen: np.ndarray | None = None    # (F, dim) fixed noise prefix
    noise_mode: str = "feature"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.noise_mode not in ("feature", "scaled"):
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")
        self.components = np.asarray(self.components, dtype=np.int64)
        if self.components.shape != (self.horizon,):
            raise ValueError("one component choice per frame required")

    @property
    def noise_dim(self) -> int:
        return self.base.gen.dim

    @property
    def free_frames(self) -> int:
        frozen = 0 if self.frozen is None else self.frozen.shape[0]
        return self.horizon - frozen

    @property
    def free_size(self) -> int:
        return self.free_frames * self.noise_dim


def _rollout_nodes(problem: SynthesisProblem, tape: Tape, d_node: Node
                   ) -> list[Node]:
    """Per-frame feature nodes of the reparameterized rollout.

    d_node is (P, T, dim) covering the full horizon (frozen prefix
    already concatenated by the caller).
    """
    gen = problem.base.gen
    m, dim = gen.mixtures, gen.dim
    p_rows = d_node.value.shape[0]
    bind = gen.bind(tape, trainable=False)
    st = problem.base.state
    s1 = LSTMState(tape.constant(np.broadcast_to(st.h1, (p_rows, gen.hidden)).copy()),
                   tape.constant(np.broadcast_to(st.c1, (p_rows, gen.hidden)).copy()))
    s2 = LSTMState(tape.constant(np.broadcast_to(st.h2, (p_rows, gen.hidden)).copy()),
                   tape.constant(np.broadcast_to(st.c2, (p_rows, gen.hidden)).copy()))
    raw = tape.constant(np.broadcast_to(problem.base.raw, (p_rows, gen.out_dim)).copy())
    feats = []
    for t in range(problem.horizon):
        k = int(problem.components[t])
        mu = raw[:, m + k * dim: m + (k + 1) * dim]
        if problem.noise_mode == "scaled":
            log_sig = raw[:, m * (1 + dim) + k * dim:
                          m * (1 + dim) + (k + 1) * dim]
            s = ad.add(mu, ad.mul(ad.exp(log_sig), d_node[:, t]))
        else:
            s = ad.add(mu, d_node[:, t])
        if not np.all(np.isfinite(s.value)):
            raise RuntimeError(f"non-finite rollout feature at frame {t}")
        feats.append(s)
        if t + 1 < problem.horizon:
            raw, s1, s2 = gen.step_nodes(bind, s1, s2, s)
    return feats


def _full_noise(problem: SynthesisProblem, tape: Tape, free: Node) -> Node:
    if problem.frozen is None:
        return free
    p_rows = free.value.shape[0]
    frozen = tape.constant(np.broadcast_to(
        problem.frozen, (p_rows,) + problem.frozen.shape).copy())
    return ad.concat([frozen, free], axis=1)


def evaluate(problem: SynthesisProblem, d_free: np.ndarray,
             need_grad: bool = False):
    """Objective values (and gradients) for a batch of noise stacks.

    d_free is (P, free_frames, dim) or a flat (free_size,) vector.
    Returns (values (P,), grads (P, free_frames, dim) or None).
    """
    d_free = np.asarray(d_free, dtype=np.float64)
    single = d_free.ndim == 1
    d3 = d_free.reshape((-1, problem.free_frames, problem.noise_dim))
    tape = Tape()
    leaf = tape.leaf(d3, needs_grad=need_grad)
    full = _full_noise(problem, tape, leaf)
    feats = _rollout_nodes(problem, tape, full)
    ctx = EvalContext(problem, tape, feats, full)
    total = None
    for term in problem.terms:
        node = term.node(ctx)
        total = node if total is None else ad.add(total, node)
    values = np.atleast_1d(total.value.copy())
    if not need_grad:
        return values, None
    tape.backward(ad.asum(total))
    grad = leaf.grad if leaf.grad is not None else np.zeros_like(d3)
    if single:
        return values, grad.reshape(-1)
    return values, grad


def rollout(problem: SynthesisProblem, d_free: np.ndarray) -> np.ndarray:
    """Concrete rollout features (T, dim) for one noise stack."""
    d_free = np.asarray(d_free, dtype=np.float64)
    d3 = d_free.reshape((1, problem.free_frames, problem.noise_dim))
    tape = Tape()
    leaf = tape.leaf(d3, needs_grad=False)
    feats = _rollout_nodes(problem, tape, _full_noise(problem, tape, leaf))
    return np.stack([f.value[0] for f in feats])


def objective(problem: SynthesisProblem, d_free: np.ndarray
              ) -> tuple[float, np.ndarray]:
    """Scalar loss and flat gradient for the optimizer stack."""
    values, grad = evaluate(problem, d_free.reshape(-1), need_grad=True)
    return float(values[0]), grad


def objective_batch(problem: SynthesisProblem, d_mat: np.ndarray) -> np.ndarray:
    """(P, free_size) -> (P,) losses, no gradients (for the swarm)."""
    values, _ = evaluate(problem, d_mat, need_grad=False)
    return values


def estimate_initial_hidden(gen: GeneratorNet, s1: np.ndarray, s2: np.ndarray,
                            iterations: int = 80, lr: float = 0.05
                            ) -> tuple[GeneratorState, float, bool]:
    """Fit the initial recurrent state so s2 is likely after seeing s1.

    Plain gradient descent with halving on non-improvement, started at
    (and never accepted worse than) the zero state.  Returns the state,
    its loss and a flag that is False when optimization diverged.
    """
    from .generator import gmm_nll_node

    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    vec = np.zeros(4 * gen.hidden)

    def loss_grad(v: np.ndarray) -> tuple[float, np.ndarray]:
        tape = Tape()
        bind = gen.bind(tape, trainable=False)
        parts = [tape.leaf(v[i * gen.hidden:(i + 1) * gen.hidden])
                 for i in range(4)]
        st1 = LSTMState(parts[0], parts[1])
        st2 = LSTMState(parts[2], parts[3])
        raw, _, _ = gen.step_nodes(bind, st1, st2, tape.constant(s1))
        loss = gmm_nll_node(raw, tape.constant(s2), gen.mixtures, gen.dim)
        tape.backward(loss)
        g = np.concatenate([p.grad if p.grad is not None
                            else np.zeros(gen.hidden) for p in parts])
        return float(loss.value), g

    best_v = vec.copy()
    best_f, g = loss_grad(vec)
    zero_loss = best_f
    f = best_f
    ok = True
    step = lr
    for _ in range(iterations):
        cand = vec - step * g
        try:
            f_new, g_new = loss_grad(cand)
        except FloatingPointError:
            f_new = np.inf
        if not np.isfinite(f_new):
            ok = False
            step *= 0.5
            continue
        if f_new < f:
            vec, f, g = cand, f_new, g_new
            step *= 1.2
            if f < best_f:
                best_f, best_v = f, vec.copy()
        else:
            step *= 0.5
            if step < 1e-12:
                break
    if not np.isfinite(best_f) or best_f > zero_loss:
        best_v = np.zeros_like(vec)
        best_f = zero_loss
        ok = False
    h = gen.hidden
    state = GeneratorState(best_v[0:h], best_v[h:2 * h],
                           best_v[2 * h:3 * h], best_v[3 * h:4 * h])
    return state, best_f, ok
