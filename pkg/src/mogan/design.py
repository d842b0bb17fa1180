"""Offline path design, online control and denoising on top of the MAP
objective: candidate sampling, swarm initialization, LBFGS refinement
and the overlapping-window schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contacts import label_contacts
from .features import GroundTransform, features_from_clip
from .generator import GeneratorNet, contact_bits
from .lbfgs import LbfgsConfig, lbfgs_minimize
from .pso import PsoConfig, pso_minimize
from .skeleton import MotionClip, Skeleton
from .synthesis import (ContactPenaltyConfig, ContactTerm, CurveConstraint,
                        CurveTerm, DenoiseTarget, DenoiseTerm, OnlineControl,
                        ControlTerm, PriorTerm, RolloutBase, SynthesisProblem,
                        estimate_initial_hidden, mode_rollout, objective,
                        objective_batch, rollout)

N_CONTACT = 2


@dataclass
class MapConfig:
    sigma_noise: float = 0.05
    sigma_fit_sq: float = 0.5
    sigma_con: float = 0.01
    sigma_con_y: float = 0.01
    sigma_root: float = 0.02
    sigma_angle: float = 0.05
    sigma_speed: float = 0.1
    sigma_dir: float = 0.2
    window: int = 34
    overlap: int = 17
    candidates: int = 32
    pso_particles: int = 50
    pso_iterations: int = 100
    pso_patience: int = 10       # switch to LBFGS when 10 iterations
    pso_rel_tol: float = 0.01    # improve by less than 1%
    lbfgs_memory: int = 10
    lbfgs_iterations: int = 60
    online_batch: int = 10
    online_lbfgs_iterations: int = 12
    use_contact_term: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.overlap < self.window:
            raise ValueError("need 0 < overlap < window")


@dataclass
class WindowRecord:
    start: int
    features: np.ndarray      # (win_len, dim) final rollout of this window
    loss: float


def _optimize_window(problem: SynthesisProblem, cfg: MapConfig,
                     rng: np.random.Generator, trace: list, window_idx: int
                     ) -> np.ndarray:
    """Candidates -> swarm -> LBFGS on one window; returns the free noise."""
    n = problem.free_size
    cand = rng.normal(0.0, cfg.sigma_noise,
                      (cfg.candidates, problem.free_frames, problem.noise_dim))
    cand[0] = 0.0                      # the mode rollout is always a candidate
    cand_flat = cand.reshape(cfg.candidates, n)
    values = objective_batch(problem, cand_flat)
    order = np.argsort(values)
    best = cand_flat[order[0]]
    for i, v in enumerate(sorted(values)):
        trace.append((window_idx, "candidate", i, float(v)))
    pso_cfg = PsoConfig(particles=cfg.pso_particles,
                        iterations=cfg.pso_iterations,
                        seed=int(rng.integers(0, 2 ** 31)),
                        init_scale=2.0 * cfg.sigma_noise,
                        patience=cfg.pso_patience, rel_tol=cfg.pso_rel_tol)
    seeds = cand_flat[order[: min(cfg.candidates, cfg.pso_particles)]]
    res = pso_minimize(lambda x: objective_batch(problem, x), n, pso_cfg,
                       init=seeds)
    for i, v in enumerate(res.best_trace):
        trace.append((window_idx, "pso", i, float(v)))
    start = res.x if res.value <= values[order[0]] else best
    lcfg = LbfgsConfig(memory=cfg.lbfgs_memory,
                       max_iterations=cfg.lbfgs_iterations)
    lres = lbfgs_minimize(lambda x: objective(problem, x), start, lcfg)
    for i, v in enumerate(lres.trace):
        trace.append((window_idx, "lbfgs", i, float(v)))
    if lres.line_search_failed:
        trace.append((window_idx, "warning", lres.iterations,
                      float(lres.value)))
    return lres.x.reshape(problem.free_frames, problem.noise_dim)


def _decode_clip(skel: Skeleton, frame_rate: float, init_pose: np.ndarray,
                 feats: np.ndarray) -> MotionClip:
    from .features import poses_from_features

    pose_dim = skel.dof
    frames = poses_from_features(init_pose, feats[:, :pose_dim])
    contacts = np.vstack([np.zeros((1, N_CONTACT)),
                          contact_bits(feats, N_CONTACT)])
    return MotionClip(skel, frame_rate, frames, contacts)


def sliding_window_design(gen: GeneratorNet, init_features: np.ndarray,
                          init_pose: np.ndarray, skel: Skeleton,
                          curve: CurveConstraint, horizon: int,
                          cfg: MapConfig | None = None,
                          frame_rate: float = 30.0,
                          extra_terms: list | None = None
                          ) -> tuple[MotionClip, list[WindowRecord], list]:
    """Curve-following design over overlapping windows.

    Each window keeps its first `overlap` noise frames frozen to the
    previous window's solution, so overlapping frames re-roll out bit
    identically.  Returns the decoded clip, per-window rollouts and the
    optimization trace rows (window, phase, iteration, loss).
    """
    cfg = cfg or MapConfig()
    rng = np.random.default_rng(cfg.seed)
    base = RolloutBase.from_features(gen, init_features,
                                     GroundTransform.from_pose(init_pose))
    step = cfg.window - cfg.overlap
    d_full = np.zeros((horizon, gen.dim))
    comp_full = np.zeros(horizon, dtype=np.int64)
    feats_full = np.zeros((horizon, gen.dim))
    trace: list = []
    records: list[WindowRecord] = []
    start = 0
    window_idx = 0
    while start < horizon:
        end = min(start + cfg.window, horizon)
        frozen_len = min(cfg.overlap, end - start) if start > 0 else 0
        free_lo = start + frozen_len
        if free_lo >= end:
            break
        comps, _ = mode_rollout(base.advance(feats_full[start:free_lo])
                                if frozen_len else base, end - free_lo)
        comp_full[free_lo:end] = comps
        terms = [PriorTerm(), CurveTerm(curve)]
        if cfg.use_contact_term:
            terms.append(ContactTerm(ContactPenaltyConfig(cfg.sigma_con,
                                                          cfg.sigma_con_y)))
        if extra_terms:
            terms.extend(extra_terms)
        problem = SynthesisProblem(
            base=base, horizon=end - start,
            components=comp_full[start:end], terms=terms,
            sigma_noise=cfg.sigma_noise, skeleton=skel, frame_rate=frame_rate,
            frozen=d_full[start:free_lo].copy() if frozen_len else None)
        free = _optimize_window(problem, cfg, rng, trace, window_idx)
        d_full[free_lo:end] = free
        win_feats = rollout(problem, free)
        feats_full[start:end] = win_feats
        records.append(WindowRecord(start, win_feats, trace[-1][3]))
        if end >= horizon:
            break
        advance = step
        base = base.advance(feats_full[start:start + advance])
        start += advance
        window_idx += 1
    clip = _decode_clip(skel, frame_rate, init_pose, feats_full)
    return clip, records, trace


@dataclass
class OnlineSession:
    """Persistent state of the realtime controller."""

    gen: GeneratorNet
    base: RolloutBase
    skel: Skeleton
    cfg: MapConfig
    frame_rate: float = 30.0
    frames_emitted: int = 0

    @classmethod
    def start(cls, gen: GeneratorNet, init_features: np.ndarray,
              init_pose: np.ndarray, skel: Skeleton,
              cfg: MapConfig | None = None,
              frame_rate: float = 30.0) -> "OnlineSession":
        cfg = cfg or MapConfig()
        base = RolloutBase.from_features(gen, init_features,
                                         GroundTransform.from_pose(init_pose))
        return cls(gen, base, skel, cfg, frame_rate)


def online_step(session: OnlineSession, ctrl: OnlineControl | None
                ) -> tuple[np.ndarray, np.ndarray, dict]:
    """Solve and emit the next batch of frames.

    Returns (features (n, dim), contact bits (n, 2), info).  With no
    control the prior (d = 0) rollout is emitted directly.
    """
    cfg = session.cfg
    n = cfg.online_batch
    comps, mode_feats = mode_rollout(session.base, n)
    info: dict = {"optimized": False, "loss": None}
    if ctrl is None:
        feats = mode_feats
    else:
        terms = [PriorTerm(),
                 ControlTerm(OnlineControl(ctrl.speed, ctrl.direction,
                                           cfg.sigma_speed, cfg.sigma_dir),
                             session.frame_rate)]
        if cfg.use_contact_term:
            terms.append(ContactTerm(ContactPenaltyConfig(cfg.sigma_con,
                                                          cfg.sigma_con_y)))
        problem = SynthesisProblem(
            base=session.base, horizon=n, components=comps, terms=terms,
            sigma_noise=cfg.sigma_noise, skeleton=session.skel,
            frame_rate=session.frame_rate)
        lcfg = LbfgsConfig(memory=cfg.lbfgs_memory,
                           max_iterations=cfg.online_lbfgs_iterations)
        res = lbfgs_minimize(lambda x: objective(problem, x),
                             np.zeros(problem.free_size), lcfg)
        feats = rollout(problem, res.x)
        info = {"optimized": True, "loss": res.value,
                "line_search_failed": res.line_search_failed}
    session.base = session.base.advance(feats)
    session.frames_emitted += len(feats)
    return feats, contact_bits(feats, N_CONTACT), info


def denoise_clip(gen: GeneratorNet, noisy: MotionClip,
                 cfg: MapConfig | None = None
                 ) -> tuple[MotionClip, list]:
    """MAP filtering of a noisy clip through the model prior.

    The first two frames anchor the rollout (their features feed the
    estimated initial hidden state); every later frame is re-generated
    under the denoise + contact terms in overlapping windows.
    """
    cfg = cfg or MapConfig()
    rng = np.random.default_rng(cfg.seed)
    skel = noisy.skeleton
    feats = features_from_clip(noisy)
    labels = label_contacts(noisy)
    aug = np.concatenate([feats, labels[1:]], axis=1)
    if aug.shape[1] != gen.dim:
        raise ValueError("clip feature dimension does not match the model")
    state, _, _ = estimate_initial_hidden(gen, aug[0], aug[1])
    from .generator import _advance_batch

    raw, state = _advance_batch(gen, state, aug[0])
    t1 = GroundTransform.from_pose(noisy.frames[1])
    x0, z0 = t1.position_xz()
    base = RolloutBase(gen, state, raw, (x0, z0, t1.yaw))

    horizon = aug.shape[0] - 1          # regenerate features 1..end
    pose_dim = skel.dof
    target = DenoiseTarget(
        roots=noisy.frames[2:, 0:3].copy(),
        yaws=noisy.frames[2:, 4].copy(),
        angles=np.concatenate([noisy.frames[2:, 3:4], noisy.frames[2:, 5:6],
                               noisy.frames[2:, 6:pose_dim]], axis=1),
        sigma_root=cfg.sigma_root, sigma_angle=cfg.sigma_angle)

    d_full = np.zeros((horizon, gen.dim))
    comp_full = np.zeros(horizon, dtype=np.int64)
    feats_full = np.zeros((horizon, gen.dim))
    trace: list = []
    step = cfg.window - cfg.overlap
    start = 0
    window_idx = 0
    cur = base
    while start < horizon:
        end = min(start + cfg.window, horizon)
        frozen_len = min(cfg.overlap, end - start) if start > 0 else 0
        free_lo = start + frozen_len
        if free_lo >= end:
            break
        comps, _ = mode_rollout(cur.advance(feats_full[start:free_lo])
                                if frozen_len else cur, end - free_lo)
        comp_full[free_lo:end] = comps
        win_target = DenoiseTarget(target.roots[start:end],
                                   target.yaws[start:end],
                                   target.angles[start:end],
                                   cfg.sigma_root, cfg.sigma_angle)
        terms = [PriorTerm(), DenoiseTerm(win_target)]
        if cfg.use_contact_term:
            terms.append(ContactTerm(ContactPenaltyConfig(cfg.sigma_con,
                                                          cfg.sigma_con_y)))
        problem = SynthesisProblem(
            base=cur, horizon=end - start, components=comp_full[start:end],
            terms=terms, sigma_noise=cfg.sigma_noise, skeleton=skel,
            frame_rate=noisy.frame_rate,
            frozen=d_full[start:free_lo].copy() if frozen_len else None)
        free = _optimize_window(problem, cfg, rng, trace, window_idx)
        d_full[free_lo:end] = free
        feats_full[start:end] = rollout(problem, free)
        if end >= horizon:
            break
        cur = cur.advance(feats_full[start:start + step])
        start += step
        window_idx += 1

    out_feats = np.vstack([aug[0:1], feats_full])
    clip = _decode_clip(skel, noisy.frame_rate, noisy.frames[0], out_feats)
    return clip, trace
