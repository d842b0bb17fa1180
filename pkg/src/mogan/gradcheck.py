"""Finite-difference verification of every trainable path in the repo.

Runs small randomized instances of the generator NLL window, the
refiner and discriminator losses, and the full MAP objective; each
analytic gradient (parameters and inputs) is compared against central
differences.  Shared by the CLI `gradcheck` subcommand and the test
suite.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .features import GroundTransform, end_effector_trajectory
from .generator import GeneratorNet, gmm_nll_node
from .optim import finite_diff_grad, relative_error
from .refiner import (DiscriminatorNet, RefinerNet, discriminator_loss_nodes,
                      refiner_loss_nodes)
from .skeleton import Joint, Skeleton
from .synthesis import (ContactPenaltyConfig, ContactTerm, ControlTerm,
                        CurveConstraint, CurveTerm, DenoiseTarget, DenoiseTerm,
                        OnlineControl, PriorTerm, RolloutBase,
                        SynthesisProblem, mode_rollout, objective,
                        objective_batch)

TOLERANCE = 1e-4
FD_STEP = 1e-5


def tiny_skeleton() -> Skeleton:
    """Three-joint legged stick: cheap FD while exercising toe FK."""
    joints = [
        Joint("root", -1, [0.0, 0.0, 0.0]),
        Joint("ltoe", 0, [0.1, -0.4, 0.05]),
        Joint("rtoe", 0, [-0.1, -0.4, 0.05]),
    ]
    skel = Skeleton(joints)
    skel.end_effectors = [1, 2]
    return skel


def _check_params(loss_fn, blocks: dict, h: float) -> float:
    """Worst relative error over all parameter blocks."""
    worst = 0.0
    tape, binding, loss = loss_fn()
    for b in blocks.values():
        b.zero_grad()
    tape.backward(loss)
    binding.collect()
    for b in blocks.values():
        fd = finite_diff_grad(lambda _: loss_fn()[2].value, b.value, h)
        worst = max(worst, relative_error(b.grad, fd))
    return worst


def check_generator(rng: np.random.Generator, h: float = FD_STEP
                    ) -> tuple[float, float]:
    """(param error, input error) of the windowed NLL."""
    dim = int(rng.integers(2, 5))
    hidden = int(rng.integers(3, 9))
    mixtures = int(rng.integers(2, 4))
    t_len = int(rng.integers(2, 6))
    net = GeneratorNet(dim, hidden, mixtures, rng)
    xs = rng.normal(0.0, 0.5, (t_len, dim))
    targets = rng.normal(0.0, 0.5, (t_len, dim))

    def build():
        tape = Tape()
        bind = net.bind(tape)
        s1, s2 = net.state_nodes(tape, net.zero_state())
        x_nodes = [tape.leaf(xs[t]) for t in range(t_len)]
        losses = []
        for t in range(t_len):
            raw, s1, s2 = net.step_nodes(bind, s1, s2, x_nodes[t])
            losses.append(gmm_nll_node(raw, tape.constant(targets[t]),
                                       mixtures, dim))
        return tape, bind, ad.amean(ad.stack_last(losses)), x_nodes

    param_err = _check_params(lambda: build()[:3], net.blocks(), h)
    tape, bind, loss, x_nodes = build()
    tape.backward(loss)
    input_err = 0.0
    for t in range(t_len):
        fd = finite_diff_grad(lambda _: build()[2].value, xs[t], h)
        input_err = max(input_err, relative_error(x_nodes[t].grad, fd))
    return param_err, input_err


def _tiny_adversarial(rng: np.random.Generator):
    skel = tiny_skeleton()
    feat_dim = skel.dof + 2
    aux_dim = 6 * len(skel.end_effectors)
    t_len = int(rng.integers(2, 6))
    refiner = RefinerNet(feat_dim, aux_dim, int(rng.integers(3, 9)),
                         int(rng.integers(3, 9)), rng)
    disc = DiscriminatorNet(aux_dim + 2, int(rng.integers(3, 9)),
                            int(rng.integers(3, 9)), rng)
    raw = rng.normal(0.0, 0.3, (2, t_len, feat_dim))
    aug = np.empty((2, t_len, feat_dim + aux_dim))
    for i in range(2):
        p, v = end_effector_trajectory(skel, raw[i, :, :-2], 30.0)
        aug[i] = np.concatenate([raw[i], p, v], axis=1)
    return skel, refiner, disc, raw, aug, t_len


def check_refiner(rng: np.random.Generator, h: float = FD_STEP
                  ) -> tuple[float, float]:
    skel, refiner, disc, raw, aug, t_len = _tiny_adversarial(rng)

    def build():
        tape = Tape()
        rbind = refiner.bind(tape)
        dbind = disc.bind(tape, trainable=False)
        x_nodes = [tape.leaf(aug[:, t]) for t in range(t_len)]
        ins = [tape.constant(raw[:, t]) for t in range(t_len)]
        refined = refiner.apply_nodes(rbind, x_nodes)
        loss = refiner_loss_nodes(disc, dbind, skel, ins, refined, 20.0, 30.0)
        return tape, rbind, loss, x_nodes

    param_err = _check_params(lambda: build()[:3], refiner.blocks(), h)
    tape, rbind, loss, x_nodes = build()
    tape.backward(loss)
    input_err = 0.0
    for t in range(t_len):
        fd = finite_diff_grad(lambda _: build()[2].value, aug[:, t], h)
        input_err = max(input_err, relative_error(x_nodes[t].grad, fd))
    return param_err, input_err


def check_discriminator(rng: np.random.Generator, h: float = FD_STEP
                        ) -> tuple[float, float]:
    skel, refiner, disc, raw, aug, t_len = _tiny_adversarial(rng)
    d_in = disc.in_dim
    refined = rng.normal(0.0, 0.5, (2, t_len, d_in))
    real = rng.normal(0.0, 0.5, (2, t_len, d_in))

    def build():
        tape = Tape()
        bind = disc.bind(tape)
        refs = [tape.leaf(refined[:, t]) for t in range(t_len)]
        reals = [tape.constant(real[:, t]) for t in range(t_len)]
        return tape, bind, discriminator_loss_nodes(disc, bind, refs, reals), refs

    param_err = _check_params(lambda: build()[:3], disc.blocks(), h)
    tape, bind, loss, refs = build()
    tape.backward(loss)
    input_err = 0.0
    for t in range(t_len):
        fd = finite_diff_grad(lambda _: build()[2].value, refined[:, t], h)
        input_err = max(input_err, relative_error(refs[t].grad, fd))
    return param_err, input_err


def check_map_objective(rng: np.random.Generator, h: float = FD_STEP) -> float:
    skel = tiny_skeleton()
    dim = skel.dof + 2
    gen = GeneratorNet(dim, int(rng.integers(3, 9)), 2, rng)
    init = rng.normal(0.0, 0.3, (2, dim))
    pose = np.zeros(skel.dof)
    pose[1] = 0.4
    base = RolloutBase.from_features(gen, init, GroundTransform.from_pose(pose))
    horizon = int(rng.integers(3, 6))
    comps, _ = mode_rollout(base, horizon)
    target = DenoiseTarget(
        roots=rng.normal(0.0, 0.2, (horizon, 3)),
        yaws=rng.normal(0.0, 0.2, horizon),
        angles=rng.normal(0.0, 0.2, (horizon, skel.dof - 4)))
    terms = [PriorTerm(),
             CurveTerm(CurveConstraint(np.array([[0.0, 0.0], [0.0, 3.0]]))),
             ContactTerm(ContactPenaltyConfig()),
             ControlTerm(OnlineControl(0.3, 0.2), 30.0),
             DenoiseTerm(target)]
    problem = SynthesisProblem(base=base, horizon=horizon, components=comps,
                               terms=terms, skeleton=skel, frame_rate=30.0)
    d0 = rng.normal(0.0, 0.05, problem.free_size)
    _, grad = objective(problem, d0)
    fd = finite_diff_grad(
        lambda x: float(objective_batch(problem, x.reshape(1, -1))[0]),
        d0.copy(), h)
    return relative_error(grad, fd)


def run_gradcheck(seed: int = 0) -> list[tuple[str, float]]:
    """All suites; returns (name, max relative error) rows."""
    rng = np.random.default_rng(seed)
    rows = []
    p, i = check_generator(rng)
    rows += [("generator/params", p), ("generator/inputs", i)]
    p, i = check_refiner(rng)
    rows += [("refiner/params", p), ("refiner/inputs", i)]
    p, i = check_discriminator(rng)
    rows += [("discriminator/params", p), ("discriminator/inputs", i)]
    rows.append(("map-objective/noise", check_map_objective(rng)))
    return rows
