#!/usr/bin/env python3
"""End-to-end desk-scale experiment: train the generator on the
scripted walking corpus, run the adversarial phase, then exercise
free-run sampling, curve design and denoising, printing the headline
metrics of each stage.

Roughly 10-15 minutes on a laptop CPU with the default sizes; pass
--fast for a minutes-long smoke version with smaller budgets.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mogan.contacts import foot_skate, second_difference_energy
from mogan.design import MapConfig, denoise_clip, sliding_window_design
from mogan.features import GroundTransform, features_from_clip, poses_from_features
from mogan.generator import RnnTrainConfig, free_run, train_generator
from mogan.persist import save_model
from mogan.refiner import GanTrainConfig, generate_refined, train_adversarial
from mogan.skeleton import MotionClip, reference_skeleton
from mogan.synthesis import CurveConstraint, RolloutBase, mode_rollout, \
    nearest_on_polyline
from mogan.synthgait import walking_clip, walking_corpus


def stage(name):
    print(f"\n=== {name} ===", flush=True)
    return time.time()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="toy_run")
    ap.add_argument("--fast", action="store_true")
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    skel = reference_skeleton()

    t0 = stage("data")
    clips = walking_corpus(6 if args.fast else 12, 160, rng)
    seqs = [np.concatenate([features_from_clip(c), c.contacts[1:]], axis=1)
            for c in clips]
    print(f"{len(clips)} clips, feature dim {seqs[0].shape[1]} "
          f"({time.time() - t0:.0f}s)")

    t0 = stage("generator training")
    cfg = RnnTrainConfig(batch_size=16, window=48,
                         epochs=200 if args.fast else 900,
                         learning_rate=2e-3, lr_decay=0.998)
    gen, hist = train_generator(seqs, cfg, rng, hidden=48 if args.fast else 64)
    save_model(gen, out / "generator.mg")
    print(f"nll {hist[0][2]:.2f} -> {hist[-1][2]:.2f} "
          f"over {len(hist)} iterations ({time.time() - t0:.0f}s)")

    t0 = stage("adversarial refinement")
    gan = GanTrainConfig(window=40, batch=16, buffer_size=96,
                         cycles=20 if args.fast else 60,
                         warmup_refiner=20 if args.fast else 75,
                         warmup_discriminator=20 if args.fast else 75,
                         lr_discriminator=0.0015)
    refiner, disc, ghist = train_adversarial(
        gen, seqs, skel, 30.0, gan, rng, refiner_widths=(32, 32),
        disc_widths=(6, 6), csv_path=out / "gan_loss.csv")
    save_model(refiner, out / "refiner.mg")
    save_model(disc, out / "discriminator.mg")
    print(f"{len(ghist)} updates ({time.time() - t0:.0f}s)")

    init_clip = walking_clip(40)
    init = np.concatenate([features_from_clip(init_clip),
                           init_clip.contacts[1:]], axis=1)[:3]
    init_pose = init_clip.frames[3]

    t0 = stage("free run + refinement")
    refined = generate_refined(gen, refiner, skel, init, init_pose, 300, rng)
    plain_feats = free_run(gen, init, 300, rng)
    plain = poses_from_features(init_pose, plain_feats[:, : skel.dof])
    from mogan.generator import contact_bits

    plain_clip = MotionClip(skel, 30.0, plain,
                            np.vstack([np.zeros((1, 2)),
                                       contact_bits(plain_feats)]))
    print(f"foot skate: plain {foot_skate(plain_clip):.3f} -> "
          f"refined {foot_skate(refined):.3f} m/s ({time.time() - t0:.0f}s)")

    t0 = stage("curve design")
    pose = init_pose.copy()
    pose[4] += 0.8
    curve = CurveConstraint(np.array([[pose[0], pose[2]],
                                      [pose[0], pose[2] + 8.0]]))
    mcfg = MapConfig(pso_iterations=30, lbfgs_iterations=100,
                     candidates=16, pso_particles=24)
    base = RolloutBase.from_features(gen, init, GroundTransform.from_pose(pose))
    _, prior = mode_rollout(base, 51)
    prior_poses = poses_from_features(pose, prior[:, : skel.dof])
    designed, _, _ = sliding_window_design(gen, init, pose, skel, curve,
                                           horizon=51, cfg=mcfg)

    def mean_dist(frames):
        q = frames[1:, [0, 2]]
        return np.linalg.norm(q - nearest_on_polyline(curve, q), axis=1).mean()

    print(f"root-to-curve: prior {mean_dist(prior_poses):.3f} m -> "
          f"designed {mean_dist(designed.frames):.3f} m "
          f"({time.time() - t0:.0f}s)")

    t0 = stage("denoising")
    target = walking_clip(60)
    noisy_frames = target.frames.copy()
    noisy_frames[:, 3:] += rng.normal(0, 0.1, noisy_frames[:, 3:].shape)
    noisy = MotionClip(skel, 30.0, noisy_frames)
    dcfg = MapConfig(pso_iterations=20, lbfgs_iterations=120, candidates=8,
                     pso_particles=16, sigma_angle=0.1, sigma_con=0.005)
    clean, _ = denoise_clip(gen, noisy, dcfg)
    print(f"second-difference energy: noisy "
          f"{second_difference_energy(noisy.frames):.5f} -> "
          f"clean {second_difference_energy(clean.frames):.5f} "
          f"({time.time() - t0:.0f}s)")
    print(f"\nmodels and logs in {out}/")


if __name__ == "__main__":
    main()
