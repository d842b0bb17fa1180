"""Command-line pipeline: prep, train-rnn, train-refiner, sample,
design, denoise, serve, gradcheck.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


class UsageError(SystemExit):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(1)


def _load_config(path):
    from .config import RunConfig

    return RunConfig.load(path) if path else RunConfig.default()


def _load_clips(paths):
    from .clipio import read_clip

    clips = [read_clip(p) for p in paths]
    if not clips:
        raise ValueError("no input clips")
    return clips


def _augmented(clips):
    from .features import features_from_clip

    seqs = []
    for c in clips:
        if c.contacts is None:
            raise ValueError("clip lacks contact labels; run prep with contacts")
        feats = features_from_clip(c)
        seqs.append(np.concatenate([feats, c.contacts[1:]], axis=1))
    return seqs


def _init_from_clip(clip, n_init: int = 3):
    """Warmup features and anchor pose from the head of a clip."""
    seq = _augmented([clip])[0]
    return seq[: n_init - 1], clip.frames[n_init - 1]


def cmd_prep(args) -> int:
    from .bvh import parse_bvh
    from .clipio import write_clip
    from .contacts import label_contacts
    from .features import features_from_clip
    from .skeleton import downsample

    cfg = _load_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in args.inputs:
        path = Path(path)
        skel, clip = parse_bvh(path.read_text())
        factor = args.factor if args.factor is not None \
            else cfg.data.downsample_factor
        if factor > 1:
            clip = downsample(clip, factor)
        clip.contacts = label_contacts(clip, cfg.data.contact_height_eps,
                                       cfg.data.contact_speed_eps)
        out = out_dir / (path.stem + ".clip")
        write_clip(clip, out)
        feats = features_from_clip(clip)
        print(f"{path.name}: {clip.n_frames} frames @ {clip.frame_rate:g} fps, "
              f"dims {clip.frames.shape[1]}, "
              f"contact fraction {clip.contacts.mean():.2f}, "
              f"feature std {feats.std():.4f} -> {out}")
    return 0


def cmd_train_rnn(args) -> int:
    from .generator import train_generator
    from .persist import load_model, save_model

    cfg = _load_config(args.config)
    rnn = cfg.rnn
    if args.epochs is not None:
        rnn.epochs = args.epochs
    seqs = _augmented(_load_clips(args.clips))
    rng = np.random.default_rng(args.seed)
    warm = load_model(args.pretrained, "generator") if args.pretrained else None
    net, history = train_generator(
        seqs, rnn, rng, net=warm, hidden=args.hidden or cfg.nets.generator_hidden,
        mixtures=cfg.nets.mixtures, lstm_form=cfg.nets.lstm_form,
        csv_path=args.loss_csv)
    save_model(net, args.out, meta={"sequences": len(seqs),
                                    "iterations": len(history)})
    print(f"trained {len(history)} iterations, "
          f"final nll {history[-1][2]:.4f} -> {args.out}")
    return 0


def cmd_train_refiner(args) -> int:
    from .persist import load_model, save_model
    from .refiner import train_adversarial

    cfg = _load_config(args.config)
    gan = cfg.gan
    if args.cycles is not None:
        gan.cycles = args.cycles
    clips = _load_clips(args.clips)
    seqs = _augmented(clips)
    gen = load_model(args.generator, "generator")
    rng = np.random.default_rng(args.seed)
    refiner, disc, history = train_adversarial(
        gen, seqs, clips[0].skeleton, clips[0].frame_rate, gan, rng,
        csv_path=args.loss_csv,
        refiner_widths=(cfg.nets.refiner_fc, cfg.nets.refiner_lstm),
        disc_widths=(cfg.nets.discriminator_fc, cfg.nets.discriminator_lstm))
    save_model(refiner, args.out_refiner, meta={"iterations": len(history)})
    save_model(disc, args.out_discriminator, meta={"iterations": len(history)})
    print(f"adversarial phase: {len(history)} updates, "
          f"refiner -> {args.out_refiner}, "
          f"discriminator -> {args.out_discriminator}")
    return 0


def cmd_sample(args) -> int:
    from .clipio import read_clip, write_clip
    from .design import _decode_clip
    from .generator import free_run
    from .persist import load_model
    from .refiner import generate_refined

    gen = load_model(args.generator, "generator")
    init_clip = read_clip(args.init)
    init_feats, init_pose = _init_from_clip(init_clip)
    rng = np.random.default_rng(args.seed)
    if args.refiner:
        refiner = load_model(args.refiner, "refiner")
        clip = generate_refined(gen, refiner, init_clip.skeleton, init_feats,
                                init_pose, args.frames, rng,
                                init_clip.frame_rate, args.zero_noise)
    else:
        feats = free_run(gen, init_feats, args.frames, rng,
                         zero_noise=args.zero_noise)
        clip = _decode_clip(init_clip.skeleton, init_clip.frame_rate,
                            init_pose, feats)
    write_clip(clip, args.out)
    if args.bvh:
        from .bvh import write_bvh

        Path(args.bvh).write_text(write_bvh(clip.skeleton, clip))
    print(f"generated {clip.n_frames} frames -> {args.out}")
    return 0


def cmd_design(args) -> int:
    from .clipio import read_clip, write_clip
    from .design import sliding_window_design
    from .persist import load_model
    from .synthesis import CurveConstraint

    cfg = _load_config(args.config)
    gen = load_model(args.generator, "generator")
    init_clip = read_clip(args.init)
    init_feats, init_pose = _init_from_clip(init_clip)
    curve_points = json.loads(Path(args.curve).read_text())
    curve = CurveConstraint(np.asarray(curve_points, dtype=np.float64),
                            cfg.map.sigma_fit_sq)
    clip, _, trace = sliding_window_design(
        gen, init_feats, init_pose, init_clip.skeleton, curve,
        horizon=args.frames, cfg=cfg.map, frame_rate=init_clip.frame_rate)
    write_clip(clip, args.out)
    if args.trace:
        import csv

        with open(args.trace, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["window", "phase", "iteration", "loss"])
            w.writerows(trace)
    print(f"designed {clip.n_frames} frames -> {args.out}")
    return 0


def cmd_denoise(args) -> int:
    from .clipio import read_clip, write_clip
    from .design import denoise_clip
    from .persist import load_model

    cfg = _load_config(args.config)
    gen = load_model(args.generator, "generator")
    noisy = read_clip(args.input)
    clean, _ = denoise_clip(gen, noisy, cfg.map)
    write_clip(clean, args.out)
    print(f"denoised {clean.n_frames} frames -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .clipio import read_clip
    from .persist import load_model
    from .service import serve

    cfg = _load_config(args.config)
    gen = load_model(args.generator, "generator")
    init_clip = read_clip(args.init)
    init_feats, init_pose = _init_from_clip(init_clip)
    static = args.static if args.static and Path(args.static).is_dir() else None
    print(f"serving ws://{args.host}:{args.port}/control at {args.tick} Hz")
    serve(gen, init_clip.skeleton, init_feats, init_pose, args.host,
          args.port, cfg.map, args.tick, static)
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, run_gradcheck

    rows = run_gradcheck(seed=args.seed)
    width = max(len(n) for n, _ in rows)
    ok = True
    for name, err in rows:
        status = "ok" if err <= TOLERANCE else "FAIL"
        ok &= err <= TOLERANCE
        print(f"{name:<{width}}  {err:10.3e}  {status}")
    if not ok:
        print("gradient check FAILED", file=sys.stderr)
        return 2
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="mogan",
                description="contact-aware generative motion modelling")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prep", help="parse BVH, downsample, label contacts")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--factor", type=int, default=None)
    sp.add_argument("--config")
    sp.set_defaults(fn=cmd_prep)

    sp = sub.add_parser("train-rnn", help="train the generative model")
    sp.add_argument("clips", nargs="+")
    sp.add_argument("--out", required=True)
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--hidden", type=int, default=None)
    sp.add_argument("--pretrained")
    sp.add_argument("--loss-csv")
    sp.set_defaults(fn=cmd_train_rnn)

    sp = sub.add_parser("train-refiner", help="adversarial refinement phase")
    sp.add_argument("clips", nargs="+")
    sp.add_argument("--generator", required=True)
    sp.add_argument("--out-refiner", required=True)
    sp.add_argument("--out-discriminator", required=True)
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--cycles", type=int, default=None)
    sp.add_argument("--loss-csv")
    sp.set_defaults(fn=cmd_train_refiner)

    sp = sub.add_parser("sample", help="free-run generation")
    sp.add_argument("--generator", required=True)
    sp.add_argument("--refiner")
    sp.add_argument("--init", required=True)
    sp.add_argument("--frames", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--zero-noise", action="store_true")
    sp.add_argument("--out", required=True)
    sp.add_argument("--bvh")
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("design", help="curve-constrained offline design")
    sp.add_argument("--generator", required=True)
    sp.add_argument("--init", required=True)
    sp.add_argument("--curve", required=True,
                    help="JSON array of [x, z] waypoints (meters)")
    sp.add_argument("--frames", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trace")
    sp.add_argument("--config")
    sp.set_defaults(fn=cmd_design)

    sp = sub.add_parser("denoise", help="MAP motion filtering")
    sp.add_argument("--generator", required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--config")
    sp.set_defaults(fn=cmd_denoise)

    sp = sub.add_parser("serve", help="realtime control service")
    sp.add_argument("--generator", required=True)
    sp.add_argument("--init", required=True)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8765)
    sp.add_argument("--tick", type=float, default=30.0)
    sp.add_argument("--static", default="frontend",
                    help="directory with the browser console")
    sp.add_argument("--config")
    sp.set_defaults(fn=cmd_serve)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_gradcheck)

    return p


def run_cli(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return e.code
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return 2
    except Exception as e:  # surfaced as diagnostics, not tracebacks
        print(f"mogan {args.command}: error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
