#!/usr/bin/env python3
"""Write the scripted walking corpus as BVH and prepped clip files.

Usage: python scripts/make_toy_data.py out_dir [--clips 12] [--frames 160]
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mogan.bvh import write_bvh
from mogan.clipio import write_clip
from mogan.synthgait import walking_corpus


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir")
    ap.add_argument("--clips", type=int, default=12)
    ap.add_argument("--frames", type=int, default=160)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for i, clip in enumerate(walking_corpus(args.clips, args.frames, rng)):
        (out / f"walk_{i:02d}.bvh").write_text(write_bvh(clip.skeleton, clip))
        write_clip(clip, out / f"walk_{i:02d}.clip")
        print(f"walk_{i:02d}: {clip.n_frames} frames, "
              f"contact fraction {clip.contacts.mean():.2f}")


if __name__ == "__main__":
    main()
