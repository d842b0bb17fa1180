import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

CACHE = Path(__file__).parent / "_cache"

# recipe for the shared desk-scale model; the cache is purely a time
# saver -- training is seeded and deterministic, so a cached file is
# bit-identical to a fresh train
TOY_GEN_SEED = 42
TOY_GEN_RECIPE = "walk12x160-h64-e900"


@pytest.fixture(scope="session")
def toy_generator():
    """Generator trained on the varied walking corpus (~6 min fresh)."""
    from mogan.features import features_from_clip
    from mogan.generator import RnnTrainConfig, train_generator
    from mogan.persist import load_model, save_model
    from mogan.synthgait import walking_corpus

    CACHE.mkdir(exist_ok=True)
    path = CACHE / f"gen-{TOY_GEN_RECIPE}.mg"
    if path.exists():
        return load_model(path, expect_kind="generator")
    rng = np.random.default_rng(TOY_GEN_SEED)
    clips = walking_corpus(12, 160, rng, turning=True)
    seqs = [np.concatenate([features_from_clip(c), c.contacts[1:]], axis=1)
            for c in clips]
    cfg = RnnTrainConfig(batch_size=16, window=48, epochs=900,
                         learning_rate=2e-3, lr_decay=0.998, noise_sigma=0.05)
    net, _ = train_generator(seqs, cfg, rng, hidden=64)
    save_model(net, path, meta={"recipe": TOY_GEN_RECIPE})
    return net
