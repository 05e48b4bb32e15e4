import time

import numpy as np
import pytest

from seqbind.autodiff import backward
from seqbind.data import GenConfig, generate_corpus
from seqbind.layers import GROUP_RAE, GROUP_RETROFIT
from seqbind.losses import stage2_graph
from seqbind.model import TranslationModel
from seqbind.optim import AdamState
from seqbind.training import make_paired_subset


@pytest.fixture(scope="session")
def toy_corpus():
    """Small mixed-length corpus for model and training tests."""
    return generate_corpus(GenConfig(classes=4, motions_per_class=8), seed=11)


@pytest.fixture(scope="session")
def overfit_setup():
    """Ten memorized pairs trained with full-model updates of the paired
    objective (overfit sanity); also serves as the identity-model oracle.

    Uniform motion length keeps the closed-loop generation length equal to
    the true length, which the exact round trip requires.
    """
    t0 = time.time()
    corpus = generate_corpus(
        GenConfig(classes=8, motions_per_class=8, captions_per_motion=1,
                  raw_len_min=70, raw_len_max=70), seed=7)
    subset = make_paired_subset(corpus.pairs_in("train"), 10, seed=7)
    pairs = [(corpus.caption_tokens(c), corpus.motions[m].frames) for m, c in subset]
    model = TranslationModel.for_corpus(corpus, seed=2)
    adam = {g: AdamState(model.params.group(g), lr=1e-3)
            for g in (GROUP_RAE, GROUP_RETROFIT)}
    rng = np.random.default_rng([2, 99])
    iterations = 2000
    for _ in range(iterations):
        idx = rng.choice(len(pairs), size=8, replace=False)
        node, _ = stage2_graph(model, [pairs[k] for k in idx], 1.0)
        grads = backward(node, model.parameters())
        adam[GROUP_RAE].step(grads)
        adam[GROUP_RETROFIT].step(grads)
    return {
        "corpus": corpus,
        "pairs": pairs,
        "model": model,
        "iterations": iterations,
        "seconds": time.time() - t0,
    }
