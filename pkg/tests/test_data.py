import numpy as np
import pytest

from seqbind.data import (BOS_TOKEN, EOS_TOKEN, Corpus, GenConfig, Vocabulary,
                          build_embeddings, downsample, denormalize,
                          generate_corpus, load_corpus, normalize,
                          partition_sizes, save_corpus, split, split_motion_ids)
from seqbind.errors import ConfigError, InputError, VocabularyError


# -- generation ----------------------------------------------------------------

def test_generator_counts_contract():
    corpus = generate_corpus(GenConfig(classes=8, motions_per_class=64), seed=0)
    assert len(corpus.motions) == 512
    assert len(corpus.captions) == 1024
    assert len(corpus.pairs) == 1024


def test_generator_is_seed_deterministic(tmp_path):
    c1 = generate_corpus(GenConfig(classes=3, motions_per_class=8), seed=5)
    c2 = generate_corpus(GenConfig(classes=3, motions_per_class=8), seed=5)
    save_corpus(c1, tmp_path / "a")
    save_corpus(c2, tmp_path / "b")
    for rel in sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")):
        fa, fb = tmp_path / "a" / rel, tmp_path / "b" / rel
        if fa.is_file():
            assert fa.read_bytes() == fb.read_bytes(), rel
    c3 = generate_corpus(GenConfig(classes=3, motions_per_class=8), seed=6)
    assert any(c1.motions[m].frames.tobytes() != c3.motions[m].frames.tobytes()
               for m in c1.motions)


def test_generator_rejects_bad_configs():
    with pytest.raises(ConfigError, match="need >= 2 classes"):
        GenConfig(classes=1)
    with pytest.raises(ConfigError):
        GenConfig(classes=99)
    with pytest.raises(ConfigError):
        GenConfig(captions_per_motion=4)
    with pytest.raises(ConfigError):
        GenConfig(raw_len_min=15, downsample_factor=10)


def test_normalized_motions_within_range_and_min_length():
    corpus = generate_corpus(GenConfig(classes=4, motions_per_class=6), seed=2)
    for seq in corpus.motions.values():
        assert seq.frames.shape[0] >= 2
        assert np.max(np.abs(seq.frames)) <= 0.9 + 1e-12


def test_nearest_centroid_classification_perfect_at_zero_noise():
    corpus = generate_corpus(GenConfig(classes=8, motions_per_class=8, noise=0.0), seed=3)

    def resample(frames, points=12):
        t = np.linspace(0.0, frames.shape[0] - 1.0, points)
        idx = np.arange(frames.shape[0])
        return np.column_stack([np.interp(t, idx, frames[:, d])
                                for d in range(frames.shape[1])]).ravel()

    labels = sorted({seq.label for seq in corpus.motions.values()})
    vectors = {mid: resample(seq.frames) for mid, seq in corpus.motions.items()}
    centroids = {
        label: np.mean([vectors[m] for m, s in corpus.motions.items() if s.label == label],
                       axis=0)
        for label in labels}
    hits = 0
    for mid, seq in corpus.motions.items():
        nearest = min(labels, key=lambda lb: np.linalg.norm(vectors[mid] - centroids[lb]))
        hits += nearest == seq.label
    assert hits == len(corpus.motions)


# -- preprocessing ---------------------------------------------------------------

def test_normalize_affine_endpoints_and_midpoint():
    lo, hi = np.array([-1.0]), np.array([3.0])
    assert normalize(np.array([[-1.0]]), lo, hi)[0, 0] == -0.9
    assert normalize(np.array([[3.0]]), lo, hi)[0, 0] == 0.9
    assert normalize(np.array([[1.0]]), lo, hi)[0, 0] == 0.0


def test_normalize_clamps_out_of_range_values():
    lo, hi = np.array([0.0]), np.array([1.0])
    assert normalize(np.array([[2.5]]), lo, hi)[0, 0] == 0.9
    assert normalize(np.array([[-2.5]]), lo, hi)[0, 0] == -0.9


def test_normalize_round_trip_within_tolerance():
    rng = np.random.default_rng(4)
    frames = rng.uniform(-2.0, 5.0, size=(20, 3))
    lo, hi = frames.min(axis=0), frames.max(axis=0)
    back = denormalize(normalize(frames, lo, hi), lo, hi)
    np.testing.assert_allclose(back, frames, atol=1e-12)


def test_normalize_degenerate_dimension_maps_to_zero(caplog):
    lo = hi = np.array([2.0])
    out = normalize(np.array([[2.0], [2.0]]), lo, hi)
    np.testing.assert_array_equal(out, np.zeros((2, 1)))


def test_downsample_contracts():
    frames = np.arange(200.0).reshape(100, 2)
    assert downsample(frames, 10).shape == (10, 2)
    np.testing.assert_array_equal(downsample(frames, 1), frames)
    seven = np.arange(7.0).reshape(7, 1)
    np.testing.assert_array_equal(downsample(seven, 3).ravel(), [0.0, 3.0, 6.0])
    with pytest.raises(InputError):
        downsample(np.zeros((19, 2)), 10)
    with pytest.raises(InputError):
        downsample(frames, 0)


def test_partition_sizes_paper_and_derived_cases():
    assert partition_sizes(2721, (0.8, 0.1, 0.1)) == (2176, 272, 273)
    assert partition_sizes(512, (0.8, 0.1, 0.1)) == (409, 51, 52)
    with pytest.raises(InputError):
        partition_sizes(10, (0.5, 0.1))


def test_split_partitions_are_disjoint_and_deterministic():
    ids = [f"m{i:03d}" for i in range(40)]
    a = split_motion_ids(ids, (0.8, 0.1, 0.1), seed=0)
    b = split_motion_ids(ids, (0.8, 0.1, 0.1), seed=0)
    assert a == b
    counts = {"train": 0, "val": 0, "test": 0}
    for part in a.values():
        counts[part] += 1
    assert counts == {"train": 32, "val": 4, "test": 4}
    with pytest.raises(ConfigError):
        split_motion_ids(ids[:5], (0.8, 0.1, 0.1), seed=0)


def test_split_reassigns_corpus_and_captions_follow(toy_corpus):
    fresh = split(toy_corpus, (0.8, 0.1, 0.1), seed=99)
    assert set(fresh.partition) == set(toy_corpus.partition)
    for part in ("train", "val", "test"):
        for mid, cid in fresh.pairs_in(part):
            assert fresh.partition[mid] == part
            assert fresh.captions[cid].motion_id == mid


# -- vocabulary and embeddings ------------------------------------------------------

def test_vocabulary_bijection_and_markers():
    vocab = Vocabulary(["walk", "a", "person"])
    assert vocab.tokens[0] == BOS_TOKEN and vocab.tokens[1] == EOS_TOKEN
    assert vocab.size == 5
    for i, tok in enumerate(vocab.tokens):
        assert vocab.id(tok) == i
        assert vocab.token(i) == tok
    ids = vocab.encode(["a", "person", "walk"])
    assert ids[0] == 0 and ids[-1] == 1
    assert vocab.decode(ids) == ["a", "person", "walk"]
    with pytest.raises(VocabularyError):
        vocab.id("unknown")
    with pytest.raises(VocabularyError):
        vocab.token(99)


def test_every_caption_decodes_back_to_its_words(toy_corpus):
    for cid, caption in toy_corpus.captions.items():
        ids = toy_corpus.caption_tokens(cid)
        assert toy_corpus.vocab.decode(ids) == caption.words


def test_embeddings_cluster_synonyms(toy_corpus):
    emb = toy_corpus.embeddings
    vocab = toy_corpus.vocab

    def cos(a, b):
        return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

    group_of = {}
    for gi, group in enumerate(vocab.synonym_groups):
        for w in group:
            group_of[w] = gi
    words = [t for t in vocab.tokens[2:]]
    min_within = 1.0
    max_across = -1.0
    for i, wa in enumerate(words):
        for wb in words[i + 1:]:
            c = cos(emb[vocab.id(wa)], emb[vocab.id(wb)])
            if group_of.get(wa, -1) == group_of.get(wb, -2):
                min_within = min(min_within, c)
            else:
                max_across = max(max_across, c)
    assert min_within > max_across


def test_embeddings_reserved_rows_and_norms(toy_corpus):
    emb = toy_corpus.embeddings
    np.testing.assert_allclose(np.linalg.norm(emb[0]), 1.0)
    np.testing.assert_allclose(np.linalg.norm(emb[1]), 1.0)
    assert abs(float(emb[0] @ emb[1])) < 1e-12
    norms = np.linalg.norm(emb, axis=1)
    assert np.all(norms >= 0.5) and np.all(norms <= 2.0)


def test_build_embeddings_deterministic_and_validated():
    vocab = Vocabulary(["x", "y"], synonym_groups=[["x", "y"]])
    e1 = build_embeddings(vocab, 8, seed=0)
    e2 = build_embeddings(vocab, 8, seed=0)
    assert e1.tobytes() == e2.tobytes()
    with pytest.raises(InputError):
        build_embeddings(vocab, 1, seed=0)


# -- corpus I/O -----------------------------------------------------------------------

def test_corpus_round_trip_is_lossless(tmp_path, toy_corpus):
    root = tmp_path / "corpus"
    save_corpus(toy_corpus, root)
    loaded = load_corpus(root)
    assert set(loaded.motions) == set(toy_corpus.motions)
    for mid in toy_corpus.motions:
        a, b = toy_corpus.motions[mid], loaded.motions[mid]
        assert a.frames.tobytes() == b.frames.tobytes()
        assert (a.label, a.raw_len, a.modifier) == (b.label, b.raw_len, b.modifier)
    assert loaded.partition == toy_corpus.partition
    assert loaded.pairs == toy_corpus.pairs
    for cid in toy_corpus.captions:
        assert loaded.captions[cid].words == toy_corpus.captions[cid].words
    assert loaded.embeddings.tobytes() == toy_corpus.embeddings.tobytes()
    assert loaded.norm_min.tobytes() == toy_corpus.norm_min.tobytes()
    assert loaded.norm_max.tobytes() == toy_corpus.norm_max.tobytes()
    assert loaded.vocab.tokens == toy_corpus.vocab.tokens
    assert loaded.vocab.synonym_groups == toy_corpus.vocab.synonym_groups
    assert loaded.meta == toy_corpus.meta


def test_load_missing_corpus_errors(tmp_path):
    with pytest.raises(InputError):
        load_corpus(tmp_path / "nope")


def test_pair_list_references_existing_ids(toy_corpus):
    for mid, cid in toy_corpus.pairs:
        assert mid in toy_corpus.motions
        assert cid in toy_corpus.captions


def test_corpus_helpers(toy_corpus):
    assert toy_corpus.action_dim == 6
    train = toy_corpus.motion_ids("train")
    assert train and all(toy_corpus.partition[m] == "train" for m in train)
    assert toy_corpus.mean_first_frame().shape == (6,)
    assert toy_corpus.mean_motion_len() >= 2
    assert toy_corpus.max_caption_len() >= 4
