import numpy as np
import pytest

from seqbind.autodiff import backward
from seqbind.data import BOS_ID, EOS_ID
from seqbind.errors import ConfigError, InputError, VocabularyError
from seqbind.layers import GROUP_FROZEN, GROUP_RAE, GROUP_RETROFIT
from seqbind.losses import action_loss_graph, loss_act, stage2_graph
from seqbind.model import ModelConfig, TranslationModel


def small_model(vocab_size=9, seed=0, **overrides):
    config = ModelConfig(action_dim=3, hidden_dim=8, latent_dim=4, embedding_dim=5,
                         retrofit_hidden=6, vocab_size=vocab_size, **overrides)
    rng = np.random.default_rng([seed, 1])
    table = np.random.default_rng(99).normal(size=(vocab_size, 5))
    return TranslationModel(config, table, rng, vocab_tokens=[f"w{i}" for i in range(vocab_size)],
                            mean_first_frame=np.zeros(3), default_action_len=6,
                            max_caption_len=8)


def zero_all(model):
    for p in model.parameters():
        if p.group != GROUP_FROZEN:
            p.tensor.data[...] = 0.0


def rand_motion(t, d=3, seed=0, scale=0.5):
    return np.random.default_rng(seed).uniform(-scale, scale, size=(t, d))


# -- configuration -------------------------------------------------------------

def test_config_rejects_nonpositive_fields():
    with pytest.raises(ConfigError):
        ModelConfig(hidden_dim=0)


def test_paper_scale_dimensions():
    c = ModelConfig.paper_scale()
    assert (c.action_dim, c.hidden_dim, c.latent_dim) == (50, 500, 500)
    assert (c.embedding_dim, c.retrofit_hidden, c.vocab_size) == (300, 400, 1331)
    assert c.action_decoder_layers == 3


def test_embedding_table_shape_checked():
    config = ModelConfig(action_dim=3, hidden_dim=8, latent_dim=4, embedding_dim=5,
                         retrofit_hidden=6, vocab_size=9)
    with pytest.raises(ConfigError):
        TranslationModel(config, np.zeros((9, 4)), np.random.default_rng(0))


# -- encoders --------------------------------------------------------------------

def test_encode_action_zero_weights_gives_zero_latent():
    model = small_model()
    zero_all(model)
    z = model.encode_action(rand_motion(10))
    np.testing.assert_array_equal(z.data, np.zeros(4))


def test_encode_action_shape_contract():
    model = small_model()
    assert model.encode_action(rand_motion(20)).data.shape == (4,)
    assert model.encode_actions([rand_motion(5), rand_motion(9, seed=1)]).data.shape == (2, 4)


def test_encode_action_deterministic():
    model = small_model()
    motion = rand_motion(12)
    assert model.encode_action(motion).data.tobytes() == \
        model.encode_action(motion).data.tobytes()


def test_encode_action_validation():
    model = small_model()
    with pytest.raises(InputError):
        model.encode_action(rand_motion(1))
    with pytest.raises(InputError):
        model.encode_action(np.zeros((5, 4)))
    with pytest.raises(InputError):
        model.encode_action(np.full((5, 3), 1.5))


def test_masked_batches_match_individual_encoding():
    model = small_model(seed=5)
    motions = [rand_motion(4, seed=1), rand_motion(9, seed=2), rand_motion(6, seed=3)]
    batch = model.encode_actions(motions).data
    for i, m in enumerate(motions):
        np.testing.assert_allclose(batch[i], model.encode_action(m).data, atol=1e-12)


def test_encode_description_zero_weights_gives_zero_latent():
    model = small_model()
    zero_all(model)
    z = model.encode_description([BOS_ID, 4, 5, EOS_ID])
    np.testing.assert_array_equal(z.data, np.zeros(4))


def test_encode_description_shape_and_reversal_sensitivity():
    model = small_model(seed=0)
    tokens = [BOS_ID, 2, 3, 4, 5, 6, EOS_ID]
    z = model.encode_description(tokens)
    assert z.data.shape == (4,)
    reversed_tokens = [BOS_ID, 6, 5, 4, 3, 2, EOS_ID]
    z_rev = model.encode_description(reversed_tokens)
    assert np.any(np.abs(z.data - z_rev.data) > 0)


def test_encode_description_validation():
    model = small_model()
    with pytest.raises(InputError):
        model.encode_description([BOS_ID, 2, 3])
    with pytest.raises(InputError):
        model.encode_description([2, 3, EOS_ID])
    with pytest.raises(VocabularyError):
        model.encode_description([BOS_ID, 42, EOS_ID])


def test_masked_description_batches_match_individual():
    model = small_model(seed=6)
    seqs = [[BOS_ID, 2, EOS_ID], [BOS_ID, 3, 4, 5, 6, EOS_ID], [BOS_ID, 7, 8, EOS_ID]]
    batch = model.encode_descriptions(seqs).data
    for i, s in enumerate(seqs):
        np.testing.assert_allclose(batch[i], model.encode_description(s).data, atol=1e-12)


# -- decoders ---------------------------------------------------------------------

def test_decode_action_zero_weights_outputs_zero_frames():
    model = small_model()
    zero_all(model)
    first = np.array([0.2, -0.1, 0.3])
    frames = model.decode_action(model.encode_action(rand_motion(6)), first, 5)
    np.testing.assert_array_equal(frames[0], first)
    np.testing.assert_array_equal(frames[1:], np.zeros((4, 3)))


def test_decode_action_closed_loop_length_contract():
    model = small_model()
    z = model.encode_action(rand_motion(8))
    frames = model.decode_action(z, np.zeros(3), 15)
    assert frames.shape == (15, 3)
    with pytest.raises(InputError):
        model.decode_action(z, np.zeros(3), 1)


def test_teacher_forced_decode_matches_training_graph_loss():
    model = small_model(seed=3)
    motion = rand_motion(7, seed=4)
    z = model.encode_action(motion)
    decoded = model.decode_action(z, motion[0], 7, teacher=motion)
    scalar = loss_act(decoded, motion)
    graph = action_loss_graph(model, [motion]).item()
    assert scalar == graph


def test_decode_action_outputs_respect_normalization_range():
    model = small_model(seed=8)
    frames = model.decode_action(model.encode_action(rand_motion(6)), np.zeros(3), 12)
    assert np.max(np.abs(frames)) <= 0.9


def test_decode_description_zero_weights_uniform_and_eos_stop():
    model = small_model()
    zero_all(model)
    z = model.encode_description([BOS_ID, 3, EOS_ID])
    tokens, dists = model.decode_description(z, 8)
    # uniform distribution: the smallest eligible id (EOS) wins immediately
    assert tokens == [BOS_ID, EOS_ID]
    np.testing.assert_allclose(dists[0], np.full(9, 1.0 / 9.0), atol=1e-12)


def test_decode_description_distributions_are_normalized():
    model = small_model(seed=9)
    z = model.encode_description([BOS_ID, 2, 5, EOS_ID])
    _, dists = model.decode_description(z, 8)
    for dist in dists:
        assert abs(dist.sum() - 1.0) < 1e-12
        assert np.all(dist > 0)


def test_decode_description_never_emits_bos_and_caps_length():
    model = small_model(seed=10)
    model.dsc_out.b.tensor.data[...] = 0.0
    model.dsc_out.b.tensor.data[5] = 50.0  # force a non-EOS emission forever
    z = model.encode_description([BOS_ID, 2, EOS_ID])
    tokens, _ = model.decode_description(z, 6)
    assert len(tokens) == 6
    assert tokens[0] == BOS_ID
    assert BOS_ID not in tokens[1:]
    assert all(t == 5 for t in tokens[1:])
    with pytest.raises(InputError):
        model.decode_description(z, 1)


def test_teacher_forced_description_matches_training_graph_dists():
    model = small_model(seed=11)
    tokens = [BOS_ID, 2, 7, 4, EOS_ID]
    z = model.encode_descriptions([tokens])
    _, dists = model.decode_description(z, 8, teacher=tokens)
    embedded = model.embed_tokens([tokens])
    graph_dists, _, _ = model.decode_descriptions_teacher(z, [tokens], *embedded)
    assert len(dists) == len(tokens) - 1
    for mine, ref in zip(dists, graph_dists):
        assert mine.data.tobytes() == ref.data[0].tobytes()


# -- parameter bookkeeping ---------------------------------------------------------

def test_groups_partition_all_parameters():
    model = small_model()
    names = set()
    for p in model.parameters():
        assert p.group in (GROUP_RAE, GROUP_RETROFIT, GROUP_FROZEN)
        assert p.name not in names
        names.add(p.name)
    frozen = [p.name for p in model.params.group(GROUP_FROZEN)]
    assert frozen == ["embedding.table"]
    retrofit = {p.name for p in model.params.group(GROUP_RETROFIT)}
    assert retrofit == {f"retrofit.fc{i}.{s}" for i in range(4) for s in ("w", "b")}
    rae = model.params.group(GROUP_RAE)
    assert len(rae) + len(retrofit) + 1 == len(model.parameters())
    assert all(p.name.startswith(("act_", "dsc_")) for p in rae)


def test_stage2_gradients_reach_every_component(toy_corpus):
    model = TranslationModel.for_corpus(toy_corpus, seed=0)
    ids = toy_corpus.caption_ids("train")[:3]
    pairs = [(toy_corpus.caption_tokens(c),
              toy_corpus.motions[toy_corpus.captions[c].motion_id].frames) for c in ids]
    node, _ = stage2_graph(model, pairs, 1.0)
    grads = backward(node, model.parameters())
    components = ("act_enc.lstm", "act_enc.proj", "act_dec.l0", "act_dec.out",
                  "dsc_enc.fw", "dsc_enc.bw", "dsc_enc.proj", "dsc_dec.lstm",
                  "dsc_dec.out", "retrofit.fc0", "embedding.table")
    for prefix in components:
        total = sum(np.abs(g).max() for name, g in grads.items() if name.startswith(prefix))
        assert total > 0.0, f"no gradient reached {prefix}"


# -- translation ---------------------------------------------------------------------

def test_translate_directions_and_determinism(toy_corpus):
    model = TranslationModel.for_corpus(toy_corpus, seed=1)
    motion = toy_corpus.motions[toy_corpus.motion_ids("test")[0]].frames
    tokens1 = model.translate(motion, "a2d")
    tokens2 = model.translate(motion, "a2d")
    assert tokens1 == tokens2
    assert tokens1[0] == BOS_ID and BOS_ID not in tokens1[1:]
    cap = toy_corpus.caption_tokens(toy_corpus.caption_ids("test")[0])
    frames1 = model.translate(cap, "d2a")
    frames2 = model.translate(cap, "d2a")
    assert frames1.tobytes() == frames2.tobytes()
    assert frames1.shape == (model.default_action_len, toy_corpus.action_dim)
    assert np.max(np.abs(frames1)) <= 0.9
    with pytest.raises(InputError):
        model.translate(motion, "sideways")


def test_overfit_model_round_trips_memorized_pairs(overfit_setup):
    model = overfit_setup["model"]
    pairs = overfit_setup["pairs"]
    hits = sum(model.translate(model.translate(tokens, "d2a"), "a2d") == tokens
               for tokens, _ in pairs)
    assert hits == len(pairs)


def test_overfit_model_translates_memorized_actions(overfit_setup):
    model = overfit_setup["model"]
    pairs = overfit_setup["pairs"]
    hits = sum(model.translate(frames, "a2d") == tokens for tokens, frames in pairs)
    assert hits == len(pairs)
