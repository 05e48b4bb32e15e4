import struct

import numpy as np
import pytest

from seqbind.checkpoint import FORMAT_VERSION, MAGIC, load_model, save_model
from seqbind.errors import CheckpointError
from seqbind.model import ModelConfig, TranslationModel


def build_model(seed=0):
    config = ModelConfig(action_dim=3, hidden_dim=6, latent_dim=4, embedding_dim=5,
                         retrofit_hidden=4, vocab_size=7)
    table = np.random.default_rng(1).normal(size=(7, 5))
    return TranslationModel(config, table, np.random.default_rng([seed, 1]),
                            vocab_tokens=[f"t{i}" for i in range(7)],
                            mean_first_frame=np.array([0.1, -0.2, 0.3]),
                            default_action_len=9, max_caption_len=11)


def test_round_trip_preserves_everything(tmp_path):
    model = build_model()
    path = tmp_path / "model.bin"
    save_model(path, model, train_state={"phase": "done", "iteration": 0},
               optimizer_arrays={"opt/RAE/m/act_enc.lstm.wx": np.ones((24, 3))})
    loaded, state, opt = load_model(path)
    assert state == {"phase": "done", "iteration": 0}
    assert loaded.config == model.config
    assert loaded.vocab_tokens == model.vocab_tokens
    np.testing.assert_array_equal(loaded.mean_first_frame, model.mean_first_frame)
    assert loaded.default_action_len == 9
    assert loaded.max_caption_len == 11
    for a, b in zip(model.parameters(), loaded.parameters()):
        assert a.name == b.name and a.group == b.group
        assert a.data.tobytes() == b.data.tobytes()
    np.testing.assert_array_equal(opt["opt/RAE/m/act_enc.lstm.wx"], np.ones((24, 3)))


def test_save_load_is_byte_stable(tmp_path):
    model = build_model()
    save_model(tmp_path / "a.bin", model)
    save_model(tmp_path / "b.bin", model)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    loaded, _, _ = load_model(tmp_path / "a.bin")
    save_model(tmp_path / "c.bin", loaded)
    assert (tmp_path / "c.bin").read_bytes() == (tmp_path / "a.bin").read_bytes()


def test_unknown_version_rejected(tmp_path):
    model = build_model()
    path = tmp_path / "model.bin"
    save_model(path, model)
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", FORMAT_VERSION + 1)
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        load_model(path)


def test_bad_magic_and_truncation_rejected(tmp_path):
    path = tmp_path / "garbage.bin"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_model(path)
    model = build_model()
    good = tmp_path / "good.bin"
    save_model(good, model)
    blob = good.read_bytes()
    (tmp_path / "cut.bin").write_bytes(blob[:len(blob) // 2])
    with pytest.raises(CheckpointError):
        load_model(tmp_path / "cut.bin")
    assert blob[:4] == MAGIC


def test_missing_file_maps_to_checkpoint_error(tmp_path):
    with pytest.raises(CheckpointError):
        load_model(tmp_path / "absent.bin")
