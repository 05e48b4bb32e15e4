"""The bidirectional translation model: an action autoencoder, a description
autoencoder, and a retrofit layer that adapts frozen word embeddings.

Encoders project their final recurrent state linearly (no activation) to a
shared-size latent vector. Decoders are seeded by linear maps from the
latent to the initial hidden and cell state of each layer. Training uses
teacher forcing; inference is closed-loop and greedy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, InputError, VocabularyError
from .layers import (GROUP_FROZEN, GROUP_RAE, GROUP_RETROFIT, Linear,
                     LstmWeights, ParamSet, embedding_lookup, lstm_step)

BOS_ID = 0
EOS_ID = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture dimensions. Defaults are the desk-scale setup."""

    action_dim: int = 6
    hidden_dim: int = 32
    latent_dim: int = 16
    embedding_dim: int = 16
    retrofit_hidden: int = 24
    vocab_size: int = 43
    action_decoder_layers: int = 3

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if int(value) <= 0:
                raise ConfigError(f"model config field {name} must be positive, got {value}")

    @staticmethod
    def paper_scale() -> "ModelConfig":
        """Full-scale dimensions used for the published experiments."""
        return ModelConfig(action_dim=50, hidden_dim=500, latent_dim=500,
                           embedding_dim=300, retrofit_hidden=400,
                           vocab_size=1331, action_decoder_layers=3)


def _check_motion(frames: np.ndarray, action_dim: int) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != action_dim:
        raise InputError(f"motion frames must be (T x {action_dim}), got {frames.shape}")
    if frames.shape[0] < 2:
        raise InputError(f"motion needs at least 2 frames, got {frames.shape[0]}")
    if np.max(np.abs(frames)) > 1.0 + 1e-12:
        raise InputError("motion values must lie in [-1, 1]")
    return frames


def _check_tokens(tokens, vocab_size: int) -> list[int]:
    tokens = [int(t) for t in tokens]
    if len(tokens) < 2:
        raise InputError(f"description needs at least BOS and EOS, got {len(tokens)} tokens")
    if tokens[0] != BOS_ID or tokens[-1] != EOS_ID:
        raise InputError("description must start with BOS and end with EOS")
    for t in tokens:
        if not 0 <= t < vocab_size:
            raise VocabularyError(f"token id {t} outside vocabulary of size {vocab_size}")
    return tokens


def _pad_motions(motions: list[np.ndarray]):
    lengths = np.array([m.shape[0] for m in motions])
    t_max = int(lengths.max())
    b = len(motions)
    x = np.zeros((b, t_max, motions[0].shape[1]))
    for i, m in enumerate(motions):
        x[i, :m.shape[0]] = m
    mask = (np.arange(t_max)[None, :] < lengths[:, None]).astype(np.float64)
    return x, mask, lengths, t_max


def _pad_tokens(seqs: list[list[int]]):
    lengths = np.array([len(s) for s in seqs])
    t_max = int(lengths.max())
    ids = np.zeros((len(seqs), t_max), dtype=np.intp)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
    mask = (np.arange(t_max)[None, :] < lengths[:, None]).astype(np.float64)
    return ids, mask, lengths, t_max


def _masked_state(new: Tensor, old: Tensor, m: np.ndarray) -> Tensor:
    # m is a (B, 1) column of the padding mask; 1 keeps the update.
    return ad.add(ad.mul_const(new, m), ad.mul_const(old, 1.0 - m))


class TranslationModel:
    """Two sequence autoencoders bound through a shared latent space."""

    def __init__(self, config: ModelConfig, embedding_table: np.ndarray,
                 rng: np.random.Generator, vocab_tokens: list[str] | None = None,
                 mean_first_frame: np.ndarray | None = None,
                 default_action_len: int = 12, max_caption_len: int = 12):
        embedding_table = np.asarray(embedding_table, dtype=np.float64)
        if embedding_table.shape != (config.vocab_size, config.embedding_dim):
            raise ConfigError(
                f"embedding table shape {embedding_table.shape} does not match "
                f"config ({config.vocab_size} x {config.embedding_dim})")
        self.config = config
        self.vocab_tokens = list(vocab_tokens) if vocab_tokens is not None else None
        self.mean_first_frame = (np.zeros(config.action_dim) if mean_first_frame is None
                                 else np.asarray(mean_first_frame, dtype=np.float64))
        self.default_action_len = int(default_action_len)
        self.max_caption_len = int(max_caption_len)

        c = config
        params = ParamSet()
        self.params = params
        self.embedding = params.add("embedding.table", GROUP_FROZEN, embedding_table)
        self.retro_layers = [
            Linear(params, "retrofit.fc0", c.embedding_dim, c.retrofit_hidden, rng, GROUP_RETROFIT),
            Linear(params, "retrofit.fc1", c.retrofit_hidden, c.retrofit_hidden, rng, GROUP_RETROFIT),
            Linear(params, "retrofit.fc2", c.retrofit_hidden, c.retrofit_hidden, rng, GROUP_RETROFIT),
            Linear(params, "retrofit.fc3", c.retrofit_hidden, c.embedding_dim, rng, GROUP_RETROFIT),
        ]
        self.act_enc = LstmWeights(params, "act_enc.lstm", c.action_dim, c.hidden_dim, rng)
        self.act_enc_proj = Linear(params, "act_enc.proj", c.hidden_dim, c.latent_dim, rng)
        self.act_dec_layers = [
            LstmWeights(params, f"act_dec.l{i}",
                        c.action_dim if i == 0 else c.hidden_dim, c.hidden_dim, rng)
            for i in range(c.action_decoder_layers)
        ]
        self.act_dec_init = [
            (Linear(params, f"act_dec.init_h{i}", c.latent_dim, c.hidden_dim, rng),
             Linear(params, f"act_dec.init_c{i}", c.latent_dim, c.hidden_dim, rng))
            for i in range(c.action_decoder_layers)
        ]
        self.act_out = Linear(params, "act_dec.out", c.hidden_dim, c.action_dim, rng)
        self.dsc_enc_fw = LstmWeights(params, "dsc_enc.fw", c.embedding_dim, c.hidden_dim, rng)
        self.dsc_enc_bw = LstmWeights(params, "dsc_enc.bw", c.embedding_dim, c.hidden_dim, rng)
        self.dsc_enc_proj = Linear(params, "dsc_enc.proj", 2 * c.hidden_dim, c.latent_dim, rng)
        self.dsc_dec = LstmWeights(params, "dsc_dec.lstm", c.embedding_dim, c.hidden_dim, rng)
        self.dsc_dec_init_h = Linear(params, "dsc_dec.init_h", c.latent_dim, c.hidden_dim, rng)
        self.dsc_dec_init_c = Linear(params, "dsc_dec.init_c", c.latent_dim, c.hidden_dim, rng)
        self.dsc_out = Linear(params, "dsc_dec.out", c.hidden_dim, c.vocab_size, rng)

    # -- shared pieces ----------------------------------------------------

    def retrofit(self, emb: Tensor) -> Tensor:
        """Adapt word embeddings; output has the embedding dimension again."""
        h = emb
        for layer in self.retro_layers:
            h = ad.tanh(layer(h))
        return h

    def _zero_state(self, b: int) -> Tensor:
        return Tensor(np.zeros((b, self.config.hidden_dim)))

    def embed_tokens(self, token_seqs: list[list[int]]):
        """Retrofitted embeddings for a padded token batch.

        Returns (retro (B*T x E) tensor, ids, mask, lengths, t_max); row
        b * t_max + t holds the embedding of token t of sequence b.
        """
        ids, mask, lengths, t_max = _pad_tokens(token_seqs)
        emb = embedding_lookup(self.embedding, ids.reshape(-1))
        return self.retrofit(emb), ids, mask, lengths, t_max

    # -- encoders ----------------------------------------------------------

    def encode_actions(self, motions: list[np.ndarray]) -> Tensor:
        """Encode a batch of motions to a (B x Z) latent matrix."""
        motions = [_check_motion(m, self.config.action_dim) for m in motions]
        x, mask, lengths, t_max = _pad_motions(motions)
        b = len(motions)
        h = c = self._zero_state(b)
        full_from = int(lengths.min())
        for t in range(t_max):
            h_new, c_new = lstm_step(Tensor(x[:, t]), h, c, self.act_enc)
            if t < full_from:
                h, c = h_new, c_new
            else:
                col = mask[:, t:t + 1]
                h = _masked_state(h_new, h, col)
                c = _masked_state(c_new, c, col)
        return self.act_enc_proj(h)

    def encode_action(self, motion: np.ndarray) -> Tensor:
        """Encode one motion to a latent vector of length Z."""
        z = self.encode_actions([motion])
        return ad.reshape(z, (self.config.latent_dim,))

    def _encode_descriptions_from(self, retro: Tensor, mask, lengths, t_max) -> Tensor:
        b = len(lengths)
        rows_base = np.arange(b) * t_max
        full_from = int(lengths.min())
        h_fw = c_fw = self._zero_state(b)
        for t in range(t_max):
            x_t = ad.gather_rows(retro, rows_base + t)
            h_new, c_new = lstm_step(x_t, h_fw, c_fw, self.dsc_enc_fw)
            if t < full_from:
                h_fw, c_fw = h_new, c_new
            else:
                col = mask[:, t:t + 1]
                h_fw = _masked_state(h_new, h_fw, col)
                c_fw = _masked_state(c_new, c_fw, col)
        h_bw = c_bw = self._zero_state(b)
        for s in range(t_max):
            pos = np.where(s < lengths, lengths - 1 - s, 0)
            x_s = ad.gather_rows(retro, rows_base + pos)
            h_new, c_new = lstm_step(x_s, h_bw, c_bw, self.dsc_enc_bw)
            if s < full_from:
                h_bw, c_bw = h_new, c_new
            else:
                col = mask[:, s:s + 1]
                h_bw = _masked_state(h_new, h_bw, col)
                c_bw = _masked_state(c_new, c_bw, col)
        return self.dsc_enc_proj(ad.concat_cols([h_fw, h_bw]))

    def encode_descriptions(self, token_seqs: list[list[int]]) -> Tensor:
        """Encode a batch of BOS/EOS-delimited token sequences to (B x Z)."""
        token_seqs = [_check_tokens(s, self.config.vocab_size) for s in token_seqs]
        retro, _, mask, lengths, t_max = self.embed_tokens(token_seqs)
        return self._encode_descriptions_from(retro, mask, lengths, t_max)

    def encode_description(self, tokens) -> Tensor:
        z = self.encode_descriptions([list(tokens)])
        return ad.reshape(z, (self.config.latent_dim,))

    # -- decoders ----------------------------------------------------------

    def _action_decoder_state(self, z: Tensor):
        return [(lin_h(z), lin_c(z)) for lin_h, lin_c in self.act_dec_init]

    def _action_decoder_step(self, inp: Tensor, states: list) -> Tensor:
        for layer_idx, weights in enumerate(self.act_dec_layers):
            h, c = states[layer_idx]
            h, c = lstm_step(inp, h, c, weights)
            states[layer_idx] = (h, c)
            inp = h
        # scaled tanh keeps predictions inside the normalization range
        return ad.scale(ad.tanh(self.act_out(inp)), 0.9)

    def decode_actions_teacher(self, z: Tensor, motions: list[np.ndarray]):
        """Teacher-forced batched action decoding.

        Returns (per-step (B x D) prediction tensors for target frames
        2..T_max, per-step (B, 1) mask columns).
        """
        x, mask, lengths, t_max = _pad_motions(motions)
        states = self._action_decoder_state(z)
        preds, masks = [], []
        for t in range(t_max - 1):
            pred = self._action_decoder_step(Tensor(x[:, t]), states)
            preds.append(pred)
            masks.append(mask[:, t + 1:t + 2])
        return preds, masks

    def decode_action(self, z: Tensor, first_frame: np.ndarray, length: int,
                      teacher: np.ndarray | None = None) -> np.ndarray:
        """Decode one motion of `length` frames from a latent vector.

        With a teacher sequence the decoder is teacher-forced; otherwise it
        runs closed-loop from `first_frame`. Frame 1 of the result is the
        given first frame; frames 2..length are predictions.
        """
        if length < 2:
            raise InputError(f"decoded motion needs length >= 2, got {length}")
        d = self.config.action_dim
        first_frame = np.asarray(first_frame, dtype=np.float64).reshape(d)
        if z.ndim == 1:
            z = ad.reshape(z, (1, -1))
        if teacher is not None:
            teacher = _check_motion(teacher, d)
            if teacher.shape[0] != length:
                raise InputError(f"teacher has {teacher.shape[0]} frames, expected {length}")
            preds, _ = self.decode_actions_teacher(z, [teacher])
            frames = [first_frame] + [p.data[0] for p in preds]
            return np.stack(frames)
        states = self._action_decoder_state(z)
        frames = [first_frame]
        inp = first_frame.reshape(1, d)
        for _ in range(length - 1):
            pred = self._action_decoder_step(Tensor(inp), states)
            frames.append(pred.data[0])
            inp = pred.data
        return np.stack(frames)

    def decode_descriptions_teacher(self, z: Tensor, token_seqs: list[list[int]],
                                    retro: Tensor | None = None, ids=None,
                                    mask=None, lengths=None, t_max=None):
        """Teacher-forced batched description decoding.

        Returns (per-step (B x W) distribution tensors, (B x T-1) target id
        matrix, (B x T-1) step weights). Pass the tuple from embed_tokens to
        reuse embeddings already computed for the encoder.
        """
        if retro is None:
            retro, ids, mask, lengths, t_max = self.embed_tokens(token_seqs)
        b = len(token_seqs)
        rows_base = np.arange(b) * t_max
        h = self.dsc_dec_init_h(z)
        c = self.dsc_dec_init_c(z)
        dists = []
        for t in range(t_max - 1):
            x_t = ad.gather_rows(retro, rows_base + t)
            h, c = lstm_step(x_t, h, c, self.dsc_dec)
            dists.append(ad.softmax(self.dsc_out(h)))
        targets = ids[:, 1:]
        weights = mask[:, 1:]
        return dists, targets, weights

    def decode_description(self, z: Tensor, max_len: int,
                           teacher: list[int] | None = None):
        """Decode one description from a latent vector.

        Teacher-forced mode returns (teacher tokens, distributions aligned so
        dists[t] predicts teacher token t+1). Closed-loop mode decodes
        greedily from BOS, stops at EOS or when the sequence reaches max_len
        tokens, and never emits BOS. Returns (tokens, list of (W,) arrays).
        """
        if max_len < 2:
            raise InputError(f"max_len must be >= 2, got {max_len}")
        if z.ndim == 1:
            z = ad.reshape(z, (1, -1))
        if teacher is not None:
            teacher = _check_tokens(teacher, self.config.vocab_size)
            dists, _, _ = self.decode_descriptions_teacher(z, [teacher])
            return list(teacher), [ad.reshape(d, (self.config.vocab_size,)) for d in dists]
        h = self.dsc_dec_init_h(z)
        c = self.dsc_dec_init_c(z)
        tokens = [BOS_ID]
        dists = []
        while len(tokens) < max_len:
            emb = embedding_lookup(self.embedding, [tokens[-1]])
            x_t = self.retrofit(emb)
            h, c = lstm_step(x_t, h, c, self.dsc_dec)
            dist = ad.softmax(self.dsc_out(h)).data[0]
            dists.append(dist)
            tok = int(np.argmax(dist[BOS_ID + 1:])) + BOS_ID + 1
            tokens.append(tok)
            if tok == EOS_ID:
                break
        return tokens, dists

    # -- translation ---------------------------------------------------------

    def translate(self, source, direction: str):
        """Cross-modal translation.

        a2d: motion frames -> token sequence (with BOS, and EOS if emitted).
        d2a: token sequence -> motion frames, seeded with the stored mean
        first frame and decoded closed-loop for the stored default length.
        """
        if direction == "a2d":
            z = self.encode_action(source)
            tokens, _ = self.decode_description(z, self.max_caption_len)
            return tokens
        if direction == "d2a":
            z = self.encode_description(source)
            return self.decode_action(z, self.mean_first_frame, self.default_action_len)
        raise InputError(f"unknown direction {direction!r}, expected 'a2d' or 'd2a'")

    # -- bookkeeping -----------------------------------------------------------

    def parameters(self) -> list:
        return list(self.params)

    def group_bytes(self, group: str) -> bytes:
        """Concatenated raw values of a group, for freeze checks."""
        return b"".join(p.data.tobytes() for p in self.params if p.group == group)

    @staticmethod
    def for_corpus(corpus, seed: int, config: ModelConfig | None = None) -> "TranslationModel":
        """Build a model sized for a corpus, seeded deterministically."""
        if config is None:
            config = ModelConfig(vocab_size=corpus.vocab.size,
                                 embedding_dim=corpus.embeddings.shape[1],
                                 action_dim=corpus.action_dim)
        rng = np.random.default_rng([seed, 1])
        return TranslationModel(
            config, corpus.embeddings, rng, vocab_tokens=corpus.vocab.tokens,
            mean_first_frame=corpus.mean_first_frame(),
            default_action_len=corpus.mean_motion_len(),
            max_caption_len=corpus.max_caption_len())
