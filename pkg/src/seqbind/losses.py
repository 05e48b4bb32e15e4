"""Training objectives.

Action reconstruction is a summed squared error over predicted frames,
description reconstruction a summed cross entropy over predicted tokens,
and the binding loss pulls matched latent pairs together while an
action-anchored margin hinge pushes mismatched pairs at least delta
further away than the matched distance. Batch losses divide by the batch
size so the gradient scale does not depend on B.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InputError


@dataclass
class LossBreakdown:
    l_act: float
    l_dsc: float
    l_bnd: float
    total: float


# ---------------------------------------------------------------------------
# component losses

def _action_loss_node(preds, truths_by_step, masks) -> Tensor:
    """Masked squared-error accumulation over decoder steps (already batched)."""
    pieces = []
    for pred, truth, m in zip(preds, truths_by_step, masks):
        diff = ad.sub(pred, Tensor(truth))
        pieces.append(ad.sum_all(ad.mul_const(ad.mul(diff, diff), m)))
    return ad.add_n(pieces)


def action_loss_graph(model, motions: list[np.ndarray], z: Tensor | None = None) -> Tensor:
    """Teacher-forced action reconstruction loss node, batch mean."""
    if z is None:
        z = model.encode_actions(motions)
    from .model import _pad_motions  # shared padding helper
    x, mask, _, t_max = _pad_motions([np.asarray(m, dtype=np.float64) for m in motions])
    preds, step_masks = model.decode_actions_teacher(z, motions)
    truths = [x[:, t + 1] for t in range(t_max - 1)]
    return ad.scale(_action_loss_node(preds, truths, step_masks), 1.0 / len(motions))


def description_loss_graph(model, token_seqs: list[list[int]],
                           z: Tensor | None = None, embedded=None) -> Tensor:
    """Teacher-forced description reconstruction loss node, batch mean."""
    if embedded is None:
        embedded = model.embed_tokens(token_seqs)
    retro, ids, mask, lengths, t_max = embedded
    if z is None:
        z = model._encode_descriptions_from(retro, mask, lengths, t_max)
    dists, targets, weights = model.decode_descriptions_teacher(
        z, token_seqs, retro, ids, mask, lengths, t_max)
    pieces = [ad.nll_probs(dists[t], targets[:, t], weights[:, t])
              for t in range(len(dists))]
    return ad.scale(ad.add_n(pieces), 1.0 / len(token_seqs))


def binding_loss_graph(z_act: Tensor, z_dsc: Tensor, delta: float) -> Tensor:
    """Latent binding loss node over matched (B x Z) encoder outputs."""
    b = z_act.shape[0]
    if b < 2:
        raise InputError(f"binding loss needs a batch of at least 2, got {b}")
    if delta <= 0:
        raise InputError(f"margin delta must be positive, got {delta}")
    dists = ad.cdist(z_act, z_dsc)
    pos = ad.diag_part(dists)
    pull = ad.sum_all(pos)
    margin = ad.sub(ad.add_const(ad.reshape(pos, (b, 1)), float(delta)), dists)
    off_diag = 1.0 - np.eye(b)
    push = ad.sum_all(ad.mul_const(ad.relu(margin), off_diag))
    return ad.scale(ad.add(pull, push), 1.0 / b)


def stage1_graph(model, batch_dsc: list[list[int]], batch_act: list[np.ndarray]):
    """Reconstruction-only objective over two independent batches.

    Returns (total loss node, LossBreakdown).
    """
    l_dsc = description_loss_graph(model, batch_dsc)
    l_act = action_loss_graph(model, batch_act)
    total = ad.add(l_dsc, l_act)
    return total, LossBreakdown(l_act.item(), l_dsc.item(), 0.0, total.item())


def stage2_graph(model, pairs: list[tuple[list[int], np.ndarray]], delta: float):
    """Reconstruction plus binding over a batch of (tokens, frames) pairs.

    Returns (total loss node, LossBreakdown).
    """
    token_seqs = [p[0] for p in pairs]
    motions = [p[1] for p in pairs]
    embedded = model.embed_tokens(token_seqs)
    retro, ids, mask, lengths, t_max = embedded
    z_dsc = model._encode_descriptions_from(retro, mask, lengths, t_max)
    z_act = model.encode_actions(motions)
    l_dsc = description_loss_graph(model, token_seqs, z=z_dsc, embedded=embedded)
    l_act = action_loss_graph(model, motions, z=z_act)
    l_bnd = binding_loss_graph(z_act, z_dsc, delta)
    total = ad.add(ad.add(l_dsc, l_act), l_bnd)
    return total, LossBreakdown(l_act.item(), l_dsc.item(), l_bnd.item(), total.item())


# ---------------------------------------------------------------------------
# public scalar forms

def loss_act(pred: np.ndarray, truth: np.ndarray) -> float:
    """Squared-error reconstruction loss over predicted frames 2..T.

    Frame 1 is the given start frame and is never penalized.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise InputError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if pred.ndim != 2 or pred.shape[0] < 2:
        raise InputError("sequences must be (T x D) with T >= 2")
    diff = pred[1:] - truth[1:]
    return float(sum(np.sum(d * d) for d in diff))


def loss_dsc(dists, target) -> float:
    """Cross entropy of target tokens 2..T under aligned distributions.

    dists[t] is the distribution predicting target token t+1; the target
    token sequence includes BOS and EOS. The target is read as a one-hot
    vocabulary indicator, so only the target entries are consulted.
    """
    target = [int(t) for t in target]
    if len(dists) != len(target) - 1:
        raise InputError(f"{len(dists)} distributions cannot align with {len(target)} tokens")
    total = 0.0
    for t, dist in enumerate(dists):
        row = dist.data if isinstance(dist, Tensor) else np.asarray(dist, dtype=np.float64)
        node = ad.nll_probs(Tensor(row.reshape(1, -1)), [target[t + 1]])
        total += node.item()
    return total


def psi(a, b) -> float:
    """Euclidean distance between two latent vectors."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise InputError(f"latent dimensions differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt(np.sum(d * d)))


def loss_bnd(z_act, z_dsc, delta: float) -> float:
    """Binding loss over matched latent batches, divided by batch size."""
    za = Tensor(np.atleast_2d(np.asarray(z_act, dtype=np.float64)))
    zd = Tensor(np.atleast_2d(np.asarray(z_dsc, dtype=np.float64)))
    if za.shape != zd.shape:
        raise InputError(f"latent batch shapes differ: {za.shape} vs {zd.shape}")
    return binding_loss_graph(za, zd, delta).item()


def loss_stage1(batch_dsc, batch_act, model) -> LossBreakdown:
    _, breakdown = stage1_graph(model, batch_dsc, batch_act)
    return breakdown


def loss_stage2(paired_batch, model, delta: float) -> LossBreakdown:
    _, breakdown = stage2_graph(model, paired_batch, delta)
    return breakdown
