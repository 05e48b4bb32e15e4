"""Evaluation: translation scoring, back-translation with relative
performance, latent-space diagnostics, and 2-D projection of latents."""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .losses import psi

log = logging.getLogger(__name__)

_SMOOTH_EPS = 1e-9


# ---------------------------------------------------------------------------
# BLEU

def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _match_stats(candidate, references, n: int) -> tuple[int, int]:
    counts = _ngrams(candidate, n)
    total = sum(counts.values())
    if total == 0:
        return 0, 0
    clipped = 0
    for gram, count in counts.items():
        best = max(ref_counts[gram] for ref_counts in references)
        clipped += min(count, best)
    return clipped, total


def _closest_ref_len(c: int, ref_lens) -> int:
    return min(ref_lens, key=lambda r: (abs(r - c), r))


def _bleu_from_stats(stats, c: int, r: int) -> float:
    # stats: list of (clipped, total) per n-gram order; orders the candidate
    # is too short to produce are dropped so identical sentences score 1.0
    live = [(m, t) for m, t in stats if t > 0]
    if not live or c == 0:
        return 0.0
    log_sum = 0.0
    for matched, total in live:
        p = matched / total if matched > 0 else _SMOOTH_EPS
        log_sum += math.log(p)
    bp = math.exp(min(0.0, 1.0 - r / c))
    return bp * math.exp(log_sum / len(live))


def bleu(candidate, references, max_n: int = 4) -> float:
    """Sentence BLEU: modified n-gram precision with brevity penalty.

    Zero precisions are smoothed to 1e-9; the brevity penalty uses the
    reference length closest to the candidate (ties favor the shorter).
    """
    if not references or any(len(r) == 0 for r in references):
        raise InputError("BLEU needs at least one non-empty reference")
    candidate = list(candidate)
    if not candidate:
        return 0.0
    stats = []
    for n in range(1, max_n + 1):
        ref_counts = [_ngrams(r, n) for r in references]
        stats.append(_match_stats(candidate, ref_counts, n))
    r = _closest_ref_len(len(candidate), [len(ref) for ref in references])
    return _bleu_from_stats(stats, len(candidate), r)


def corpus_bleu(candidates, references_list, max_n: int = 4) -> float:
    """Corpus BLEU: n-gram counts aggregated before the geometric mean."""
    if len(candidates) != len(references_list):
        raise InputError("candidate and reference lists differ in length")
    if not candidates:
        raise InputError("corpus BLEU needs at least one sentence")
    stats = [(0, 0)] * max_n
    c_total = 0
    r_total = 0
    for candidate, references in zip(candidates, references_list):
        if not references or any(len(r) == 0 for r in references):
            raise InputError("BLEU needs at least one non-empty reference")
        candidate = list(candidate)
        c_total += len(candidate)
        if candidate:
            r_total += _closest_ref_len(len(candidate), [len(r) for r in references])
        for n in range(1, max_n + 1):
            ref_counts = [_ngrams(r, n) for r in references]
            matched, total = _match_stats(candidate, ref_counts, n)
            stats[n - 1] = (stats[n - 1][0] + matched, stats[n - 1][1] + total)
    return _bleu_from_stats(stats, c_total, r_total)


# ---------------------------------------------------------------------------
# embedding-cosine sentence similarity

def sentence_cosine(candidate_ids, reference_ids, embeddings: np.ndarray) -> float:
    """Cosine between mean-pooled token embeddings, BOS/EOS excluded.

    Mean pooling is order-free, so permutations of the same token multiset
    score 1.0; this is a deliberate, cheap proxy for sentence similarity.
    """
    def pooled(ids):
        body = [i for i in ids if i not in (0, 1)]
        if not body:
            raise InputError("cannot pool an empty token sequence")
        if max(body) >= embeddings.shape[0]:
            raise InputError("token id outside the embedding table")
        return embeddings[body].mean(axis=0)

    a = pooled(candidate_ids)
    b = pooled(reference_ids)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


# ---------------------------------------------------------------------------
# experiment drivers

METRICS = ("bleu", "cosine")


@dataclass
class ScoreReport:
    means: dict[str, float]
    per_item: list[dict] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.per_item)


@dataclass
class RelativeReport:
    """Back-translation means as a percentage of the reference model's
    direct-translation means."""
    ratios: dict[str, float]
    back_means: dict[str, float]
    reference_means: dict[str, float]


def relative_performance(back_mean: float, direct_mean: float) -> float:
    """Recovery rate in percent; the reference direct score must be positive."""
    if direct_mean <= 0.0:
        raise ArithmeticError("reference direct score must be positive for a ratio")
    return back_mean / direct_mean * 100.0


def _score_candidate(cand_ids, motion_id, corpus) -> dict[str, float]:
    refs_words = corpus.references_for_motion(motion_id)
    cand_words = corpus.vocab.decode(cand_ids)
    out = {"bleu": bleu(cand_words, refs_words) if cand_words else 0.0}
    if cand_words:
        cosines = [sentence_cosine(cand_ids, corpus.vocab.encode(r), corpus.embeddings)
                   for r in refs_words]
        out["cosine"] = max(cosines)
    else:
        out["cosine"] = 0.0
    return out


def _mean_report(items: list[dict]) -> ScoreReport:
    means = {m: float(np.mean([it[m] for it in items])) for m in METRICS}
    return ScoreReport(means, items)


def experiment1(model, corpus, pairs=None) -> ScoreReport:
    """Direct translation scoring: action -> description for every test pair.

    Each item scores the translated caption of the pair's motion against
    all reference captions of that motion (multi-reference BLEU, best
    cosine). Items are processed in caption-id order.
    """
    if pairs is None:
        pairs = corpus.pairs_in("test")
    pairs = sorted(pairs, key=lambda p: p[1])
    translations: dict[str, list[int]] = {}
    items = []
    for motion_id, caption_id in pairs:
        if motion_id not in translations:
            translations[motion_id] = model.translate(
                corpus.motions[motion_id].frames, "a2d")
        scores = _score_candidate(translations[motion_id], motion_id, corpus)
        items.append({"item": caption_id, **scores})
    return _mean_report(items)


def experiment2(model, reference_model, corpus, pairs=None,
                back_with_self: bool = False) -> tuple[ScoreReport, RelativeReport]:
    """Back-translation scoring: description -> action -> description.

    The model under test generates the action; the frozen reference model
    translates it back (unless back_with_self is set). The relative report
    divides each back-translation mean by the reference model's direct
    mean for the same metric, in percent.
    """
    if pairs is None:
        pairs = corpus.pairs_in("test")
    pairs = sorted(pairs, key=lambda p: p[1])
    back_model = model if back_with_self else reference_model
    items = []
    for motion_id, caption_id in pairs:
        tokens = corpus.caption_tokens(caption_id)
        generated = model.translate(tokens, "d2a")
        back = back_model.translate(generated, "a2d")
        scores = _score_candidate(back, motion_id, corpus)
        items.append({"item": caption_id, **scores})
    back_report = _mean_report(items)
    reference_direct = experiment1(reference_model, corpus, pairs)
    ratios = {m: relative_performance(back_report.means[m], reference_direct.means[m])
              for m in METRICS}
    return back_report, RelativeReport(ratios, back_report.means, reference_direct.means)


@dataclass
class DiagnosticsReport:
    intra_mean: float
    inter_mean: float
    retrieval_accuracy: float
    chance_level: float
    pair_count: int
    motion_count: int


def latent_diagnostics(model, corpus, pairs=None) -> DiagnosticsReport:
    """Distance structure of the bound latent space on held-out pairs.

    intra: mean distance between matched caption/action latents. inter:
    mean over mismatched combinations. Retrieval: fraction of captions
    whose nearest action latent belongs to their own motion.
    """
    if pairs is None:
        pairs = corpus.pairs_in("test")
    pairs = sorted(pairs, key=lambda p: p[1])
    motion_ids = sorted({m for m, _ in pairs})
    z_act = {m: model.encode_action(corpus.motions[m].frames).data for m in motion_ids}
    z_dsc = [(m, model.encode_description(corpus.caption_tokens(c)).data)
             for m, c in pairs]
    intra = [psi(z_act[m], z) for m, z in z_dsc]
    inter = []
    for i, (_, z) in enumerate(z_dsc):
        for j, (mj, _) in enumerate(z_dsc):
            if i != j:
                inter.append(psi(z_act[mj], z))
    hits = 0
    for m, z in z_dsc:
        nearest = min(motion_ids, key=lambda mid: psi(z_act[mid], z))
        hits += nearest == m
    return DiagnosticsReport(
        intra_mean=float(np.mean(intra)),
        inter_mean=float(np.mean(inter)) if inter else 0.0,
        retrieval_accuracy=hits / len(z_dsc),
        chance_level=1.0 / len(motion_ids),
        pair_count=len(z_dsc),
        motion_count=len(motion_ids))


# ---------------------------------------------------------------------------
# 2-D projection

def _power_iteration(mat: np.ndarray, rng: np.random.Generator,
                     iters: int = 500, tol: float = 1e-13) -> np.ndarray:
    v = rng.normal(size=mat.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return np.zeros_like(v)
        w /= norm
        if np.linalg.norm(w - v) < tol:
            return w
        v = w
    return v


def project_latents(latents, labels) -> list[tuple[str, float, float]]:
    """Project latent vectors to 2-D via the top two principal components.

    Components come from iterated power iteration with deflation on the
    covariance. A rank-deficient second direction is zeroed and logged.
    Returns (label, x, y) rows in input order.
    """
    x = np.asarray(latents, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise InputError("projection needs at least 3 latent vectors")
    if len(labels) != x.shape[0]:
        raise InputError("one label per latent vector required")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    rng = np.random.default_rng(0)
    v1 = _power_iteration(cov, rng)
    lam1 = float(v1 @ cov @ v1)
    deflated = cov - lam1 * np.outer(v1, v1)
    v2 = _power_iteration(deflated, rng)
    lam2 = float(v2 @ deflated @ v2)
    if lam2 <= 1e-12 * max(lam1, 1.0):
        log.warning("second principal component is rank-deficient; zeroing it")
        v2 = np.zeros_like(v2)
    coords = np.stack([centered @ v1, centered @ v2], axis=1)
    return [(str(lbl), float(cx), float(cy))
            for lbl, (cx, cy) in zip(labels, coords)]


# ---------------------------------------------------------------------------
# report files

def write_report(path, values: dict) -> None:
    lines = [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
             for k, v in values.items()]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_per_item_csv(path, reports: dict[str, ScoreReport]) -> None:
    lines = ["item,metric,value"]
    for tag, report in reports.items():
        for item in report.per_item:
            for metric in METRICS:
                lines.append(f"{item['item']},{tag}_{metric},{item[metric]!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
