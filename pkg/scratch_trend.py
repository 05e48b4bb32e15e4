"""Calibration for the trend experiment (not shipped)."""
import sys
import time

import numpy as np

from seqbind.data import GenConfig, generate_corpus
from seqbind.evaluate import experiment1, experiment2, latent_diagnostics
from seqbind.model import TranslationModel
from seqbind.training import Trainer, TrainConfig, make_paired_subset

N1 = int(sys.argv[1]) if len(sys.argv) > 1 else 4000
N2 = int(sys.argv[2]) if len(sys.argv) > 2 else 2000
NREF = int(sys.argv[3]) if len(sys.argv) > 3 else 3000

t0 = time.time()
corpus = generate_corpus(GenConfig(), seed=123)
train_pairs = corpus.pairs_in("train")
desc_pool = [corpus.caption_tokens(c) for c in corpus.caption_ids("train")]
act_pool = [corpus.motions[m].frames for m in corpus.motion_ids("train")]
print(f"corpus: {len(corpus.motions)} motions, {len(corpus.captions)} captions, "
      f"train pairs {len(train_pairs)}, test pairs {len(corpus.pairs_in('test'))}", flush=True)


def train_one(seed, pretrain, n1, n2, paired):
    cfg = TrainConfig(batch_size=8, n_ch=20, lr=1e-3, delta=1.0,
                      n1=n1 if pretrain else 0, n2=n2, paired_count=paired, seed=seed)
    model = TranslationModel.for_corpus(corpus, seed)
    trainer = Trainer(model, cfg)
    if pretrain:
        trainer.run_stage1(desc_pool, act_pool)
    subset = make_paired_subset(train_pairs, paired, seed)
    paired_data = [(corpus.caption_tokens(c), corpus.motions[m].frames) for m, c in subset]
    trainer.run_stage2(paired_data)
    return model


print("training reference (all pairs, stage 2 only)...", flush=True)
reference = train_one(0, False, 0, NREF, len(train_pairs))
ref_direct = experiment1(reference, corpus)
print(f"reference direct: {ref_direct.means}  [{time.time()-t0:.0f}s]", flush=True)

rows = []
for seed in (0, 1, 2):
    for pretrain in (False, True):
        tag = "proposed" if pretrain else "vanilla"
        t1 = time.time()
        model = train_one(seed, pretrain, N1, N2, 64)
        direct = experiment1(model, corpus)
        back, rel = experiment2(model, reference, corpus)
        diag = latent_diagnostics(model, corpus)
        rows.append((tag, seed, direct.means["bleu"], back.means["bleu"],
                     diag.intra_mean, diag.inter_mean, diag.retrieval_accuracy))
        print(f"{tag} seed{seed}: BLEU={direct.means['bleu']:.4f} "
              f"backBLEU={back.means['bleu']:.4f} intra={diag.intra_mean:.3f} "
              f"inter={diag.inter_mean:.3f} retr={diag.retrieval_accuracy:.3f} "
              f"({time.time()-t1:.0f}s)", flush=True)

for tag in ("vanilla", "proposed"):
    sel = [r for r in rows if r[0] == tag]
    print(f"{tag}: mean BLEU={np.mean([r[2] for r in sel]):.4f} "
          f"mean backBLEU={np.mean([r[3] for r in sel]):.4f} "
          f"mean retr={np.mean([r[6] for r in sel]):.4f}")
print(f"total {time.time()-t0:.0f}s")
