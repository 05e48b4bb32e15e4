"""Two-stage training: reconstruction-only pre-training on non-paired pools,
then fine-tuning with the binding loss on a small paired subset, updating
the autoencoder and retrofit parameter groups alternately (chain-thaw).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import backward
from .errors import ConfigError, InputError
from .layers import GROUP_RAE, GROUP_RETROFIT
from .losses import stage1_graph, stage2_graph
from .optim import AdamState

log = logging.getLogger(__name__)

STAGE1 = 1
STAGE2 = 2

# seed-stream tags: (seed, tag[, iteration]) feeds numpy's SeedSequence
SEED_MODEL_INIT = 1
SEED_STAGE1 = 11
SEED_STAGE2 = 12
SEED_SUBSET = 21

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for both stages.

    Reference full-scale values: batch_size 80, n_ch 100, n1 11000, n2 2800.
    Desk-scale defaults keep n1/n2 at 0, meaning "size from the data"
    (200 epochs of the non-paired description pool, 400 of the paired set).
    """

    batch_size: int = 8
    delta: float = 1.0
    lr: float = 1e-3
    n1: int = 0
    n2: int = 0
    n_ch: int = 20
    paired_count: int = 64
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.n_ch < 1:
            raise ConfigError(f"n_ch must be >= 1, got {self.n_ch}")
        if self.n1 < 0 or self.n2 < 0:
            raise ConfigError("iteration counts must be non-negative")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    def sized_for(self, dsc_pool_size: int, paired_count: int | None = None,
                  stage1_epochs: int = 200, stage2_epochs: int = 400) -> "TrainConfig":
        """Fill n1/n2 that are 0 with epoch-derived iteration counts."""
        paired = self.paired_count if paired_count is None else paired_count
        per1 = -(-dsc_pool_size // self.batch_size)
        per2 = -(-max(paired, 1) // self.batch_size)
        return replace(
            self,
            n1=self.n1 if self.n1 else stage1_epochs * per1,
            n2=self.n2 if self.n2 else stage2_epochs * per2,
            paired_count=paired)


PAPER_TRAIN = TrainConfig(batch_size=80, n_ch=100, n1=11000, n2=2800)


@dataclass
class LossRecord:
    iteration: int
    stage: int
    active_group: str
    l_act: float
    l_dsc: float
    l_bnd: float
    total: float

    def line(self) -> str:
        return (f"{self.iteration},stage{self.stage},{self.active_group},"
                f"{self.l_act!r},{self.l_dsc!r},{self.l_bnd!r},{self.total!r}")

    @staticmethod
    def parse(line: str) -> "LossRecord":
        it, stage, group, a, d, b, t = line.strip().split(",")
        return LossRecord(int(it), int(stage.removeprefix("stage")), group,
                          float(a), float(d), float(b), float(t))


def phase_for(i: int, stage: int, config: TrainConfig) -> str:
    """Active parameter group at iteration i (1-based) of a stage.

    Stage 1 activates the autoencoders iff int(i / n_ch) is odd; stage 2
    continues the same alternation phase by offsetting i with n1.
    """
    if i < 1:
        raise InputError(f"iteration index must be >= 1, got {i}")
    if stage == STAGE1:
        window = i // config.n_ch
    elif stage == STAGE2:
        window = (i + config.n1) // config.n_ch
    else:
        raise InputError(f"unknown stage {stage}")
    return GROUP_RAE if window % 2 == 1 else GROUP_RETROFIT


def make_paired_subset(paired_pool: list, k: int, seed: int) -> list:
    """Uniform sample of k pairs without replacement, deterministic per seed."""
    if k > len(paired_pool):
        raise InputError(f"requested {k} pairs from a pool of {len(paired_pool)}")
    rng = np.random.default_rng([seed, SEED_SUBSET])
    idx = rng.permutation(len(paired_pool))[:k]
    return [paired_pool[j] for j in idx]


class Trainer:
    """Runs the two training stages on one model with per-group Adam states."""

    def __init__(self, model, config: TrainConfig, log_path=None):
        self.model = model
        self.config = config
        self.adam = {
            GROUP_RAE: AdamState(model.params.group(GROUP_RAE), lr=config.lr,
                                 beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS),
            GROUP_RETROFIT: AdamState(model.params.group(GROUP_RETROFIT), lr=config.lr,
                                      beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS),
        }
        self.records: list[LossRecord] = []
        self.log_path = log_path
        self._log_file = None
        self._warned_replacement = False

    def _emit(self, record: LossRecord):
        self.records.append(record)
        if self.log_path is not None:
            if self._log_file is None:
                self._log_file = open(self.log_path, "a", encoding="utf-8")
            self._log_file.write(record.line() + "\n")
            self._log_file.flush()

    def close(self):
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None

    def _update(self, node, group: str):
        grads = backward(node, self.model.parameters())
        self.adam[group].step(grads)

    def run_stage1(self, nonpaired_dsc: list, nonpaired_act: list,
                   start: int = 1, on_iteration=None):
        """Iterations start..n1 of reconstruction-only pre-training.

        Each iteration samples the description and action batches
        independently, uniformly with replacement.
        """
        cfg = self.config
        if cfg.n1 > 0 and (not nonpaired_dsc or not nonpaired_act):
            raise ConfigError("stage 1 needs non-empty description and action pools")
        b = cfg.batch_size
        for i in range(start, cfg.n1 + 1):
            rng = np.random.default_rng([cfg.seed, SEED_STAGE1, i])
            di = rng.integers(0, len(nonpaired_dsc), size=b)
            ai = rng.integers(0, len(nonpaired_act), size=b)
            node, bd = stage1_graph(self.model,
                                    [nonpaired_dsc[k] for k in di],
                                    [nonpaired_act[k] for k in ai])
            group = phase_for(i, STAGE1, cfg)
            self._update(node, group)
            self._emit(LossRecord(i, STAGE1, group, bd.l_act, bd.l_dsc, bd.l_bnd, bd.total))
            if on_iteration is not None:
                on_iteration(i, STAGE1)
        return self.records

    def run_stage2(self, paired_data: list, start: int = 1, on_iteration=None):
        """Iterations start..n2 of paired fine-tuning with the binding loss.

        Batches are drawn without replacement so a pair never serves as its
        own hinge negative; a batch size above the pool falls back to
        sampling with replacement (warned once).
        """
        cfg = self.config
        if cfg.n2 > 0 and not paired_data:
            raise ConfigError("stage 2 needs a non-empty paired dataset")
        b = cfg.batch_size
        replace = b > len(paired_data)
        if cfg.n2 > 0 and replace and not self._warned_replacement:
            log.warning("batch size %d exceeds paired pool of %d; sampling with replacement",
                        b, len(paired_data))
            self._warned_replacement = True
        for i in range(start, cfg.n2 + 1):
            rng = np.random.default_rng([cfg.seed, SEED_STAGE2, i])
            pi = rng.choice(len(paired_data), size=b, replace=replace)
            node, bd = stage2_graph(self.model, [paired_data[k] for k in pi], cfg.delta)
            group = phase_for(i, STAGE2, cfg)
            self._update(node, group)
            self._emit(LossRecord(i, STAGE2, group, bd.l_act, bd.l_dsc, bd.l_bnd, bd.total))
            if on_iteration is not None:
                on_iteration(i, STAGE2)
        return self.records

    # -- optimizer state round-trip for resumable checkpoints ---------------

    def optimizer_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for group, state in self.adam.items():
            for name, arr in state.state_arrays().items():
                out[f"opt/{group}/{name}"] = arr
        return out

    def optimizer_counters(self) -> dict[str, int]:
        return {group: state.t for group, state in self.adam.items()}

    def load_optimizer(self, arrays: dict[str, np.ndarray], counters: dict[str, int]):
        for group, state in self.adam.items():
            prefix = f"opt/{group}/"
            sub = {name[len(prefix):]: arr for name, arr in arrays.items()
                   if name.startswith(prefix)}
            state.load_state_arrays(sub, counters[group])


def run_stage1(nonpaired_dsc, nonpaired_act, model, config: TrainConfig):
    """Convenience one-shot stage 1; returns (model, loss records)."""
    trainer = Trainer(model, config)
    records = trainer.run_stage1(nonpaired_dsc, nonpaired_act)
    return model, records


def run_stage2(paired_data, model, config: TrainConfig):
    """Convenience one-shot stage 2; returns (model, loss records)."""
    trainer = Trainer(model, config)
    records = trainer.run_stage2(paired_data)
    return model, records
