"""seqbind: bidirectional translation between motion sequences and text via
two recurrent autoencoders whose latent spaces are bound on small paired
data after non-paired pre-training."""

from .data import Corpus, GenConfig, Vocabulary, generate_corpus, load_corpus, save_corpus
from .errors import CheckpointError, ConfigError, InputError, VocabularyError
from .losses import LossBreakdown, loss_act, loss_bnd, loss_dsc, loss_stage1, loss_stage2, psi
from .model import ModelConfig, TranslationModel
from .training import TrainConfig, Trainer, make_paired_subset, phase_for

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ConfigError", "Corpus", "GenConfig", "InputError",
    "LossBreakdown", "ModelConfig", "TrainConfig", "Trainer", "TranslationModel",
    "Vocabulary", "VocabularyError", "generate_corpus", "load_corpus", "loss_act",
    "loss_bnd", "loss_dsc", "loss_stage1", "loss_stage2", "make_paired_subset",
    "phase_for", "psi", "save_corpus",
]
