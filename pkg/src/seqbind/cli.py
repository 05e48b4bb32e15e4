"""Batch command-line front end.

Commands: gen-data, train, eval, translate, project. Options resolve as
command line > config file (key = value lines, # comments) > defaults,
and every run directory receives the fully resolved config so the run can
be reproduced bit-exactly. Exit codes: 0 success, 2 usage or input error,
3 corrupt data or checkpoint.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_model, save_model
from .data import GenConfig, generate_corpus, load_corpus, save_corpus
from .errors import CheckpointError, InputError, VocabularyError
from .evaluate import (METRICS, experiment1, experiment2, latent_diagnostics,
                       project_latents, write_per_item_csv, write_report)
from .model import ModelConfig, TranslationModel
from .training import LossRecord, Trainer, TrainConfig, make_paired_subset

log = logging.getLogger(__name__)

DEFAULTS: dict[str, object] = {
    "seed": 0,
    # generator
    "classes": 8,
    "per_class": 64,
    "captions_per_motion": 2,
    "raw_len_min": 100,
    "raw_len_max": 240,
    "noise": 0.02,
    "downsample_factor": 10,
    "embedding_dim": 16,
    # model
    "hidden_dim": 32,
    "latent_dim": 16,
    "retrofit_hidden": 24,
    "action_decoder_layers": 3,
    # training
    "batch_size": 8,
    "delta": 1.0,
    "lr": 1e-3,
    "n1": 0,
    "n2": 0,
    "n_ch": 20,
    "paired_count": 64,
    "checkpoint_every": 0,
    "stage1_epochs": 200,
    "stage2_epochs": 400,
    # eval
    "self_backtranslate": False,
}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise InputError(f"config key {key} expects a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise InputError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in DEFAULTS:
            raise InputError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    for pair in getattr(args, "set", None) or []:
        if "=" not in pair:
            raise InputError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise InputError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, raw.strip())
    return cfg


def echo_config(cfg: dict, out_dir: Path) -> None:
    lines = [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}"
             for k, v in sorted(cfg.items())]
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n", newline="\n")


@contextlib.contextmanager
def run_lock(out_dir: Path):
    """Reject concurrent commands on the same run directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock_path = out_dir / ".lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise InputError(f"run directory {out_dir} is locked by another command "
                         f"(remove {lock_path} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(OSError):
            os.unlink(lock_path)


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    out_dir = Path(args.out)
    if out_dir.exists() and any(out_dir.iterdir()):
        raise InputError(f"output directory {out_dir} is not empty")
    gen = GenConfig(classes=cfg["classes"], motions_per_class=cfg["per_class"],
                    captions_per_motion=cfg["captions_per_motion"],
                    raw_len_min=cfg["raw_len_min"], raw_len_max=cfg["raw_len_max"],
                    noise=cfg["noise"], downsample_factor=cfg["downsample_factor"],
                    embedding_dim=cfg["embedding_dim"])
    corpus = generate_corpus(gen, cfg["seed"])
    with run_lock(out_dir):
        save_corpus(corpus, out_dir)
        echo_config(cfg, out_dir)
    print(f"{len(corpus.motions)} motions, {len(corpus.captions)} captions "
          f"({len(corpus.pairs)} pairs), vocabulary {corpus.vocab.size}")
    return 0


def _model_config(cfg: dict, corpus) -> ModelConfig:
    return ModelConfig(action_dim=corpus.action_dim,
                       hidden_dim=cfg["hidden_dim"],
                       latent_dim=cfg["latent_dim"],
                       embedding_dim=corpus.embeddings.shape[1],
                       retrofit_hidden=cfg["retrofit_hidden"],
                       vocab_size=corpus.vocab.size,
                       action_decoder_layers=cfg["action_decoder_layers"])


def _train_config_from(cfg: dict, seed: int) -> dict:
    return {"batch_size": cfg["batch_size"], "delta": cfg["delta"], "lr": cfg["lr"],
            "n1": cfg["n1"], "n2": cfg["n2"], "n_ch": cfg["n_ch"],
            "paired_count": cfg["paired_count"], "seed": seed,
            "checkpoint_every": cfg["checkpoint_every"]}


def _truncate_log(path: Path, phase: str, iteration: int) -> None:
    if not path.is_file() or phase == "done":
        return
    stage_no = 1 if phase == "stage1" else 2
    keep = []
    for line in path.read_text().splitlines():
        rec = LossRecord.parse(line)
        if rec.stage < stage_no or (rec.stage == stage_no and rec.iteration <= iteration):
            keep.append(line)
    path.write_text("".join(k + "\n" for k in keep), newline="\n")


def _run_training(corpus, cfg: dict, out_dir: Path, stage_mode: str,
                  seed: int, resume: str | None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    run1 = stage_mode in ("1", "both")
    run2 = stage_mode in ("2", "both")

    desc_pool = [corpus.caption_tokens(c) for c in corpus.caption_ids("train")]
    act_pool = [corpus.motions[m].frames for m in corpus.motion_ids("train")]
    train_pairs = corpus.pairs_in("train")

    start_phase, start_iter = "stage1" if run1 else "stage2", 1
    opt_arrays: dict = {}
    adam_t = None
    if resume:
        model, state, opt_arrays = load_model(resume)
        if state is None or "config" not in state:
            raise CheckpointError(f"{resume} carries no training state to resume from")
        tc = TrainConfig(**state["config"])
        stage_mode = state["stage_mode"]
        run1 = stage_mode in ("1", "both")
        run2 = stage_mode in ("2", "both")
        adam_t = state["adam_t"]
        if state["phase"] == "done":
            log.info("checkpoint already finished; nothing to resume")
            return
        start_phase = state["phase"]
        start_iter = state["iteration"] + 1
        if model.config.vocab_size != corpus.vocab.size:
            raise CheckpointError("resume checkpoint does not match the corpus vocabulary")
    else:
        per1 = -(-len(desc_pool) // cfg["batch_size"])
        per2 = -(-max(cfg["paired_count"], 1) // cfg["batch_size"])
        tc_values = _train_config_from(cfg, seed)
        if tc_values["n1"] == 0:
            tc_values["n1"] = cfg["stage1_epochs"] * per1 if run1 else 0
        if tc_values["n2"] == 0:
            tc_values["n2"] = cfg["stage2_epochs"] * per2 if run2 else 0
        tc = TrainConfig(**tc_values)
        model = TranslationModel.for_corpus(corpus, tc.seed, _model_config(cfg, corpus))

    log_path = out_dir / "loss_log.txt"
    _truncate_log(log_path, start_phase, start_iter - 1)
    if not resume and log_path.exists():
        log_path.unlink()

    trainer = Trainer(model, tc, log_path=log_path)
    if adam_t is not None:
        trainer.load_optimizer(opt_arrays, adam_t)

    state_base = {"config": tc.__dict__ | {}, "stage_mode": stage_mode}

    def checkpoint_to(path: Path, phase: str, iteration: int) -> None:
        save_model(path, model,
                   train_state=state_base | {"phase": phase, "iteration": iteration,
                                             "adam_t": trainer.optimizer_counters()},
                   optimizer_arrays=trainer.optimizer_arrays())

    def periodic(i: int, stage: int) -> None:
        if tc.checkpoint_every and i % tc.checkpoint_every == 0:
            checkpoint_to(out_dir / f"ckpt_stage{stage}_{i:07d}.bin", f"stage{stage}", i)

    try:
        if run1 and start_phase == "stage1":
            trainer.run_stage1(desc_pool, act_pool, start=start_iter, on_iteration=periodic)
            start_phase, start_iter = "stage2", 1
        if run2:
            subset = make_paired_subset(train_pairs, tc.paired_count, tc.seed)
            paired = [(corpus.caption_tokens(c), corpus.motions[m].frames)
                      for m, c in subset]
            trainer.run_stage2(paired, start=start_iter, on_iteration=periodic)
    finally:
        trainer.close()
    checkpoint_to(out_dir / "model_final.bin", "done", 0)


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        raise InputError(f"missing corpus directory {corpus_dir}")
    corpus = load_corpus(corpus_dir)
    out_dir = Path(args.out)
    with run_lock(out_dir):
        echo_config(cfg, out_dir)
        if args.seeds:
            seeds = [int(s) for s in args.seeds.split(",")]
            for seed in seeds:
                run_cfg = dict(cfg, seed=seed)
                _run_training(corpus, run_cfg, out_dir / f"seed{seed}", args.stage,
                              seed, None)
                echo_config(run_cfg, out_dir / f"seed{seed}")
        else:
            _run_training(corpus, cfg, out_dir, args.stage, cfg["seed"], args.resume)
    return 0


def _check_model_corpus(model: TranslationModel, corpus) -> None:
    if (model.config.vocab_size != corpus.vocab.size
            or model.config.action_dim != corpus.action_dim
            or model.config.embedding_dim != corpus.embeddings.shape[1]):
        raise CheckpointError(
            f"checkpoint dimensions (W={model.config.vocab_size}, "
            f"D={model.config.action_dim}, E={model.config.embedding_dim}) do not "
            f"match corpus (W={corpus.vocab.size}, D={corpus.action_dim}, "
            f"E={corpus.embeddings.shape[1]})")


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    corpus = load_corpus(args.corpus)
    models = []
    for path in args.model:
        model, _, _ = load_model(path)
        _check_model_corpus(model, corpus)
        models.append(model)
    reference = None
    if args.reference:
        reference, _, _ = load_model(args.reference)
        _check_model_corpus(reference, corpus)
    else:
        log.warning("no reference model given; skipping back-translation scoring")
    out_dir = Path(args.out)
    with run_lock(out_dir):
        echo_config(cfg, out_dir)
        report: dict = {}
        collected: dict[str, list[float]] = {}
        for idx, model in enumerate(models):
            tag = f"model{idx}"
            direct = experiment1(model, corpus)
            diag = latent_diagnostics(model, corpus)
            per_item = {"direct": direct}
            for metric in METRICS:
                report[f"{tag}_direct_{metric}"] = direct.means[metric]
                collected.setdefault(f"direct_{metric}", []).append(direct.means[metric])
            report[f"{tag}_intra_psi"] = diag.intra_mean
            report[f"{tag}_inter_psi"] = diag.inter_mean
            report[f"{tag}_retrieval_accuracy"] = diag.retrieval_accuracy
            report[f"{tag}_retrieval_chance"] = diag.chance_level
            if reference is not None:
                back, relative = experiment2(model, reference, corpus,
                                             back_with_self=cfg["self_backtranslate"])
                per_item["back"] = back
                for metric in METRICS:
                    report[f"{tag}_back_{metric}"] = back.means[metric]
                    report[f"{tag}_relative_{metric}_pct"] = relative.ratios[metric]
                    collected.setdefault(f"back_{metric}", []).append(back.means[metric])
            write_per_item_csv(out_dir / f"items_{tag}.csv", per_item)
        if len(models) > 1:
            for key, values in collected.items():
                report[f"mean_{key}"] = float(np.mean(values))
                report[f"std_{key}"] = float(np.std(values))
        report["test_pairs"] = len(corpus.pairs_in("test"))
        write_report(out_dir / "report.txt", report)
    print(f"wrote {out_dir / 'report.txt'}")
    return 0


def cmd_translate(args) -> int:
    model, _, _ = load_model(args.model)
    in_path = Path(args.input)
    if not in_path.is_file():
        raise InputError(f"missing input file {in_path}")
    if args.direction == "a2d":
        frames = np.array([[float(v) for v in line.split(",")]
                           for line in in_path.read_text().splitlines() if line.strip()])
        tokens = model.translate(frames, "a2d")
        if model.vocab_tokens is None:
            raise CheckpointError("checkpoint carries no vocabulary for text output")
        words = [model.vocab_tokens[t] for t in tokens if t not in (0, 1)]
        Path(args.output).write_text(" ".join(words) + "\n", newline="\n")
    else:
        words = in_path.read_text().split()
        if model.vocab_tokens is None:
            raise CheckpointError("checkpoint carries no vocabulary for text input")
        index = {tok: i for i, tok in enumerate(model.vocab_tokens)}
        unknown = [w for w in words if w not in index]
        if unknown:
            raise VocabularyError(f"unknown token(s): {', '.join(sorted(set(unknown)))}")
        ids = [0] + [index[w] for w in words] + [1]
        frames = model.translate(ids, "d2a")
        lines = [",".join(repr(float(v)) for v in frame) for frame in frames]
        Path(args.output).write_text("\n".join(lines) + "\n", newline="\n")
    return 0


def cmd_project(args) -> int:
    cfg = resolve_config(args)
    corpus = load_corpus(args.corpus)
    model, _, _ = load_model(args.model)
    _check_model_corpus(model, corpus)
    out_dir = Path(args.out)
    with run_lock(out_dir):
        echo_config(cfg, out_dir)
        motion_ids = corpus.motion_ids("test")
        act_latents = [model.encode_action(corpus.motions[m].frames).data
                       for m in motion_ids]
        act_rows = project_latents(act_latents, [corpus.motions[m].label for m in motion_ids])
        lines = ["id,label,x,y"]
        for mid, (label, x, y) in zip(motion_ids, act_rows):
            lines.append(f"{mid},{label},{x!r},{y!r}")
        (out_dir / "actions_2d.csv").write_text("\n".join(lines) + "\n", newline="\n")

        caption_ids = corpus.caption_ids("test")
        dsc_latents = [model.encode_description(corpus.caption_tokens(c)).data
                       for c in caption_ids]
        labels = [corpus.motions[corpus.captions[c].motion_id].label for c in caption_ids]
        dsc_rows = project_latents(dsc_latents, labels)
        lines = ["id,label,x,y"]
        for cid, (label, x, y) in zip(caption_ids, dsc_rows):
            lines.append(f"{cid},{label},{x!r},{y!r}")
        (out_dir / "captions_2d.csv").write_text("\n".join(lines) + "\n", newline="\n")
    print(f"wrote {out_dir / 'actions_2d.csv'} and {out_dir / 'captions_2d.csv'}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqbind",
        description="Train and evaluate bound motion/description autoencoders.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key")

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--per-class", dest="per_class", type=int, default=None)

    p = sub.add_parser("train", help="run the training stages")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stage", choices=("1", "2", "both"), default="both")
    p.add_argument("--paired-count", dest="paired_count", type=int, default=None)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--seeds", help="comma-separated seeds for a multi-seed run")

    p = sub.add_parser("eval", help="score a model on the test split")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", action="append", required=True,
                   help="model checkpoint (repeatable)")
    p.add_argument("--reference", help="reference model for back-translation")

    p = sub.add_parser("translate", help="translate one sequence")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--direction", choices=("a2d", "d2a"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("project", help="export 2-D latent projections")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    return parser


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "translate": cmd_translate,
    "project": cmd_project,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
