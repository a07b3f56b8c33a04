"""Command-line entry point.

    vccsa [--config FILE] [--seed N] [--out DIR] [--set key=value ...] COMMAND [options]

Configuration is a flat ``key = value`` text file (``#`` starts a comment).
Every key has a fixed type; unknown keys, duplicate keys and unparsable
values are usage errors. ``--set`` overrides the file, ``--seed`` overrides
both. Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import torch

from .data import (
    EMOTIONS,
    OPINIONS,
    CommentRecord,
    CorpusIndex,
    collate,
    consistency_check,
    label_distribution,
    load_corpus,
    read_split,
    read_video_features,
    validate_corpus,
    write_split,
)
from .encoders import ExternalTextFeatures, Vocabulary
from .errors import DataError, InvalidConfig, MissingField, UnknownMode, UsageError, VccsaError
from .metrics import format_table
from .model import ABLATION_LABELS, ABLATIONS, MODEL_KINDS, ModelConfig, load_checkpoint
from .synthgen import GeneratorConfig, bayes_ceiling, generate_corpus
from .trainer import (
    Dataset,
    TrainConfig,
    ablate,
    check_compatible,
    evaluate,
    seed_sweep,
    train_and_test,
)

log = logging.getLogger("vccsa")

DATA_ENV = "CSMV_DATA_DIR"


# ---------------------------------------------------------------- config schema


@dataclass(frozen=True)
class Key:
    name: str
    type: str  # int | float | bool | str | ints
    default: Any
    help: str


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


PARSERS: dict[str, Callable[[str], Any]] = {"int": int, "float": float, "bool": _bool, "str": str, "ints": _ints}

_GEN_HELP = {
    "n_videos": "number of synthetic videos",
    "comments_per_video": "comments generated per video",
    "n_topics": "size of the topic inventory",
    "segments_per_video": "segments per video, each with its own topic/polarity/intensity",
    "frames_per_segment": "frames per segment",
    "d_raw": "raw frame feature width (>= n_topics + 2)",
    "rho": "fraction of comments whose label depends on the video",
    "noise_sigma": "Gaussian noise added to every frame feature",
    "seed": "generator seed (overridden by --seed for gen)",
    "whole_video_fraction": "share of video-dependent comments that refer to the whole video",
    "modifier_rate": "probability of a fear/sadness modifier word",
    "topic_word_rate": "probability that an unmarked comment names a topic",
    "polarity_bias": "probability that a segment has positive polarity",
    "min_words": "shortest comment, in words",
    "max_words": "longest comment, in words",
    "antithetic": "generate videos in polarity-flipped twin pairs sharing their comment texts",
}
_MODEL_HELP = {
    "kind": f"model class: {', '.join(MODEL_KINDS)}",
    "cnn_layers": "number of stacked temporal convolutions (= number of scales)",
    "ct_layers": "encoder layers in each consensus transformer",
    "n_consensus": "number of consensus tokens",
    "heads": "attention heads (must divide every width)",
    "d_v": "video feature width",
    "d_t": "text feature width",
    "d_T": "consensus transformer width",
    "ffn_mult": "feed-forward expansion in encoder layers",
    "memory_hidden": "hidden size of the grounding recurrent memory",
    "bidirectional_memory": "scan frames in both directions",
    "share_grounding": "one grounding memory shared by all scales",
    "ablation": f"one of {', '.join(ABLATIONS)}",
}
_TRAIN_HELP = {
    "epochs": "training epochs",
    "batch_size": "mini-batch size",
    "lr": "Adam learning rate",
    "beta1": "Adam beta1",
    "beta2": "Adam beta2",
    "weight_decay": "Adam weight decay",
    "grad_clip": "global gradient-norm clip (0 = off)",
    "seeds": "seed list for sweep/ablate; train uses the first (or --seed)",
    "split_seed": "seed of the 70/10/20 split",
    "granularity": "split unit: comment or video",
    "v_cap": "maximum frames per video (longer ones are truncated)",
    "t_cap": "maximum tokens per comment",
    "selection_metric": "dev metric used to keep the best epoch",
    "dtype": "float32 or float64",
}
_MISC = [
    Key("data.dir", "str", "", f"corpus directory (default ${DATA_ENV})"),
    Key("data.split", "str", "", "split file to use instead of drawing one from train.split_seed"),
    Key("data.text_features", "str", "", "directory of precomputed text features (replaces the embedding)"),
    Key("data.max_comments", "int", 0, "use a seeded subsample of this many comments (0 = all)"),
    Key("threads", "int", 1, "torch intra-op threads"),
]
_MODEL_SKIP = {"d_raw", "vocab_size", "external_text", "n_opinion", "n_emotion"}


def _type_of(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, tuple):
        return "ints"
    return "str"


def _schema() -> dict[str, Key]:
    keys = []
    for f in fields(GeneratorConfig):
        keys.append(Key(f"gen.{f.name}", _type_of(f.default), f.default, _GEN_HELP[f.name]))
    keys.append(Key("model.kind", "str", "VCCSA", _MODEL_HELP["kind"]))
    for f in fields(ModelConfig):
        if f.name not in _MODEL_SKIP:
            keys.append(Key(f"model.{f.name}", _type_of(f.default), f.default, _MODEL_HELP[f.name]))
    train_defaults = TrainConfig()
    for f in fields(TrainConfig):
        default = getattr(train_defaults, f.name)
        keys.append(Key(f"train.{f.name}", _type_of(default), default, _TRAIN_HELP[f.name]))
    keys.extend(_MISC)
    return {k.name: k for k in keys}


SCHEMA = _schema()


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def config_help() -> str:
    width = max(len(k) for k in SCHEMA)
    lines = ["config keys (flat `key = value` file, or --set key=value):"]
    for k in SCHEMA.values():
        default = _format_value(k.default) or '""'
        lines.append(f"  {k.name.ljust(width)}  {k.type:5s}  default {default}  -- {k.help}")
    return "\n".join(lines)


def parse_value(key: str, text: str, where: str = "") -> Any:
    if key not in SCHEMA:
        raise InvalidConfig(f"{where}unknown config key {key!r}")
    spec = SCHEMA[key]
    try:
        return PARSERS[spec.type](text.strip())
    except ValueError as exc:
        raise InvalidConfig(f"{where}{key}: expected {spec.type}, got {text.strip()!r}") from exc


def read_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InvalidConfig(f"cannot read config file {path}: {exc}") from exc
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}: "
        if "=" not in line:
            raise InvalidConfig(f"{where}expected `key = value`")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise InvalidConfig(f"{where}duplicate key {key!r}")
        out[key] = parse_value(key, value, where)
    return out


def write_config_file(path: str | Path, values: dict[str, Any]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for key in SCHEMA:
            fh.write(f"{key} = {_format_value(values[key])}\n")


class RunConfig:
    """Fully resolved configuration: defaults < file < --set < --seed."""

    def __init__(self, values: dict[str, Any]):
        self.values = values

    @classmethod
    def resolve(cls, path: str | None = None, overrides: Sequence[str] = ()) -> "RunConfig":
        values = {k: spec.default for k, spec in SCHEMA.items()}
        if path:
            values.update(read_config_file(path))
        for item in overrides:
            if "=" not in item:
                raise InvalidConfig(f"--set expects key=value, got {item!r}")
            key, value = item.split("=", 1)
            values[key.strip()] = parse_value(key.strip(), value, "--set: ")
        return cls(values)

    def section(self, prefix: str) -> dict[str, Any]:
        return {k[len(prefix) + 1:]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    def generator(self) -> GeneratorConfig:
        return GeneratorConfig(**self.section("gen"))

    def train(self) -> TrainConfig:
        return TrainConfig(**self.section("train"))

    def model_kwargs(self) -> dict[str, Any]:
        kw = self.section("model")
        kw.pop("kind")
        return kw

    @property
    def kind(self) -> str:
        kind = self.values["model.kind"]
        if kind not in MODEL_KINDS:
            raise InvalidConfig(f"model.kind must be one of {sorted(MODEL_KINDS)}, got {kind!r}")
        return kind


# ---------------------------------------------------------------- helpers


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _require_out(args) -> Path:
    if not args.out:
        raise UsageError(f"{args.command} needs --out DIR")
    return Path(args.out)


def _data_dir(args, cfg: RunConfig) -> Path:
    root = getattr(args, "data", None) or cfg.values["data.dir"] or os.environ.get(DATA_ENV)
    if not root:
        raise UsageError(f"no corpus given: pass --data, set data.dir, or export {DATA_ENV}")
    return Path(root)


def subsample(corpus: CorpusIndex, n: int, seed: int) -> CorpusIndex:
    """Seeded subset of ``n`` comments, keeping only the videos they reference."""
    if n <= 0 or n >= len(corpus.comments):
        return corpus
    pick = sorted(np.random.default_rng(seed).choice(len(corpus.comments), size=n, replace=False))
    comments = [corpus.comments[i] for i in pick]
    used = {c.video_id for c in comments}
    return CorpusIndex(corpus.root, {k: v for k, v in corpus.videos.items() if k in used}, comments)


def _load_data(args, cfg: RunConfig, train_cfg: TrainConfig, vocab: Vocabulary | None = None) -> Dataset:
    corpus = load_corpus(_data_dir(args, cfg))
    corpus = subsample(corpus, cfg.values["data.max_comments"], train_cfg.split_seed)
    validate_corpus(corpus, check_features=False)
    split = read_split(cfg.values["data.split"]) if cfg.values["data.split"] else None
    text = ExternalTextFeatures(cfg.values["data.text_features"]) if cfg.values["data.text_features"] else None
    return Dataset.from_corpus(corpus, train_cfg, split=split, vocab=vocab, text_features=text)


def _seeds(args, train_cfg: TrainConfig) -> tuple[int, ...]:
    return (args.seed,) if args.seed is not None else train_cfg.seeds


def _save_run_files(out: Path, cfg: RunConfig, data: Dataset) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_config_file(out / "config.txt", cfg.values)
    write_split(out / "split.json", data.split)


# ---------------------------------------------------------------- commands


def cmd_gen(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    gen = cfg.generator()
    seed = args.seed if args.seed is not None else gen.seed
    generate_corpus(gen, out, seed=seed)
    print(f"wrote {gen.n_videos} videos and {gen.n_comments} comments to {out}")
    print(f"text-only Bayes ceiling: {bayes_ceiling(gen):.2f}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    train_cfg = cfg.train()
    data = _load_data(args, cfg, train_cfg)
    seed = _seeds(args, train_cfg)[0]
    model_cfg = data.model_config(**cfg.model_kwargs())
    _save_run_files(out, cfg, data)
    result = train_and_test(model_cfg, train_cfg, data, seed, cfg.kind, out_dir=out)
    dev = evaluate(result.model, data.batches("dev"))
    summary = {"seed": seed, "kind": cfg.kind, "best_epoch": result.best_epoch, "best_dev": result.best_dev,
               "dev": dev.to_dict(), "test": result.test.to_dict()}
    _write_json(out / "report.json", summary)
    print(format_table({"dev": dev.flat(), "test": result.test.flat()}))
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    model, ckpt = load_checkpoint(args.checkpoint)
    meta_train = ckpt.get("meta", {}).get("train_config", {})
    train_cfg = cfg.train()
    if meta_train and not cfg.values["data.split"]:
        # evaluate on the split the checkpoint was trained with
        train_cfg = TrainConfig(**{**asdict(train_cfg), "split_seed": meta_train.get("split_seed", 0),
                                   "granularity": meta_train.get("granularity", "comment")})
    vocab = Vocabulary(ckpt["vocab"]) if ckpt.get("vocab") is not None else None
    data = _load_data(args, cfg, train_cfg, vocab=vocab)
    check_compatible(model.config, data)
    rep = evaluate(model.to(train_cfg.torch_dtype), data.batches(args.part))
    print(format_table({args.part: rep.flat()}))
    if args.out:
        _write_json(Path(args.out) / f"report_{args.part}.json", rep.to_dict())
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    train_cfg = cfg.train()
    data = _load_data(args, cfg, train_cfg)
    seeds = _seeds(args, train_cfg)
    _save_run_files(out, cfg, data)
    sweep = seed_sweep(data.model_config(**cfg.model_kwargs()), train_cfg, data, seeds, cfg.kind, out)
    _write_json(out / "summary.json", {"kind": cfg.kind, "seeds": list(seeds), **sweep.summary})
    print(format_table({f"mean ({len(seeds)} seeds)": sweep.summary["mean"], "std": sweep.summary["std"]}))
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    modes = list(ABLATION_LABELS) if args.mode == ["all"] else args.mode
    for mode in modes:
        if mode not in ABLATION_LABELS:
            raise UnknownMode(f"unknown ablation mode {mode!r}; expected one of {list(ABLATION_LABELS)} or 'all'")
    train_cfg = cfg.train()
    data = _load_data(args, cfg, train_cfg)
    seeds = _seeds(args, train_cfg)
    _save_run_files(out, cfg, data)
    base = data.model_config(**{**cfg.model_kwargs(), "ablation": "full"})
    rows, reports = {}, {}
    for mode in modes:
        if mode == "full":
            sweep = seed_sweep(base, train_cfg, data, seeds, out_dir=out / mode)
        else:
            sweep = ablate(base, mode, train_cfg, data, seeds, out / mode)
        label = ABLATION_LABELS[mode]
        rows[label] = sweep.summary["mean"]
        reports[mode] = {"label": label, "seeds": list(seeds), **sweep.summary}
    _write_json(out / "ablation.json", reports)
    print(format_table(rows))
    return 0


@torch.no_grad()
def cmd_inspect(args, cfg: RunConfig) -> int:
    model, ckpt = load_checkpoint(args.checkpoint)
    corpus = load_corpus(_data_dir(args, cfg))
    rec = corpus.comment(args.comment)
    if rec.video_id not in corpus.videos:
        raise DataError(f"comment {rec.comment_id}: dangling video_id {rec.video_id!r}")
    vocab = Vocabulary(ckpt["vocab"]) if ckpt.get("vocab") is not None else Vocabulary()
    train_meta = ckpt.get("meta", {}).get("train_config", {})
    v_cap, t_cap = train_meta.get("v_cap", 200), train_meta.get("t_cap", 64)
    frames = read_video_features(corpus.feature_path(rec.video_id), rec.video_id).frames[:v_cap]
    tokens = vocab.encode(rec.text)[:t_cap]
    text_feats = None
    if model.config.external_text:
        if not cfg.values["data.text_features"]:
            raise UsageError("this checkpoint needs data.text_features")
        text_feats = [ExternalTextFeatures(cfg.values["data.text_features"])(rec.comment_id)[:t_cap]]
    batch = collate([rec.comment_id], [frames], [tokens], [rec.opinion_id], [rec.emotion_id], text_feats)
    model.eval()
    op, em, diag = model(batch)
    dump = {
        "comment_id": rec.comment_id,
        "video_id": rec.video_id,
        "text": rec.text,
        "tokens": [vocab.itos[i] for i in tokens],
        "n_frames": int(frames.shape[0]),
        "prediction": {"opinion": OPINIONS[int(op.argmax())], "emotion": EMOTIONS[int(em.argmax())]},
        "gold": {"opinion": rec.opinion, "emotion": rec.emotion},
        "probabilities": {"opinion": torch.softmax(op[0], -1).tolist(), "emotion": torch.softmax(em[0], -1).tolist()},
    }
    if "grounding_weights" in diag:
        dump["ablation"] = model.config.ablation
        dump["scales"] = diag["scales"]
        dump["grounding_weights"] = {f"scale_{s}": w[0].tolist() for s, w in zip(diag["scales"], diag["grounding_weights"])}
        dump["consensus_attention"] = {f"scale_{s}": a[0].tolist()
                                       for s, a in zip(diag["scales"], diag["consensus_attention"])}
        dump["attn_scale"] = diag["attn_scale"][0].tolist()
    if args.out:
        _write_json(Path(args.out) / f"inspect_{rec.comment_id}.json", dump)
    _emit(dump)
    return 0


def cmd_stats(args, cfg: RunConfig) -> int:
    corpus = load_corpus(_data_dir(args, cfg))
    dist = label_distribution(corpus)
    counts = {task: {lab: round(p * len(corpus.comments)) for lab, p in d.items()} for task, d in dist.items()}
    stats = {"videos": len(corpus.videos), "comments": len(corpus.comments), "distribution": dist, "counts": counts}
    for task, d in dist.items():
        print(f"{task}:")
        for lab, p in d.items():
            print(f"  {lab:13s} {counts[task][lab]:7d}  {100 * p:6.2f}%")
    print(f"{len(corpus.videos)} videos, {len(corpus.comments)} comments")
    if args.out:
        _write_json(Path(args.out) / "stats.json", stats)
    return 0


def read_validator_labels(path: str) -> dict[str, tuple[str, str]]:
    """Validator files use the comment jsonl schema; only comment_id/opinion/emotion are required."""
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed record ({exc})") from exc
            missing = [k for k in ("comment_id", "opinion", "emotion") if k not in obj]
            if missing:
                raise MissingField(f"{path}:{lineno}: missing field(s) {', '.join(missing)}")
            rec = CommentRecord(str(obj["comment_id"]), str(obj.get("video_id", "")),
                                str(obj.get("text") or "-"), str(obj["opinion"]), str(obj["emotion"]))
            out[rec.comment_id] = (rec.opinion, rec.emotion)
    return out


def cmd_check(args, cfg: RunConfig) -> int:
    root = _data_dir(args, cfg)
    corpus = load_corpus(root)
    validate_corpus(corpus)
    result: dict[str, Any] = {"corpus": str(root), "videos": len(corpus.videos), "comments": len(corpus.comments)}
    if args.validators:
        a, b = (read_validator_labels(p) for p in args.validators)
        original = {r.comment_id: (r.opinion, r.emotion) for r in corpus.comments}
        ids = sorted(a)
        for cid in ids:
            if cid not in original:
                raise DataError(f"validator record {cid!r} is not in the corpus")
            if cid not in b:
                raise DataError(f"comment {cid!r} was labelled by the first validator only")
        rate, flagged = consistency_check([original[c] for c in ids], [a[c] for c in ids], [b[c] for c in ids],
                                          args.threshold)
        result["consistency"] = {"checked": len(ids), "disagreement": rate, "threshold": args.threshold,
                                 "flagged": flagged}
        verdict = "FLAGGED for re-labelling" if flagged else "consistent"
        print(f"label consistency: {rate:.3f} disagreement over {len(ids)} comments "
              f"(threshold {args.threshold:.2f}) -> {verdict}")
    if args.out:
        _write_json(Path(args.out) / "check.json", result)
    print("OK")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "inspect": cmd_inspect,
    "stats": cmd_stats,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    epilog = config_help() + "\n\nexit codes: 0 ok, 2 usage/config error, 3 data error, 4 numeric failure"
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="vccsa", description="Video-aware comment sentiment models and tools.",
                                     epilog=epilog, formatter_class=fmt)
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="seed override (generator seed for gen, training seed otherwise)")
    parser.add_argument("--out", help="output directory; commands write nowhere else")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text, epilog=epilog, formatter_class=fmt)

    add("gen", "generate a synthetic corpus with a known text-only ceiling")
    for name, text in (("train", "train one model and evaluate it on dev and test"),
                       ("sweep", "train/evaluate over the seed list; report mean and sample stdev")):
        p = add(name, text)
        p.add_argument("--data", help=f"corpus directory (default data.dir or ${DATA_ENV})")
    p = add("ablate", "run ablation modes over the seed list")
    p.add_argument("--data", help="corpus directory")
    p.add_argument("--mode", action="append", required=True,
                   help=f"one of {', '.join(ABLATION_LABELS)}, or 'all'; repeatable")
    p = add("eval", "evaluate a checkpoint on a split part")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="corpus directory")
    p.add_argument("--part", choices=("train", "dev", "test"), default="test")
    p = add("inspect", "dump grounding weights, scale attention and predictions for one comment as JSON")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--comment", required=True, help="comment_id")
    p.add_argument("--data", help="corpus directory")
    p = add("stats", "label distribution of a corpus")
    p.add_argument("--data", help="corpus directory")
    p = add("check", "validate corpus integrity and, optionally, validator label consistency")
    p.add_argument("--data", help="corpus directory")
    p.add_argument("--validators", nargs=2, metavar=("A", "B"), help="two validator label files (jsonl)")
    p.add_argument("--threshold", type=float, default=0.10, help="flag when disagreement exceeds this")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = RunConfig.resolve(args.config, args.set)
        torch.set_num_threads(max(1, cfg.values["threads"]))
        return COMMANDS[args.command](args, cfg)
    except VccsaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
