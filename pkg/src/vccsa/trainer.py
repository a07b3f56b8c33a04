"""Training loop, evaluation, seed sweeps, ablations and the text-only baseline."""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .data import (
    CorpusIndex,
    FeatureStore,
    PaddedBatch,
    SplitAssignment,
    make_batches,
    split_corpus,
)
from .encoders import ExternalTextFeatures, Vocabulary, build_vocabulary
from .errors import ConfigMismatch, InvalidConfig, NonFiniteLoss, UnknownMode
from .metrics import MetricsReport, aggregate, report
from .model import (
    ABLATIONS,
    ABLATION_LABELS,
    ModelConfig,
    TextOnlyModel,
    VCCSA,
    batch_loss,
    load_checkpoint,
    save_checkpoint,
)

log = logging.getLogger(__name__)

TABLE4_MODES = ABLATIONS[1:]
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    grad_clip: float = 0.0
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    split_seed: int = 0
    granularity: str = "comment"
    v_cap: int = 200
    t_cap: int = 64
    selection_metric: str = "opinion.micro_f1"
    dtype: str = "float32"

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.epochs < 1:
            raise InvalidConfig("epochs must be >= 1")
        if not self.seeds:
            raise InvalidConfig("seed list must not be empty")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise InvalidConfig("dtype must be float32 or float64")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32


class Dataset:
    """A corpus with its split, vocabulary and cached dev/test batches."""

    def __init__(self, corpus: CorpusIndex, split: SplitAssignment, cfg: TrainConfig,
                 vocab: Vocabulary | None = None, text_features: ExternalTextFeatures | None = None):
        self.corpus = corpus
        self.split = split
        self.cfg = cfg
        self.vocab = vocab or build_vocabulary(split, corpus)
        self.store = FeatureStore(corpus)
        self.text_features = text_features
        self._fixed: dict[str, list[PaddedBatch]] = {}

    @classmethod
    def from_corpus(cls, corpus: CorpusIndex, cfg: TrainConfig, split: SplitAssignment | None = None,
                    **kw) -> "Dataset":
        return cls(corpus, split or split_corpus(corpus, cfg.split_seed, cfg.granularity), cfg, **kw)

    @property
    def d_raw(self) -> int:
        return self.store.d_raw

    def batches(self, part: str, shuffle_seed: int | None = None) -> list[PaddedBatch]:
        if shuffle_seed is None and part in self._fixed:
            return self._fixed[part]
        out, rep = make_batches(self.split, part, self.corpus, self.vocab, self.cfg.batch_size,
                                self.cfg.v_cap, self.cfg.t_cap, shuffle_seed, self.store, self.text_features)
        if rep.videos_truncated or rep.comments_truncated:
            log.debug("%s: truncated %d videos, %d comments", part, rep.videos_truncated, rep.comments_truncated)
        out = [b.to(self.cfg.torch_dtype) for b in out]
        if shuffle_seed is None:
            self._fixed[part] = out
        return out

    def model_config(self, **kw) -> ModelConfig:
        """Model config with data-dependent widths filled in."""
        kw.setdefault("d_raw", self.d_raw)
        kw.setdefault("vocab_size", len(self.vocab))
        if self.text_features is not None:
            kw.setdefault("external_text", True)
            kw.setdefault("d_t", self.text_features.dim)
        return ModelConfig(**kw)


@torch.no_grad()
def predict(model: torch.nn.Module, batches: Sequence[PaddedBatch]):
    model.eval()
    op_p, op_g, em_p, em_g = [], [], [], []
    for b in batches:
        op, em, _ = model(b)
        op_p.append(op.argmax(-1))
        em_p.append(em.argmax(-1))
        op_g.append(b.opinion_labels)
        em_g.append(b.emotion_labels)
    cat = lambda xs: torch.cat(xs).tolist() if xs else []
    return cat(op_p), cat(op_g), cat(em_p), cat(em_g)


def evaluate(model: torch.nn.Module, batches: Sequence[PaddedBatch]) -> MetricsReport:
    op_p, op_g, em_p, em_g = predict(model, batches)
    return report(op_p, op_g, em_p, em_g)


def check_compatible(cfg: ModelConfig, data: Dataset) -> None:
    if cfg.d_raw != data.d_raw:
        raise ConfigMismatch(f"checkpoint expects d_raw={cfg.d_raw}, corpus has d_raw={data.d_raw}")
    if not cfg.external_text and cfg.vocab_size != len(data.vocab):
        raise ConfigMismatch(f"checkpoint vocabulary has {cfg.vocab_size} entries, data vocabulary {len(data.vocab)}")


def evaluate_checkpoint(path: str | Path, data: Dataset, part: str = "test") -> MetricsReport:
    model, _ = load_checkpoint(path)
    check_compatible(model.config, data)
    return evaluate(model.to(data.cfg.torch_dtype), data.batches(part))


@dataclass
class TrainResult:
    model: torch.nn.Module
    history: list[dict]
    best_epoch: int
    best_dev: float
    seed: int
    test: MetricsReport | None = None


def _metric(rep: MetricsReport, name: str) -> float:
    return rep.flat()[name]


def _dump_nonfinite(model, step, epoch, loss_value, out_dir):
    bad = [n for n, p in model.named_parameters() if not torch.isfinite(p).all()]
    msg = f"non-finite loss {loss_value} at epoch {epoch} step {step}; non-finite parameters: {bad[:5] or 'none'}"
    if out_dir is not None:
        path = Path(out_dir) / "nonfinite_state.pt"
        torch.save({n: p.detach().clone() for n, p in model.named_parameters()}, path)
        msg += f"; state dumped to {path}"
    return NonFiniteLoss(msg)


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, data: Dataset, seed: int = 0,
          out_dir: str | Path | None = None, kind: str = "VCCSA", model: torch.nn.Module | None = None) -> TrainResult:
    """Adam on the summed cross-entropy, dev evaluation every epoch, best-dev weights kept."""
    torch.manual_seed(seed)
    if model is None:
        model = TextOnlyModel(model_cfg) if kind == "TextOnlyModel" else VCCSA(model_cfg)
    model = model.to(train_cfg.torch_dtype)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr, betas=(train_cfg.beta1, train_cfg.beta2),
                           weight_decay=train_cfg.weight_decay)
    dev = data.batches("dev")
    history, best_state, best_dev, best_epoch = [], None, -1.0, -1
    for epoch in range(1, train_cfg.epochs + 1):
        model.train()
        total, count = 0.0, 0
        for step, batch in enumerate(data.batches("train", shuffle_seed=seed * 100_003 + epoch)):
            loss = batch_loss(model, batch)
            if not torch.isfinite(loss):
                raise _dump_nonfinite(model, step, epoch, loss.item(), out_dir)
            opt.zero_grad()
            loss.backward()
            if train_cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
            opt.step()
            total += loss.item() * len(batch)
            count += len(batch)
        dev_rep = evaluate(model, dev)
        score = _metric(dev_rep, train_cfg.selection_metric)
        history.append({"epoch": epoch, "train_loss": total / max(count, 1), "dev": dev_rep.flat()})
        log.info("seed %d epoch %d loss %.4f dev %s %.4f", seed, epoch, history[-1]["train_loss"],
                 train_cfg.selection_metric, score)
        if score > best_dev:
            best_dev, best_epoch = score, epoch
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    result = TrainResult(model, history, best_epoch, best_dev, seed)
    if out_dir is not None:
        write_run(out_dir, result, data, train_cfg)
    return result


def write_run(out_dir: str | Path, result: TrainResult, data: Dataset, train_cfg: TrainConfig) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.pt", result.model, data.vocab.itos[2:],
                    meta={"seed": result.seed, "best_epoch": result.best_epoch,
                          "train_config": {k: list(v) if isinstance(v, tuple) else v
                                           for k, v in asdict(train_cfg).items()}})
    data.vocab.save(out / "vocab.txt")
    with (out / "history.jsonl").open("w", encoding="utf-8") as fh:
        for rec in result.history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def train_and_test(model_cfg: ModelConfig, train_cfg: TrainConfig, data: Dataset, seed: int,
                   kind: str = "VCCSA", out_dir: str | Path | None = None) -> TrainResult:
    result = train(model_cfg, train_cfg, data, seed, out_dir, kind)
    result.test = evaluate(result.model, data.batches("test"))
    return result


@dataclass
class SweepResult:
    runs: list[TrainResult]
    summary: dict = field(default_factory=dict)

    @property
    def mean(self) -> dict[str, float]:
        return self.summary["mean"]


def seed_sweep(model_cfg: ModelConfig, train_cfg: TrainConfig, data: Dataset,
               seeds: Sequence[int] | None = None, kind: str = "VCCSA",
               out_dir: str | Path | None = None) -> SweepResult:
    """Train/test once per seed; report mean and sample stdev of every metric."""
    seeds = tuple(train_cfg.seeds if seeds is None else seeds)
    if not seeds:
        raise InvalidConfig("seed_sweep needs at least one seed")
    runs = []
    for s in seeds:
        run_dir = None if out_dir is None else Path(out_dir) / f"seed{s}"
        runs.append(train_and_test(model_cfg, train_cfg, data, s, kind, run_dir))
    return SweepResult(runs, aggregate([r.test for r in runs]))


def ablate(model_cfg: ModelConfig, mode: str, train_cfg: TrainConfig, data: Dataset,
           seeds: Sequence[int] | None = None, out_dir: str | Path | None = None) -> SweepResult:
    """Same pipeline with one Table-4 substitution switched on."""
    if mode not in TABLE4_MODES:
        raise UnknownMode(f"unknown ablation mode {mode!r}; expected one of {TABLE4_MODES}")
    return seed_sweep(replace(model_cfg, ablation=mode), train_cfg, data, seeds, out_dir=out_dir)


def text_only_baseline(train_cfg: TrainConfig, data: Dataset, seeds: Sequence[int] | None = None,
                       model_cfg: ModelConfig | None = None, out_dir: str | Path | None = None) -> SweepResult:
    model_cfg = model_cfg or data.model_config()
    return seed_sweep(model_cfg, train_cfg, data, seeds, kind="TextOnlyModel", out_dir=out_dir)


def mode_label(mode: str) -> str:
    return ABLATION_LABELS.get(mode, mode)


def history_matches(a: Sequence[dict], b: Sequence[dict], tol: float = 1e-6) -> bool:
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        if ra["dev"].keys() != rb["dev"].keys():
            return False
        if any(abs(ra["dev"][k] - rb["dev"][k]) > tol for k in ra["dev"]):
            return False
    return True


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed)
