"""VC-CSA: video content-aware comment sentiment analysis.

Pipeline for one (video, comment) pair::

    frames --project--> f_v^0 --conv stack--> {f_v^i}            multi-scale
    [f_v^i ; consensus tokens ; f_t] --masked encoder--> F_con^i  consensus
    F_con^i x f_v^i --attention--> S^i --recurrent memory--> W_g^i
    f_g^i = sum_t W_g^i[t] f_v^i[t]                                grounding
    f_t^j x {f_g^i} --attention over scales--> F_g^j
    maxpool(selfattn([F_g ; f_t])) --> opinion / emotion heads

Masks are boolean with ``True`` meaning "real position" (frames/tokens) or
"attention allowed" (query/key matrices).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .data import EMOTIONS, OPINIONS, PaddedBatch
from .encoders import TextEmbedding, VideoProjection
from .errors import ConfigMismatch, DataError, DimMismatch, InvalidConfig, LabelOutOfRange

ABLATIONS = ("full", "only_single_layer", "only_last_layer", "last_token_query", "raw_attention_weight")
ABLATION_LABELS = {
    "full": "VC-CSA",
    "only_single_layer": "Only single layer",
    "only_last_layer": "Only last layer",
    "last_token_query": "LT",
    "raw_attention_weight": "AttnS",
}


@dataclass
class ModelConfig:
    d_raw: int = 16
    vocab_size: int = 2
    cnn_layers: int = 4
    ct_layers: int = 1
    n_consensus: int = 1
    heads: int = 4
    d_v: int = 64
    d_t: int = 64
    d_T: int = 64
    ffn_mult: int = 4
    memory_hidden: int = 8
    bidirectional_memory: bool = False
    share_grounding: bool = False
    external_text: bool = False
    ablation: str = "full"
    n_opinion: int = len(OPINIONS)
    n_emotion: int = len(EMOTIONS)

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise InvalidConfig(f"unknown ablation {self.ablation!r}; expected one of {ABLATIONS}")
        for name in ("cnn_layers", "ct_layers", "n_consensus", "heads", "d_v", "d_t", "d_T",
                     "memory_hidden", "ffn_mult", "d_raw", "vocab_size"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        for name in ("d_v", "d_t", "d_T"):
            if getattr(self, name) % self.heads:
                raise InvalidConfig(f"{name}={getattr(self, name)} is not divisible by heads={self.heads}")

    @classmethod
    def large(cls, d_raw: int = 1024, vocab_size: int = 2, **kw) -> "ModelConfig":
        """768-wide configuration: 4 scales, 1 consensus layer, 1 consensus token, 12 heads."""
        base = dict(d_raw=d_raw, vocab_size=vocab_size, cnn_layers=4, ct_layers=1, n_consensus=1,
                    heads=12, d_v=768, d_t=768, d_T=768)
        base.update(kw)
        return cls(**base)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigMismatch(f"unknown model config keys {sorted(unknown)}")
        return cls(**d)

    @property
    def scales(self) -> tuple[int, ...]:
        """1-based indices of the temporal scales the model consumes."""
        if self.ablation == "only_single_layer":
            return (1,)
        if self.ablation == "only_last_layer":
            return (self.cnn_layers,)
        return tuple(range(1, self.cnn_layers + 1))


# ---------------------------------------------------------------- attention


def masked_softmax(scores: torch.Tensor, allowed: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Softmax over allowed entries; rows with nothing allowed come out as zeros."""
    scores = scores.masked_fill(~allowed, float("-inf"))
    live = allowed.any(dim, keepdim=True)
    scores = torch.where(live, scores, torch.zeros_like(scores))
    return torch.softmax(scores, dim) * live


class MultiHeadAttention(nn.Module):
    def __init__(self, d_query: int, d_key: int, d_model: int, heads: int, values: bool = True):
        super().__init__()
        if d_model % heads:
            raise InvalidConfig(f"d_model={d_model} not divisible by heads={heads}")
        self.heads = heads
        self.q = nn.Linear(d_query, d_model)
        self.k = nn.Linear(d_key, d_model)
        if values:
            self.v = nn.Linear(d_key, d_model)
            self.o = nn.Linear(d_model, d_model)

    def weights(self, query: torch.Tensor, key: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
        """Softmax weights ``B x H x Q x K``; ``allowed`` is ``B x Q x K``."""
        b, nq, _ = query.shape
        nk = key.shape[1]
        q = self.q(query).view(b, nq, self.heads, -1).transpose(1, 2)
        k = self.k(key).view(b, nk, self.heads, -1).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1])
        return masked_softmax(scores, allowed[:, None])

    def forward(self, query, key, allowed):
        w = self.weights(query, key, allowed)
        b, nk, _ = key.shape
        v = self.v(key).view(b, nk, self.heads, -1).transpose(1, 2)
        out = (w @ v).transpose(1, 2).reshape(b, query.shape[1], -1)
        return self.o(out), w


class EncoderLayer(nn.Module):
    """Post-norm transformer encoder layer with an explicit allowed-pairs mask."""

    def __init__(self, dim: int, heads: int, ffn_mult: int = 4):
        super().__init__()
        self.attn = MultiHeadAttention(dim, dim, dim, heads)
        self.norm1 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, ffn_mult * dim), nn.ReLU(), nn.Linear(ffn_mult * dim, dim))
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
        a, _ = self.attn(x, x, allowed)
        x = self.norm1(x + a)
        return self.norm2(x + self.ffn(x))


# ---------------------------------------------------------------- multi-scale


class MultiScaleTemporal(nn.Module):
    """Stacked kernel-3 / stride-1 / pad-1 convolutions with ReLU after each layer.

    Padded frames are re-zeroed after every layer, so a padded sequence behaves
    exactly like the unpadded one with plain zero padding at its end.
    """

    def __init__(self, dim: int, layers: int):
        super().__init__()
        self.convs = nn.ModuleList(nn.Conv1d(dim, dim, kernel_size=3, stride=1, padding=1) for _ in range(layers))
        # ReLU gain on the fan-in bound: the default bound shrinks the signal ~2.4x per
        # layer, leaving the deepest scales dominated by their biases
        for conv in self.convs:
            nn.init.kaiming_uniform_(conv.weight, nonlinearity="relu")

    def forward(self, f_v0: torch.Tensor, frame_mask: torch.Tensor) -> list[torch.Tensor]:
        keep = frame_mask[:, None, :].to(f_v0.dtype)
        x = f_v0.transpose(1, 2) * keep
        outs = []
        for conv in self.convs:
            x = F.relu(conv(x)) * keep
            outs.append(x.transpose(1, 2))
        return outs


def multi_scale_temporal(f_v0: torch.Tensor, module: MultiScaleTemporal,
                         frame_mask: torch.Tensor | None = None) -> list[torch.Tensor]:
    """Unbatched convenience wrapper: ``v_l x d_v`` in, list of ``v_l x d_v`` out."""
    if frame_mask is None:
        frame_mask = torch.ones(f_v0.shape[0], dtype=torch.bool)
    return [s[0] for s in module(f_v0[None], frame_mask[None])]


# ---------------------------------------------------------------- consensus


def build_consensus_mask(frame_mask: torch.Tensor, n_c: int, token_mask: torch.Tensor) -> torch.Tensor:
    """Allowed attention pairs over ``[video ; consensus ; text]``.

    Video and text never see each other directly; consensus positions see and
    are seen by everything. Padded positions are never keys, and their own
    query rows are empty. Accepts unbatched (1-D) or batched (2-D) masks.
    """
    unbatched = frame_mask.dim() == 1
    if unbatched:
        frame_mask, token_mask = frame_mask[None], token_mask[None]
    b, v = frame_mask.shape
    t = token_mask.shape[1]
    kind = torch.cat([torch.zeros(v, dtype=torch.long), torch.ones(n_c, dtype=torch.long),
                      torch.full((t,), 2, dtype=torch.long)])
    cross = ((kind[:, None] == 0) & (kind[None, :] == 2)) | ((kind[:, None] == 2) & (kind[None, :] == 0))
    valid = torch.cat([frame_mask, torch.ones(b, n_c, dtype=torch.bool, device=frame_mask.device), token_mask], 1)
    allowed = ~cross.to(frame_mask.device)[None] & valid[:, None, :] & valid[:, :, None]
    return allowed[0] if unbatched else allowed


def _maybe_project(d_in: int, d_out: int) -> nn.Module:
    return nn.Identity() if d_in == d_out else nn.Linear(d_in, d_out)


class ConsensusTransformer(nn.Module):
    """Returns the consensus-token outputs ``F_con^i`` (``B x n_c x d_T``)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.video_in = _maybe_project(cfg.d_v, cfg.d_T)
        self.text_in = _maybe_project(cfg.d_t, cfg.d_T)
        self.tokens = nn.Parameter(torch.randn(cfg.n_consensus, cfg.d_T) * 0.02)
        self.layers = nn.ModuleList(EncoderLayer(cfg.d_T, cfg.heads, cfg.ffn_mult) for _ in range(cfg.ct_layers))

    def encode(self, f_v, f_t, frame_mask, token_mask) -> torch.Tensor:
        """Full output sequence ``[video ; consensus ; text]`` after all layers."""
        b, v, _ = f_v.shape
        n_c = self.tokens.shape[0]
        x = torch.cat([self.video_in(f_v), self.tokens.expand(b, -1, -1), self.text_in(f_t)], 1)
        allowed = build_consensus_mask(frame_mask, n_c, token_mask)
        for layer in self.layers:
            x = layer(x, allowed)
        return x

    def forward(self, f_v, f_t, frame_mask, token_mask) -> torch.Tensor:
        v = f_v.shape[1]
        return self.encode(f_v, f_t, frame_mask, token_mask)[:, v : v + self.tokens.shape[0]]


class LastTokenQuery(nn.Module):
    """Ablation "LT": plain encoder over ``[video ; text]``, query = last real text position."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.video_in = _maybe_project(cfg.d_v, cfg.d_T)
        self.text_in = _maybe_project(cfg.d_t, cfg.d_T)
        self.layers = nn.ModuleList(EncoderLayer(cfg.d_T, cfg.heads, cfg.ffn_mult) for _ in range(cfg.ct_layers))

    def forward(self, f_v, f_t, frame_mask, token_mask) -> torch.Tensor:
        v = f_v.shape[1]
        x = torch.cat([self.video_in(f_v), self.text_in(f_t)], 1)
        valid = torch.cat([frame_mask, token_mask], 1)
        allowed = valid[:, None, :] & valid[:, :, None]
        for layer in self.layers:
            x = layer(x, allowed)
        last = v + token_mask.sum(1) - 1
        return x[torch.arange(x.shape[0]), last][:, None]


# ---------------------------------------------------------------- grounding


class ConsensusAttention(nn.Module):
    """Per-head attention weights of the consensus query over frames: ``S^i`` (``B x H x V``)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attn = MultiHeadAttention(cfg.d_T, cfg.d_v, cfg.d_v, cfg.heads, values=False)

    def forward(self, f_con, f_v, frame_mask) -> torch.Tensor:
        allowed = frame_mask[:, None, :].expand(-1, f_con.shape[1], -1)
        w = self.attn.weights(f_con, f_v, allowed).mean(2)
        return w / w.sum(-1, keepdim=True).clamp_min(torch.finfo(w.dtype).tiny)


READOUT_BIAS_INIT = 0.3


class GroundingMemory(nn.Module):
    """LSTM cell-state scan over the attention columns, rectified to ``W_g >= 0``.

    Gate layout follows the usual (input, forget, cell, output) order. Padded
    frames carry the state through unchanged and get zero weight.
    """

    def __init__(self, n_in: int, hidden: int = 8, bidirectional: bool = False):
        super().__init__()
        self.hidden = hidden
        self.directions = 2 if bidirectional else 1
        bound = 1.0 / math.sqrt(hidden)
        self.weight_ih = nn.Parameter(torch.empty(self.directions, 4 * hidden, n_in).uniform_(-bound, bound))
        self.weight_hh = nn.Parameter(torch.empty(self.directions, 4 * hidden, hidden).uniform_(-bound, bound))
        self.bias = nn.Parameter(torch.empty(self.directions, 4 * hidden).uniform_(-bound, bound))
        self.readout = nn.Linear(self.directions * hidden, 1)
        # positive bias: a readout that is negative on every frame at init would
        # leave the whole scale without gradient for good
        nn.init.constant_(self.readout.bias, READOUT_BIAS_INIT)

    def cell_states(self, scores: torch.Tensor, frame_mask: torch.Tensor) -> torch.Tensor:
        """``B x H x V`` scores -> ``B x V x (directions*hidden)`` cell states."""
        x = scores.transpose(1, 2)
        b, v, _ = x.shape
        out = []
        for d in range(self.directions):
            gates_x = x @ self.weight_ih[d].T + self.bias[d]
            h = c = x.new_zeros(b, self.hidden)
            cells = [None] * v
            order = range(v) if d == 0 else range(v - 1, -1, -1)
            for t in order:
                i, f, g, o = (gates_x[:, t] + h @ self.weight_hh[d].T).chunk(4, -1)
                c_new = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
                h_new = torch.sigmoid(o) * torch.tanh(c_new)
                m = frame_mask[:, t, None]
                c = torch.where(m, c_new, c)
                h = torch.where(m, h_new, h)
                cells[t] = c
            out.append(torch.stack(cells, 1))
        return torch.cat(out, -1)

    def forward(self, scores: torch.Tensor, frame_mask: torch.Tensor) -> torch.Tensor:
        pre = self.readout(self.cell_states(scores, frame_mask)).squeeze(-1)
        return F.relu(pre) * frame_mask.to(pre.dtype)


def golden_feature(weights: torch.Tensor, f_v: torch.Tensor, frame_mask: torch.Tensor | None = None) -> torch.Tensor:
    """Unnormalised weighted sum of frames. Works batched (``B x V``) or unbatched (``V``)."""
    if frame_mask is not None:
        weights = weights * frame_mask.to(weights.dtype)
    return (weights[..., None] * f_v).sum(-2)


class ScaleBranch(nn.Module):
    def __init__(self, cfg: ModelConfig, memory: GroundingMemory | None):
        super().__init__()
        self.query = LastTokenQuery(cfg) if cfg.ablation == "last_token_query" else ConsensusTransformer(cfg)
        self.attention = ConsensusAttention(cfg)
        self.memory = memory

    def forward(self, f_v, f_t, frame_mask, token_mask):
        f_con = self.query(f_v, f_t, frame_mask, token_mask)
        scores = self.attention(f_con, f_v, frame_mask)
        if self.memory is None:
            w_g = scores.mean(1) * frame_mask.to(scores.dtype)
        else:
            w_g = self.memory(scores, frame_mask)
        return scores, w_g, golden_feature(w_g, f_v, frame_mask)


# ---------------------------------------------------------------- fusion / heads


class MultiViewFusion(nn.Module):
    """Each text token attends over the per-scale golden features (softmax over scales)."""

    def __init__(self, d_t: int, d_v: int):
        super().__init__()
        self.q = nn.Linear(d_t, d_v)
        self.k = nn.Linear(d_v, d_v)

    def forward(self, f_t: torch.Tensor, golden: torch.Tensor):
        scores = self.q(f_t) @ self.k(golden).transpose(1, 2) / math.sqrt(golden.shape[-1])
        attn = torch.softmax(scores, -1)
        return attn @ golden, attn


class SemanticPooling(nn.Module):
    """One multi-head self-attention layer over ``[F_g ; f_t]`` then max over real tokens."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.attn = MultiHeadAttention(dim, dim, dim, heads)

    def forward(self, f_s: torch.Tensor, token_mask: torch.Tensor) -> torch.Tensor:
        allowed = token_mask[:, None, :].expand(-1, f_s.shape[1], -1)
        out, _ = self.attn(f_s, f_s, allowed)
        return out.masked_fill(~token_mask[..., None], float("-inf")).max(1).values


class VCCSA(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        self.text = None if cfg.external_text else TextEmbedding(cfg.vocab_size, cfg.d_t)
        self.video = VideoProjection(cfg.d_raw, cfg.d_v)
        n_conv = 1 if cfg.ablation == "only_single_layer" else cfg.cnn_layers
        self.temporal = MultiScaleTemporal(cfg.d_v, n_conv)
        shared = None
        if cfg.share_grounding and cfg.ablation != "raw_attention_weight":
            shared = GroundingMemory(cfg.heads, cfg.memory_hidden, cfg.bidirectional_memory)
        branches = []
        for _ in cfg.scales:
            if cfg.ablation == "raw_attention_weight":
                memory = None
            else:
                memory = shared or GroundingMemory(cfg.heads, cfg.memory_hidden, cfg.bidirectional_memory)
            branches.append(ScaleBranch(cfg, memory))
        self.branches = nn.ModuleList(branches)
        self.fusion = MultiViewFusion(cfg.d_t, cfg.d_v)
        self.semantic = SemanticPooling(cfg.d_v + cfg.d_t, cfg.heads)
        self.opinion_head = nn.Linear(cfg.d_v + cfg.d_t, cfg.n_opinion)
        self.emotion_head = nn.Linear(cfg.d_v + cfg.d_t, cfg.n_emotion)

    def text_features(self, batch: PaddedBatch) -> torch.Tensor:
        if self.text is None:
            if batch.text_features is None:
                raise DataError("model expects precomputed text features but the batch has none")
            f_t = batch.text_features
            if f_t.shape[-1] != self.config.d_t:
                raise DimMismatch(f"external text features have width {f_t.shape[-1]}, model expects {self.config.d_t}")
            return f_t
        return self.text(batch.tokens)

    def forward(self, batch: PaddedBatch):
        """Returns ``(opinion_logits, emotion_logits, diagnostics)``."""
        f_t = self.text_features(batch)
        f_v0 = self.video(batch.video)
        all_scales = self.temporal(f_v0, batch.video_mask)
        used = [all_scales[i - 1] for i in self.config.scales]
        scores, weights, golden = [], [], []
        for branch, f_v in zip(self.branches, used):
            s, w, g = branch(f_v, f_t, batch.video_mask, batch.token_mask)
            scores.append(s)
            weights.append(w)
            golden.append(g)
        golden_t = torch.stack(golden, 1)
        fused, attn_scale = self.fusion(f_t, golden_t)
        pooled = self.semantic(torch.cat([fused, f_t], -1), batch.token_mask)
        diagnostics = {
            "scales": list(self.config.scales),
            "consensus_attention": scores,
            "grounding_weights": weights,
            "golden": golden_t,
            "attn_scale": attn_scale,
            "pooled": pooled,
        }
        return self.opinion_head(pooled), self.emotion_head(pooled), diagnostics


class TextOnlyModel(nn.Module):
    """Comment-only baseline: embedding, one self-attention layer, max pool, two heads."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        self.text = None if cfg.external_text else TextEmbedding(cfg.vocab_size, cfg.d_t)
        self.semantic = SemanticPooling(cfg.d_t, cfg.heads)
        self.opinion_head = nn.Linear(cfg.d_t, cfg.n_opinion)
        self.emotion_head = nn.Linear(cfg.d_t, cfg.n_emotion)

    text_features = VCCSA.text_features

    def forward(self, batch: PaddedBatch):
        pooled = self.semantic(self.text_features(batch), batch.token_mask)
        return self.opinion_head(pooled), self.emotion_head(pooled), {"pooled": pooled}


MODEL_KINDS = {"VCCSA": VCCSA, "TextOnlyModel": TextOnlyModel}


def build_model(kind: str, cfg: ModelConfig) -> nn.Module:
    if kind not in MODEL_KINDS:
        raise ConfigMismatch(f"unknown model kind {kind!r}")
    return MODEL_KINDS[kind](cfg)


# ---------------------------------------------------------------- loss


def classify(pooled: torch.Tensor, model: VCCSA) -> tuple[torch.Tensor, torch.Tensor]:
    return model.opinion_head(pooled), model.emotion_head(pooled)


def loss(opinion_logits, emotion_logits, opinion_labels, emotion_labels) -> torch.Tensor:
    """Opinion CE plus emotion CE, each averaged over the batch, unit weights."""
    for labels, n, task in ((opinion_labels, opinion_logits.shape[-1], "opinion"),
                            (emotion_labels, emotion_logits.shape[-1], "emotion")):
        if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= n):
            raise LabelOutOfRange(f"{task} labels must lie in [0, {n})")
    return F.cross_entropy(opinion_logits, opinion_labels) + F.cross_entropy(emotion_logits, emotion_labels)


def batch_loss(model: nn.Module, batch: PaddedBatch) -> torch.Tensor:
    op, em, _ = model(batch)
    return loss(op, em, batch.opinion_labels, batch.emotion_labels)


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_FORMAT = "vccsa-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, model: nn.Module, vocab_tokens: list[str] | None = None,
                    meta: dict | None = None) -> None:
    params = {name: p.detach().to(torch.float32).contiguous().clone() for name, p in model.named_parameters()}
    torch.save({
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": type(model).__name__,
        "model_config": asdict(model.config),
        "shapes": {name: list(t.shape) for name, t in params.items()},
        "params": params,
        "vocab": vocab_tokens,
        "meta": meta or {},
    }, path)


def read_checkpoint(path: str | Path) -> dict:
    try:
        ckpt = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises a zoo of types for corrupt files
        raise DataError(f"{path}: unreadable checkpoint ({exc})") from exc
    if not isinstance(ckpt, dict) or ckpt.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if ckpt.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {ckpt.get('version')}")
    return ckpt


def load_state_strict(model: nn.Module, ckpt: dict) -> None:
    """Copy parameters by name; any missing/extra name or shape difference is an error."""
    own = dict(model.named_parameters())
    stored = ckpt["params"]
    if set(own) != set(stored):
        missing, extra = sorted(set(own) - set(stored)), sorted(set(stored) - set(own))
        raise ConfigMismatch(f"parameter names differ (missing {missing[:3]}, unexpected {extra[:3]})")
    with torch.no_grad():
        for name, p in own.items():
            if tuple(stored[name].shape) != tuple(p.shape):
                raise ConfigMismatch(f"{name}: checkpoint shape {tuple(stored[name].shape)} != model {tuple(p.shape)}")
            p.copy_(stored[name].to(p.dtype))


def load_checkpoint(path: str | Path, expected: ModelConfig | None = None) -> tuple[nn.Module, dict]:
    ckpt = read_checkpoint(path)
    cfg = ModelConfig.from_dict(ckpt["model_config"])
    if expected is not None and asdict(expected) != asdict(cfg):
        diff = {k: (v, getattr(expected, k)) for k, v in asdict(cfg).items() if getattr(expected, k) != v}
        raise ConfigMismatch(f"{path}: checkpoint config differs from requested config: {diff}")
    model = build_model(ckpt.get("kind"), cfg)
    load_state_strict(model, ckpt)
    return model, ckpt
