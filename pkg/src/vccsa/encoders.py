"""Text and video input encoders.

The built-in text path is a trainable token embedding plus fixed sinusoidal
positions. Precomputed text features (e.g. from a large pretrained encoder)
can be used instead; they are stored in the same binary layout as video
features and looked up through a comment_id-keyed index.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from pathlib import Path
from typing import Iterable

import numpy as np
import torch
from torch import nn

from .data import (
    CorpusIndex,
    SplitAssignment,
    read_json_map,
    read_video_features,
    write_json,
    write_video_features,
)
from .errors import DataError, DimMismatch, EmptyText, IdOutOfRange, MissingComment

PAD = 0
UNK = 1
_RESERVED = ("<pad>", "<unk>")
_WORD = re.compile(r"\w+")


def words(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; punctuation is dropped."""
    if not text or not text.strip():
        raise EmptyText("cannot tokenize empty text")
    return _WORD.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos = list(_RESERVED)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            if tok in self.stoi:
                raise DataError(f"duplicate vocabulary entry {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    @classmethod
    def build(cls, texts: Iterable[str], min_count: int = 1) -> "Vocabulary":
        counts = Counter(w for text in texts for w in words(text))
        ranked = sorted((t for t, c in counts.items() if c >= min_count and t not in _RESERVED),
                        key=lambda t: (-counts[t], t))
        return cls(ranked)

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, text: str) -> list[int]:
        ids = [self.stoi.get(w, UNK) for w in words(text)]
        # text made only of punctuation still yields one position
        return ids or [UNK]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            for i, tok in enumerate(self.itos):
                fh.write(f"{tok}\t{i}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        entries = []
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, _, idx = line.rpartition("\t")
                if not tok or not idx.isdigit():
                    raise DataError(f"{path}:{lineno}: expected 'token<TAB>id'")
                entries.append((int(idx), tok))
        entries.sort()
        if [i for i, _ in entries] != list(range(len(entries))) or tuple(t for _, t in entries[:2]) != _RESERVED:
            raise DataError(f"{path}: ids must be contiguous from 0 with <pad>, <unk> reserved")
        return cls(t for _, t in entries[2:])


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    return vocab.encode(text)


def build_vocabulary(split: SplitAssignment, corpus: CorpusIndex) -> Vocabulary:
    """Vocabulary from the training part only; dev/test words fall back to UNK."""
    return Vocabulary.build(rec.text for rec in split.members("train", corpus))


def sinusoidal_positions(n: int, dim: int) -> torch.Tensor:
    pos = torch.arange(n, dtype=torch.float64)[:, None]
    freq = torch.exp(-math.log(10000.0) * torch.arange(0, dim, 2, dtype=torch.float64) / dim)
    pe = torch.zeros(n, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * freq)
    pe[:, 1::2] = torch.cos(pos * freq)[:, : dim // 2]
    return pe


class TextEmbedding(nn.Module):
    """Token embedding plus fixed sinusoidal position code: ``f_t``."""

    def __init__(self, vocab_size: int, dim: int, max_len: int = 512):
        super().__init__()
        self.vocab_size = vocab_size
        self.token = nn.Embedding(vocab_size, dim)
        self.register_buffer("positions", sinusoidal_positions(max_len, dim).float(), persistent=False)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.vocab_size):
            raise IdOutOfRange(f"token ids must lie in [0, {self.vocab_size})")
        n = ids.shape[-1]
        if n > self.positions.shape[0]:
            self.positions = sinusoidal_positions(n, self.token.embedding_dim).to(self.positions)
        emb = self.token(ids)
        return emb + self.positions[:n].to(emb.dtype)


class VideoProjection(nn.Module):
    """Per-frame affine map from raw feature width to ``d_v``: ``f_v^0``."""

    def __init__(self, d_raw: int, d_v: int):
        super().__init__()
        self.d_raw = d_raw
        self.linear = nn.Linear(d_raw, d_v)

    def reset_identity(self) -> None:
        if self.linear.in_features != self.linear.out_features:
            raise DimMismatch("identity initialisation needs d_raw == d_v")
        with torch.no_grad():
            self.linear.weight.copy_(torch.eye(self.d_raw))
            self.linear.bias.zero_()

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        if frames.shape[-1] != self.d_raw:
            raise DimMismatch(f"video features have width {frames.shape[-1]}, projection expects {self.d_raw}")
        return self.linear(frames)


class ExternalTextFeatures:
    """Precomputed ``l_t x d_t`` text matrices keyed by comment_id."""

    INDEX = "text_index.json"

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.index = {str(k): str(v) for k, v in read_json_map(self.root / self.INDEX).items()}
        self._cache: dict[str, np.ndarray] = {}

    def __call__(self, comment_id: str) -> np.ndarray:
        if comment_id not in self.index:
            raise MissingComment(f"no external text features for comment {comment_id!r}")
        if comment_id not in self._cache:
            self._cache[comment_id] = read_video_features(self.root / self.index[comment_id], comment_id).frames
        return self._cache[comment_id]

    @property
    def dim(self) -> int:
        return self(next(iter(self.index))).shape[1]

    @staticmethod
    def write(root: str | Path, features: dict[str, np.ndarray], subdir: str = "text_features") -> None:
        root = Path(root)
        (root / subdir).mkdir(parents=True, exist_ok=True)
        index = {}
        for i, (cid, mat) in enumerate(features.items()):
            rel = f"{subdir}/t{i:06d}.csmv"
            write_video_features(root / rel, mat)
            index[cid] = rel
        write_json(root / ExternalTextFeatures.INDEX, index)


def load_external_text_features(root: str | Path, comment_id: str) -> np.ndarray:
    return ExternalTextFeatures(root)(comment_id)
