"""CSMV-format corpora: feature files, comment records, splits and batches.

On-disk layout of a corpus directory::

    index.json       video_id -> relative feature-file path
    comments.jsonl   one comment record per line
    features/*.csmv  one binary feature file per video
"""
from __future__ import annotations

import json
import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch

from .errors import (
    BadMagic,
    DataError,
    DuplicateId,
    EmptyCorpus,
    IntegrityError,
    LengthMismatch,
    MissingComment,
    MissingField,
    NonFinite,
    Truncated,
    UnknownLabel,
)

OPINIONS = ("positive", "neutral", "negative")
EMOTIONS = ("fear", "disgust", "anger", "sadness", "joy", "trust", "anticipation", "surprise")
LABELS = {"opinion": OPINIONS, "emotion": EMOTIONS}

MAGIC = b"CSMV"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_DTYPE = np.dtype("<f4")

PARTS = ("train", "dev", "test")
GRANULARITIES = ("comment", "video")
DEFAULT_V_CAP = 200
DEFAULT_T_CAP = 64


# ---------------------------------------------------------------- features


@dataclass
class VideoFeatures:
    video_id: str
    frames: np.ndarray

    @property
    def v_l(self) -> int:
        return self.frames.shape[0]

    @property
    def d_raw(self) -> int:
        return self.frames.shape[1]


def encode_features(frames: np.ndarray) -> bytes:
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise DataError(f"feature matrix must be 2-D and non-empty, got shape {frames.shape}")
    payload = np.ascontiguousarray(frames, dtype=_DTYPE)
    if not np.isfinite(payload).all():
        raise NonFinite("refusing to write non-finite features")
    return _HEADER.pack(MAGIC, VERSION, *payload.shape) + payload.tobytes()


def decode_features(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(buf) < _HEADER.size:
        if buf[:4] != MAGIC[: len(buf)]:
            raise BadMagic(f"{source}: not a CSMV feature file")
        raise Truncated(f"{source}: header is {len(buf)} bytes, expected {_HEADER.size}")
    magic, version, v_l, d_raw = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise BadMagic(f"{source}: unsupported version {version}")
    expected = v_l * d_raw * _DTYPE.itemsize
    got = len(buf) - _HEADER.size
    if got < expected:
        raise Truncated(f"{source}: payload has {got} bytes, header declares {expected}")
    if got > expected:
        raise DataError(f"{source}: {got - expected} trailing bytes after payload")
    if v_l < 1 or d_raw < 1:
        raise DataError(f"{source}: empty matrix ({v_l}x{d_raw})")
    frames = np.frombuffer(buf, dtype=_DTYPE, offset=_HEADER.size).reshape(v_l, d_raw)
    if not np.isfinite(frames).all():
        raise NonFinite(f"{source}: payload contains NaN or Inf")
    return frames.astype(np.float32)


def write_video_features(path: str | Path, frames: np.ndarray) -> None:
    Path(path).write_bytes(encode_features(frames))


def read_video_features(path: str | Path, video_id: str | None = None) -> VideoFeatures:
    path = Path(path)
    frames = decode_features(path.read_bytes(), str(path))
    return VideoFeatures(video_id if video_id is not None else path.stem, frames)


# ---------------------------------------------------------------- comments


@dataclass(frozen=True)
class CommentRecord:
    comment_id: str
    video_id: str
    text: str
    opinion: str
    emotion: str

    def __post_init__(self):
        if self.opinion not in OPINIONS:
            raise UnknownLabel(f"comment {self.comment_id}: unknown opinion {self.opinion!r}")
        if self.emotion not in EMOTIONS:
            raise UnknownLabel(f"comment {self.comment_id}: unknown emotion {self.emotion!r}")
        if not self.text.strip():
            raise DataError(f"comment {self.comment_id}: empty text")

    @property
    def opinion_id(self) -> int:
        return OPINIONS.index(self.opinion)

    @property
    def emotion_id(self) -> int:
        return EMOTIONS.index(self.emotion)


_COMMENT_KEYS = ("comment_id", "video_id", "text", "opinion", "emotion")


def parse_comment(line: str, where: str = "") -> CommentRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"{where}: malformed record ({exc})") from exc
    if not isinstance(obj, dict):
        raise DataError(f"{where}: record is not an object")
    missing = [k for k in _COMMENT_KEYS if k not in obj]
    if missing:
        raise MissingField(f"{where}: missing field(s) {', '.join(missing)}")
    return CommentRecord(**{k: str(obj[k]) for k in _COMMENT_KEYS})


def read_comments(path: str | Path) -> list[CommentRecord]:
    path = Path(path)
    records, seen = [], set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = parse_comment(line, f"{path}:{lineno}")
            if rec.comment_id in seen:
                raise DuplicateId(f"{path}:{lineno}: duplicate comment_id {rec.comment_id!r}")
            seen.add(rec.comment_id)
            records.append(rec)
    return records


def write_comments(path: str | Path, records: Iterable[CommentRecord]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps({k: getattr(rec, k) for k in _COMMENT_KEYS}, ensure_ascii=False))
            fh.write("\n")


# ---------------------------------------------------------------- corpus


def _no_duplicate_keys(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise DuplicateId(f"duplicate key {k!r}")
        out[k] = v
    return out


def read_json_map(path: str | Path) -> dict:
    with Path(path).open(encoding="utf-8") as fh:
        return json.load(fh, object_pairs_hook=_no_duplicate_keys)


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class CorpusIndex:
    root: Path
    videos: dict[str, str]
    comments: list[CommentRecord]

    def feature_path(self, video_id: str) -> Path:
        return self.root / self.videos[video_id]

    def comment(self, comment_id: str) -> CommentRecord:
        for rec in self.comments:
            if rec.comment_id == comment_id:
                return rec
        raise MissingComment(f"no comment with id {comment_id!r}")


def load_corpus(root: str | Path) -> CorpusIndex:
    root = Path(root)
    index_path, comments_path = root / "index.json", root / "comments.jsonl"
    for p in (index_path, comments_path):
        if not p.exists():
            raise DataError(f"missing corpus file {p}")
    videos = read_json_map(index_path)
    return CorpusIndex(root, {str(k): str(v) for k, v in videos.items()}, read_comments(comments_path))


def write_corpus_index(root: str | Path, videos: dict[str, str]) -> None:
    write_json(Path(root) / "index.json", videos)


def validate_corpus(corpus: CorpusIndex, check_features: bool = True) -> None:
    """Raise on the first integrity violation, naming the offender."""
    if not corpus.comments:
        raise EmptyCorpus("corpus has no comments")
    for rec in corpus.comments:
        if rec.video_id not in corpus.videos:
            raise IntegrityError(f"comment {rec.comment_id}: dangling video_id {rec.video_id!r}")
    if check_features:
        d_raw = None
        for vid in sorted(corpus.videos):
            path = corpus.feature_path(vid)
            if not path.exists():
                raise IntegrityError(f"video {vid}: feature file {path} not found")
            try:
                feats = read_video_features(path, vid)
            except DataError as exc:
                raise type(exc)(f"video {vid}: {exc}") from exc
            if d_raw is None:
                d_raw = feats.d_raw
            elif feats.d_raw != d_raw:
                raise IntegrityError(f"video {vid}: d_raw {feats.d_raw} differs from corpus width {d_raw}")


class FeatureStore:
    """Lazily loaded, cached video features for one corpus."""

    def __init__(self, corpus: CorpusIndex):
        self.corpus = corpus
        self._cache: dict[str, np.ndarray] = {}

    def __getitem__(self, video_id: str) -> np.ndarray:
        if video_id not in self._cache:
            if video_id not in self.corpus.videos:
                raise IntegrityError(f"unknown video_id {video_id!r}")
            self._cache[video_id] = read_video_features(self.corpus.feature_path(video_id), video_id).frames
        return self._cache[video_id]

    @property
    def d_raw(self) -> int:
        first = next(iter(sorted(self.corpus.videos)))
        return self[first].shape[1]


# ---------------------------------------------------------------- splits


def split_sizes(n: int) -> tuple[int, int, int]:
    """7:1:2 sizes: dev and test rounded half-up, train takes the remainder."""
    n_dev = (n + 5) // 10
    n_test = (2 * n + 5) // 10
    return n - n_dev - n_test, n_dev, n_test


@dataclass
class SplitAssignment:
    assignment: dict[str, str]
    seed: int
    granularity: str = "comment"

    def members(self, part: str, corpus: CorpusIndex) -> list[CommentRecord]:
        if part not in PARTS:
            raise DataError(f"unknown split part {part!r}")
        return [rec for rec in corpus.comments if self.assignment.get(rec.comment_id) == part]

    def sizes(self) -> dict[str, int]:
        counts = Counter(self.assignment.values())
        return {p: counts.get(p, 0) for p in PARTS}


def split_corpus(corpus: CorpusIndex, seed: int, granularity: str = "comment") -> SplitAssignment:
    if not corpus.comments:
        raise EmptyCorpus("cannot split an empty corpus")
    if granularity not in GRANULARITIES:
        raise DataError(f"unknown split granularity {granularity!r}")
    if granularity == "comment":
        units = [rec.comment_id for rec in corpus.comments]
    else:
        units = list(dict.fromkeys(rec.video_id for rec in corpus.comments))
    order = np.random.default_rng(seed).permutation(len(units))
    n_train, n_dev, _ = split_sizes(len(units))
    unit_part = {}
    for rank, idx in enumerate(order):
        unit_part[units[idx]] = "train" if rank < n_train else "dev" if rank < n_train + n_dev else "test"
    key = (lambda r: r.comment_id) if granularity == "comment" else (lambda r: r.video_id)
    assignment = {rec.comment_id: unit_part[key(rec)] for rec in corpus.comments}
    return SplitAssignment(assignment, seed, granularity)


def write_split(path: str | Path, split: SplitAssignment) -> None:
    write_json(path, {"seed": split.seed, "granularity": split.granularity, "assignment": split.assignment})


def read_split(path: str | Path) -> SplitAssignment:
    obj = read_json_map(path)
    for key in ("seed", "granularity", "assignment"):
        if key not in obj:
            raise MissingField(f"{path}: split file lacks {key!r}")
    bad = {v for v in obj["assignment"].values() if v not in PARTS}
    if bad:
        raise DataError(f"{path}: unknown split part(s) {sorted(bad)}")
    return SplitAssignment(dict(obj["assignment"]), int(obj["seed"]), obj["granularity"])


# ---------------------------------------------------------------- batches


@dataclass
class PaddedBatch:
    comment_ids: list[str]
    video: torch.Tensor
    video_mask: torch.Tensor
    tokens: torch.Tensor
    token_mask: torch.Tensor
    opinion_labels: torch.Tensor
    emotion_labels: torch.Tensor
    text_features: torch.Tensor | None = None

    def __len__(self) -> int:
        return len(self.comment_ids)

    def to(self, dtype: torch.dtype) -> "PaddedBatch":
        tf = None if self.text_features is None else self.text_features.to(dtype)
        return PaddedBatch(self.comment_ids, self.video.to(dtype), self.video_mask, self.tokens,
                           self.token_mask, self.opinion_labels, self.emotion_labels, tf)


@dataclass
class TruncationReport:
    videos_truncated: int = 0
    comments_truncated: int = 0
    frames_dropped: int = 0
    tokens_dropped: int = 0


def collate(
    comment_ids: Sequence[str],
    frames: Sequence[np.ndarray],
    token_ids: Sequence[Sequence[int]],
    opinions: Sequence[int],
    emotions: Sequence[int],
    text_features: Sequence[np.ndarray] | None = None,
) -> PaddedBatch:
    """Pad already-truncated rows into one batch. PAD id is 0; padded frames are zero."""
    b = len(comment_ids)
    v_max = max(f.shape[0] for f in frames)
    t_max = max(len(t) for t in token_ids)
    d_raw = frames[0].shape[1]
    video = torch.zeros(b, v_max, d_raw)
    video_mask = torch.zeros(b, v_max, dtype=torch.bool)
    tokens = torch.zeros(b, t_max, dtype=torch.long)
    token_mask = torch.zeros(b, t_max, dtype=torch.bool)
    for r in range(b):
        v = frames[r].shape[0]
        video[r, :v] = torch.from_numpy(np.asarray(frames[r], dtype=np.float32))
        video_mask[r, :v] = True
        t = len(token_ids[r])
        tokens[r, :t] = torch.as_tensor(token_ids[r], dtype=torch.long)
        token_mask[r, :t] = True
    tf = None
    if text_features is not None:
        tf = torch.zeros(b, t_max, text_features[0].shape[1])
        for r, feats in enumerate(text_features):
            tf[r, : feats.shape[0]] = torch.from_numpy(np.asarray(feats, dtype=np.float32))
    return PaddedBatch(list(comment_ids), video, video_mask, tokens, token_mask,
                       torch.as_tensor(opinions, dtype=torch.long),
                       torch.as_tensor(emotions, dtype=torch.long), tf)


def make_batches(
    split: SplitAssignment,
    part: str,
    corpus: CorpusIndex,
    vocab,
    batch_size: int = 32,
    v_cap: int = DEFAULT_V_CAP,
    t_cap: int = DEFAULT_T_CAP,
    shuffle_seed: int | None = None,
    store: FeatureStore | None = None,
    text_features: Callable[[str], np.ndarray] | None = None,
) -> tuple[list[PaddedBatch], TruncationReport]:
    """Cut one split part into padded batches.

    ``vocab`` is anything with an ``encode(text) -> list[int]`` method.
    ``text_features`` optionally maps a comment_id to a precomputed
    ``l_t x d_t`` matrix which is then carried alongside the token ids.
    Order is corpus order, permuted by ``shuffle_seed`` when given.
    """
    if batch_size < 1:
        raise DataError("batch_size must be positive")
    store = store or FeatureStore(corpus)
    members = split.members(part, corpus)
    if shuffle_seed is not None:
        perm = np.random.default_rng(shuffle_seed).permutation(len(members))
        members = [members[i] for i in perm]
    report = TruncationReport()
    batches = []
    for start in range(0, len(members), batch_size):
        chunk = members[start : start + batch_size]
        frames, ids, feats = [], [], []
        for rec in chunk:
            f = store[rec.video_id]
            if f.shape[0] > v_cap:
                report.videos_truncated += 1
                report.frames_dropped += f.shape[0] - v_cap
                f = f[:v_cap]
            frames.append(f)
            tok = vocab.encode(rec.text)
            if len(tok) > t_cap:
                report.comments_truncated += 1
                report.tokens_dropped += len(tok) - t_cap
                tok = tok[:t_cap]
            ids.append(tok)
            if text_features is not None:
                feats.append(text_features(rec.comment_id)[:t_cap])
        if text_features is not None:
            # external features define the text length; keep token ids aligned with them
            ids = [(tok + [0] * len(tf))[: len(tf)] for tok, tf in zip(ids, feats)]
        batches.append(collate([r.comment_id for r in chunk], frames, ids,
                               [r.opinion_id for r in chunk], [r.emotion_id for r in chunk],
                               feats if text_features is not None else None))
    return batches, report


# ---------------------------------------------------------------- QA


def label_distribution(comments: CorpusIndex | Sequence[CommentRecord]) -> dict[str, dict[str, float]]:
    if isinstance(comments, CorpusIndex):
        comments = comments.comments
    if not comments:
        raise EmptyCorpus("cannot compute a label distribution of an empty corpus")
    n = len(comments)
    out = {}
    for task, labels in LABELS.items():
        counts = Counter(getattr(rec, task) for rec in comments)
        out[task] = {lab: counts.get(lab, 0) / n for lab in labels}
    return out


CONSISTENCY_THRESHOLD = 0.10
VALIDATION_FRACTION = 0.20


def consistency_check(original: Sequence, validator_a: Sequence, validator_b: Sequence,
                      threshold: float = CONSISTENCY_THRESHOLD) -> tuple[float, bool]:
    """Fraction of items where the original label disagrees with either validator.

    The batch is flagged for re-labelling only when the rate strictly exceeds
    ``threshold``.
    """
    if not (len(original) == len(validator_a) == len(validator_b)):
        raise LengthMismatch(
            f"label lists differ in length: {len(original)}, {len(validator_a)}, {len(validator_b)}")
    if not original:
        return 0.0, False
    bad = sum(o != a or o != b for o, a, b in zip(original, validator_a, validator_b))
    rate = bad / len(original)
    return rate, rate > threshold


def sample_for_validation(comments: Sequence[CommentRecord], seed: int,
                          fraction: float = VALIDATION_FRACTION,
                          group: Callable[[CommentRecord], str] = lambda r: r.video_id) -> list[str]:
    """Draw ``fraction`` of the comments of every group for cross-validation."""
    rng = np.random.default_rng(seed)
    groups: dict[str, list[str]] = {}
    for rec in comments:
        groups.setdefault(group(rec), []).append(rec.comment_id)
    picked = []
    for key in sorted(groups):
        ids = groups[key]
        k = math.floor(fraction * len(ids) + 0.5)
        picked.extend(ids[i] for i in sorted(rng.choice(len(ids), size=k, replace=False)))
    return picked

