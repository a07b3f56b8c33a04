"""Synthetic CSMV-shaped corpora with a known text-only accuracy ceiling.

Each video is a sequence of segments. A segment has a topic, a polarity
(+1/-1) and an intensity (low/high), all written into its frames. A comment
names a topic (or the whole video) and carries a stance marker:

* ``same``     -> the comment shares the referent's polarity,
* ``opposite`` -> the comment takes the other side,
* no marker    -> neutral.

Because polarity lives only in the video, a text-only model can do no better
than chance on marked comments, which gives the closed-form ceiling returned
by :func:`bayes_ceiling`.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import CommentRecord, write_comments, write_corpus_index, write_json, write_video_features
from .errors import DanglingReferent, InvalidConfig

INTENSITY = {"low": 0.3, "high": 1.0}
MARKER_WORDS = {"SAME": "same", "OPPOSITE": "opposite"}
MODIFIER_WORDS = {"M_FEAR": "scary", "M_SAD": "sad"}
WHOLE = "WHOLE"
WHOLE_WORD = "overall"

FILLER = (
    "the this that it is was so just really what wow ok well like i you we they "
    "me my your our a an and or but of in on at to for with about here there now "
    "then again still even too very much all some one more lol"
).split()


@dataclass
class GeneratorConfig:
    n_videos: int = 500
    comments_per_video: int = 8
    n_topics: int = 6
    segments_per_video: int = 4
    frames_per_segment: int = 8
    d_raw: int = 16
    rho: float = 0.6
    noise_sigma: float = 0.1
    seed: int = 0
    whole_video_fraction: float = 0.2
    modifier_rate: float = 0.1
    topic_word_rate: float = 0.5
    polarity_bias: float = 0.5
    min_words: int = 4
    max_words: int = 12
    antithetic: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("n_videos", "comments_per_video", "n_topics", "segments_per_video",
                     "frames_per_segment", "d_raw", "min_words"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be a positive integer")
        if self.d_raw < self.n_topics + 2:
            raise InvalidConfig(f"d_raw={self.d_raw} cannot hold {self.n_topics} topic slots + polarity + intensity")
        for name in ("rho", "whole_video_fraction", "modifier_rate", "topic_word_rate", "polarity_bias"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise InvalidConfig("noise_sigma must be nonnegative")
        if self.max_words < self.min_words:
            raise InvalidConfig("max_words must be >= min_words")

    @property
    def n_comments(self) -> int:
        return self.n_videos * self.comments_per_video


def bayes_ceiling(config: GeneratorConfig) -> float:
    """Best opinion accuracy reachable from text alone.

    Unmarked comments are always neutral; marked ones are positive or negative
    with probabilities ``polarity_bias`` / ``1 - polarity_bias`` whatever the
    words are, so the best text-only guess is right ``max(q, 1-q)`` of the time.
    """
    q = config.polarity_bias
    return (1.0 - config.rho) + config.rho * max(q, 1.0 - q)


def _rng(seed: int, stream: int) -> np.random.Generator:
    # counter-based stream per video: generation order does not matter
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def referent_state(video: dict, referent) -> tuple[int, str]:
    """(polarity, intensity) a comment reacts to."""
    segs = video["segments"]
    if referent == WHOLE:
        # a tie takes the opening segment's side so that +1/-1 stay equally likely;
        # intensity is high when at least half the segments are
        total = sum(s["polarity"] for s in segs)
        polarity = segs[0]["polarity"] if total == 0 else (1 if total > 0 else -1)
        n_high = sum(s["intensity"] == "high" for s in segs)
        return polarity, "high" if 2 * n_high >= len(segs) else "low"
    if not isinstance(referent, int) or not 0 <= referent < len(segs):
        raise DanglingReferent(f"video {video['video_id']}: no segment {referent!r}")
    seg = segs[referent]
    return seg["polarity"], seg["intensity"]


def oracle_label(video: dict, comment: dict) -> tuple[str, str]:
    """Labels implied by the latent script of one comment."""
    polarity, intensity = referent_state(video, comment["referent"])
    marker = comment["marker"]
    if marker == "NONE":
        opinion = "neutral"
        emotion = "anticipation" if comment["topic_word"] else "surprise"
    else:
        agree = (marker == "SAME") == (polarity == 1)
        opinion = "positive" if agree else "negative"
        emotion = {("positive", "high"): "joy", ("positive", "low"): "trust",
                   ("negative", "high"): "anger", ("negative", "low"): "disgust"}[opinion, intensity]
    if comment["modifier"] == "M_FEAR":
        emotion = "fear"
    elif comment["modifier"] == "M_SAD":
        emotion = "sadness"
    return opinion, emotion


def _generate_video(cfg: GeneratorConfig, index: int):
    # With antithetic pairing, videos 2m and 2m+1 share one latent draw (stream m)
    # and the odd one has every polarity flipped; frame noise is per video.
    pair, mirrored = divmod(index, 2) if cfg.antithetic else (index, 0)
    rng = _rng(cfg.seed, 2 * pair)
    noise = _rng(cfg.seed, 2 * index + 1)
    video_id = f"v{index:05d}"
    k = cfg.n_topics
    if cfg.segments_per_video <= k:
        topics = rng.choice(k, size=cfg.segments_per_video, replace=False) + 1
    else:
        topics = rng.integers(1, k + 1, size=cfg.segments_per_video)
    segments, blocks = [], []
    for topic in topics:
        polarity = 1 if rng.random() < cfg.polarity_bias else -1
        intensity = "high" if rng.random() < 0.5 else "low"
        if mirrored:
            polarity = -polarity
        segments.append({"topic": int(topic), "polarity": polarity, "intensity": intensity})
        base = np.zeros(cfg.d_raw)
        base[topic - 1] = 1.0
        base[k] = polarity
        base[k + 1] = INTENSITY[intensity]
        blocks.append(base + cfg.noise_sigma * noise.standard_normal((cfg.frames_per_segment, cfg.d_raw)))
    video = {"video_id": video_id, "segments": segments}
    frames = np.concatenate(blocks).astype(np.float32)

    comments, records = [], []
    for j in range(cfg.comments_per_video):
        comment_id = f"{video_id}_c{j:02d}"
        whole = rng.random() < cfg.whole_video_fraction
        referent = WHOLE if whole else int(rng.integers(cfg.segments_per_video))
        if rng.random() < cfg.rho:
            marker = "SAME" if rng.random() < 0.5 else "OPPOSITE"
            topic_word = True
        else:
            marker = "NONE"
            topic_word = bool(rng.random() < cfg.topic_word_rate)
        u = rng.random()
        modifier = "NONE"
        if u < cfg.modifier_rate:
            modifier = "M_FEAR" if u < cfg.modifier_rate / 2 else "M_SAD"

        content = []
        if topic_word:
            content.append(WHOLE_WORD if referent == WHOLE else f"topic_{segments[referent]['topic']}")
        if marker != "NONE":
            content.append(MARKER_WORDS[marker])
        if modifier != "NONE":
            content.append(MODIFIER_WORDS[modifier])
        length = int(rng.integers(cfg.min_words, cfg.max_words + 1))
        words = [FILLER[i] for i in rng.integers(len(FILLER), size=max(length - len(content), 1))]
        for w in content:
            words.insert(int(rng.integers(len(words) + 1)), w)

        latent = {"comment_id": comment_id, "video_id": video_id, "referent": referent,
                  "marker": marker, "modifier": modifier, "topic_word": topic_word}
        opinion, emotion = oracle_label(video, latent)
        comments.append(latent)
        records.append(CommentRecord(comment_id, video_id, " ".join(words), opinion, emotion))
    return video, frames, comments, records


@dataclass
class SyntheticCorpus:
    config: GeneratorConfig
    frames: dict[str, np.ndarray]
    records: list[CommentRecord]
    script: dict


def generate(config: GeneratorConfig) -> SyntheticCorpus:
    config.validate()
    frames, records, videos, comments = {}, [], [], []
    for index in range(config.n_videos):
        video, f, lat, recs = _generate_video(config, index)
        videos.append(video)
        frames[video["video_id"]] = f
        comments.extend(lat)
        records.extend(recs)
    script = {"config": asdict(config), "videos": videos, "comments": comments}
    return SyntheticCorpus(config, frames, records, script)


def write_synthetic(corpus: SyntheticCorpus, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    index = {}
    for vid, f in corpus.frames.items():
        rel = f"features/{vid}.csmv"
        write_video_features(out / rel, f)
        index[vid] = rel
    write_corpus_index(out, index)
    write_comments(out / "comments.jsonl", corpus.records)
    write_json(out / "script.json", corpus.script)
    return out


def generate_corpus(config: GeneratorConfig, out_dir: str | Path, seed: int | None = None) -> SyntheticCorpus:
    """Generate and write a corpus; ``seed`` overrides ``config.seed`` when given."""
    if seed is not None:
        config = GeneratorConfig(**{**asdict(config), "seed": seed})
    corpus = generate(config)
    write_synthetic(corpus, out_dir)
    return corpus


def read_script(path: str | Path) -> dict:
    with Path(path).open(encoding="utf-8") as fh:
        return json.load(fh)


def config_from_dict(d: dict) -> GeneratorConfig:
    known = {f.name for f in fields(GeneratorConfig)}
    unknown = set(d) - known
    if unknown:
        raise InvalidConfig(f"unknown generator keys {sorted(unknown)}")
    return GeneratorConfig(**d)


def segment_frames(config: GeneratorConfig, segment: int) -> range:
    start = segment * config.frames_per_segment
    return range(start, start + config.frames_per_segment)
