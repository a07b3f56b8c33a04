import hashlib
from collections import Counter, defaultdict
from pathlib import Path

import numpy as np
import pytest

from vccsa.data import EMOTIONS, load_corpus, read_video_features
from vccsa.errors import DanglingReferent, InvalidConfig
from vccsa.synthgen import (
    FILLER,
    GeneratorConfig,
    WHOLE,
    bayes_ceiling,
    generate,
    generate_corpus,
    oracle_label,
    read_script,
    segment_frames,
)


def _video(*segs):
    return {"video_id": "v", "segments": [{"topic": i + 1, "polarity": p, "intensity": b} for i, (p, b) in enumerate(segs)]}


def _comment(marker, referent=0, modifier="NONE", topic_word=True):
    return {"referent": referent, "marker": marker, "modifier": modifier, "topic_word": topic_word}


def test_same_marker_on_positive_segment():
    assert oracle_label(_video((1, "high")), _comment("SAME"))[0] == "positive"


def test_opposite_marker_on_positive_segment():
    assert oracle_label(_video((1, "high")), _comment("OPPOSITE"))[0] == "negative"


@pytest.mark.parametrize("p", [1, -1])
def test_no_marker_is_neutral(p):
    assert oracle_label(_video((p, "low")), _comment("NONE"))[0] == "neutral"


def test_table_lookup_examples():
    assert oracle_label(_video((-1, "high")), _comment("SAME")) == ("negative", "anger")
    assert oracle_label(_video((-1, "low")), _comment("OPPOSITE", modifier="M_SAD")) == ("positive", "sadness")
    assert oracle_label(_video((1, "low")), _comment("NONE", topic_word=True))[1] == "anticipation"
    assert oracle_label(_video((1, "low")), _comment("NONE", topic_word=False))[1] == "surprise"
    assert oracle_label(_video((1, "low")), _comment("SAME", modifier="M_FEAR"))[1] == "fear"


def test_dangling_referent():
    with pytest.raises(DanglingReferent):
        oracle_label(_video((1, "low")), _comment("SAME", referent=3))


@pytest.mark.parametrize("rho,expected", [(0.0, 1.0), (1.0, 0.5), (0.6, 0.70)])
def test_bayes_ceiling(rho, expected):
    assert bayes_ceiling(GeneratorConfig(rho=rho)) == pytest.approx(expected)


@pytest.mark.parametrize("kw", [{"rho": 1.5}, {"d_raw": 7}, {"n_videos": 0}, {"noise_sigma": -1.0}])
def test_invalid_config(kw):
    with pytest.raises(InvalidConfig):
        GeneratorConfig(**kw)


# independent re-derivation of the labelling rules, written as a flat table
_EMO = {(+1, "high"): "joy", (+1, "low"): "trust", (-1, "high"): "anger", (-1, "low"): "disgust"}


def _rederive(segs, c):
    if c["referent"] == WHOLE:
        total = sum(s["polarity"] for s in segs)
        pol = segs[0]["polarity"] if total == 0 else (-1 if total < 0 else 1)
        inten = "high" if sum(s["intensity"] == "high" for s in segs) * 2 >= len(segs) else "low"
    else:
        pol, inten = segs[c["referent"]]["polarity"], segs[c["referent"]]["intensity"]
    if c["marker"] == "NONE":
        op, stance = "neutral", None
        em = "anticipation" if c["topic_word"] else "surprise"
    else:
        stance = pol if c["marker"] == "SAME" else -pol
        op = "positive" if stance > 0 else "negative"
        em = _EMO[stance, inten]
    em = {"M_FEAR": "fear", "M_SAD": "sadness"}.get(c["modifier"], em)
    return op, em


def test_stored_labels_match_script_and_frames(tmp_path):
    cfg = GeneratorConfig(n_videos=100, seed=3)
    generate_corpus(cfg, tmp_path)
    corpus = load_corpus(tmp_path)
    script = read_script(tmp_path / "script.json")
    videos = {v["video_id"]: v for v in script["videos"]}
    k = cfg.n_topics
    for vid, v in videos.items():
        frames = read_video_features(corpus.feature_path(vid)).frames
        for s, seg in enumerate(v["segments"]):
            block = frames[list(segment_frames(cfg, s))].mean(0)
            assert int(np.argmax(block[:k])) + 1 == seg["topic"]
            assert np.sign(block[k]) == seg["polarity"]
            assert (block[k + 1] > 0.65) == (seg["intensity"] == "high")
    stored = {c.comment_id: (c.opinion, c.emotion) for c in corpus.comments}
    agree = sum(_rederive(videos[c["video_id"]]["segments"], c) == stored[c["comment_id"]] for c in script["comments"])
    assert agree == len(stored) == 800


def test_deterministic_bytes(tmp_path):
    cfg = GeneratorConfig(n_videos=20, seed=5)

    def digest(root: Path):
        h = hashlib.sha256()
        for p in sorted(root.rglob("*")):
            if p.is_file():
                h.update(str(p.relative_to(root)).encode())
                h.update(p.read_bytes())
        return h.hexdigest()

    generate_corpus(cfg, tmp_path / "a")
    generate_corpus(cfg, tmp_path / "b")
    assert digest(tmp_path / "a") == digest(tmp_path / "b")
    generate_corpus(cfg, tmp_path / "c", seed=6)
    assert digest(tmp_path / "c") != digest(tmp_path / "a")


def test_per_video_streams_are_order_independent():
    small = generate(GeneratorConfig(n_videos=3, seed=9))
    big = generate(GeneratorConfig(n_videos=8, seed=9))
    for vid in small.frames:
        np.testing.assert_array_equal(small.frames[vid], big.frames[vid])
    assert small.records == big.records[: len(small.records)]


@pytest.fixture(scope="module")
def big_corpus():
    return generate(GeneratorConfig(n_videos=1250, comments_per_video=8, seed=1))


def test_text_only_lookup_reaches_ceiling(big_corpus):
    """Majority opinion per content-word multiset, fit on half, scored on the other half."""
    filler = set(FILLER)
    keys = [tuple(sorted(w for w in r.text.split() if w not in filler)) for r in big_corpus.records]
    labels = [r.opinion for r in big_corpus.records]
    half = len(keys) // 2
    table = defaultdict(Counter)
    for key, lab in zip(keys[:half], labels[:half]):
        table[key][lab] += 1
    fallback = Counter(labels[:half]).most_common(1)[0][0]
    hits = sum((table[k].most_common(1)[0][0] if table[k] else fallback) == lab
               for k, lab in zip(keys[half:], labels[half:]))
    acc = hits / (len(keys) - half)
    assert len(keys) == 10_000
    assert abs(acc - bayes_ceiling(big_corpus.config)) <= 0.03


def test_all_emotions_occur(big_corpus):
    seen = Counter(r.emotion for r in big_corpus.records)
    assert set(seen) == set(EMOTIONS)


def test_whole_video_needs_aggregation(big_corpus):
    """For mixed-polarity videos some segment always disagrees with the whole-video label."""
    videos = {v["video_id"]: v for v in big_corpus.script["videos"]}
    checked = 0
    for c in big_corpus.script["comments"]:
        if c["referent"] != WHOLE or c["marker"] == "NONE":
            continue
        segs = videos[c["video_id"]]["segments"]
        if len({s["polarity"] for s in segs}) < 2:
            continue
        label = oracle_label(videos[c["video_id"]], c)[0]
        per_segment = {oracle_label(videos[c["video_id"]], {**c, "referent": i})[0] for i in range(len(segs))}
        assert per_segment - {label}
        checked += 1
    assert checked > 50


def test_default_corpus_shape():
    cfg = GeneratorConfig()
    assert (cfg.n_videos, cfg.n_comments, cfg.n_topics, cfg.d_raw, cfg.rho) == (500, 4000, 6, 16, 0.6)


def test_comment_lengths_and_context_fraction(big_corpus):
    lengths = [len(r.text.split()) for r in big_corpus.records]
    assert min(lengths) >= 4 and max(lengths) <= 12
    marked = np.mean([c["marker"] != "NONE" for c in big_corpus.script["comments"]])
    assert abs(marked - 0.6) < 0.02
    whole = np.mean([c["referent"] == WHOLE for c in big_corpus.script["comments"] if c["marker"] != "NONE"])
    assert abs(whole - 0.2) < 0.02


def test_twin_videos_share_texts_and_flip_polarity():
    corpus = generate(GeneratorConfig(n_videos=6, seed=2))
    videos = corpus.script["videos"]
    by_video = defaultdict(list)
    for r in corpus.records:
        by_video[r.video_id].append(r)
    flip = {"positive": "negative", "negative": "positive", "neutral": "neutral"}
    for a, b in zip(videos[0::2], videos[1::2]):
        assert [s["topic"] for s in a["segments"]] == [s["topic"] for s in b["segments"]]
        assert [s["polarity"] for s in a["segments"]] == [-s["polarity"] for s in b["segments"]]
        ra, rb = by_video[a["video_id"]], by_video[b["video_id"]]
        assert [r.text for r in ra] == [r.text for r in rb]
        assert [flip[r.opinion] for r in ra] == [r.opinion for r in rb]
        assert not np.array_equal(corpus.frames[a["video_id"]], corpus.frames[b["video_id"]])


def test_whole_video_tie_takes_first_segment():
    tie = _video((1, "low"), (-1, "low"), (-1, "low"), (1, "low"))
    assert oracle_label(tie, _comment("SAME", WHOLE))[0] == "positive"
    flipped = _video((-1, "low"), (1, "low"), (1, "low"), (-1, "low"))
    assert oracle_label(flipped, _comment("SAME", WHOLE))[0] == "negative"
