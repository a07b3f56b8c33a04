import json
import math

import numpy as np
import pytest
import torch

from vccsa.data import EMOTIONS, OPINIONS
from vccsa.errors import ConfigMismatch, LengthMismatch, NonFiniteLoss, UnknownMode
from vccsa.metrics import aggregate, confusion_matrix, format_table, metrics, report
from vccsa.trainer import (
    Dataset,
    TrainConfig,
    ablate,
    check_compatible,
    evaluate,
    evaluate_checkpoint,
    history_matches,
    mode_label,
    seed_sweep,
    text_only_baseline,
    train,
)

POS, NEU, NEG = (OPINIONS.index(x) for x in ("positive", "neutral", "negative"))


# ---------------------------------------------------------------- metrics


def test_hand_example():
    m = metrics([POS, POS, NEG], [POS, NEG, NEG], OPINIONS)
    assert m.micro_f1 == pytest.approx(2 / 3)
    assert m.per_class["positive"].f1 == pytest.approx(2 / 3)
    assert m.per_class["negative"].f1 == pytest.approx(2 / 3)
    assert m.per_class["neutral"].f1 == 0
    assert round(m.macro_f1, 4) == 0.4444


def test_micro_f1_is_accuracy():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n, k = int(rng.integers(1, 40)), int(rng.choice([3, 8]))
        pred, gold = rng.integers(0, k, n), rng.integers(0, k, n)
        labels = OPINIONS if k == 3 else EMOTIONS
        assert metrics(pred, gold, labels).micro_f1 == pytest.approx(np.mean(pred == gold), abs=1e-12)


def _brute(pred, gold, k):
    """Counts by explicit enumeration of every (gold, predicted) pair."""
    scores = []
    for c in range(k):
        tp = sum(1 for p, g in zip(pred, gold) if p == c and g == c)
        fp = sum(1 for p, g in zip(pred, gold) if p == c and g != c)
        fn = sum(1 for p, g in zip(pred, gold) if p != c and g == c)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        scores.append((p, r, 2 * p * r / (p + r) if p + r else 0.0))
    tp = sum(1 for p, g in zip(pred, gold) if p == g)
    micro = tp / len(gold)
    return micro, *(sum(s[i] for s in scores) / k for i in (2, 1, 0))


@pytest.mark.parametrize("labels", [OPINIONS, EMOTIONS], ids=["opinion", "emotion"])
def test_against_brute_force_counts(labels):
    rng = np.random.default_rng(len(labels))
    k = len(labels)
    for _ in range(50):
        n = int(rng.integers(1, 60))
        # skewed draws so some classes go unpredicted or unseen
        probs = rng.dirichlet(np.full(k, 0.5))
        pred, gold = rng.choice(k, n, p=probs).tolist(), rng.choice(k, n, p=probs).tolist()
        m = metrics(pred, gold, labels)
        micro, mf1, mr, mp = _brute(pred, gold, k)
        for got, want in ((m.micro_f1, micro), (m.macro_f1, mf1), (m.macro_recall, mr), (m.macro_precision, mp)):
            assert abs(got - want) <= 1e-9
        cm = confusion_matrix(pred, gold, k)
        assert all(cm[g, p] == sum(1 for a, b in zip(pred, gold) if (b, a) == (g, p))
                   for g in range(k) for p in range(k))


def test_zero_division_counts_as_zero():
    m = metrics([0, 0], [0, 0], EMOTIONS)
    assert m.micro_f1 == 1.0
    assert m.macro_f1 == pytest.approx(1 / 8)
    assert m.per_class["joy"] == m.per_class["joy"].__class__(0.0, 0.0, 0.0, 0)


def test_perfect_predictions():
    r = report([0, 1, 2], [0, 1, 2], list(range(8)), list(range(8)))
    assert all(v == 1.0 for v in r.flat().values())


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        metrics([0, 1], [0], OPINIONS)


def test_aggregate_single_and_permuted():
    rng = np.random.default_rng(1)
    reps = [report(rng.integers(0, 3, 30), rng.integers(0, 3, 30), rng.integers(0, 8, 30), rng.integers(0, 8, 30))
            for _ in range(4)]
    one = aggregate(reps[:1])
    assert one["mean"] == reps[0].flat() and all(v == 0 for v in one["std"].values())
    a, b = aggregate(reps), aggregate(reps[::-1])
    for k in a["mean"]:
        assert a["mean"][k] == pytest.approx(b["mean"][k], abs=1e-15)
        vals = [r.flat()[k] for r in reps]
        assert a["std"][k] == pytest.approx(np.std(vals, ddof=1))


def test_table_has_all_columns():
    text = format_table({"VC-CSA": report([0], [0], [1], [1]).flat()})
    assert "Op Micro F1" in text and "Em Precision" in text and "100.00" in text


# ---------------------------------------------------------------- training

TINY_MODEL = dict(d_v=16, d_t=16, d_T=16, heads=2, cnn_layers=2, memory_hidden=4)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    from vccsa.data import load_corpus
    from vccsa.synthgen import GeneratorConfig, generate_corpus

    root = tmp_path_factory.mktemp("train")
    generate_corpus(GeneratorConfig(n_videos=30, comments_per_video=6, seed=2), root)
    return Dataset.from_corpus(load_corpus(root), TrainConfig(epochs=3, batch_size=16))


def _train(data, seed=0, epochs=3, **kw):
    cfg = TrainConfig(epochs=epochs, batch_size=16)
    return train(data.model_config(**TINY_MODEL), cfg, data, seed, **kw)


def test_loss_decreases(data):
    hist = _train(data).history
    losses = [h["train_loss"] for h in hist]
    assert losses[-1] < losses[0]


def test_same_seed_same_history(data, tmp_path):
    a = _train(data, seed=4, out_dir=tmp_path / "a")
    b = _train(data, seed=4, out_dir=tmp_path / "b")
    assert history_matches(a.history, b.history)
    assert (tmp_path / "a" / "history.jsonl").read_text() == (tmp_path / "b" / "history.jsonl").read_text()


def test_best_dev_checkpoint(data, tmp_path):
    res = _train(data, seed=1, out_dir=tmp_path)
    dev_scores = [h["dev"]["opinion.micro_f1"] for h in res.history]
    assert res.best_dev == max(dev_scores)
    assert res.best_epoch == 1 + dev_scores.index(max(dev_scores))
    rep = evaluate_checkpoint(tmp_path / "checkpoint.pt", data, "dev")
    assert rep.flat()["opinion.micro_f1"] == pytest.approx(res.best_dev, abs=1e-6)
    lines = (tmp_path / "history.jsonl").read_text().splitlines()
    assert [json.loads(l)["epoch"] for l in lines] == [1, 2, 3]


def test_nan_parameter_raises(data, tmp_path):
    from vccsa.model import VCCSA

    model = VCCSA(data.model_config(**TINY_MODEL))
    with torch.no_grad():
        model.opinion_head.bias[0] = math.nan
    with pytest.raises(NonFiniteLoss):
        train(model.config, TrainConfig(epochs=1, batch_size=16), data, 0, out_dir=tmp_path, model=model)
    assert (tmp_path / "nonfinite_state.pt").exists()


def test_mismatched_checkpoint(data, tmp_path):
    _train(data, epochs=1, out_dir=tmp_path)
    cfg = data.model_config(**TINY_MODEL)
    cfg.d_raw = cfg.d_raw + 8
    with pytest.raises(ConfigMismatch):
        check_compatible(cfg, data)


def test_sweep_single_seed_and_labels(data):
    sweep = seed_sweep(data.model_config(**TINY_MODEL), TrainConfig(epochs=1, batch_size=16), data, seeds=[3])
    assert sweep.summary["n"] == 1 and all(v == 0 for v in sweep.summary["std"].values())
    assert sweep.mean == sweep.runs[0].test.flat()
    assert mode_label("only_last_layer") == "Only last layer"


def test_ablate_rejects_unknown_mode(data):
    with pytest.raises(UnknownMode):
        ablate(data.model_config(**TINY_MODEL), "full_plus", TrainConfig(epochs=1), data, seeds=[0])


def test_ablate_uses_one_scale(data):
    sweep = ablate(data.model_config(**TINY_MODEL), "only_single_layer", TrainConfig(epochs=1, batch_size=16),
                   data, seeds=[0])
    model = sweep.runs[0].model
    assert model.config.ablation == "only_single_layer" and len(model.branches) == 1


def test_text_only_on_fully_decodable_data(tmp_path):
    from vccsa.data import load_corpus
    from vccsa.synthgen import GeneratorConfig, generate_corpus

    generate_corpus(GeneratorConfig(n_videos=60, comments_per_video=5, rho=0.0, seed=3), tmp_path)
    data = Dataset.from_corpus(load_corpus(tmp_path), TrainConfig(epochs=2, batch_size=16))
    sweep = text_only_baseline(TrainConfig(epochs=5, batch_size=16), data, seeds=[0],
                               model_cfg=data.model_config(**TINY_MODEL))
    assert sweep.mean["opinion.micro_f1"] >= 0.95
    names = [n for n, _ in sweep.runs[0].model.named_parameters()]
    assert not any(n.startswith(("video", "temporal", "branches", "fusion")) for n in names)


def test_chance_level_predictions(data):
    class Uniform(torch.nn.Module):
        def forward(self, batch):
            g = torch.Generator().manual_seed(len(batch))
            b = len(batch)
            return torch.rand(b, 3, generator=g), torch.rand(b, 8, generator=g), {}

    rng = np.random.default_rng(0)
    pred, gold = rng.integers(0, 3, 3000), rng.integers(0, 3, 3000)
    assert abs(metrics(pred, gold, OPINIONS).micro_f1 - 1 / 3) < 0.03
    rep = evaluate(Uniform(), data.batches("dev"))
    assert set(rep.flat()) == set(report([0], [0], [0], [0]).flat())
