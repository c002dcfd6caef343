import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.analysis import compute_report, emotional_shift_split, shift_buckets
from src.core import DimensionError, make_rng
from src.data import Conversation, Utterance

NAMES = ["happy", "sad", "neutral", "angry"]


def brute_force(y_true, y_pred, c):
    """Per-class precision/recall/F1 and support-weighted F1 from explicit counts."""
    f1s, supports = [], []
    for k in range(c):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == k and p == k)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != k and p == k)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == k and p != k)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
        supports.append(tp + fn)
    weighted = sum(f * s for f, s in zip(f1s, supports)) / sum(supports)
    accuracy = sum(1 for t, p in zip(y_true, y_pred) if t == p) / len(y_true)
    confusion = [[sum(1 for t, p in zip(y_true, y_pred) if t == i and p == j) for j in range(c)] for i in range(c)]
    return accuracy, weighted, f1s, confusion


def test_perfect_predictions():
    y = [0, 1, 2, 3, 2, 1]
    report = compute_report(y, y, NAMES)
    assert report.accuracy == 1.0
    assert report.weighted_f1 == 1.0
    cm = np.array(report.confusion)
    assert_array_equal(cm, np.diag(np.diag(cm)))


def test_single_class_truth_all_correct():
    report = compute_report([2, 2, 2], [2, 2, 2], NAMES)
    assert report.weighted_f1 == 1.0
    assert report.absent_classes == ["happy", "sad", "angry"]
    assert [c.f1 for c in report.per_class] == [0.0, 0.0, 1.0, 0.0]


@pytest.mark.parametrize("seed", range(100))
def test_metrics_match_brute_force_oracle(seed):
    rng = make_rng(seed, "synth")
    c = int(rng.integers(2, 8))
    n = int(rng.integers(1, 200))
    y_true = rng.integers(0, c, size=n).tolist()
    y_pred = rng.integers(0, c, size=n).tolist()
    report = compute_report(y_true, y_pred, [f"c{k}" for k in range(c)])
    accuracy, weighted, f1s, confusion = brute_force(y_true, y_pred, c)
    assert abs(report.accuracy - accuracy) < 1e-12
    assert abs(report.weighted_f1 - weighted) < 1e-12
    assert max(abs(a.f1 - b) for a, b in zip(report.per_class, f1s)) < 1e-12
    assert report.confusion == confusion


def test_confusion_rows_and_per_class_accuracy():
    rng = make_rng(0, "synth")
    y_true = rng.integers(0, 4, size=200)
    y_pred = rng.integers(0, 4, size=200)
    report = compute_report(y_true, y_pred, NAMES)
    cm = np.array(report.confusion)
    assert cm.sum() == 200 == report.num_utterances
    assert_array_equal(cm.sum(axis=1), np.bincount(y_true, minlength=4))
    for k, cls in enumerate(report.per_class):
        assert cls.support == cm[k].sum()
        assert abs(cls.accuracy - cm[k, k] / cm[k].sum()) < 1e-12


def test_report_rejects_mismatched_inputs():
    with pytest.raises(DimensionError):
        compute_report([0, 1], [0], NAMES)
    with pytest.raises(DimensionError):
        compute_report([], [], NAMES)


def test_markdown_table_layout():
    report = compute_report([0, 1, 1, 2], [0, 1, 0, 2], NAMES[:3])
    text = report.to_markdown(title="run")
    header, rule, row = text.splitlines()[:3]
    assert header.startswith("| Model | happy ACC | happy F1")
    assert header.endswith("| ACC | w-F1 |")
    assert row.startswith("| run |")
    assert "75.00" in row


# ----- emotional shift ------------------------------------------------------------

def conversation(speakers, labels):
    return Conversation(id="fixture", utterances=[
        Utterance(text=np.zeros(1), audio=np.zeros(1), visual=np.zeros(1), speaker=s, label=l)
        for s, l in zip(speakers, labels)
    ])


def test_shift_buckets_follow_each_speakers_previous_label():
    # A:0, B:1, A:0 (no shift), B:2 (shift), A:3 (shift), A:3 (no shift)
    conv = conversation([0, 1, 0, 1, 0, 0], [0, 1, 0, 2, 3, 3])
    assert_array_equal(shift_buckets(conv), [-1, -1, 0, 1, 1, 0])


def test_shift_split_accuracy_matches_hand_computation():
    conv = conversation([0, 1, 0, 1, 0, 0], [0, 1, 0, 2, 3, 3])
    predictions = [[0, 0, 0, 2, 1, 1]]
    split = emotional_shift_split([conv], predictions)
    assert split.counts == {"shift": 2, "noshift": 2, "excluded": 2}
    assert split.shift_accuracy == 0.5
    assert split.noshift_accuracy == 0.5


def test_shift_split_with_an_empty_bucket():
    conv = conversation([0, 0, 0], [1, 1, 1])
    split = emotional_shift_split([conv], [[1, 1, 1]])
    assert split.shift_count == 0 and split.shift_accuracy == 0.0
    assert split.noshift_accuracy == 1.0
    with pytest.raises(DimensionError):
        emotional_shift_split([conv], [])
