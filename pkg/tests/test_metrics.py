import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tumorgraph import metrics

from oracles import confusion_tally

cm_strategy = st.lists(st.integers(0, 40), min_size=9, max_size=9).map(
    lambda v: np.array(v, dtype=np.int64).reshape(3, 3)
)


class TestConfusion:
    def test_perfect_predictions_are_diagonal(self):
        labels = [0] * 5 + [1] * 3 + [2] * 2
        cm = metrics.confusion(labels, labels)
        assert np.array_equal(cm, np.diag([5, 3, 2]))

    def test_total_conserved(self, rng):
        preds = rng.integers(0, 3, 50)
        labels = rng.integers(0, 3, 50)
        assert metrics.confusion(preds, labels).sum() == 50

    def test_six_sample_hand_case_matches_tally_oracle(self):
        preds = [0, 1, 1, 2, 0, 2]
        labels = [0, 1, 2, 2, 1, 0]
        cm = metrics.confusion(preds, labels)
        assert np.array_equal(cm, confusion_tally(preds, labels))
        assert cm[2, 1] == 1 and cm[0, 0] == 1

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            metrics.confusion([0, 3], [0, 1])
        with pytest.raises(ValueError):
            metrics.confusion([0, 1], [-1, 1])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            metrics.confusion([0, 1], [0, 1, 2])


class TestPrecisionRecall:
    def test_perfect_diagonal_gives_ones(self):
        cm = np.diag([5, 3, 2])
        for averaging in ("macro", "micro"):
            p, r = metrics.precision_recall(cm, averaging)
            assert p == 1.0 and r == 1.0

    def test_all_forced_to_class_zero(self):
        cm = np.array([[10, 0, 0], [10, 0, 0], [10, 0, 0]])
        p, r = metrics.precision_recall(cm, "macro")
        assert p == pytest.approx(1 / 9)
        assert r == pytest.approx(1 / 3)

    @given(cm_strategy)
    @settings(max_examples=100, deadline=None)
    def test_micro_equals_accuracy(self, cm):
        p, r = metrics.precision_recall(cm, "micro")
        assert p == r == metrics.accuracy(cm)

    def test_zero_denominator_rule(self):
        cm = np.zeros((3, 3), dtype=np.int64)
        cm[0, 0] = 4  # classes 1 and 2 never appear anywhere
        p, r = metrics.per_class_precision_recall(cm)
        assert p[1] == p[2] == r[1] == r[2] == 0.0

    def test_accuracy_equals_direct_mean(self, rng):
        preds = rng.integers(0, 3, 200)
        labels = rng.integers(0, 3, 200)
        cm = metrics.confusion(preds, labels)
        assert metrics.accuracy(cm) == pytest.approx(float(np.mean(preds == labels)))


class TestF1:
    def test_reference_training_pair(self):
        assert metrics.f1(0.9816, 0.9755) == pytest.approx(97.85, abs=0.01)

    def test_reference_validation_pair(self):
        assert metrics.f1(0.9639, 0.9592) == pytest.approx(96.15, abs=0.01)

    def test_perfect_scores(self):
        assert metrics.f1(1.0, 1.0) == 100.0

    def test_zero_rule(self):
        assert metrics.f1(0.0, 0.0) == 0.0

    @given(st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=120, deadline=None)
    def test_symmetry_and_harmonic_identity(self, p, r):
        assert metrics.f1(p, r) == metrics.f1(r, p)
        if p + r > 0:
            harmonic = 2.0 / (1.0 / p + 1.0 / r) if p > 0 and r > 0 else 0.0
            assert abs(metrics.f1(p, r) / 100.0 - harmonic) <= 1e-12


class TestSummarize:
    def test_record_fields(self, rng):
        preds = rng.integers(0, 3, 90)
        labels = rng.integers(0, 3, 90)
        cm = metrics.confusion(preds, labels)
        rec = metrics.summarize(cm)
        assert set(rec.per_class) == {"glioma", "meningioma", "pituitary"}
        assert 0.0 <= rec.accuracy <= 1.0
        assert rec.micro_precision == rec.micro_recall == rec.accuracy
        payload = rec.to_json_dict()
        assert set(payload) == {"accuracy", "macro_precision", "macro_recall",
                                "macro_f1", "micro_precision", "per_class"}
