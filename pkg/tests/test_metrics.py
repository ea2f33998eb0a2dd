import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgi.errors import EmptyDataset, LengthMismatch
from lgi.metrics import (
    baseline_predict,
    center_prior_interval,
    evaluate,
    random_intervals,
    tiou,
)


def raster_tiou(a, b, cells=10_000):
    """Rasterized oracle: count overlap cells on a uniform grid of [0, 1]."""
    edges = (np.arange(cells) + 0.5) / cells
    in_a = (edges >= a[0]) & (edges <= a[1])
    in_b = (edges >= b[0]) & (edges <= b[1])
    union = np.logical_or(in_a, in_b).sum()
    if union == 0:
        return 0.0
    return np.logical_and(in_a, in_b).sum() / union


class TestTiou:
    def test_identical(self):
        assert tiou((0.2, 0.8), (0.2, 0.8)) == 1.0

    def test_partial_overlap(self):
        assert tiou((0.2, 0.6), (0.4, 0.8)) == pytest.approx(1 / 3, abs=1e-12)

    def test_disjoint(self):
        assert tiou((0.0, 0.1), (0.5, 0.9)) == 0.0

    def test_zero_length_union(self):
        assert tiou((0.5, 0.5), (0.5, 0.5)) == 0.0

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=100, deadline=None)
    def test_symmetric_and_bounded(self, a, b, c, d):
        x = (min(a, b), max(a, b))
        y = (min(c, d), max(c, d))
        v = tiou(x, y)
        assert 0.0 <= v <= 1.0
        assert v == tiou(y, x)
        if v == 1.0:  # unity only for identical nonzero-length intervals
            assert x == y and x[1] > x[0]

    def test_matches_raster_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = tuple(sorted(rng.uniform(0, 1, 2)))
            b = tuple(sorted(rng.uniform(0, 1, 2)))
            assert abs(tiou(a, b) - raster_tiou(a, b)) <= 1e-3


class TestEvaluate:
    def test_perfect_predictions(self):
        gts = [(0.1, 0.5), (0.3, 0.9)]
        report = evaluate(gts, gts)
        assert all(v == 100.0 for v in report.recall_at.values())
        assert report.miou == 100.0

    def test_strict_threshold(self):
        # tIoU exactly 0.5 does not count at tau = 0.5
        report = evaluate([(0.0, 0.5)], [(0.25, 0.75)])
        assert tiou((0.0, 0.5), (0.25, 0.75)) == pytest.approx(1 / 3)
        report = evaluate([(0.0, 0.5)], [(0.0, 1.0)])
        assert report.recall_at[0.5] == 0.0
        assert report.recall_at[0.3] == 100.0

    def test_hand_counted_table(self):
        # tious {0.2, 0.4, 0.6, 0.8}
        gts = [(0.0, 1.0)] * 4
        preds = [(0.0, 0.2), (0.0, 0.4), (0.0, 0.6), (0.0, 0.8)]
        report = evaluate(preds, gts)
        assert report.recall_at[0.3] == 75.0
        assert report.recall_at[0.5] == 50.0
        assert report.recall_at[0.7] == 25.0
        assert report.miou == pytest.approx(50.0, abs=1e-12)

    def test_recall_monotone_in_threshold(self):
        rng = np.random.default_rng(1)
        preds = [tuple(sorted(rng.uniform(0, 1, 2))) for _ in range(40)]
        gts = [tuple(sorted(rng.uniform(0, 1, 2))) for _ in range(40)]
        report = evaluate(preds, gts)
        assert report.recall_at[0.3] >= report.recall_at[0.5] >= report.recall_at[0.7]

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            evaluate([(0, 1)], [])
        with pytest.raises(EmptyDataset):
            evaluate([], [])

    def test_csv_round_trip(self):
        report = evaluate([(0.0, 0.5)], [(0.25, 0.75)])
        header = report.csv_header().split(",")
        values = report.to_csv_line().split(",")
        assert len(header) == len(values)
        assert header[0] == "n_samples" and values[0] == "1"


class TestBaselines:
    def test_random_is_reproducible(self):
        assert random_intervals(10, seed=1) == random_intervals(10, seed=1)
        assert random_intervals(10, seed=1) != random_intervals(10, seed=2)

    def test_random_intervals_ordered(self):
        for s, e in random_intervals(100, seed=3):
            assert 0.0 <= s <= e <= 1.0

    def test_center_prior_degenerate_distribution(self):
        interval, expected = center_prior_interval([(0.25, 0.75)] * 5)
        assert interval == (0.25, 0.75)
        assert expected == pytest.approx(1.0)

    def test_center_prior_beats_random_on_average(self):
        rng = np.random.default_rng(4)
        gts = [tuple(sorted(rng.uniform(0, 1, 2))) for _ in range(200)]
        prior = baseline_predict("center_prior", 200, reference_gts=gts)
        rand = baseline_predict("random", 200, seed=5)
        assert evaluate(prior, gts).miou >= evaluate(rand, gts).miou

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            baseline_predict("oracle", 3)
