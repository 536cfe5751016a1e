import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import spearman_bruteforce
from simreg.data import Dataset, SentencePair
from simreg.errors import DegenerateInputError, InvalidInputError
from simreg.evaluation import EvalReport, accuracy, cosine, evaluate, spearman
from simreg.labelmap import build_mapping


class StubModel:
    """Duck-typed model whose score is any function of the pair."""

    def __init__(self, fn, mapping=None):
        self.fn = fn
        self.mapping = mapping

    def predict(self, pair):
        return self.fn(pair)

    def embed(self, text):
        return np.array([1.0 + sum(map(ord, text)) % 17, 1.0])


class TestSpearman:
    def test_perfect_monotone(self):
        assert spearman([10, 20, 30, 40], [1, 2, 3, 4]) == pytest.approx(1.0)

    def test_perfect_inversion(self):
        assert spearman([4, 3, 2, 1], [1, 2, 3, 4]) == pytest.approx(-1.0)

    def test_tied_golds_match_oracle(self):
        value = spearman([1, 3, 2, 4], [1, 2, 2, 4])
        assert value == pytest.approx(0.9486832980505138, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            spearman([1, 2], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(InvalidInputError):
            spearman([1], [1])

    def test_constant_input_raises(self):
        with pytest.raises(DegenerateInputError):
            spearman([1, 1, 1], [1, 2, 3])
        with pytest.raises(DegenerateInputError):
            spearman([1, 2, 3], [5, 5, 5])

    def test_non_finite_input_rejected(self):
        with pytest.raises(InvalidInputError):
            spearman([1.0, float("nan"), 3.0], [1, 2, 3])
        with pytest.raises(InvalidInputError):
            spearman([1, 2, 3], [1.0, float("inf"), 3.0])

    def test_result_never_leaves_unit_interval(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            v = rng.normal(size=8)
            assert -1.0 <= spearman(v, 2.0 * v + 1.0) <= 1.0
            assert -1.0 <= spearman(v, -v) <= 1.0

    def test_random_vectors_match_bruteforce(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            n = int(rng.integers(2, 51))
            preds = rng.normal(size=n)
            golds = rng.normal(size=n)
            if rng.random() < 0.5:  # inject ties
                preds = np.round(preds * 2) / 2
                golds = np.round(golds * 2) / 2
            if np.all(preds == preds[0]) or np.all(golds == golds[0]):
                continue
            expect = spearman_bruteforce(list(preds), list(golds))
            assert spearman(preds, golds) == pytest.approx(expect, abs=1e-12)

    def test_matches_scipy(self):
        from scipy import stats

        rng = np.random.default_rng(23)
        for _ in range(50):
            preds = np.round(rng.normal(size=30), 1)
            golds = np.round(rng.normal(size=30), 1)
            expect = stats.spearmanr(preds, golds).statistic
            assert spearman(preds, golds) == pytest.approx(expect, abs=1e-12)

    @given(st.lists(st.floats(-50, 50), min_size=3, max_size=20, unique=True))
    def test_invariant_under_monotone_transforms(self, values):
        golds = list(range(len(values)))
        base = spearman(values, golds)
        affine = [3.0 * v + 7.0 for v in values]
        cubed = [v ** 3 for v in values]
        exped = [math.exp(v / 50.0) for v in values]
        for transformed in (affine, cubed, exped):
            if len(set(transformed)) < len(values):
                continue  # transform collapsed values; ranks would change
            assert spearman(transformed, golds) == pytest.approx(base, abs=1e-9)

    @given(
        st.lists(st.floats(-10, 10), min_size=2, max_size=15),
        st.lists(st.floats(-10, 10), min_size=2, max_size=15),
    )
    def test_symmetry(self, a, b):
        n = min(len(a), len(b))
        a, b = a[:n], b[:n]
        if n < 2 or len(set(a)) == 1 or len(set(b)) == 1:
            return
        assert spearman(a, b) == pytest.approx(spearman(b, a), abs=1e-12)


class TestCosine:
    def test_identical_vectors(self):
        assert cosine([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)

    def test_forty_five_degrees(self):
        assert cosine([1.0, 0.0], [1.0, 1.0]) == pytest.approx(math.sqrt(2) / 2)

    @given(st.floats(0.01, 100), st.floats(0.01, 100))
    def test_scale_invariance(self, alpha, beta):
        u = np.array([1.0, 2.0, -0.5])
        v = np.array([0.3, -1.0, 2.0])
        assert cosine(alpha * u, beta * v) == pytest.approx(cosine(u, v), abs=1e-9)

    def test_zero_vector_rejected(self):
        with pytest.raises(InvalidInputError):
            cosine([0.0, 0.0], [1.0, 0.0])


def categorical_ds(name, labels, cats=("low", "mid", "high")):
    pairs = tuple(SentencePair(f"s{i}", f"t{i}", label=l) for i, l in enumerate(labels))
    return Dataset(name, pairs, categories=cats)


class TestAccuracy:
    MAPPING = build_mapping(["low", "mid", "high"], 0.0, 1.0)

    def test_exact_node_predictions_score_one(self):
        ds = categorical_ds("d", ["low", "high", "mid"])
        model = StubModel(lambda p: {"low": 0.0, "mid": 1.0, "high": 2.0}[p.label])
        assert accuracy(model, ds, self.MAPPING) == 1.0

    def test_constant_prediction_on_balanced_set(self):
        ds = categorical_ds("d", ["low", "mid", "high"] * 4)
        model = StubModel(lambda p: 1.1)  # always classifies as "mid"
        assert accuracy(model, ds, self.MAPPING) == pytest.approx(1 / 3)

    def test_empty_dataset_is_an_error(self):
        ds = Dataset("d", (), categories=("low", "mid", "high"))
        with pytest.raises(InvalidInputError):
            accuracy(StubModel(lambda p: 0.0), ds, self.MAPPING)

    def test_category_mismatch(self):
        ds = categorical_ds("d", ["x"], cats=("x", "y"))
        with pytest.raises(InvalidInputError):
            accuracy(StubModel(lambda p: 0.0), ds, self.MAPPING)

    def test_continuous_dataset_rejected(self):
        ds = Dataset("d", (SentencePair("a", "b", score=1.0),), score_range=(0, 5))
        with pytest.raises(InvalidInputError):
            accuracy(StubModel(lambda p: 0.0), ds, self.MAPPING)


class TestEvaluate:
    def make_ds(self, name, scores):
        pairs = tuple(
            SentencePair(f"a{i} b{i}", f"c{i}", score=s) for i, s in enumerate(scores)
        )
        return Dataset(name, pairs, score_range=(0.0, 5.0))

    def test_single_dataset_average(self):
        ds = self.make_ds("only", [0.0, 1.0, 2.0, 3.0])
        model = StubModel(lambda p: float(p.s1[1]))  # index digit = rank signal
        report = evaluate(model, [ds])
        assert report.average == report.per_dataset[0].spearman

    def test_seven_dataset_average_is_arithmetic_mean(self):
        rng = np.random.default_rng(3)
        datasets = [
            self.make_ds(f"fixture{i}", list(rng.uniform(0, 5, size=12)))
            for i in range(7)
        ]
        model = StubModel(lambda p: (sum(map(ord, p.s1)) * 2654435761 % 1000) / 1000.0)
        report = evaluate(model, datasets)
        expect = sum(r.spearman for r in report.per_dataset) / 7
        assert report.average == pytest.approx(expect, abs=1e-15)
        per_ds = [
            spearman_bruteforce(
                [model.predict(p) for p in ds.pairs], [p.score for p in ds.pairs]
            )
            for ds in datasets
        ]
        assert report.average == pytest.approx(sum(per_ds) / 7, abs=1e-12)

    def test_categorical_dataset_gets_accuracy(self):
        ds = categorical_ds("c", ["low", "mid", "high"] * 3)
        mapping = build_mapping(["low", "mid", "high"], 0.0, 1.0)
        model = StubModel(
            lambda p: {"low": 0.1, "mid": 0.9, "high": 2.2}[p.label], mapping
        )
        report = evaluate(model, [ds])
        assert report.per_dataset[0].accuracy == 1.0
        assert report.per_dataset[0].spearman > 0.8

    def test_json_round_trip(self):
        ds = self.make_ds("only", [0.0, 1.0, 2.0, 3.0])
        model = StubModel(lambda p: float(p.s1[1]))
        report = evaluate(model, [ds])
        again = EvalReport.from_json_dict(json.loads(report.to_json()))
        assert again == report

    def test_table_mirrors_benchmark_layout(self):
        ds = self.make_ds("only", [0.0, 1.0, 2.0, 3.0])
        model = StubModel(lambda p: float(p.s1[1]))
        table = evaluate(model, [ds]).format_table()
        lines = table.splitlines()
        assert len(lines) == 2  # datasets across the header, one spearman row
        assert "only" in lines[0] and lines[0].rstrip().endswith("Avg.")
        assert lines[1].startswith("spearman")

    def test_table_adds_accuracy_row_for_categorical(self):
        ds = categorical_ds("c", ["low", "mid", "high"] * 3)
        mapping = build_mapping(["low", "mid", "high"], 0.0, 1.0)
        model = StubModel(
            lambda p: {"low": 0.1, "mid": 0.9, "high": 2.2}[p.label], mapping
        )
        lines = evaluate(model, [ds]).format_table().splitlines()
        assert len(lines) == 3
        assert lines[2].startswith("accuracy")

    def test_cosine_mode_uses_embeddings(self):
        ds = self.make_ds("only", [0.0, 1.0, 2.0, 3.0])
        model = StubModel(lambda p: 0.0)  # constant head would raise
        report = evaluate(model, [ds], use_cosine=True)
        assert -1.0 <= report.average <= 1.0

    def test_no_datasets_rejected(self):
        with pytest.raises(InvalidInputError):
            evaluate(StubModel(lambda p: 0.0), [])
