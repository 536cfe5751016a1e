import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import classify_bruteforce
from simreg.errors import InvalidInputError
from simreg.labelmap import (
    LabelMapping,
    build_mapping,
    classify,
    correctness_radius,
    decode,
    encode,
)

FOUR = build_mapping(
    ["irrelevant", "slightly relevant", "moderately relevant", "highly relevant"],
    0.0,
    1.0,
)
NLI = build_mapping(["contradiction", "neutral", "entailment"], 0.0, 1.0)
TWO = build_mapping(["low", "high"], 0.0, 0.5)


class TestBuildMapping:
    def test_four_consecutive_integers(self):
        assert FOUR.nodes == (0.0, 1.0, 2.0, 3.0)
        assert FOUR.d == 1.0

    def test_nli_trio(self):
        assert NLI.nodes == (0.0, 1.0, 2.0)

    def test_non_integer_nodes(self):
        assert TWO.nodes == (0.0, 0.5)
        assert TWO.d == 0.5

    def test_needs_two_categories(self):
        with pytest.raises(InvalidInputError):
            build_mapping(["only"], 0.0, 1.0)

    def test_rejects_nonpositive_interval(self):
        with pytest.raises(InvalidInputError):
            build_mapping(["a", "b"], 0.0, 0.0)
        with pytest.raises(InvalidInputError):
            build_mapping(["a", "b"], 0.0, -1.0)

    def test_uneven_spacing_rejected(self):
        with pytest.raises(InvalidInputError):
            LabelMapping(("a", "b", "c"), (0.0, 1.0, 2.5))

    def test_decreasing_nodes_rejected(self):
        with pytest.raises(InvalidInputError):
            LabelMapping(("a", "b"), (1.0, 0.0))


class TestEncodeDecode:
    def test_entailment_encodes_to_two(self):
        assert encode(NLI, "entailment") == 2.0

    def test_decode_zero(self):
        assert decode(NLI, 0) == "contradiction"

    def test_round_trip(self):
        for i in range(len(NLI.categories)):
            assert encode(NLI, decode(NLI, i)) == NLI.nodes[i]

    def test_unknown_category(self):
        with pytest.raises(InvalidInputError):
            encode(NLI, "paraphrase")

    def test_index_out_of_range(self):
        with pytest.raises(InvalidInputError):
            decode(NLI, 3)
        with pytest.raises(InvalidInputError):
            decode(NLI, -1)


class TestClassify:
    def test_near_top_node(self):
        assert classify(FOUR, 2.875) == "highly relevant"

    def test_rounds_down_to_one(self):
        assert classify(FOUR, 1.333) == "slightly relevant"

    def test_midpoint_rounds_half_up(self):
        assert classify(FOUR, 1.5) == "moderately relevant"

    def test_beyond_terminals_clamps(self):
        assert classify(FOUR, 7.3) == "highly relevant"
        assert classify(FOUR, -2.0) == "irrelevant"

    def test_idempotent_on_nodes(self):
        for cat, node in zip(FOUR.categories, FOUR.nodes):
            assert classify(FOUR, node) == cat

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            classify(FOUR, float("nan"))

    @given(st.floats(-2.0, 5.0))
    def test_agrees_with_bruteforce_scan(self, prediction):
        assert classify(FOUR, prediction) == classify_bruteforce(FOUR, prediction)

    @given(st.floats(-1.0, 2.0))
    def test_agrees_with_bruteforce_on_half_interval_nodes(self, prediction):
        assert classify(TWO, prediction) == classify_bruteforce(TWO, prediction)

    @given(st.floats(-2.0, 5.0), st.floats(0.0, 7.0))
    def test_monotone_step_function(self, p, delta):
        lower = FOUR.categories.index(classify(FOUR, p))
        upper = FOUR.categories.index(classify(FOUR, p + delta))
        assert lower <= upper


class TestCorrectnessRadius:
    def test_unit_interval(self):
        assert correctness_radius(FOUR) == 0.5

    def test_half_interval(self):
        assert correctness_radius(TWO) == 0.25

    def test_interior_nodes_classified_within_radius(self):
        radius = correctness_radius(FOUR)
        for i in (1, 2):  # interior nodes
            node = FOUR.nodes[i]
            for eps in (0.0, 0.1, 0.25, 0.49, radius - 1e-9):
                assert classify(FOUR, node + eps) == FOUR.categories[i]
                assert classify(FOUR, node - eps) == FOUR.categories[i]


class TestSerialization:
    def test_json_document_shape(self):
        doc = FOUR.to_json_dict()
        assert set(doc) == {"categories", "start", "interval"}
        assert doc["start"] == 0.0 and doc["interval"] == 1.0

    def test_round_trip(self):
        doc = json.loads(json.dumps(TWO.to_json_dict()))
        again = LabelMapping.from_json_dict(doc)
        assert again == TWO
