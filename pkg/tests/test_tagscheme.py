import itertools

import pytest
from hypothesis import given, settings, strategies as st

from seqtag.tagscheme import (
    InvalidTagSequence, SegmentSpan, TagScheme, convert_scheme, entity_f1, extract_segments,
    first_invalid, is_valid, render_segments, repair_invalid, token_accuracy,
)

SCHEMES = (TagScheme.BIO, TagScheme.IOB, TagScheme.IOBES)
ALL_TAGS = ["O"] + [f"{p}-{c}" for p in "BIES" for c in ("A", "B")]


def scheme_tags(scheme):
    prefixes = "BIES" if scheme is TagScheme.IOBES else "BI"
    return ["O"] + [f"{p}-{c}" for p in prefixes for c in ("A", "B")]


def valid_sequences(scheme, max_len=5):
    for n in range(1, max_len + 1):
        for seq in itertools.product(scheme_tags(scheme), repeat=n):
            if is_valid(seq, scheme):
                yield list(seq)


def test_extract_examples():
    assert extract_segments(["B-NP", "I-NP", "O"], "BIO") == [SegmentSpan(0, 1, "NP")]
    assert extract_segments(["S-PER", "O", "B-LOC", "E-LOC"], "IOBES") == [
        SegmentSpan(0, 0, "PER"), SegmentSpan(2, 3, "LOC")]
    assert extract_segments(["O", "O"], "BIO") == []


def test_extract_iob_adjacent_segments():
    assert extract_segments(["I-NP", "I-NP", "B-NP", "I-NP"], "IOB") == [
        SegmentSpan(0, 1, "NP"), SegmentSpan(2, 3, "NP")]
    # a class change opens a new segment under IOB without a B
    assert extract_segments(["I-A", "I-B"], "IOB") == [SegmentSpan(0, 0, "A"), SegmentSpan(1, 1, "B")]


def test_extract_invalid_raises_with_position():
    with pytest.raises(InvalidTagSequence) as err:
        extract_segments(["O", "I-PER"], "BIO")
    assert err.value.position == 1


def test_convert_examples():
    assert convert_scheme(["I-NP", "I-NP", "B-NP", "I-NP"], "IOB", "BIO") == ["B-NP", "I-NP", "B-NP", "I-NP"]
    assert convert_scheme(["B-PER", "I-PER", "O", "B-LOC"], "BIO", "IOBES") == ["B-PER", "E-PER", "O", "S-LOC"]
    assert convert_scheme(["B-A", "I-A"], "BIO", "BIO") == ["B-A", "I-A"]


def test_convert_to_none_rejected():
    with pytest.raises(ValueError):
        convert_scheme(["B-A"], "BIO", "NONE")


def test_validity_rules():
    assert not is_valid(["B-PER", "I-LOC"], "BIO")
    assert is_valid(["I-A"], "IOB")
    assert not is_valid(["B-A"], "IOB")
    assert not is_valid(["B-A"], "IOBES")  # unterminated at the end
    assert first_invalid(["B-A", "O"], "IOBES") == 1
    assert not is_valid(["E-A"], "BIO")
    assert is_valid(["anything"], "NONE")


@pytest.mark.parametrize("scheme", SCHEMES)
def test_render_extract_roundtrip(scheme):
    for seq in valid_sequences(scheme, 4):
        spans = extract_segments(seq, scheme)
        assert render_segments(spans, len(seq), scheme) == seq


def test_repair_examples():
    assert repair_invalid(["O", "I-PER", "I-PER"], "BIO", "to_outside") == (["O", "O", "O"], 2)
    assert repair_invalid(["O", "I-PER", "I-PER"], "BIO", "to_begin") == (["O", "B-PER", "I-PER"], 1)
    assert repair_invalid(["B-A", "I-A"], "BIO") == (["B-A", "I-A"], 0)


def test_repair_iobes_closes_open_segments():
    assert repair_invalid(["B-A", "O"], "IOBES") == (["S-A", "O"], 1)
    assert repair_invalid(["B-A", "I-A"], "IOBES") == (["B-A", "E-A"], 1)
    assert repair_invalid(["O", "E-A"], "IOBES", "to_begin") == (["O", "S-A"], 1)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(ALL_TAGS), min_size=1, max_size=8),
       st.sampled_from(SCHEMES), st.sampled_from(["to_outside", "to_begin"]))
def test_repair_valid_and_idempotent(tags, scheme, strategy):
    fixed, n = repair_invalid(tags, scheme, strategy)
    assert is_valid(fixed, scheme)
    assert n == sum(a != b for a, b in zip(tags, fixed))
    assert repair_invalid(fixed, scheme, strategy) == (fixed, 0)


def test_entity_f1_examples():
    gold = [["O", "B-PER", "I-PER", "O", "O"]]
    pred = [["O", "B-PER", "I-PER", "O", "B-LOC"]]
    p, r, f = entity_f1(gold, pred, "BIO")
    assert (p, r) == (0.5, 1.0)
    assert f == pytest.approx(2 / 3)
    assert entity_f1(gold, gold, "BIO") == (1.0, 1.0, 1.0)
    assert entity_f1(gold, [["O"] * 5], "BIO").f1 == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["O", "B-A", "I-A", "B-B"]),
                          st.sampled_from(["O", "B-A", "I-A", "B-B"])), min_size=1, max_size=6))
def test_entity_f1_swap_symmetry(pairs):
    gold, pred = [repair_invalid([g for g, _ in pairs], "BIO")[0]], [repair_invalid([p for _, p in pairs], "BIO")[0]]
    a, b = entity_f1(gold, pred, "BIO"), entity_f1(pred, gold, "BIO")
    assert a.precision == b.recall and a.recall == b.precision and a.f1 == pytest.approx(b.f1)


def test_token_accuracy():
    assert token_accuracy([["a", "b"]], [["a", "b"]]) == 1.0
    assert token_accuracy([["a", "b"]], [["c", "d"]]) == 0.0
    assert token_accuracy([["a", "b", "c", "d"]], [["a", "b", "c", "x"]]) == 0.75
    with pytest.raises(ValueError):
        token_accuracy([["a"]], [["a", "b"]])
