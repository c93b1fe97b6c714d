"""Tagging schemes: validation, conversion, repair and span-level scoring.

Tags are plain strings: ``"O"`` or ``"<prefix>-<class>"`` with prefix in
B/I/E/S. A scheme only admits a subset of prefixes (BIO and IOB use B and I,
IOBES uses all four).
"""
from __future__ import annotations

import enum
from typing import NamedTuple, Sequence


class TagScheme(str, enum.Enum):
    BIO = "BIO"
    IOB = "IOB"
    IOBES = "IOBES"
    NONE = "NONE"

    @classmethod
    def parse(cls, value) -> "TagScheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(
                f"unknown tag scheme {value!r}; expected one of "
                f"{[s.value for s in cls]}"
            ) from None


class RepairStrategy(str, enum.Enum):
    TO_OUTSIDE = "to_outside"
    TO_BEGIN = "to_begin"

    @classmethod
    def parse(cls, value) -> "RepairStrategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown repair strategy {value!r}; expected one of "
                f"{[s.value for s in cls]}"
            ) from None


class SegmentSpan(NamedTuple):
    start: int
    end: int  # inclusive
    cls: str


class InvalidTagSequence(ValueError):
    def __init__(self, position: int, tag: str, scheme: TagScheme):
        super().__init__(f"invalid {scheme.value} tag {tag!r} at position {position}")
        self.position = position
        self.tag = tag


_PREFIXES = {
    TagScheme.BIO: "BI",
    TagScheme.IOB: "BI",
    TagScheme.IOBES: "BIES",
}


def split_tag(tag: str) -> tuple[str, str | None]:
    """Return ``(prefix, class)``; ``("O", None)`` for the outside tag."""
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[1] == "-":
        return tag[0], tag[2:]
    raise ValueError(f"malformed tag {tag!r}")


def _allowed(scheme: TagScheme, prev: str | None, cur: str | None) -> bool:
    # prev=None is the virtual start, cur=None the virtual end.
    pp, pc = split_tag(prev) if prev is not None else ("O", None)
    if cur is None:
        return scheme is not TagScheme.IOBES or pp in "OES"
    cp, cc = split_tag(cur)
    if cp != "O" and cp not in _PREFIXES[scheme]:
        return False
    in_segment = pp != "O" and pp in "BI"
    if scheme is TagScheme.BIO:
        return cp != "I" or (in_segment and pc == cc)
    if scheme is TagScheme.IOB:
        return cp != "B" or (in_segment and pc == cc)
    # IOBES: an open segment must be continued by I/E of the same class
    if in_segment:
        return cp in "IE" and pc == cc
    return cp in "OBS"


def first_invalid(tags: Sequence[str], scheme) -> int | None:
    """Index of the first tag violating the scheme, or None if valid."""
    scheme = TagScheme.parse(scheme)
    if scheme is TagScheme.NONE:
        return None
    prev = None
    for i, tag in enumerate(tags):
        if not _allowed(scheme, prev, tag):
            return i
        prev = tag
    if tags and not _allowed(scheme, prev, None):
        return len(tags) - 1
    return None


def is_valid(tags: Sequence[str], scheme) -> bool:
    return first_invalid(tags, scheme) is None


def extract_segments(tags: Sequence[str], scheme) -> list[SegmentSpan]:
    """Segments of a valid tag sequence, sorted by start.

    Under ``NONE`` every token is its own single-token segment.
    """
    scheme = TagScheme.parse(scheme)
    if scheme is TagScheme.NONE:
        return [SegmentSpan(i, i, t) for i, t in enumerate(tags)]
    bad = first_invalid(tags, scheme)
    if bad is not None:
        raise InvalidTagSequence(bad, tags[bad], scheme)

    spans = []
    start, cls = None, None

    def close(end):
        nonlocal start, cls
        if start is not None:
            spans.append(SegmentSpan(start, end, cls))
        start, cls = None, None

    for i, tag in enumerate(tags):
        p, c = split_tag(tag)
        if p == "O":
            close(i - 1)
        elif p == "B":
            close(i - 1)
            start, cls = i, c
        elif p == "I":
            if start is None or cls != c:
                # only reachable under IOB, where I- opens a segment
                close(i - 1)
                start, cls = i, c
        elif p == "E":
            close(i)
        elif p == "S":
            close(i - 1)
            spans.append(SegmentSpan(i, i, c))
    close(len(tags) - 1)
    return spans


def render_segments(spans: Sequence[SegmentSpan], length: int, scheme) -> list[str]:
    """Encode non-overlapping spans as a tag sequence in ``scheme``."""
    scheme = TagScheme.parse(scheme)
    if scheme is TagScheme.NONE:
        raise ValueError("NONE scheme has no span encoding")
    tags = ["O"] * length
    prev_end, prev_cls = -2, None
    for s in sorted(spans):
        if scheme is TagScheme.BIO:
            tags[s.start] = "B-" + s.cls
            for i in range(s.start + 1, s.end + 1):
                tags[i] = "I-" + s.cls
        elif scheme is TagScheme.IOB:
            adjacent = prev_end == s.start - 1 and prev_cls == s.cls
            tags[s.start] = ("B-" if adjacent else "I-") + s.cls
            for i in range(s.start + 1, s.end + 1):
                tags[i] = "I-" + s.cls
        else:
            if s.start == s.end:
                tags[s.start] = "S-" + s.cls
            else:
                tags[s.start] = "B-" + s.cls
                for i in range(s.start + 1, s.end):
                    tags[i] = "I-" + s.cls
                tags[s.end] = "E-" + s.cls
        prev_end, prev_cls = s.end, s.cls
    return tags


def convert_scheme(tags: Sequence[str], source, target) -> list[str]:
    source, target = TagScheme.parse(source), TagScheme.parse(target)
    if source is target:
        bad = first_invalid(tags, source)
        if bad is not None:
            raise InvalidTagSequence(bad, tags[bad], source)
        return list(tags)
    if TagScheme.NONE in (source, target):
        raise ValueError("cannot convert between NONE and a segment scheme")
    return render_segments(extract_segments(tags, source), len(tags), target)


def repair_invalid(tags: Sequence[str], scheme, strategy="to_outside") -> tuple[list[str], int]:
    """Left-to-right repair of a possibly invalid sequence.

    Each tag is checked against the already repaired prefix. An orphan
    continuation becomes ``O`` (to_outside) or opens a new segment
    (to_begin). Under IOBES an open segment that is not continued is closed
    by rewriting its last tag (B->S, I->E). Returns the repaired tags and
    the number of positions that changed.
    """
    scheme = TagScheme.parse(scheme)
    strategy = RepairStrategy.parse(strategy)
    if scheme is TagScheme.NONE:
        return list(tags), 0
    out: list[str] = []
    if scheme is TagScheme.IOBES:
        for tag in tags:
            p, c = split_tag(tag)
            open_cls = None
            if out:
                op, oc = split_tag(out[-1])
                if op in ("B", "I"):
                    open_cls = oc
            if p in ("I", "E") and open_cls == c:
                out.append(tag)
                continue
            if open_cls is not None:
                _close_last(out)
            if p in ("I", "E"):
                if strategy is RepairStrategy.TO_OUTSIDE:
                    out.append("O")
                else:
                    out.append(("B-" if p == "I" else "S-") + c)
            elif p in ("O", "B", "S"):
                out.append(tag)
            else:
                out.append("O" if strategy is RepairStrategy.TO_OUTSIDE else "B-" + c)
        if out and split_tag(out[-1])[0] in ("B", "I"):
            _close_last(out)
    else:
        start = "B-" if scheme is TagScheme.BIO else "I-"
        for tag in tags:
            prev = out[-1] if out else None
            if _allowed(scheme, prev, tag):
                out.append(tag)
            elif strategy is RepairStrategy.TO_OUTSIDE:
                out.append("O")
            else:
                out.append(start + split_tag(tag)[1])
    changed = sum(a != b for a, b in zip(tags, out))
    return out, changed


def _close_last(out: list[str]) -> None:
    p, c = split_tag(out[-1])
    out[-1] = ("S-" if p == "B" else "E-") + c


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def entity_f1(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]], scheme) -> PRF:
    """Exact-match span precision/recall/F1 over a corpus of sentences."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    tp = n_gold = n_pred = 0
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ValueError(f"sentence {i}: {len(g)} gold tags vs {len(p)} predicted")
        gs = set(extract_segments(g, scheme))
        ps = set(extract_segments(p, scheme))
        tp += len(gs & ps)
        n_gold += len(gs)
        n_pred += len(ps)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f1)


def token_accuracy(gold: Sequence[Sequence], pred: Sequence[Sequence]) -> float:
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    hit = total = 0
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ValueError(f"sentence {i}: {len(g)} gold tags vs {len(p)} predicted")
        hit += sum(a == b for a, b in zip(g, p))
        total += len(g)
    return hit / total if total else 0.0
