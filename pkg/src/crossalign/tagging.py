"""BIO/IO tag conversion, B-tag restoration, presence labels and span extraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

OUTSIDE = "O"


class TagError(ValueError):
    pass


def split_tag(tag: str) -> tuple[str, str | None]:
    """'B-LOC' -> ('B', 'LOC'), 'O' -> ('O', None)."""
    if tag == OUTSIDE:
        return OUTSIDE, None
    prefix, sep, etype = tag.partition("-")
    if not sep or prefix not in ("B", "I") or not etype:
        raise TagError(f"unknown tag {tag!r}")
    return prefix, etype


class Span(NamedTuple):
    start: int
    end: int  # inclusive
    entity_type: str


class Violation(NamedTuple):
    position: int
    kind: str  # "skipped_b" or "type_break"
    tag: str


@dataclass
class TagScheme:
    """Ordered entity types and the tag -> class index map (O is always 0)."""

    entity_types: list[str]
    mode: str = "io"

    def __post_init__(self):
        if self.mode not in ("io", "bio"):
            raise ValueError(f"unknown tag mode {self.mode!r}")
        if len(set(self.entity_types)) != len(self.entity_types):
            raise ValueError("duplicate entity types")
        tags = [OUTSIDE] + [f"I-{t}" for t in self.entity_types]
        if self.mode == "bio":
            tags += [f"B-{t}" for t in self.entity_types]
        self.tags = tags
        self.class_index = {t: i for i, t in enumerate(tags)}

    @property
    def num_classes(self) -> int:
        return len(self.tags)

    def encode(self, tags: Sequence[str]) -> list[int]:
        try:
            return [self.class_index[t] for t in tags]
        except KeyError as exc:
            raise TagError(f"tag {exc.args[0]!r} not in scheme") from None

    def decode(self, indices: Iterable[int]) -> list[str]:
        return [self.tags[int(i)] for i in indices]

    @classmethod
    def from_corpus(cls, tag_sequences: Iterable[Sequence[str]], mode: str = "io") -> "TagScheme":
        types = sorted({split_tag(t)[1] for seq in tag_sequences for t in seq if t != OUTSIDE})
        return cls(types, mode)


def bio_to_io(tags: Sequence[str]) -> list[str]:
    out = []
    for tag in tags:
        prefix, etype = split_tag(tag)
        out.append(tag if prefix != "B" else f"I-{etype}")
    return out


def restore_b_tags(tags: Sequence[str]) -> list[str]:
    """Turn an IO sequence back into BIO: an I-T opens an entity unless it continues I-T."""
    out = []
    prev_type = None
    for tag in tags:
        prefix, etype = split_tag(tag)
        if prefix == "B":
            raise TagError(f"restore_b_tags expects IO input, found {tag!r}")
        if prefix == OUTSIDE:
            out.append(OUTSIDE)
        else:
            out.append(f"I-{etype}" if prev_type == etype else f"B-{etype}")
        prev_type = etype
    return out


def validate_bio(tags: Sequence[str]) -> list[Violation]:
    """Positions where an I-T follows neither B-T nor I-T; empty list means valid."""
    violations = []
    prev_type = None
    for i, tag in enumerate(tags):
        prefix, etype = split_tag(tag)
        if prefix == "I" and prev_type != etype:
            kind = "skipped_b" if prev_type is None else "type_break"
            violations.append(Violation(i, kind, tag))
        prev_type = etype
    return violations


def repair_bio(tags: Sequence[str]) -> tuple[list[str], list[Violation]]:
    """Promote every stray I-T to B-T; returns the repaired tags and what was fixed."""
    violations = validate_bio(tags)
    fixed = list(tags)
    for v in violations:
        fixed[v.position] = "B-" + split_tag(v.tag)[1]
    return fixed, violations


def extract_spans(tags: Sequence[str]) -> set[Span]:
    violations = validate_bio(tags)
    if violations:
        v = violations[0]
        raise TagError(f"invalid BIO at position {v.position} ({v.kind}: {v.tag})")
    spans = set()
    start = etype = None
    for i, tag in enumerate(tags):
        prefix, t = split_tag(tag)
        if prefix != "I" and start is not None:
            spans.add(Span(start, i - 1, etype))
            start = None
        if prefix == "B":
            start, etype = i, t
    if start is not None:
        spans.add(Span(start, len(tags) - 1, etype))
    return spans


def transform_labels(tag_indices: Sequence[int], num_classes: int,
                     include_outside: bool = True) -> np.ndarray:
    """Multi-hot vector marking every class present at least once.

    ``tag_indices`` must already exclude CLS and padding positions. With
    ``include_outside=False`` the O class (index 0) is never set.
    """
    y = np.zeros(num_classes)
    for idx in tag_indices:
        idx = int(idx)
        if not 0 <= idx < num_classes:
            raise IndexError(f"tag index {idx} outside [0, {num_classes})")
        y[idx] = 1.0
    if not include_outside:
        y[0] = 0.0
    return y
