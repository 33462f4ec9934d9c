"""Token-span segmentation of CoT training sequences.

A training sequence is prompt tokens, then one or more think-delimited
reasoning blocks, then a terminal binary answer. The reasoning span r is
every token strictly inside the think delimiters; the conclusion span y is
the trailing answer token(s) and nothing else. Prompt tokens, the
delimiters themselves, and scaffold text (the conclusion question) belong
to neither span and carry no training loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
ANSWER_TOKENS = ("oui", "non")


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class SpanSegmentation:
    """Index sets for the reasoning span r and the conclusion span y."""

    reasoning_ranges: tuple[tuple[int, int], ...]  # half-open [start, end)
    answer_range: tuple[int, int]

    @property
    def reasoning_indices(self) -> list[int]:
        return [i for start, end in self.reasoning_ranges for i in range(start, end)]

    @property
    def answer_indices(self) -> list[int]:
        return list(range(*self.answer_range))

    @property
    def n_r(self) -> int:
        return sum(end - start for start, end in self.reasoning_ranges)

    @property
    def n_y(self) -> int:
        return self.answer_range[1] - self.answer_range[0]


def segment_spans(
    tokens: Sequence[str],
    prompt_length: int = 0,
    open_marker: str = THINK_OPEN,
    close_marker: str = THINK_CLOSE,
    answer_tokens: Sequence[str] = ANSWER_TOKENS,
) -> SpanSegmentation:
    """Locate the r and y spans in a tokenized training sequence.

    Requires at least one well-formed think block after the prompt and a
    terminal answer drawn from ``answer_tokens``. Unbalanced or nested
    delimiters, a missing block, or a missing answer raise
    :class:`SegmentationError`.
    """
    if prompt_length < 0 or prompt_length > len(tokens):
        raise SegmentationError(f"prompt_length {prompt_length} out of bounds")

    ranges: list[tuple[int, int]] = []
    open_at: int | None = None
    for index in range(prompt_length, len(tokens)):
        token = tokens[index]
        if token == open_marker:
            if open_at is not None:
                raise SegmentationError(f"nested {open_marker} at token {index}")
            open_at = index
        elif token == close_marker:
            if open_at is None:
                raise SegmentationError(f"unmatched {close_marker} at token {index}")
            ranges.append((open_at + 1, index))
            open_at = None
    if open_at is not None:
        raise SegmentationError(f"unclosed {open_marker} at token {open_at}")
    if not ranges:
        raise SegmentationError("no think block found after the prompt")

    answer_set = set(answer_tokens)
    end = len(tokens)
    start = end
    while start > prompt_length and tokens[start - 1] in answer_set:
        start -= 1
    if start == end:
        raise SegmentationError("no terminal answer token")
    if start < ranges[-1][1]:
        raise SegmentationError("answer tokens overlap the last think block")
    return SpanSegmentation(reasoning_ranges=tuple(ranges), answer_range=(start, end))
