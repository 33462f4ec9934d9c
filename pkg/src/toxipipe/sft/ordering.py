"""Training-data ordering (random vs curriculum) and minority oversampling.

The curriculum key is a documented choice: easiest first, where easy means
the pre-annotation toxicity score sits far from the decision boundary
(3.5, the midpoint of the auto-label cutoff) and the reasoning text is
short. Ordering is fixed across epochs; random mode reshuffles per epoch
from the run seed.
"""

from __future__ import annotations

import random
from typing import Callable, Protocol, Sequence

from ..taxonomy import LabelValue, Ordering

SCORE_BOUNDARY = 3.5


class OrderableExample(Protocol):
    score: int
    target_text: str


def difficulty_key(example) -> tuple[float, int]:
    """Ascending difficulty: far-from-boundary (easy) sorts first."""
    return (-abs(example.score - SCORE_BOUNDARY), len(example.target_text))


def order_batches(
    examples: Sequence,
    strategy: Ordering,
    seed: int,
    epochs: int,
    key: Callable = difficulty_key,
) -> list[list[int]]:
    """Per-epoch index orderings over the dataset.

    Random: an independent seeded shuffle for every epoch. Curriculum: one
    ascending-difficulty order reused for every epoch. Both return
    permutations of range(len(examples)) and are deterministic per seed.
    """
    n = len(examples)
    if n == 0:
        raise ValueError("cannot order an empty dataset")
    orders: list[list[int]] = []
    if strategy is Ordering.ORDERED:
        fixed = sorted(range(n), key=lambda i: key(examples[i]))
        orders = [list(fixed) for _ in range(epochs)]
    else:
        for epoch in range(1, epochs + 1):
            rng = random.Random(f"{seed}:{epoch}")
            order = list(range(n))
            rng.shuffle(order)
            orders.append(order)
    return orders


def oversample(examples: Sequence, seed: int, label_of: Callable = None) -> list:
    """Duplicate minority-class items (with replacement) until classes match.

    Every original item is retained; only copies are added. A single-class
    dataset cannot be balanced and is rejected.
    """
    label_of = label_of or (lambda ex: ex.label)
    by_class: dict[LabelValue, list] = {}
    for example in examples:
        by_class.setdefault(label_of(example), []).append(example)
    if len(by_class) < 2:
        raise ValueError("oversampling needs both classes present")

    sizes = {value: len(items) for value, items in by_class.items()}
    majority = max(sizes.values())
    rng = random.Random(seed)
    out = list(examples)
    for value in sorted(by_class, key=lambda v: v.value):
        deficit = majority - sizes[value]
        if deficit > 0:
            out.extend(rng.choices(by_class[value], k=deficit))
    return out
