"""Epoch-indexed geometric progression of the span-loss weights.

Each epoch halves the reasoning weight and doubles the conclusion weight
(for the default ratio of 2):

    lambda_r(e) = lambda_r(1) / ratio**(e-1)
    lambda_y(e) = lambda_y(1) * ratio**(e-1)

Epoch 1 trains with the initial pair, so with (1, 1) defaults the first
epoch is plain-weighted and emphasis shifts toward the final decision as
training progresses. Ratio 1 degenerates to constant weights, which is
the standard-loss mode.
"""

from __future__ import annotations

from dataclasses import dataclass


def lambda_schedule(
    epoch: int,
    initial: tuple[float, float] = (1.0, 1.0),
    ratio: float = 2.0,
) -> tuple[float, float]:
    """Weights for a 1-based epoch index."""
    if epoch < 1:
        raise ValueError(f"epoch index is 1-based, got {epoch}")
    if ratio <= 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    lambda_r0, lambda_y0 = initial
    if lambda_r0 < 0 or lambda_y0 < 0:
        raise ValueError(f"initial weights must be non-negative, got {initial}")
    factor = ratio ** (epoch - 1)
    return (lambda_r0 / factor, lambda_y0 * factor)


@dataclass(frozen=True)
class LambdaSchedule:
    """The full progression over a training run."""

    initial: tuple[float, float] = (1.0, 1.0)
    ratio: float = 2.0

    def at(self, epoch: int) -> tuple[float, float]:
        return lambda_schedule(epoch, self.initial, self.ratio)

    def pairs(self, epochs: int) -> list[tuple[float, float]]:
        return [self.at(e) for e in range(1, epochs + 1)]
