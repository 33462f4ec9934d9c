"""The dynamically weighted span loss.

With per-token losses L over one sequence, the reasoning loss L_r is the
token mean over the reasoning span and the conclusion loss L_y the token
mean over the answer span; the sequence loss is

    lambda_r * L_r + lambda_y * L_y

Both means are per-span (not sums), so the lambdas stay interpretable
regardless of how long the reasoning runs: this is exactly the dilution
the weighting exists to correct, a few answer tokens drowned by hundreds
of reasoning tokens.

Choosing lambda_r = n_r/(n_r+n_y) and lambda_y = n_y/(n_r+n_y) recovers
the uniform token-mean loss over both spans; that identity is the bridge
between weighted and standard loss modes and is pinned by tests.

Works on numpy arrays and torch tensors alike (only indexing, means and
scalar arithmetic are used), so the same function serves the trainer's
autograd path and plain numeric checks.
"""

from __future__ import annotations

from .segmentation import SpanSegmentation


def weighted_loss(per_token_losses, seg: SpanSegmentation, lambda_r: float, lambda_y: float):
    """Combine per-span token means: lambda_r * L_r + lambda_y * L_y.

    ``per_token_losses`` must cover every index in the segmentation. The
    conclusion span must be non-empty; silently skipping the answer would
    defeat the point of the weighting.
    """
    if seg.n_y == 0:
        raise ValueError("conclusion span is empty; refusing to skip the answer loss")
    if len(per_token_losses) <= max(seg.answer_range[1] - 1, seg.reasoning_ranges[-1][1] - 1):
        raise ValueError("per-token losses do not cover the segmented spans")
    reasoning = per_token_losses[seg.reasoning_indices]
    answer = per_token_losses[seg.answer_indices]
    return lambda_r * reasoning.mean() + lambda_y * answer.mean()


def count_weighted_lambdas(seg: SpanSegmentation) -> tuple[float, float]:
    """Lambdas proportional to span sizes; reproduces the uniform loss."""
    total = seg.n_r + seg.n_y
    return seg.n_r / total, seg.n_y / total
