"""Why the conclusion loss needs dynamic weighting.

A CoT training sequence has a long reasoning span and a one-token answer.
Under uniform token-mean loss the answer contributes ~1/(n_r + 1) of the
gradient signal; the weighted loss makes it a full term of its own and the
geometric schedule grows that term each epoch. This script shows the
answer's share of the loss under both schemes, and checks the identity
that count-proportional lambdas reproduce the uniform loss exactly.
"""

import numpy as np

from toxipipe.sft.loss import count_weighted_lambdas, weighted_loss
from toxipipe.sft.schedule import LambdaSchedule
from toxipipe.sft.segmentation import segment_spans

rng = np.random.default_rng(0)
n_r, n_y = 80, 1
tokens = ["<think>"] + [f"r{i}" for i in range(n_r)] + ["</think>", "q1", "q2", "non"]
seg = segment_spans(tokens)
losses = rng.random(len(tokens))

print(f"spans: n_r={seg.n_r} reasoning tokens, n_y={seg.n_y} answer token(s)")
print()
print("answer share of the total gradient signal:")
uniform_share = seg.n_y / (seg.n_r + seg.n_y)
print(f"  uniform token mean: {uniform_share:.1%}")
schedule = LambdaSchedule(initial=(1.0, 1.0), ratio=2.0)
for epoch in range(1, 4):
    lam_r, lam_y = schedule.at(epoch)
    share = lam_y / (lam_r + lam_y)
    print(f"  weighted, epoch {epoch}: λ=({lam_r:.2f}, {lam_y:.2f}) -> answer share {share:.1%}")

print()
lam_r, lam_y = count_weighted_lambdas(seg)
weighted = weighted_loss(losses, seg, lam_r, lam_y)
span = np.concatenate([losses[seg.reasoning_indices], losses[seg.answer_indices]])
print("count-weighted identity check:")
print(f"  weighted_loss with λ=({lam_r:.4f}, {lam_y:.4f}) = {weighted:.12f}")
print(f"  uniform mean over both spans          = {span.mean():.12f}")
print(f"  |difference| = {abs(weighted - span.mean()):.2e}")
