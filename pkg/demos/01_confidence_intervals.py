"""Wald vs Wilson intervals near the boundaries.

Agreement rates in annotation studies sit close to 100%, exactly where the
Wald construction misbehaves: its endpoints leave [0, 1] and its width
collapses to zero at p-hat = 0 or 1. The Wilson score interval stays
inside the unit interval and keeps honest coverage. This script prints
both side by side, then renders a full agreement table from reconstructed
study counts.
"""

from toxipipe.stats import (
    BinomialSample,
    agreement_table,
    render_agreement_table,
    wald_interval,
    wilson_interval,
)
from toxipipe.taxonomy import FourWayDecision, Label, LabelValue, Provenance


def show(successes: int, trials: int) -> None:
    sample = BinomialSample(successes, trials, alpha=0.05)
    wald = wald_interval(sample)
    wilson = wilson_interval(sample)
    flag = "  <- exits [0, 1]" if wald[0] < 0 or wald[1] > 1 else ""
    print(
        f"  x={successes:>4} n={trials:>4}  p̂={sample.p_hat:6.3f}   "
        f"Wald [{wald[0]:+.3f}, {wald[1]:+.3f}]{flag}"
    )
    print(f"{'':28}Wilson [{wilson[0]: .3f}, {wilson[1]: .3f}]")


print("Interval comparison at 95% confidence:")
for x, n in [(50, 100), (1, 10), (0, 250), (246, 250), (250, 250)]:
    show(x, n)

print()
print("Agreement table on reconstructed study counts (250 items per class):")
human = lambda v: Label(v, Provenance.HUMAN)
pairs = []
pairs += [(FourWayDecision.YES, human(LabelValue.TOXIC))] * 227
pairs += [(FourWayDecision.MAYBE_YES, human(LabelValue.TOXIC))] * 19
pairs += [(FourWayDecision.MAYBE_NO, human(LabelValue.TOXIC))] * 4
pairs += [(FourWayDecision.YES, human(LabelValue.NON_TOXIC))] * 1
pairs += [(FourWayDecision.MAYBE_YES, human(LabelValue.NON_TOXIC))] * 6
pairs += [(FourWayDecision.MAYBE_NO, human(LabelValue.NON_TOXIC))] * 14
pairs += [(FourWayDecision.NO, human(LabelValue.NON_TOXIC))] * 229
print(render_agreement_table(agreement_table(pairs)))
