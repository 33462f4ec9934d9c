"""Binomial confidence intervals, agreement tables, classification metrics.

The two interval constructions are the Wald (normal-approximation) interval
and the Wilson score interval. Wald is the textbook default but degrades
badly near proportions of 0 or 1 -- exactly the regime annotation-agreement
rates live in -- so every reported rate here carries a Wilson interval.

The normal quantile is computed by a rational approximation (absolute error
well under 1e-8) rather than pulling in a statistics dependency; tests
cross-check it against an independent high-precision implementation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .taxonomy import FourWayDecision, Label, LabelValue

# ---------------------------------------------------------------------------
# Normal quantile


def normal_quantile(p: float) -> float:
    """Inverse standard-normal CDF via Wichura's rational approximation.

    Valid for p in (0, 1); accurate to roughly machine precision, far
    inside the 1e-8 tolerance the interval code needs.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile requires 0 < p < 1, got {p}")

    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den

    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    value = num / den
    return -value if q < 0 else value


def critical_value(alpha: float) -> float:
    """Two-sided standard-normal critical value at significance alpha."""
    return normal_quantile(1.0 - alpha / 2.0)


# ---------------------------------------------------------------------------
# Binomial samples and intervals


@dataclass(frozen=True)
class BinomialSample:
    """x successes out of n i.i.d. Bernoulli trials."""

    successes: int
    trials: int
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.successes <= self.trials:
            raise ValueError(
                f"successes must be in [0, trials], got {self.successes}/{self.trials}"
            )
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials


def wald_interval(sample: BinomialSample) -> tuple[float, float]:
    """Normal-approximation interval p_hat +/- k*sqrt(p q / n).

    Returned unclamped: near the boundaries the endpoints can leave [0, 1],
    which is precisely why agreement rates are reported with Wilson
    intervals instead.
    """
    p = sample.p_hat
    q = 1.0 - p
    kappa = critical_value(sample.alpha)
    half_width = kappa * math.sqrt(p * q / sample.trials)
    return (p - half_width, p + half_width)


def wilson_interval(sample: BinomialSample) -> tuple[float, float]:
    """Wilson score interval; reliable near proportions of 0 or 1.

    Center (n p + k^2/2) / (n + k^2), half-width
    (k sqrt(n) / (n + k^2)) * sqrt(p q + k^2 / 4n). Both endpoints always
    land in [0, 1].
    """
    n = sample.trials
    p = sample.p_hat
    q = 1.0 - p
    kappa = critical_value(sample.alpha)
    k2 = kappa * kappa
    center = (n * p + k2 / 2.0) / (n + k2)
    half_width = (kappa * math.sqrt(n) / (n + k2)) * math.sqrt(p * q + k2 / (4.0 * n))
    lo = max(0.0, center - half_width)
    hi = min(1.0, center + half_width)
    # the exact interval always contains p_hat (it touches it when x is 0
    # or n); guard the last-ulp rounding of the composed expression
    return (min(lo, p), max(hi, p))


# ---------------------------------------------------------------------------
# Agreement tables


@dataclass(frozen=True)
class AgreementCell:
    """One rate with its Wilson interval, out of ``trials`` reference items."""

    count: int
    trials: int
    rate: float
    interval: tuple[float, float]


@dataclass
class AgreementTable:
    """Per-reference-class response rates with Wilson intervals.

    ``columns`` maps a reference label value to rows keyed by the four
    decisions plus the two grouped rows (``grouped_yes``, ``grouped_no``).
    Grouped counts are the sums of their member counts, so rates within a
    column partition to 1.
    """

    columns: dict[LabelValue, dict[str, AgreementCell]]
    warnings: list[str] = field(default_factory=list)


_GROUPS = {
    "grouped_yes": (FourWayDecision.YES, FourWayDecision.MAYBE_YES),
    "grouped_no": (FourWayDecision.MAYBE_NO, FourWayDecision.NO),
}


def agreement_table(
    pairs: list[tuple[FourWayDecision, Label]], alpha: float = 0.05
) -> AgreementTable:
    """Tabulate four-way responses against binary reference labels.

    Each reference class with at least one pair becomes a column; a class
    with no pairs is omitted and a warning recorded.
    """
    if not pairs:
        raise ValueError("agreement_table requires at least one (decision, label) pair")

    by_class: dict[LabelValue, Counter] = {}
    for decision, reference in pairs:
        by_class.setdefault(reference.value, Counter())[decision] += 1

    columns: dict[LabelValue, dict[str, AgreementCell]] = {}
    warnings = []
    for value in (LabelValue.TOXIC, LabelValue.NON_TOXIC):
        counts = by_class.get(value)
        if not counts:
            warnings.append(f"no pairs with reference class {value.value}; column omitted")
            continue
        n = sum(counts.values())

        def cell(count: int) -> AgreementCell:
            interval = wilson_interval(BinomialSample(count, n, alpha))
            return AgreementCell(count=count, trials=n, rate=count / n, interval=interval)

        rows: dict[str, AgreementCell] = {}
        for group, members in _GROUPS.items():
            rows[group] = cell(sum(counts[m] for m in members))
        for decision in FourWayDecision:
            rows[decision.value] = cell(counts[decision])
        columns[value] = rows
    return AgreementTable(columns=columns, warnings=warnings)


# ---------------------------------------------------------------------------
# Classification metrics


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    # set when a 0/0 ratio was reported as 0
    undefined_precision: bool = False
    undefined_recall: bool = False


@dataclass
class ClassReport:
    """Per-class precision/recall/F1 plus overall accuracy."""

    per_class: dict[LabelValue, ClassMetrics]
    accuracy: float
    total: int
    _confusion: dict[LabelValue, dict[str, int]] = field(default_factory=dict, repr=False)

    def confusion(self, positive: LabelValue) -> dict[str, int]:
        """Confusion counts (tp/fp/fn/tn) with ``positive`` as the positive class."""
        return dict(self._confusion[positive])


def _safe_ratio(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def classification_report(preds: list[Label], golds: list[Label]) -> ClassReport:
    """Standard binary classification report.

    Undefined ratios (0/0, e.g. precision of a never-predicted class) are
    reported as 0.0 with the corresponding flag set rather than NaN.
    """
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} preds vs {len(golds)} golds")
    if not preds:
        raise ValueError("classification_report requires at least one pair")

    pred_values = [p.value for p in preds]
    gold_values = [g.value for g in golds]
    correct = sum(1 for p, g in zip(pred_values, gold_values) if p == g)
    total = len(gold_values)

    per_class: dict[LabelValue, ClassMetrics] = {}
    confusion: dict[LabelValue, dict[str, int]] = {}
    for positive in (LabelValue.TOXIC, LabelValue.NON_TOXIC):
        tp = sum(1 for p, g in zip(pred_values, gold_values) if p == positive and g == positive)
        fp = sum(1 for p, g in zip(pred_values, gold_values) if p == positive and g != positive)
        fn = sum(1 for p, g in zip(pred_values, gold_values) if p != positive and g == positive)
        tn = total - tp - fp - fn
        precision, undef_p = _safe_ratio(tp, tp + fp)
        recall, undef_r = _safe_ratio(tp, tp + fn)
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
        per_class[positive] = ClassMetrics(
            precision=precision,
            recall=recall,
            f1=f1,
            support=tp + fn,
            undefined_precision=undef_p,
            undefined_recall=undef_r,
        )
        confusion[positive] = {"tp": tp, "fp": fp, "fn": fn, "tn": tn}

    return ClassReport(
        per_class=per_class, accuracy=correct / total, total=total, _confusion=confusion
    )


# ---------------------------------------------------------------------------
# Rendering


def strip_leading_zero(value: float, digits: int = 3) -> str:
    """Format 0.853 as ``.853``; table convention for readability.

    Underlying values keep full precision, only the rendering is trimmed.
    """
    text = f"{value:.{digits}f}"
    if text.startswith("0."):
        return text[1:]
    if text.startswith("-0."):
        return "-" + text[2:]
    return text


def format_percent_cell(cell: AgreementCell) -> str:
    """Render like ``98% [96.0, 99.4%]``: whole percents >= 10, one decimal below."""

    def pct(x: float) -> str:
        return f"{x * 100:.1f}" if x < 0.095 else f"{x * 100:.0f}"

    lo, hi = cell.interval
    return f"{pct(cell.rate)}% [{lo * 100:.1f}, {hi * 100:.1f}%]"


def render_agreement_table(table: AgreementTable) -> str:
    """Aligned-text rendering of an agreement table."""
    order = ["grouped_yes", "yes", "maybe_yes", "grouped_no", "maybe_no", "no"]
    headers = ["response"] + [
        f"{value.value} (N={next(iter(rows.values())).trials})"
        for value, rows in table.columns.items()
    ]
    lines = []
    body = []
    for row_name in order:
        cells = [row_name]
        for rows in table.columns.values():
            cells.append(format_percent_cell(rows[row_name]))
        body.append(cells)
    widths = [max(len(r[i]) for r in [headers] + body) for i in range(len(headers))]
    lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    lines.append("  ".join("-" * w for w in widths))
    for cells in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)


def render_class_report(report: ClassReport) -> str:
    """Aligned-text rendering with leading zeros stripped, benchmark style."""
    lines = []
    header = f"{'class':<12}{'prec.':>7}{'rec.':>7}{'f1':>7}{'support':>9}"
    lines.append(header)
    lines.append("-" * len(header))
    for value, metrics in report.per_class.items():
        lines.append(
            f"{value.value:<12}"
            f"{strip_leading_zero(metrics.precision):>7}"
            f"{strip_leading_zero(metrics.recall):>7}"
            f"{strip_leading_zero(metrics.f1):>7}"
            f"{metrics.support:>9}"
        )
    lines.append(f"{'accuracy':<12}{strip_leading_zero(report.accuracy):>7}  (n={report.total})")
    return "\n".join(lines)


def class_report_dict(report: ClassReport) -> dict:
    """Machine-readable form of a ClassReport (full precision)."""
    return {
        "accuracy": report.accuracy,
        "total": report.total,
        "per_class": {
            value.value: {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
                "undefined_precision": m.undefined_precision,
                "undefined_recall": m.undefined_recall,
            }
            for value, m in report.per_class.items()
        },
    }
