"""Domain vocabulary shared by every pipeline stage.

Defines the binary label, the four-way annotator response scale, the
six-dimension severity vector, the closed set of implicit-toxicity
rhetorical categories, and the three-axis fine-tuning experiment code
(ordering x class balance x training target).

All enum values serialize as lower_snake_case strings; these names are the
canonical ones used in every file format and over the HTTP API.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace


class LabelValue(str, enum.Enum):
    TOXIC = "toxic"
    NON_TOXIC = "non_toxic"


class Provenance(str, enum.Enum):
    AUTO_RULE = "auto_rule"
    HUMAN = "human"
    WEAK_SIGNAL = "weak_signal"


@dataclass(frozen=True)
class Label:
    """A binary toxicity label plus where it came from.

    The high-confidence auto-label rule only ever emits non-toxic labels,
    so ``auto_rule`` provenance with a toxic value is rejected outright.
    """

    value: LabelValue
    provenance: Provenance

    def __post_init__(self) -> None:
        if self.provenance is Provenance.AUTO_RULE and self.value is not LabelValue.NON_TOXIC:
            raise ValueError("auto_rule labels must be non_toxic")


class FourWayDecision(str, enum.Enum):
    """Annotator response scale, from certain-toxic to certain-clean."""

    YES = "yes"
    MAYBE_YES = "maybe_yes"
    MAYBE_NO = "maybe_no"
    NO = "no"

    @property
    def grouped_yes(self) -> bool:
        return self in (FourWayDecision.YES, FourWayDecision.MAYBE_YES)

    @property
    def grouped_no(self) -> bool:
        return not self.grouped_yes


def map_four_way_to_binary(decision: FourWayDecision) -> Label:
    """Collapse a four-way response to a binary human label.

    "Maybe" responses fall to their leaning side: maybe_yes counts as
    toxic, maybe_no as non-toxic.
    """
    value = LabelValue.TOXIC if decision.grouped_yes else LabelValue.NON_TOXIC
    return Label(value=value, provenance=Provenance.HUMAN)


# Severity dimensions: sexual, hatred, violence, register, aggressivity,
# intent. Each is scored on a 0 (none) to 3 (severe) scale.
VECTOR_DIMENSIONS = ("S", "H", "V", "R", "A", "I")


@dataclass(frozen=True)
class ToxicityVector:
    """Six-dimension severity vector, each component an integer in [0, 3].

    (0,0,0,0,0,0) is the unique clearly-non-toxic point. Construction does
    not validate; call :func:`validate_vector` before trusting components.
    """

    s: int
    h: int
    v: int
    r: int
    a: int
    i: int

    def components(self) -> tuple[int, int, int, int, int, int]:
        return (self.s, self.h, self.v, self.r, self.a, self.i)

    @property
    def is_clear_non_toxic(self) -> bool:
        return self.components() == (0, 0, 0, 0, 0, 0)

    @classmethod
    def from_components(cls, values) -> "ToxicityVector":
        vals = tuple(values)
        if len(vals) != 6:
            raise ValueError(f"expected 6 components, got {len(vals)}")
        return cls(*vals)


class InvalidVectorError(ValueError):
    """Raised when a severity vector has out-of-range components.

    ``violations`` lists one (dimension, value) pair per offending
    component, in dimension order.
    """

    def __init__(self, violations: list[tuple[str, int]]):
        self.violations = violations
        detail = ", ".join(f"{dim}={val}" for dim, val in violations)
        super().__init__(f"severity out of [0, 3] range: {detail}")


def vector_violations(vector: ToxicityVector) -> list[tuple[str, int]]:
    """List each dimension whose severity falls outside [0, 3]."""
    return [
        (dim, val)
        for dim, val in zip(VECTOR_DIMENSIONS, vector.components())
        if not (isinstance(val, int) and 0 <= val <= 3)
    ]


def validate_vector(vector: ToxicityVector) -> ToxicityVector:
    """Return the vector unchanged iff every component is in [0, 3].

    Otherwise raise :class:`InvalidVectorError` naming every offending
    dimension, not just the first.
    """
    violations = vector_violations(vector)
    if violations:
        raise InvalidVectorError(violations)
    return vector


class ImplicitCategory(str, enum.Enum):
    """Rhetorical strategies that convey toxicity implicitly.

    Closed enumeration of the fifteen strategies traced during the
    reasoning chain. These are advisory metadata on annotations; they are
    never an input to the auto-label rule.
    """

    EXPLICIT_CRITICISM = "explicit_criticism"
    QUOTE_WITHOUT_ENDORSEMENT = "quote_without_endorsement"
    AMBIGUOUS_MENTION = "ambiguous_mention"
    QUOTE_WITH_ENDORSEMENT = "quote_with_endorsement"
    WEAPONIZED_HUMOR = "weaponized_humor"
    DECEPTIVE_BENEVOLENCE = "deceptive_benevolence"
    MICROAGGRESSION = "microaggression"
    DOG_WHISTLE = "dog_whistle"
    PSEUDO_RATIONAL_MANIPULATION = "pseudo_rational_manipulation"
    UNRESOLVABLE_AMBIGUITY = "unresolvable_ambiguity"
    TOXIC_INVERSION = "toxic_inversion"
    STRAWMAN = "strawman"
    NORMALIZATION = "normalization"
    PASSIVE_MOCKERY = "passive_mockery"
    VISUAL_TOXICITY = "visual_toxicity"


class Ordering(str, enum.Enum):
    RANDOM = "random"
    ORDERED = "ordered"


class Balance(str, enum.Enum):
    IMBALANCED = "imbalanced"
    OVERSAMPLED = "oversampled"


class Target(str, enum.Enum):
    COT = "cot"
    BINARY = "binary"


class LossMode(str, enum.Enum):
    DYNAMIC_WEIGHTED = "dynamic_weighted"
    STANDARD = "standard"


# Three-letter experiment code alphabet, one axis per position.
_ORDERING_CODES = {"r": Ordering.RANDOM, "o": Ordering.ORDERED}
_BALANCE_CODES = {"d": Balance.IMBALANCED, "e": Balance.OVERSAMPLED}
_TARGET_CODES = {"c": Target.COT, "b": Target.BINARY}
_CODE_AXES = (
    ("ordering", _ORDERING_CODES),
    ("balance", _BALANCE_CODES),
    ("target", _TARGET_CODES),
)


@dataclass(frozen=True)
class ExperimentConfig:
    """The three-axis fine-tuning configuration plus loss/optimizer knobs.

    ``lambda_init`` and ``lambda_ratio`` only matter when
    ``loss_mode`` is dynamic_weighted; they are carried but ignored in
    standard mode.
    """

    ordering: Ordering = Ordering.RANDOM
    balance: Balance = Balance.OVERSAMPLED
    target: Target = Target.COT
    optimizer: str = "adam"
    loss_mode: LossMode = LossMode.DYNAMIC_WEIGHTED
    seed: int = 0
    lambda_init: tuple[float, float] = (1.0, 1.0)
    lambda_ratio: float = 2.0

    def __post_init__(self) -> None:
        lr, ly = self.lambda_init
        if lr < 0 or ly < 0:
            raise ValueError(f"lambda_init must be non-negative, got {self.lambda_init}")
        if self.lambda_ratio <= 0:
            raise ValueError(f"lambda_ratio must be positive, got {self.lambda_ratio}")

    @property
    def code(self) -> str:
        return format_experiment_code(self)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed)


class ExperimentCodeError(ValueError):
    """Raised for malformed experiment codes; ``position`` is 0-based."""

    def __init__(self, code: str, position: int, message: str):
        self.code = code
        self.position = position
        super().__init__(f"bad experiment code {code!r} at position {position}: {message}")


def parse_experiment_code(code: str, **overrides) -> ExperimentConfig:
    """Parse a three-letter code like ``"rec"`` into an ExperimentConfig.

    Position 0 is the data ordering (r/o), position 1 the class balance
    (d/e), position 2 the training target (c/b). Extra keyword arguments
    set the non-axis fields (seed, optimizer, ...).
    """
    if len(code) != 3:
        raise ExperimentCodeError(code, len(code), "expected exactly 3 letters")
    axes = {}
    for position, ((axis, mapping), letter) in enumerate(zip(_CODE_AXES, code)):
        if letter not in mapping:
            expected = "/".join(sorted(mapping))
            raise ExperimentCodeError(code, position, f"expected one of {expected}, got {letter!r}")
        axes[axis] = mapping[letter]
    return ExperimentConfig(**axes, **overrides)


def format_experiment_code(config: ExperimentConfig) -> str:
    """Render the three-letter code; inverse of :func:`parse_experiment_code`."""
    letters = []
    for (axis, mapping) in _CODE_AXES:
        value = getattr(config, axis)
        letter = next(k for k, v in mapping.items() if v is value)
        letters.append(letter)
    return "".join(letters)
