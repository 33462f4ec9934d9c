"""Training-example construction for both fine-tuning targets.

For the CoT target the completion is the canonical think-block rendering
of the annotation; for the direct-binary target it is the bare oui/non
answer. Either way the prompt is the comment plus the question, and the
label/score carried on each example feed oversampling and the curriculum
ordering key.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..corpus import CommentRecord
from ..preannotate import CoTAnnotation, format_annotation
from ..taxonomy import Label, LabelValue, Target

PROMPT_TEMPLATE = "Message : {comment}\nCe message est-il toxique ?"


@dataclass(frozen=True)
class TrainingExample:
    comment_id: str
    prompt_text: str
    target_text: str
    label: LabelValue
    score: int

    @property
    def full_text(self) -> str:
        return f"{self.prompt_text}\n{self.target_text}"


def make_training_example(
    comment: CommentRecord,
    annotation: CoTAnnotation,
    target: Target,
    final_label: Optional[Label] = None,
) -> TrainingExample:
    """Build one example; the verified label (when present) wins for the
    direct-binary answer and for class bookkeeping, while the CoT target
    keeps the annotation text intact."""
    label_value = final_label.value if final_label else annotation.decision
    if target is Target.COT:
        target_text = format_annotation(annotation)
    else:
        target_text = "oui" if label_value is LabelValue.TOXIC else "non"
    return TrainingExample(
        comment_id=comment.id,
        prompt_text=PROMPT_TEMPLATE.format(comment=comment.text),
        target_text=target_text,
        label=label_value,
        score=annotation.score,
    )
