"""Weighted-loss CoT fine-tuning: segmentation, schedule, ordering, trainer."""

from .loss import count_weighted_lambdas, weighted_loss
from .ordering import order_batches, oversample
from .schedule import LambdaSchedule, lambda_schedule
from .segmentation import SegmentationError, SpanSegmentation, segment_spans

__all__ = [
    "LambdaSchedule",
    "SegmentationError",
    "SpanSegmentation",
    "count_weighted_lambdas",
    "lambda_schedule",
    "order_batches",
    "oversample",
    "segment_spans",
    "weighted_loss",
]
