"""Toxicity-classifier pipeline toolkit.

Stages: corpus ingestion and anonymization -> structured CoT pre-annotation
with high-confidence auto-labeling -> human verification queue -> train/bench
split -> weighted-loss CoT fine-tuning -> confidence-aware evaluation.
"""

__version__ = "0.1.0"
