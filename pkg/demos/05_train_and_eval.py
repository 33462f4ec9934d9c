"""Desk-scale fine-tuning: dynamic weighted loss vs standard loss.

Trains the tiny causal LM twice on the same synthetic CoT corpus and the
same seed, once with the scheduled span weights and once with the uniform
standard loss, then evaluates both checkpoints on a held-out dev set. The
dynamic run learns the final answer markedly faster, which is the whole
point of the weighting. Takes well under a minute on a laptop CPU.
"""

import time

from toxipipe.corpus import ingest_records
from toxipipe.sft.backend import TinyBackend
from toxipipe.sft.data import make_training_example
from toxipipe.sft.trainer import TrainerConfig, train
from toxipipe.synth import synthetic_annotation, synthetic_raw_records
from toxipipe.taxonomy import LossMode, parse_experiment_code

raws = synthetic_raw_records(264, toxic_fraction=0.5, seed=11)
records, _ = ingest_records(raws, b"demo")
target = parse_experiment_code("rec").target
examples = [make_training_example(r, synthetic_annotation(r.text), target) for r in records]
train_examples, dev_examples = examples[:200], examples[200:]
print(f"{len(train_examples)} training examples, {len(dev_examples)} dev examples")

for mode in (LossMode.DYNAMIC_WEIGHTED, LossMode.STANDARD):
    experiment = parse_experiment_code("rec", seed=1, loss_mode=mode)
    config = TrainerConfig(experiment=experiment, epochs=3, learning_rate=3e-3, batch_size=4)
    started = time.perf_counter()
    result = train(config, TinyBackend(), train_examples, dev_examples)
    elapsed = time.perf_counter() - started
    print()
    print(f"{mode.value} ({result.parameter_count:,} params, {elapsed:.0f}s):")
    for log in result.logs:
        lam = (f"λ=({log.lambda_r:.2f}, {log.lambda_y:.2f})  "
               if log.lambda_r is not None else "uniform           ")
        print(f"  epoch {log.epoch}: {lam}loss={log.loss:7.4f}  "
              f"dev answer accuracy={log.dev_accuracy:.3f}")
