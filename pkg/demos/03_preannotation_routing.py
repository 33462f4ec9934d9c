"""The six-step CoT chain and the high-confidence auto-label rule.

Runs the chain against the offline keyword mock client, shows the chained
prompts growing step by step, then routes a small batch through the
auto-label rule: everything the pre-annotator calls non-toxic (or scores
<= 3) is labeled automatically, the rest heads to the human queue. Ends
with the rule-validation harness on a toy labeled sample.
"""

from datetime import datetime, timezone

from toxipipe.corpus import CommentRecord
from toxipipe.mockllm import KeywordMockClient
from toxipipe.preannotate import (
    format_annotation,
    run_chain,
    run_preannotation,
    validate_rule,
)
from toxipipe.taxonomy import Label, LabelValue, Provenance


def comment(text, n):
    return CommentRecord(
        id=f"anon_msg_{n:012x}",
        text=text,
        timestamp=datetime(2021, 1, 1, tzinfo=timezone.utc),
        word_count=len(text.split()),
    )


client = KeywordMockClient()
toxic = comment("espèce d'idiot tu racontes n'importe quoi", 1)
annotation = run_chain(toxic, client)

print("chain on a hostile comment:")
for index, (prompt, completion) in enumerate(annotation.raw_steps, start=1):
    print(f"  step {index}: prompt {len(prompt):>4} chars -> {completion.splitlines()[0][:72]}")
print()
print(f"score={annotation.score}/10 decision={annotation.decision.value}")
print()
print("canonical training text:")
print(format_annotation(annotation))

batch = [comment(f"je pense que le match était super {i}", 10 + i) for i in range(9)]
batch.append(toxic)
run = run_preannotation(batch, KeywordMockClient())
summary = run.summary
print(f"routing: auto={summary.auto_labeled} queue={summary.needs_human} "
      f"({summary.auto_fraction:.0%} auto-labeled)")

samples = [(run.annotations[c.id], Label(LabelValue.NON_TOXIC, Provenance.HUMAN))
           for c in batch[:-1]]
result = validate_rule(samples)
lo, hi = result.interval
print(f"rule/human agreement on the labeled sample: {result.rate:.0%} "
      f"[{lo * 100:.1f}, {hi * 100:.1f}%] over {result.rule_fired} rule-fired items")
