import json

import pytest

from toxipipe.evalharness import (
    BenchItem,
    ChatAdapter,
    ConstantAdapter,
    ModerationAdapter,
    OracleAdapter,
    PromptConfig,
    PromptConfigError,
    PromptMode,
    build_icl_prompt,
    eval_result_dict,
    misclassification_report,
    parse_decision,
    render_misclassifications,
    run_benchmark,
    translate_subset,
    write_eval_report,
)
from toxipipe.mockllm import EchoTranslationClient
from toxipipe.taxonomy import LabelValue


def pool(n_toxic=6, n_non=6):
    out = []
    for i in range(n_toxic):
        out.append((f"exemple toxique numéro {i}", LabelValue.TOXIC))
    for i in range(n_non):
        out.append((f"exemple anodin numéro {i}", LabelValue.NON_TOXIC))
    return out


def bench(n_toxic=4, n_non=4):
    items = []
    for i in range(n_toxic):
        items.append(BenchItem(id=f"anon_msg_{i:012x}", text=f"message méchant {i}",
                               gold=LabelValue.TOXIC))
    for i in range(n_non):
        items.append(
            BenchItem(id=f"anon_msg_{i + n_toxic:012x}", text=f"message gentil {i}",
                      gold=LabelValue.NON_TOXIC)
        )
    return items


class TestPromptBuilder:
    def test_zero_simple_is_terse(self):
        prompt = build_icl_prompt(PromptConfig(mode=PromptMode.ZERO_SIMPLE), "salut")
        assert "salut" in prompt
        assert "harmful, inappropriate, or offensive" not in prompt

    def test_zero_detailed_embeds_definition(self):
        prompt = build_icl_prompt(PromptConfig(mode=PromptMode.ZERO_DETAILED), "salut")
        assert "harmful, inappropriate, or offensive" in prompt

    def test_one_shot_includes_named_class(self):
        prompt = build_icl_prompt(
            PromptConfig(mode=PromptMode.ONE_SHOT_TOXIC), "salut", pool()
        )
        assert "exemple toxique" in prompt
        assert "Réponse : oui" in prompt
        prompt = build_icl_prompt(
            PromptConfig(mode=PromptMode.ONE_SHOT_NON_TOXIC), "salut", pool()
        )
        assert "exemple anodin" in prompt

    @pytest.mark.parametrize("k", [4, 10])
    def test_few_shot_balanced(self, k):
        prompt = build_icl_prompt(
            PromptConfig(mode=PromptMode.FEW_SHOT, k=k), "salut", pool()
        )
        assert prompt.count("Réponse : oui") == k // 2
        assert prompt.count("Réponse : non") == k // 2

    def test_seeded_selection_deterministic(self):
        cfg = PromptConfig(mode=PromptMode.FEW_SHOT, k=4, exemplar_seed=9)
        a = build_icl_prompt(cfg, "salut", pool())
        b = build_icl_prompt(cfg, "salut", pool())
        assert a == b
        c = build_icl_prompt(
            PromptConfig(mode=PromptMode.FEW_SHOT, k=4, exemplar_seed=10), "salut", pool()
        )
        assert a != c

    def test_pool_too_small(self):
        with pytest.raises(PromptConfigError):
            build_icl_prompt(
                PromptConfig(mode=PromptMode.FEW_SHOT, k=10), "salut", pool(2, 2)
            )

    def test_odd_k_rejected(self):
        with pytest.raises(PromptConfigError):
            PromptConfig(mode=PromptMode.FEW_SHOT, k=5)


class TestParseDecision:
    def test_conclusion_style_output(self):
        text = "Blabla toxique partout.\nEn conclusion, ce message est-il toxique ?\nnon"
        assert parse_decision(text) is LabelValue.NON_TOXIC

    def test_plain_affirmative(self):
        assert parse_decision("Oui, ce message est toxique.") is LabelValue.TOXIC

    def test_empty_is_invalid(self):
        assert parse_decision("") is None

    def test_unresolvable_is_invalid(self):
        assert parse_decision("je ne sais pas trop") is None

    def test_round_trip_canonical_answers(self):
        assert parse_decision("oui") is LabelValue.TOXIC
        assert parse_decision("non") is LabelValue.NON_TOXIC


class TestRunBenchmark:
    def oracle(self, items):
        return OracleAdapter(answers={i.text: i.gold for i in items})

    def test_oracle_is_perfect(self):
        items = bench()
        result = run_benchmark(self.oracle(items), items)
        assert result.report.accuracy == 1.0
        assert result.invalid_rate == 0.0

    def test_constant_positive_on_balanced_set(self):
        items = bench(4, 4)
        result = run_benchmark(ConstantAdapter("oui"), items)
        assert result.report.accuracy == 0.5
        assert result.report.per_class[LabelValue.TOXIC].recall == 1.0

    def test_cache_makes_rerun_free_and_byte_identical(self, tmp_path):
        items = bench()
        calls = {"n": 0}

        class CountingOracle(OracleAdapter):
            def invoke(self, prompt):
                calls["n"] += 1
                return super().invoke(prompt)

        adapter = CountingOracle(answers={i.text: i.gold for i in items})
        cache = tmp_path / "cache.jsonl"
        first = run_benchmark(adapter, items, cache_path=cache)
        assert first.new_invocations == len(items)
        n_after_first = calls["n"]

        second = run_benchmark(adapter, items, cache_path=cache)
        assert second.new_invocations == 0
        assert calls["n"] == n_after_first

        out1 = write_eval_report(first, tmp_path / "r1")
        out2 = write_eval_report(second, tmp_path / "r2")
        assert out1[0].read_bytes() == out2[0].read_bytes()
        assert out1[1].read_bytes() == out2[1].read_bytes()

    def test_adapter_failure_marks_invalid_and_continues(self):
        items = bench(2, 2)

        class ExplodingAdapter:
            name = "boom"
            kind = "chat_endpoint"

            def invoke(self, prompt):
                if "méchant 0" in prompt:
                    raise RuntimeError("down")
                return "non"

        result = run_benchmark(ExplodingAdapter(), items)
        assert result.invalid_rate == pytest.approx(1 / 4)
        assert len(result.items) == 4

    def test_invalid_scored_by_policy(self):
        items = bench(2, 0)

        class SilentAdapter:
            name = "silent"
            kind = "chat_endpoint"

            def invoke(self, prompt):
                return "..."

        result = run_benchmark(SilentAdapter(), items)
        assert result.invalid_rate == 1.0
        assert all(r.predicted is LabelValue.NON_TOXIC for r in result.items)
        toxic_policy = run_benchmark(SilentAdapter(), items, invalid_policy=LabelValue.TOXIC)
        assert all(r.predicted is LabelValue.TOXIC for r in toxic_policy.items)

    def test_precision_times_predicted_equals_tp(self):
        items = bench(5, 3)

        class NoisyAdapter:
            name = "noisy"
            kind = "chat_endpoint"

            def invoke(self, prompt):
                return "oui" if "méchant" in prompt and "2" not in prompt else "non"

        result = run_benchmark(NoisyAdapter(), items)
        confusion = result.report.confusion(LabelValue.TOXIC)
        predicted_toxic = sum(1 for r in result.items if r.predicted is LabelValue.TOXIC)
        precision = result.report.per_class[LabelValue.TOXIC].precision
        assert precision * predicted_toxic == pytest.approx(confusion["tp"])

    def test_moderation_adapter_threshold_and_confidence(self):
        items = bench(1, 1)
        adapter = ModerationAdapter(
            score_fn=lambda prompt: 0.9 if "méchant" in prompt else 0.1
        )
        result = run_benchmark(adapter, items)
        assert result.report.accuracy == 1.0
        assert all(r.confidence == pytest.approx(0.4) for r in result.items)

    def test_chat_adapter_wires_client(self):
        items = bench(0, 1)

        class FixedClient:
            def complete(self, prompt, request_id):
                return "non"

        result = run_benchmark(ChatAdapter(FixedClient()), items)
        assert result.report.accuracy == 1.0

    def test_empty_benchmark_rejected(self):
        with pytest.raises(ValueError):
            run_benchmark(ConstantAdapter(), [])


class TestTranslate:
    def items(self):
        return [
            BenchItem(id=f"anon_msg_{i:012x}", text=f"nasty comment {i}",
                      gold=LabelValue.TOXIC if i % 2 else LabelValue.NON_TOXIC, lang="en")
            for i in range(6)
        ]

    def test_translates_all_preserving_ids_and_labels(self):
        translated, warnings = translate_subset(self.items(), EchoTranslationClient("fr"), "fr")
        assert len(translated) == 6
        assert not warnings
        for original, item in zip(self.items(), translated):
            assert item.id == original.id
            assert item.gold == original.gold
            assert item.direction == "en2fr"
            assert item.text.startswith("[fr]")

    def test_already_target_language_passthrough(self):
        items = [BenchItem(id="anon_msg_000000000001", text="déjà en français",
                           gold=LabelValue.NON_TOXIC, lang="fr")]
        translated, _ = translate_subset(items, EchoTranslationClient("fr"), "fr")
        assert translated[0].passthrough
        assert translated[0].text == "déjà en français"

    def test_failed_translation_excluded_with_warning(self):
        class FlakyClient:
            def complete(self, prompt, request_id):
                if "comment 2" in prompt:
                    raise RuntimeError("down")
                return "[fr] ok"

        translated, warnings = translate_subset(self.items(), FlakyClient(), "fr")
        assert len(translated) == 5
        assert len(warnings) == 1

    def test_balanced_396_subset(self):
        items = []
        for i in range(198):
            items.append(BenchItem(id=f"anon_msg_{i:012x}", text=f"rude thing {i}",
                                   gold=LabelValue.TOXIC, lang="en"))
            items.append(BenchItem(id=f"anon_msg_{i + 500:012x}", text=f"nice thing {i}",
                                   gold=LabelValue.NON_TOXIC, lang="en"))
        translated, warnings = translate_subset(items, EchoTranslationClient("fr"), "fr")
        assert len(translated) == 396
        assert not warnings
        toxic = sum(1 for t in translated if t.gold is LabelValue.TOXIC)
        assert toxic == 198


class TestMisclassification:
    def perfect_result(self):
        items = bench()
        return run_benchmark(OracleAdapter({i.text: i.gold for i in items}), items)

    def test_perfect_run_is_empty(self):
        report = misclassification_report(self.perfect_result())
        assert report.false_positives == []
        assert report.false_negatives == []

    def test_single_fp_listed_under_heading(self):
        items = bench(1, 1)

        class AlwaysToxic:
            name = "always"
            kind = "chat_endpoint"

            def invoke(self, prompt):
                return "oui"

        result = run_benchmark(AlwaysToxic(), items)
        report = misclassification_report(result)
        assert len(report.false_positives) == 1
        rendered = render_misclassifications(report)
        assert "Non-toxic classified toxic:" in rendered
        assert report.false_positives[0].id in rendered

    def test_k_zero_headers_only(self):
        report = misclassification_report(self.perfect_result(), k=0)
        rendered = render_misclassifications(report)
        assert rendered.splitlines() == [
            "Non-toxic classified toxic:",
            "Toxic classified non-toxic:",
        ]


def test_eval_result_dict_is_json_serializable():
    items = bench(1, 1)
    result = run_benchmark(OracleAdapter({i.text: i.gold for i in items}), items)
    json.dumps(eval_result_dict(result))
