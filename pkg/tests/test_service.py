from datetime import datetime, timezone

import pytest
from fastapi.testclient import TestClient
from hypothesis import given, settings
from hypothesis import strategies as st

from toxipipe.corpus import CommentRecord
from toxipipe.httpapi import create_app
from toxipipe.preannotate import CoTAnnotation
from toxipipe.service import (
    AnnotationStore,
    AuthError,
    NotFoundError,
    SizingError,
    SplitManifest,
    UnresolvedError,
    resolve_final_label,
    split_dataset,
)
from toxipipe.taxonomy import (
    FourWayDecision,
    Label,
    LabelValue,
    Provenance,
    ToxicityVector,
)

YES = FourWayDecision.YES
MAYBE_YES = FourWayDecision.MAYBE_YES
MAYBE_NO = FourWayDecision.MAYBE_NO
NO = FourWayDecision.NO


def comment(n, weak_signal=0.5, text="un exemple de message pour la file"):
    return CommentRecord(
        id=f"anon_msg_{n:012x}",
        text=text,
        timestamp=datetime(2021, 1, 1, tzinfo=timezone.utc),
        word_count=len(text.split()),
        weak_signal=weak_signal,
    )


def annotation(score=7, decision=LabelValue.TOXIC):
    return CoTAnnotation(
        summary="Résumé du message.",
        tones=[("Agressif", 70)],
        taxonomy=ToxicityVector(0, 0, 0, 0, 2, 2),
        implicit=[],
        doubts="aucun",
        score=score,
        justification="Ton hostile.",
        decision=decision,
    )


class FakeClock:
    def __init__(self, start=1000.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds


def make_store(tmp_path, n_items=2, priorities=(0.9, 0.1), **kwargs):
    clock = kwargs.pop("clock", FakeClock())
    store = AnnotationStore(tmp_path / "data", clock=clock, **kwargs)
    pairs = [(comment(i, weak_signal=priorities[i]), annotation()) for i in range(n_items)]
    store.add_annotated(pairs)
    return store, clock


class TestResolveFinalLabel:
    def test_single_yes(self):
        label = resolve_final_label([YES])
        assert label.value is LabelValue.TOXIC
        assert label.provenance is Provenance.HUMAN

    def test_agreeing_no_votes(self):
        assert resolve_final_label([MAYBE_NO, NO]).value is LabelValue.NON_TOXIC

    def test_tie_resolves_toxic(self):
        assert resolve_final_label([YES, NO]).value is LabelValue.TOXIC

    def test_tie_policy_configurable(self):
        label = resolve_final_label([YES, NO], tie_break=LabelValue.NON_TOXIC)
        assert label.value is LabelValue.NON_TOXIC

    def test_majority_wins(self):
        assert resolve_final_label([YES, NO, NO]).value is LabelValue.NON_TOXIC

    def test_empty_is_error(self):
        with pytest.raises(UnresolvedError):
            resolve_final_label([])


class TestQueue:
    def test_priority_order(self, tmp_path):
        store, _ = make_store(tmp_path, priorities=(0.9, 0.1))
        first = store.next_item("anna")
        assert first.priority == 0.9

    def test_auto_labeled_items_never_queued(self, tmp_path):
        store, _ = make_store(tmp_path, n_items=1, priorities=(0.5,))
        store.add_annotated([(comment(77), annotation(score=1, decision=LabelValue.NON_TOXIC))])
        ids_served = set()
        while (item := store.next_item("anna")) is not None:
            ids_served.add(item.comment.id)
            store.submit_label(item.comment.id, "anna", YES)
        assert comment(77).id not in ids_served

    def test_item_not_reserved_to_same_annotator(self, tmp_path):
        store, _ = make_store(tmp_path, n_items=1, priorities=(0.5,), decisions_per_item=2)
        item = store.next_item("anna")
        store.submit_label(item.comment.id, "anna", YES)
        assert store.next_item("anna") is None
        # another annotator still gets it
        assert store.next_item("bob").comment.id == item.comment.id

    def test_leased_item_hidden_from_others(self, tmp_path):
        store, _ = make_store(tmp_path, n_items=1, priorities=(0.5,))
        assert store.next_item("anna") is not None
        assert store.next_item("bob") is None

    def test_lease_expiry_returns_item_to_pool(self, tmp_path):
        store, clock = make_store(tmp_path, n_items=1, priorities=(0.5,))
        leased = store.next_item("anna")
        assert store.next_item("bob") is None
        clock.advance(store.lease_timeout + 1)
        recovered = store.next_item("bob")
        assert recovered is not None
        assert recovered.comment.id == leased.comment.id

    def test_same_annotator_can_refresh_lease(self, tmp_path):
        store, _ = make_store(tmp_path, n_items=1, priorities=(0.5,))
        first = store.next_item("anna")
        again = store.next_item("anna")
        assert again.comment.id == first.comment.id

    def test_empty_queue(self, tmp_path):
        store = AnnotationStore(tmp_path / "data")
        assert store.next_item("anna") is None


class TestSubmit:
    def test_unknown_item(self, tmp_path):
        store, _ = make_store(tmp_path)
        store.register_annotator("anna")
        with pytest.raises(NotFoundError):
            store.submit_label("anon_msg_ffffffffffff", "anna", YES)

    def test_unknown_annotator(self, tmp_path):
        store, _ = make_store(tmp_path)
        with pytest.raises(AuthError):
            store.submit_label(comment(0).id, "ghost", YES)

    def test_duplicate_submit_idempotent(self, tmp_path):
        store, _ = make_store(tmp_path)
        item = store.next_item("anna")
        store.submit_label(item.comment.id, "anna", YES)
        store.submit_label(item.comment.id, "anna", YES)
        assert len(store.items[item.comment.id].decisions) == 1

    def test_resubmission_overwrites(self, tmp_path):
        store, _ = make_store(tmp_path)
        item = store.next_item("anna")
        store.submit_label(item.comment.id, "anna", YES)
        store.submit_label(item.comment.id, "anna", NO)
        latest = store.items[item.comment.id].latest_by_annotator
        assert latest["anna"] is NO

    def test_two_annotators_agreement_computable(self, tmp_path):
        store, _ = make_store(tmp_path, n_items=2, priorities=(0.9, 0.1), decisions_per_item=2)
        store.register_annotator("anna")
        store.register_annotator("bob")
        for item_id in list(store.items):
            store.submit_label(item_id, "anna", YES)
            store.submit_label(item_id, "bob", MAYBE_YES)
        pairs = store.agreement_pairs("anna", "bob")
        assert len(pairs) == 2
        assert all(ref.value is LabelValue.TOXIC for _, ref in pairs)


class TestPersistence:
    def test_replay_reconstructs_state(self, tmp_path):
        store, clock = make_store(tmp_path, n_items=3, priorities=(0.9, 0.5, 0.1))
        item = store.next_item("anna")
        store.submit_label(item.comment.id, "anna", MAYBE_YES)

        reopened = AnnotationStore(tmp_path / "data", clock=clock)
        assert reopened.snapshot() == store.snapshot()

    def test_reingest_skips_known_ids(self, tmp_path):
        store, _ = make_store(tmp_path, n_items=2, priorities=(0.9, 0.1))
        counts = store.add_annotated([(comment(0), annotation()), (comment(1), annotation())])
        assert counts == {"auto_labeled": 0, "queued": 0, "skipped": 2}

    def test_final_labels_mix_auto_and_human(self, tmp_path):
        store, _ = make_store(tmp_path, n_items=1, priorities=(0.5,))
        store.add_annotated([(comment(10), annotation(score=0, decision=LabelValue.NON_TOXIC))])
        item = store.next_item("anna")
        store.submit_label(item.comment.id, "anna", YES)
        labels = store.final_labels()
        assert labels[comment(10).id].provenance is Provenance.AUTO_RULE
        assert labels[item.comment.id].value is LabelValue.TOXIC


class TestValidationSample:
    def auto_pairs(self, n):
        return [
            (comment(100 + i), annotation(score=1, decision=LabelValue.NON_TOXIC))
            for i in range(n)
        ]

    def test_sample_requeues_auto_labeled_items(self, tmp_path):
        store = AnnotationStore(tmp_path / "data")
        pairs = self.auto_pairs(10)
        store.add_annotated(pairs)
        assert len(store.items) == 0
        queued = store.queue_validation_sample(pairs, n=4, seed=1)
        assert queued == 4
        assert len(store.items) == 4
        assert all(item.validation for item in store.items.values())

    def test_sample_seeded_and_capped(self, tmp_path):
        pairs = self.auto_pairs(10)
        chosen = []
        for name in ("a", "b"):
            store = AnnotationStore(tmp_path / name)
            store.add_annotated(pairs)
            store.queue_validation_sample(pairs, n=4, seed=7)
            chosen.append(sorted(store.items))
        assert chosen[0] == chosen[1]
        small = AnnotationStore(tmp_path / "c")
        small.add_annotated(pairs[:2])
        assert small.queue_validation_sample(pairs[:2], n=100, seed=0) == 2

    def test_human_decision_supersedes_auto_label(self, tmp_path):
        store = AnnotationStore(tmp_path / "data")
        pairs = self.auto_pairs(3)
        store.add_annotated(pairs)
        store.queue_validation_sample(pairs, n=1, seed=0)
        item = store.next_item("anna")
        store.submit_label(item.comment.id, "anna", YES)  # human disagrees
        label = store.final_label(item.comment.id)
        assert label.value is LabelValue.TOXIC
        assert label.provenance is Provenance.HUMAN
        assert store.final_labels()[item.comment.id].value is LabelValue.TOXIC

    def test_agreement_measurable_on_rule_fired_items(self, tmp_path):
        from toxipipe.preannotate import validate_rule

        store = AnnotationStore(tmp_path / "data")
        pairs = self.auto_pairs(8)
        store.add_annotated(pairs)
        store.queue_validation_sample(pairs, n=5, seed=0)
        while (item := store.next_item("anna")) is not None:
            store.submit_label(item.comment.id, "anna", NO)  # humans agree: non-toxic
        human_labels = {
            item_id: label
            for item_id, label in store.final_labels().items()
            if label.provenance is Provenance.HUMAN
        }
        samples = [
            (ann, human_labels[c.id]) for c, ann in pairs if c.id in human_labels
        ]
        result = validate_rule(samples)
        assert result.rule_fired == 5
        assert result.rate == 1.0

    def test_replay_preserves_validation_flag(self, tmp_path):
        store = AnnotationStore(tmp_path / "data")
        pairs = self.auto_pairs(4)
        store.add_annotated(pairs)
        store.queue_validation_sample(pairs, n=2, seed=3)
        reopened = AnnotationStore(tmp_path / "data")
        assert sorted(reopened.items) == sorted(store.items)
        assert all(item.validation for item in reopened.items.values())


def make_labels(n_toxic, n_non_toxic):
    labels = {}
    for i in range(n_toxic):
        labels[f"anon_msg_{i:012x}"] = Label(LabelValue.TOXIC, Provenance.HUMAN)
    for i in range(n_non_toxic):
        labels[f"anon_msg_{i + n_toxic:012x}"] = Label(
            LabelValue.NON_TOXIC, Provenance.AUTO_RULE
        )
    return labels


class TestSplit:
    def test_small_balanced_case(self):
        manifest = split_dataset(make_labels(2, 2), bench_per_class=1, seed=0)
        assert len(manifest.bench_ids) == 2
        assert len(manifest.train_ids) == 2
        assert manifest.bench_class_counts == (1, 1)

    def test_paper_shaped_corpus(self):
        # imbalanced pool: 4% toxic, balanced bench carved out
        labels = make_labels(400, 9600)
        manifest = split_dataset(labels, bench_per_class=70, seed=7)
        assert manifest.bench_class_counts == (70, 70)
        assert set(manifest.bench_ids).isdisjoint(manifest.train_ids)
        assert len(manifest.train_ids) + len(manifest.bench_ids) == 10_000
        # train stays imbalanced
        assert manifest.train_toxic_fraction == pytest.approx(330 / 9860, abs=1e-9)

    def test_deterministic_per_seed(self):
        labels = make_labels(50, 200)
        a = split_dataset(labels, bench_per_class=10, seed=3)
        b = split_dataset(labels, bench_per_class=10, seed=3)
        c = split_dataset(labels, bench_per_class=10, seed=4)
        assert a == b
        assert a != c

    def test_insufficient_class(self):
        with pytest.raises(SizingError):
            split_dataset(make_labels(1, 100), bench_per_class=2, seed=0)

    @settings(max_examples=50, deadline=None)
    @given(
        n_toxic=st.integers(min_value=2, max_value=40),
        n_non=st.integers(min_value=2, max_value=40),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    def test_disjoint_and_deterministic_for_all_seeds(self, n_toxic, n_non, seed):
        labels = make_labels(n_toxic, n_non)
        per_class = min(n_toxic, n_non) // 2 or 1
        manifest = split_dataset(labels, bench_per_class=per_class, seed=seed)
        assert set(manifest.bench_ids).isdisjoint(manifest.train_ids)
        assert set(manifest.bench_ids) | set(manifest.train_ids) == set(labels)
        assert manifest == split_dataset(labels, bench_per_class=per_class, seed=seed)

    def test_manifest_json_round_trip(self):
        manifest = split_dataset(make_labels(4, 4), bench_per_class=2, seed=1)
        assert SplitManifest.from_json_dict(manifest.to_json_dict()) == manifest


class TestHttpApi:
    @pytest.fixture
    def client(self, tmp_path):
        store, _ = make_store(tmp_path, n_items=2, priorities=(0.9, 0.1))
        return TestClient(create_app(store))

    def test_queue_next_and_submit(self, client):
        item = client.get("/api/queue/next", params={"annotator": "anna"}).json()
        assert item["item_id"].startswith("anon_msg_")
        response = client.post(
            "/api/labels",
            json={"item_id": item["item_id"], "annotator_id": "anna", "decision": "maybe_yes"},
        )
        assert response.status_code == 200
        assert response.json()["decision"] == "maybe_yes"

    def test_empty_queue_response(self, client):
        for _ in range(2):
            item = client.get("/api/queue/next", params={"annotator": "anna"}).json()
            client.post(
                "/api/labels",
                json={"item_id": item["item_id"], "annotator_id": "anna", "decision": "no"},
            )
        assert client.get("/api/queue/next", params={"annotator": "anna"}).json() == {
            "empty": True
        }

    def test_unknown_annotator_is_401(self, client):
        first = client.get("/api/queue/next", params={"annotator": "anna"}).json()
        response = client.post(
            "/api/labels",
            json={"item_id": first["item_id"], "annotator_id": "ghost", "decision": "yes"},
        )
        assert response.status_code == 401

    def test_unknown_item_is_404(self, client):
        client.get("/api/queue/next", params={"annotator": "anna"})
        response = client.post(
            "/api/labels",
            json={"item_id": "anon_msg_ffffffffffff", "annotator_id": "anna", "decision": "yes"},
        )
        assert response.status_code == 404

    def test_bad_decision_is_422(self, client):
        first = client.get("/api/queue/next", params={"annotator": "anna"}).json()
        response = client.post(
            "/api/labels",
            json={"item_id": first["item_id"], "annotator_id": "anna", "decision": "dunno"},
        )
        assert response.status_code == 422

    def test_item_view_hides_other_annotators_until_fetched_directly(self, client):
        item = client.get("/api/queue/next", params={"annotator": "anna"}).json()
        assert "decisions" not in item
        assert "content_warning" in item

    def test_progress_and_agreement_endpoints(self, tmp_path):
        store, _ = make_store(tmp_path, n_items=2, priorities=(0.9, 0.1), decisions_per_item=2)
        api = TestClient(create_app(store))
        for annotator, decision in (("anna", "yes"), ("bob", "maybe_yes")):
            for item_id in list(store.items):
                api.get("/api/queue/next", params={"annotator": annotator})
                api.post(
                    "/api/labels",
                    json={"item_id": item_id, "annotator_id": annotator, "decision": decision},
                )
        progress = api.get("/api/stats/progress").json()
        assert progress["decisions"] == 4
        agreement = api.get("/api/stats/agreement", params={"a": "anna", "b": "bob"}).json()
        assert agreement["pairs"] == 2
        assert agreement["columns"]["toxic"]["grouped_yes"]["rate"] == 1.0

    def test_item_detail_endpoint(self, client):
        item = client.get("/api/queue/next", params={"annotator": "anna"}).json()
        client.post(
            "/api/labels",
            json={"item_id": item["item_id"], "annotator_id": "anna", "decision": "yes"},
        )
        detail = client.get(f"/api/items/{item['item_id']}").json()
        assert detail["final_label"] == "toxic"
        assert detail["decisions"][0]["annotator"] == "anna"
