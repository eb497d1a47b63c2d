import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from cardi.chateval import HashingEmbedder
from cardi.fuzzy import ClassAssessment
from cardi.ingest import LabelSpace, serialize_header, HeaderInfo
from cardi.metric import WeightMatrix, save_weights_csv
from cardi.net import EcgResNet, ModelConfig, save_checkpoint
from cardi.service import (
    Document,
    KnowledgeBase,
    ServiceError,
    TemplateClient,
    build_prompt,
    build_state,
    create_app,
    respond,
    retrieve,
    ChatSession,
)

EMB = HashingEmbedder()

KB_TEXTS = {
    "atrial-fibrillation": "Atrial fibrillation overview\nAtrial fibrillation is an irregular rhythm from the atria.",
    "bundle-branch": "Bundle branch block\nA bundle branch block delays ventricular conduction.",
    "sinus-rhythm": "Ordinary sinus rhythm\nOrdinary sinus rhythm reflects a healthy conduction sequence.",
}


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """Checkpoint + weights CSV + knowledge base directory on disk."""
    root = tmp_path_factory.mktemp("service_artifacts")
    ls = LabelSpace.default()
    config = ModelConfig(n_resblocks=2, init_filters=4, filter_cap=8, first_kernel=15,
                         block_kernel=7, pool_every=2, dropout=0.0, se_reduction=2,
                         demographic_hidden=10, n_classes=24, input_leads=12,
                         input_length=4096)
    model = EcgResNet(config, seed=42)
    ckpt = root / "model.npz"
    save_checkpoint(ckpt, model, {"checkpoint_id": "fixture"})
    wm = WeightMatrix(np.eye(24), ls.classes)
    weights_csv = root / "weights.csv"
    save_weights_csv(wm, weights_csv)
    kb_dir = root / "kb"
    kb_dir.mkdir()
    for doc_id, text in KB_TEXTS.items():
        (kb_dir / f"{doc_id}.txt").write_text(text)
    return {"checkpoint": ckpt, "weights": weights_csv, "kb": kb_dir}


@pytest.fixture()
def client(artifacts):
    state = build_state(artifacts["checkpoint"], artifacts["weights"], artifacts["kb"])
    return TestClient(create_app(state))


def record_upload(record_id="up0001", rate=500, seconds=6.0, dx="426783006"):
    length = int(rate * seconds)
    t = np.arange(length) / rate
    signal = np.stack([np.sin(2 * np.pi * (1 + lead % 4) * t) for lead in range(12)])
    header = serialize_header(HeaderInfo(record_id, rate, length, 50.0, "female",
                                         frozenset(dx.split(","))))
    csv_bytes = "\n".join(",".join(repr(float(v)) for v in row) for row in signal).encode()
    return {
        "header": (f"{record_id}.hea", header.encode(), "text/plain"),
        "signal": (f"{record_id}.csv", csv_bytes, "text/csv"),
    }


class TestKnowledgeBase:
    def make_kb(self):
        docs = [Document(doc_id, text.splitlines()[0], text)
                for doc_id, text in KB_TEXTS.items()]
        return KnowledgeBase(docs, EMB)

    def test_query_identical_to_doc_ranks_first(self):
        kb = self.make_kb()
        results = retrieve(KB_TEXTS["bundle-branch"], kb, k=1)
        assert results[0][0].doc_id == "bundle-branch"
        assert results[0][1] == pytest.approx(1.0, abs=1e-12)

    def test_k_larger_than_corpus_clamped(self):
        kb = self.make_kb()
        assert len(retrieve("anything about rhythm", kb, k=50)) == len(kb)

    def test_three_doc_expected_order(self):
        # constructed corpus with hand-computable cosines: the query shares
        # tokens with doc a twice, doc b once, doc c never
        docs = [Document("a", "", "alpha beta"), Document("b", "", "alpha gamma"),
                Document("c", "", "delta epsilon")]
        kb = KnowledgeBase(docs, EMB)
        results = retrieve("alpha beta", kb, k=3)
        assert [doc.doc_id for doc, _ in results] == ["a", "b", "c"]
        assert results[0][1] == pytest.approx(1.0, abs=1e-12)
        assert results[1][1] == pytest.approx(0.5, abs=1e-12)
        assert results[2][1] == pytest.approx(0.0, abs=1e-12)

    def test_ties_broken_by_doc_id(self):
        docs = [Document("zzz", "", "alpha"), Document("aaa", "", "alpha")]
        kb = KnowledgeBase(docs, EMB)
        results = retrieve("alpha", kb, k=2)
        assert [doc.doc_id for doc, _ in results] == ["aaa", "zzz"]

    def test_empty_kb_rejected(self):
        kb = KnowledgeBase([], EMB)
        with pytest.raises(ServiceError, match="empty"):
            retrieve("query", kb, k=1)


def make_report(severe_code="164889003", classes=None):
    classes = classes or list(LabelSpace.default().classes)
    report = []
    for code in classes:
        if code == severe_code:
            report.append(ClassAssessment(code, 0.97, 1, 0.95, "severe"))
        else:
            report.append(ClassAssessment(code, 0.01, 0, 0.95, "negligible"))
    return report


class TestTemplateClient:
    def test_names_flagged_class_and_term(self):
        report = make_report()
        docs = [Document("atrial-fibrillation", "t", KB_TEXTS["atrial-fibrillation"])]
        prompt = build_prompt(report, docs, [], "how severe is this?")
        text = TemplateClient().generate(prompt, docs)
        assert "164889003" in text
        assert "severe" in text
        assert '"' in text  # quoted snippet present

    def test_all_negligible_banner(self):
        report = make_report(severe_code="none-of-them")
        text = TemplateClient().generate(build_prompt(report, [], [], "status?"), [])
        assert "No abnormality" in text

    def test_deterministic(self):
        report = make_report()
        docs = [Document("sinus-rhythm", "t", KB_TEXTS["sinus-rhythm"])]
        prompt = build_prompt(report, docs, [], "what now?")
        assert TemplateClient().generate(prompt, docs) == TemplateClient().generate(prompt, docs)

    def test_mentions_only_label_space_codes(self):
        import re

        classes = set(LabelSpace.default().classes)
        report = make_report()
        docs = []
        text = TemplateClient().generate(build_prompt(report, docs, [], "?"), docs)
        mentioned = set(re.findall(r"\b\d{6,}\b", text))
        assert mentioned and mentioned <= classes


class TestRespond:
    def make_session(self):
        return ChatSession("s1", "r1", make_report())

    def make_kb(self):
        docs = [Document(doc_id, text.splitlines()[0], text)
                for doc_id, text in KB_TEXTS.items()]
        return KnowledgeBase(docs, EMB)

    def test_appends_history_with_citations(self):
        session = self.make_session()
        kb = self.make_kb()
        result = respond(session, "tell me about atrial fibrillation", kb, TemplateClient())
        assert len(session.history) == 2
        assert session.history[1]["citations"] == result["citations"]
        assert set(result["citations"]) <= set(kb.documents)
        assert result["degraded"] is False

    def test_failing_client_degrades_to_template(self):
        class Boom:
            def generate(self, prompt, context_docs):
                raise RuntimeError("backend unavailable")

        session = self.make_session()
        result = respond(session, "status?", self.make_kb(), Boom())
        assert result["degraded"] is True
        assert "164889003" in result["response"]

    def test_deterministic_for_same_state(self):
        kb = self.make_kb()
        r1 = respond(self.make_session(), "what is flagged?", kb, TemplateClient())
        r2 = respond(self.make_session(), "what is flagged?", kb, TemplateClient())
        assert r1["response"] == r2["response"]
        assert r1["citations"] == r2["citations"]

    def test_annotation_stored(self):
        session = self.make_session()
        respond(session, "note this", self.make_kb(), TemplateClient(),
                annotation="reviewed by Dr. A")
        assert session.annotations == ["reviewed by Dr. A"]


class TestHttpApi:
    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "ok"
        assert "model_version" in body

    def test_upload_interpret_round_trip(self, client):
        upload = client.post("/records", files=record_upload())
        assert upload.status_code == 200
        record_id = upload.json()["record_id"]
        assert record_id == "up0001"
        report = client.post(f"/records/{record_id}/interpret")
        assert report.status_code == 200
        entries = report.json()
        assert len(entries) == 24
        assert {e["class_code"] for e in entries} == set(LabelSpace.default().classes)
        for e in entries:
            assert set(e) == {"class_code", "score", "label", "strength", "term"}
            assert 0.0 <= e["score"] <= 1.0
            assert e["term"] in ("negligible", "low", "medium", "high", "severe")

    def test_repeated_interpretation_byte_identical(self, client):
        assert client.post("/records",
                           files=record_upload("up0002", seconds=20.0)).status_code == 200
        a = client.post("/records/up0002/interpret")
        b = client.post("/records/up0002/interpret")
        assert a.status_code == b.status_code == 200
        assert a.content == b.content

    def test_interpret_unknown_record_404(self, client):
        assert client.post("/records/nope/interpret").status_code == 404

    def test_chat_round_trip_deterministic(self, client):
        client.post("/records", files=record_upload("up0003"))
        first = client.post("/chat", json={"record_id": "up0003",
                                           "message": "what does the report flag?"})
        assert first.status_code == 200
        body = first.json()
        assert body["session_id"]
        assert body["citations"]
        assert isinstance(body["response"], str) and body["response"]
        followup = client.post("/chat", json={"session_id": body["session_id"],
                                              "message": "and how confident are you?"})
        assert followup.status_code == 200
        assert followup.json()["session_id"] == body["session_id"]

    def test_chat_unknown_session_404(self, client):
        response = client.post("/chat", json={"session_id": "ghost", "message": "hi"})
        assert response.status_code == 404

    def test_chat_unknown_record_404(self, client):
        response = client.post("/chat", json={"record_id": "ghost", "message": "hi"})
        assert response.status_code == 404

    def test_upload_rejects_wrong_lead_count(self, client):
        files = record_upload("bad001")
        bad_signal = "\n".join(",".join("0.0" for _ in range(100)) for _ in range(3)).encode()
        files["signal"] = ("bad001.csv", bad_signal, "text/csv")
        response = client.post("/records", files=files)
        assert response.status_code == 422

    def test_missing_artifact_named(self, artifacts, tmp_path):
        with pytest.raises(ServiceError, match="knowledge base"):
            build_state(artifacts["checkpoint"], artifacts["weights"], tmp_path / "nope")
        with pytest.raises(ServiceError, match="checkpoint"):
            build_state(tmp_path / "missing.npz", artifacts["weights"], artifacts["kb"])

    def test_session_persistence(self, artifacts, tmp_path):
        state = build_state(artifacts["checkpoint"], artifacts["weights"], artifacts["kb"],
                            session_dir=tmp_path / "sessions")
        app_client = TestClient(create_app(state))
        app_client.post("/records", files=record_upload("up0009"))
        body = app_client.post("/chat", json={"record_id": "up0009", "message": "hello?",
                                              "annotation": "check lead II"}).json()
        stored = json.loads((tmp_path / "sessions" / f"{body['session_id']}.json").read_text())
        assert stored["record_id"] == "up0009"
        assert stored["annotations"] == ["check lead II"]
        assert len(stored["history"]) == 2
