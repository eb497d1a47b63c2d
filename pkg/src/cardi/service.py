"""HTTP service: record upload, fuzzified interpretation, grounded chat.

Endpoints (JSON unless noted):

- ``GET  /health``                  -> {status, model_version}
- ``POST /records``                 multipart header+signal -> {record_id}
- ``POST /records/{id}/interpret``  -> fuzzy report (one entry per class)
- ``POST /chat``                    {session_id?, record_id, message,
                                     annotation?} -> {session_id, response,
                                     citations, degraded}

The language model client is pluggable; the bundled template client is
deterministic, builds its answer only from the fuzzy report and retrieved
documents, and doubles as the degraded-mode fallback when a configured
client fails. Chat prompts embed the report and documents in delimited
blocks, so any client sees the same grounded context.
"""

import hashlib
import io
import json
import re
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .chateval import Embedder, HashingEmbedder, cosine
from .fuzzy import ClassAssessment, fuzzify
from .ingest import EcgRecord, LabelSpace, apply_merge, parse_header
from .metric import load_weights_csv
from .net.resnet import EcgResNet, load_checkpoint
from .preprocess import preprocess_record

REPORT_BLOCK = re.compile(r"\[REPORT\]\n(.*?)\n\[/REPORT\]", re.DOTALL)


class ServiceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str


class KnowledgeBase:
    """Plain-text documents with precomputed unit embeddings."""

    def __init__(self, documents: list[Document], embedder: Embedder):
        self.documents = {d.doc_id: d for d in documents}
        self.embedder = embedder
        self.embeddings = {d.doc_id: embedder.embed(d.text) for d in documents}

    def __len__(self) -> int:
        return len(self.documents)

    @classmethod
    def from_directory(cls, directory: str | Path, embedder: Embedder) -> "KnowledgeBase":
        directory = Path(directory)
        docs = []
        for path in sorted(directory.glob("*.txt")):
            text = path.read_text().strip()
            title = text.splitlines()[0] if text else path.stem
            docs.append(Document(path.stem, title, text))
        return cls(docs, embedder)


def retrieve(query: str, kb: KnowledgeBase, k: int = 3) -> list[tuple[Document, float]]:
    """Top-k documents by cosine similarity, ties broken by doc_id."""
    if len(kb) == 0:
        raise ServiceError("knowledge base is empty")
    if k < 1:
        raise ServiceError(f"k must be at least 1, got {k}")
    query_vec = kb.embedder.embed(query)
    scored = [(doc, cosine(kb.embeddings[doc_id], query_vec))
              for doc_id, doc in kb.documents.items()]
    scored.sort(key=lambda pair: (-pair[1], pair[0].doc_id))
    return scored[:k]


class LanguageModelClient(Protocol):
    def generate(self, prompt: str, context_docs: list[Document]) -> str: ...


class TemplateClient:
    """Deterministic fallback: names each non-negligible class with its term
    and strength, then quotes the retrieved document snippets."""

    snippet_chars = 120

    def generate(self, prompt: str, context_docs: list[Document]) -> str:
        report = _report_from_prompt(prompt)
        flagged = [a for a in report if a.term != "negligible"]
        flagged.sort(key=lambda a: (-a.label, -a.strength, a.class_code))
        if flagged:
            findings = "; ".join(
                f"{a.class_code} is {a.term} (strength {a.strength:.3f})" for a in flagged
            )
            lines = [f"The current record flags: {findings}."]
        else:
            lines = ["No abnormality rises above negligible in the current record."]
        for doc in context_docs:
            snippet = " ".join(doc.text.split())[: self.snippet_chars]
            lines.append(f'Reference {doc.doc_id}: "{snippet}"')
        return "\n".join(lines)


def _report_from_prompt(prompt: str) -> list[ClassAssessment]:
    match = REPORT_BLOCK.search(prompt)
    if not match:
        return []
    return [ClassAssessment(**row) for row in json.loads(match.group(1))]


def build_prompt(report: list[ClassAssessment], docs: list[Document],
                 history: list[dict], message: str) -> str:
    """Deterministic prompt with delimited report/document/history blocks."""
    report_json = json.dumps([a.__dict__ for a in report])
    parts = [
        "You are assisting a clinician with a 12-lead ECG classification report.",
        "[REPORT]", report_json, "[/REPORT]",
        "[DOCUMENTS]",
    ]
    for doc in docs:
        parts.append(f"({doc.doc_id}) {doc.text}")
    parts.append("[/DOCUMENTS]")
    parts.append("[HISTORY]")
    for turn in history:
        parts.append(f"{turn['role']}: {turn['text']}")
    parts.append("[/HISTORY]")
    parts.append(f"user: {message}")
    return "\n".join(parts)


@dataclass
class ChatSession:
    session_id: str
    record_id: str
    report: list[ClassAssessment]
    history: list[dict] = field(default_factory=list)
    annotations: list[str] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


def respond(session: ChatSession, message: str, kb: KnowledgeBase,
            client: LanguageModelClient, k: int = 3,
            annotation: str | None = None) -> dict:
    """Generate a grounded reply and append the exchange to the history.

    A failing client degrades to the deterministic template response; the
    reply is flagged so the caller can surface it.
    """
    with session.lock:
        docs = [doc for doc, _sim in retrieve(message, kb, k)]
        prompt = build_prompt(session.report, docs, session.history, message)
        degraded = False
        try:
            text = client.generate(prompt, docs)
        except Exception:
            text = TemplateClient().generate(prompt, docs)
            degraded = True
        citations = [doc.doc_id for doc in docs]
        session.history.append({"role": "user", "text": message, "citations": []})
        session.history.append({"role": "assistant", "text": text, "citations": citations})
        if annotation:
            session.annotations.append(annotation)
        return {
            "session_id": session.session_id,
            "response": text,
            "citations": citations,
            "degraded": degraded,
        }


@dataclass
class ServiceState:
    model: EcgResNet
    label_space: LabelSpace
    kb: KnowledgeBase
    client: LanguageModelClient
    embedder: Embedder
    threshold: float = 0.5
    convention: str = "corrected"
    retrieval_k: int = 3
    model_version: str = "unversioned"
    session_dir: Path | None = None
    records: dict[str, EcgRecord] = field(default_factory=dict)
    sessions: dict[str, ChatSession] = field(default_factory=dict)
    registry_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


def interpret_record(state: ServiceState, record: EcgRecord) -> list[ClassAssessment]:
    """Classify and fuzzify one record, deterministically per record id."""
    label = apply_merge(record.dx_codes, state.label_space)
    seed = int.from_bytes(hashlib.md5(record.record_id.encode()).digest()[:4], "big")
    model_input = preprocess_record(record, label, seed=seed)
    probs = state.model.forward(model_input.signal[None], model_input.demographics[None])[0]
    return fuzzify(probs, state.threshold, state.label_space.classes, state.convention)


def _persist_session(state: ServiceState, session: ChatSession) -> None:
    if state.session_dir is None:
        return
    state.session_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "session_id": session.session_id,
        "record_id": session.record_id,
        "history": session.history,
        "annotations": session.annotations,
    }
    (state.session_dir / f"{session.session_id}.json").write_text(json.dumps(payload, indent=2))


def create_app(state: ServiceState):
    """Wire the service state into a FastAPI application."""
    from fastapi import FastAPI, File, HTTPException, UploadFile
    from fastapi.responses import JSONResponse

    app = FastAPI(title="ECG interpretation and chat service")

    @app.get("/health")
    def health():
        return {"status": "ok", "model_version": state.model_version}

    @app.post("/records")
    async def upload_record(header: UploadFile = File(...), signal: UploadFile = File(...)):
        header_text = (await header.read()).decode()
        try:
            info = parse_header(header_text)
            signal_bytes = await signal.read()
            matrix = _parse_signal_upload(signal.filename or "signal.csv", signal_bytes)
            record = EcgRecord(info.record_id, matrix, info.sampling_rate,
                               info.age, info.sex, info.dx_codes)
            if matrix.shape[1] != info.duration_samples:
                raise ServiceError(
                    f"signal has {matrix.shape[1]} samples, header says {info.duration_samples}"
                )
        except (ValueError, ServiceError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        with state.registry_lock:
            state.records[record.record_id] = record
        return {"record_id": record.record_id}

    @app.post("/records/{record_id}/interpret")
    def interpret(record_id: str):
        record = state.records.get(record_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown record {record_id}")
        report = interpret_record(state, record)
        return JSONResponse([a.__dict__ for a in report])

    @app.post("/chat")
    def chat(payload: dict):
        message = str(payload.get("message", "")).strip()
        if not message:
            raise HTTPException(status_code=422, detail="message is required")
        session_id = payload.get("session_id")
        if session_id is not None:
            session = state.sessions.get(session_id)
            if session is None:
                raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        else:
            record_id = payload.get("record_id")
            record = state.records.get(record_id)
            if record is None:
                raise HTTPException(status_code=404, detail=f"unknown record {record_id}")
            report = interpret_record(state, record)
            session = ChatSession(str(uuid.uuid4()), record_id, report)
            with state.registry_lock:
                state.sessions[session.session_id] = session
        result = respond(session, message, state.kb, state.client, state.retrieval_k,
                         annotation=payload.get("annotation"))
        _persist_session(state, session)
        return result

    return app


def _parse_signal_upload(filename: str, payload: bytes) -> np.ndarray:
    if filename.endswith(".npy"):
        return np.asarray(np.load(io.BytesIO(payload)), dtype=float)
    text = payload.decode()
    delimiter = "," if "," in text.splitlines()[0] else None
    return np.loadtxt(io.StringIO(text), delimiter=delimiter, ndmin=2)


def build_state(
    checkpoint_path: str | Path,
    weights_csv_path: str | Path,
    kb_dir: str | Path,
    threshold: float = 0.5,
    convention: str = "corrected",
    retrieval_k: int = 3,
    client: LanguageModelClient | None = None,
    session_dir: str | Path | None = None,
) -> ServiceState:
    """Assemble service state from artifact files; names any missing path."""
    for label, path in (("checkpoint", checkpoint_path),
                        ("weights CSV", weights_csv_path),
                        ("knowledge base directory", kb_dir)):
        if not Path(path).exists():
            raise ServiceError(f"missing {label}: {path}")
    model, metadata = load_checkpoint(checkpoint_path)
    weights = load_weights_csv(weights_csv_path)
    if len(weights.classes) != model.config.n_classes:
        raise ServiceError(
            f"weights CSV lists {len(weights.classes)} classes, "
            f"model predicts {model.config.n_classes}"
        )
    label_space = LabelSpace(weights.classes)
    embedder = HashingEmbedder()
    kb = KnowledgeBase.from_directory(kb_dir, embedder)
    if len(kb) == 0:
        raise ServiceError(f"knowledge base directory {kb_dir} has no .txt documents")
    digest = hashlib.md5()
    model_state = model.state()
    for name in sorted(model_state):
        digest.update(model_state[name].tobytes())
    return ServiceState(
        model=model,
        label_space=label_space,
        kb=kb,
        client=client or TemplateClient(),
        embedder=embedder,
        threshold=threshold,
        convention=convention,
        retrieval_k=retrieval_k,
        model_version=f"{metadata.get('checkpoint_id', 'ckpt')}-{digest.hexdigest()[:8]}",
        session_dir=Path(session_dir) if session_dir else None,
    )


def serve(state: ServiceState, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the HTTP service (blocking)."""
    import uvicorn

    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")
