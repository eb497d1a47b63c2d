#!/usr/bin/env python3
"""End-to-end service workflow, exercised in-process (no sockets).

For a real server, point the same artifacts at the CLI:
    cardi serve --checkpoint model.npz --weights weights.csv --kb-dir kb/
"""

import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from cardi.ingest import HeaderInfo, LabelSpace, serialize_header
from cardi.metric import WeightMatrix, save_weights_csv
from cardi.net import EcgResNet, ModelConfig, save_checkpoint
from cardi.service import build_state, create_app

workdir = Path(tempfile.mkdtemp(prefix="cardi-service-"))

# artifacts: a small trained-or-initialized checkpoint, the class weight
# matrix, and a directory of plain-text knowledge documents
label_space = LabelSpace.default()
config = ModelConfig(n_resblocks=2, init_filters=4, filter_cap=8, dropout=0.0,
                     se_reduction=2, n_classes=24)
save_checkpoint(workdir / "model.npz", EcgResNet(config, seed=3),
                {"checkpoint_id": "demo"})
save_weights_csv(WeightMatrix(np.eye(24), label_space.classes), workdir / "weights.csv")
kb = workdir / "kb"
kb.mkdir()
(kb / "atrial-fibrillation.txt").write_text(
    "Atrial fibrillation\nAtrial fibrillation is an irregular, often rapid rhythm "
    "originating in the atria.")
(kb / "conduction-blocks.txt").write_text(
    "Conduction blocks\nBundle branch blocks delay ventricular activation.")

state = build_state(workdir / "model.npz", workdir / "weights.csv", kb)
client = TestClient(create_app(state))
print(f"health: {client.get('/health').json()}")

# upload one record (multipart header + signal), then interpret it
rate, length = 500, 4000
t = np.arange(length) / rate
signal = np.stack([np.sin(2 * np.pi * (1 + k % 3) * t) for k in range(12)])
header = serialize_header(HeaderInfo("demo001", rate, length, 58.0, "female",
                                     frozenset({"164889003"})))
upload = client.post("/records", files={
    "header": ("demo001.hea", header.encode(), "text/plain"),
    "signal": ("demo001.csv",
               "\n".join(",".join(repr(float(v)) for v in row) for row in signal).encode(),
               "text/csv"),
})
print(f"upload: {upload.json()}")

report = client.post("/records/demo001/interpret").json()
flagged = [(e["class_code"], e["term"], round(e["strength"], 3))
           for e in report if e["term"] != "negligible"]
print(f"interpretation: 24 classes, {len(flagged)} flagged above negligible")
print(f"first flagged entries: {flagged[:4]}")

# chat about the record; the reply cites the retrieved documents
chat = client.post("/chat", json={"record_id": "demo001",
                                  "message": "What does this record flag and how bad is it?"})
body = chat.json()
print(f"\nassistant ({'degraded' if body['degraded'] else 'ok'}), "
      f"citations={body['citations']}:")
print(body["response"][:400])

followup = client.post("/chat", json={"session_id": body["session_id"],
                                      "message": "Which reference discusses rhythm?"})
print(f"\nfollow-up keeps the session: {followup.json()['session_id'] == body['session_id']}")
