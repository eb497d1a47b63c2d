"""Synthetic records and datasets so every workflow runs offline.

Classification toys encode each class as a distinct sinusoidal frequency
mixed into all 12 leads, so a small network can separate them quickly;
raw-record generators emit header/signal file pairs in the ingest format.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .ingest import LabelSpace, serialize_header, HeaderInfo
from .preprocess import encode_demographics
from .training import Dataset


def synthetic_labels(n_records: int, n_classes: int, rng) -> np.ndarray:
    """Multi-label matrix where every record and every class is populated."""
    labels = (rng.random((n_records, n_classes)) < 0.35).astype(int)
    for i in range(n_records):
        if labels[i].sum() == 0:
            labels[i, rng.integers(0, n_classes)] = 1
    for j in range(n_classes):
        if labels[:, j].sum() == 0:
            labels[rng.integers(0, n_records), j] = 1
    return labels


def class_wave(class_index: int, length: int, leads: int, rng) -> np.ndarray:
    """The waveform signature of one class: a fixed frequency, random phase,
    lead-dependent gain."""
    cycles = 2.0 * (class_index + 1)
    t = np.arange(length) / length
    phase = rng.uniform(0, 2 * np.pi)
    gains = 0.5 + rng.random(leads)
    return gains[:, None] * np.sin(2 * np.pi * cycles * t + phase)[None, :]


def make_classification_toy(
    n_records: int = 32,
    n_classes: int = 4,
    leads: int = 12,
    length: int = 256,
    noise: float = 0.05,
    seed: int = 0,
) -> Dataset:
    """Separable multi-label dataset of class-frequency mixtures."""
    rng = np.random.default_rng(seed)
    labels = synthetic_labels(n_records, n_classes, rng)
    signals = np.zeros((n_records, leads, length))
    for i in range(n_records):
        for j in np.flatnonzero(labels[i]):
            signals[i] += class_wave(j, length, leads, rng)
        signals[i] += noise * rng.normal(size=(leads, length))
        mean = signals[i].mean(axis=1, keepdims=True)
        std = signals[i].std(axis=1, keepdims=True)
        signals[i] = (signals[i] - mean) / np.where(std < 1e-12, 1.0, std)
    demographics = np.stack([
        encode_demographics(float(rng.integers(20, 90)),
                            rng.choice(["female", "male"]))
        for _ in range(n_records)
    ])
    return Dataset(signals, demographics, labels)


def write_synthetic_records(
    directory: str | Path,
    n_records: int = 6,
    seed: int = 0,
    rate: int = 500,
    seconds: float = 10.0,
    label_space: LabelSpace | None = None,
) -> list[Path]:
    """Emit header/.npy record pairs in the ingest format; returns header paths."""
    rng = np.random.default_rng(seed)
    label_space = label_space or LabelSpace.default()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    codes = list(label_space.classes)
    paths = []
    length = int(rate * seconds)
    for i in range(n_records):
        record_id = f"syn{i:04d}"
        n_dx = int(rng.integers(1, 4))
        dx = frozenset(rng.choice(codes, size=n_dx, replace=False))
        age = None if rng.random() < 0.1 else float(rng.integers(18, 95))
        sex = rng.choice(["female", "male", None], p=[0.45, 0.45, 0.1])
        t = np.arange(length) / rate
        signal = np.zeros((12, length))
        for code in dx:
            cycles = 1.0 + (label_space.index_of[code] % 12)
            gains = 0.5 + rng.random(12)
            signal += gains[:, None] * np.sin(2 * np.pi * cycles * t)[None, :]
        signal += 0.05 * rng.normal(size=signal.shape)
        header = HeaderInfo(record_id, rate, length, age, sex, dx)
        (directory / f"{record_id}.hea").write_text(serialize_header(header))
        np.save(directory / f"{record_id}.npy", signal)
        paths.append(directory / f"{record_id}.hea")
    return paths
