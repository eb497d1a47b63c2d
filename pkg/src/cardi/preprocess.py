"""Raw records to fixed-shape network inputs.

Pipeline: resample every lead to 257 Hz, fit to 4096 samples (trailing
zero-pad, or a seeded random 4096-wide crop for longer signals), z-score
each lead over its un-padded region, and encode age/sex into a 5-vector
with missingness masks. Pad columns stay exactly zero because the
normalization statistics never include them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TARGET_RATE_HZ = 257
TARGET_LENGTH = 4096
MAX_SCALED_AGE = 100.0


class PreprocessError(ValueError):
    """Raised for inputs outside the preprocessing contract."""


@dataclass(frozen=True)
class ModelInput:
    """Fixed-shape classifier input: 12 x 4096 signal, 5 demographics, label."""

    signal: np.ndarray
    demographics: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "signal", np.asarray(self.signal, dtype=float))
        object.__setattr__(self, "demographics", np.asarray(self.demographics, dtype=float))
        object.__setattr__(self, "label", np.asarray(self.label, dtype=int))
        if self.signal.shape[1] != TARGET_LENGTH:
            raise PreprocessError(f"signal width {self.signal.shape[1]} != {TARGET_LENGTH}")
        if self.demographics.shape != (5,):
            raise PreprocessError("demographics must be a 5-vector")


def resample(signal: np.ndarray, from_hz: float, to_hz: float = TARGET_RATE_HZ) -> np.ndarray:
    """Linearly resample each lead from from_hz down to to_hz.

    Output length is round(L * to_hz / from_hz). Upsampling is rejected:
    the dataset's minimum rate equals the target.
    """
    if to_hz < 1 or from_hz < to_hz:
        raise PreprocessError(
            f"cannot resample {from_hz} Hz -> {to_hz} Hz (need from_hz >= to_hz >= 1)"
        )
    signal = np.asarray(signal, dtype=float)
    length = signal.shape[1]
    if from_hz == to_hz:
        return signal.copy()
    out_length = int(round(length * to_hz / from_hz))
    # sample times of the output grid, expressed in input-sample units
    positions = np.arange(out_length) * (from_hz / to_hz)
    positions = np.clip(positions, 0.0, length - 1.0)
    base = np.arange(length, dtype=float)
    return np.stack([np.interp(positions, base, lead) for lead in signal])


def crop_offset(length: int, target: int, seed: int) -> int:
    """Deterministic uniform start offset for cropping a too-long signal."""
    if length <= target:
        return 0
    return int(np.random.default_rng(seed).integers(0, length - target + 1))


def fit_length(signal: np.ndarray, target: int = TARGET_LENGTH, seed: int = 0) -> np.ndarray:
    """Trailing-zero-pad short signals; crop long ones at a seeded offset.

    Sample values inside the retained window are copied untouched.
    """
    signal = np.asarray(signal, dtype=float)
    n_leads, length = signal.shape
    if length == target:
        return signal.copy()
    if length < target:
        out = np.zeros((n_leads, target), dtype=float)
        out[:, :length] = signal
        return out
    start = crop_offset(length, target, seed)
    return signal[:, start : start + target].copy()


def normalize_amplitude(signal: np.ndarray, valid_length: int | None = None) -> np.ndarray:
    """Per-lead z-score over the un-padded region [0, valid_length).

    Columns at and beyond valid_length are left untouched (they are the
    zero pad). A zero-variance lead maps to all zeros.
    """
    signal = np.asarray(signal, dtype=float)
    n_leads, width = signal.shape
    if valid_length is None:
        valid_length = width
    if not 1 <= valid_length <= width:
        raise PreprocessError(f"valid_length {valid_length} outside [1, {width}]")
    out = signal.copy()
    region = out[:, :valid_length]
    mean = region.mean(axis=1, keepdims=True)
    std = region.std(axis=1, keepdims=True)
    degenerate = std < 1e-12
    safe_std = np.where(degenerate, 1.0, std)
    out[:, :valid_length] = np.where(degenerate, 0.0, (region - mean) / safe_std)
    return out


def encode_demographics(age: float | None, sex: str | None) -> np.ndarray:
    """[age/100 clamped, age_missing, sex_female, sex_male, sex_missing]."""
    if age is None:
        age_scaled, age_missing = 0.0, 1.0
    else:
        if age < 0:
            raise PreprocessError(f"negative age {age}")
        if age > 130:
            raise PreprocessError(f"age {age} outside the supported range [0, 130]")
        age_scaled, age_missing = min(float(age), MAX_SCALED_AGE) / MAX_SCALED_AGE, 0.0
    if sex == "female":
        sex_vec = (1.0, 0.0, 0.0)
    elif sex == "male":
        sex_vec = (0.0, 1.0, 0.0)
    elif sex is None:
        sex_vec = (0.0, 0.0, 1.0)
    else:
        raise PreprocessError(f"unrecognized sex value {sex!r}")
    return np.array([age_scaled, age_missing, *sex_vec])


def preprocess_record(record, label: np.ndarray, seed: int = 0) -> ModelInput:
    """Full record -> ModelInput pipeline, deterministic given the seed."""
    resampled = resample(record.signal, record.sampling_rate)
    fitted = fit_length(resampled, TARGET_LENGTH, seed)
    valid = min(resampled.shape[1], TARGET_LENGTH)
    normalized = normalize_amplitude(fitted, valid)
    return ModelInput(normalized, encode_demographics(record.age, record.sex), label)


def save_cache(inputs: dict[str, ModelInput], directory: str | Path) -> Path:
    """Write one ``<record_id>.npz`` per record plus a manifest CSV."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_path = directory / "cache_manifest.csv"
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "path", "label_bits"])
        for record_id, mi in inputs.items():
            path = directory / f"{record_id}.npz"
            np.savez(path, signal=mi.signal, demographics=mi.demographics, label=mi.label)
            bits = "".join(str(int(b)) for b in mi.label)
            writer.writerow([record_id, path.name, bits])
    return manifest_path


def load_cache(directory: str | Path) -> dict[str, ModelInput]:
    directory = Path(directory)
    out: dict[str, ModelInput] = {}
    with open(directory / "cache_manifest.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for record_id, name, _bits in reader:
            with np.load(directory / name) as data:
                out[record_id] = ModelInput(data["signal"], data["demographics"], data["label"])
    return out
