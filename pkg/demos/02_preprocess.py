#!/usr/bin/env python3
"""Raw signal -> fixed 12 x 4096 network input, step by step."""

import numpy as np

from cardi.ingest import EcgRecord
from cardi.preprocess import (
    encode_demographics,
    fit_length,
    normalize_amplitude,
    preprocess_record,
    resample,
)

rng = np.random.default_rng(0)

# a 10 s record sampled at 500 Hz: 5000 samples per lead
rate, seconds = 500, 10
t = np.arange(rate * seconds) / rate
signal = np.stack([np.sin(2 * np.pi * (1 + k) * t) + 0.1 * rng.normal(size=t.size)
                   for k in range(12)])
print(f"raw signal: {signal.shape} at {rate} Hz")

# step 1: down to the dataset's minimum rate of 257 Hz
resampled = resample(signal, rate)
print(f"resampled: {resampled.shape} (round(5000 * 257/500) = 2570)")

# step 2: fit to 4096 samples; short signals get trailing zeros, long ones a
# seeded random 4096-wide window
fitted = fit_length(resampled, seed=7)
print(f"fitted: {fitted.shape}, pad region all zero: "
      f"{np.count_nonzero(fitted[:, 2570:]) == 0}")

# step 3: per-lead z-score over the un-padded region only, so the pad stays
# exactly zero and the statistics are unbiased
normalized = normalize_amplitude(fitted, valid_length=2570)
print(f"lead means (max |mean|): {np.abs(normalized[:, :2570].mean(axis=1)).max():.2e}")
print(f"lead stds  (max |std-1|): {np.abs(normalized[:, :2570].std(axis=1) - 1).max():.2e}")

# step 4: age scaled by a max of 100 with missingness masks, sex one-hot
for age, sex in ((50, "female"), (None, "male"), (110, None)):
    print(f"demographics({age}, {sex}) -> {encode_demographics(age, sex)}")

# the full pipeline in one call, deterministic given the seed
record = EcgRecord("demo01", signal, rate, 50.0, "female", frozenset({"426783006"}))
model_input = preprocess_record(record, np.zeros(24, dtype=int), seed=7)
again = preprocess_record(record, np.zeros(24, dtype=int), seed=7)
print(f"\npipeline output: signal {model_input.signal.shape}, "
      f"demographics {model_input.demographics.shape}")
print(f"deterministic given (record, seed): "
      f"{np.array_equal(model_input.signal, again.signal)}")
