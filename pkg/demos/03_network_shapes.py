#!/usr/bin/env python3
"""The residual SE network: shape plan, forward pass, channel gating."""

import numpy as np

from cardi.net import EcgResNet, ModelConfig, layer_shapes, se_recalibrate

# default architecture: 16 residual blocks, filters doubling every second
# block up to the 512 cap, temporal length halving after every second block
config = ModelConfig()
print("block | channels | length after block")
for block, channels, length in layer_shapes(config):
    print(f"{block:5d} | {channels:8d} | {length:6d}")
print(f"=> final feature map: {layer_shapes(config)[-1][1]} channels x "
      f"{layer_shapes(config)[-1][2]} samples")

# a small configuration is instant to build and run; the head concatenates
# a 10-unit demographic encoding with the pooled signal features
small = ModelConfig(n_resblocks=4, init_filters=8, filter_cap=32, dropout=0.0,
                    se_reduction=4, n_classes=24, input_length=1024)
model = EcgResNet(small, seed=0)
n_params = sum(arr.size for arr in model.parameters().values())
print(f"\nsmall config: {n_params:,} parameters")

rng = np.random.default_rng(1)
signals = rng.normal(size=(2, 12, 1024))
demographics = rng.random((2, 5))
probs = model.forward(signals, demographics)
print(f"forward: {signals.shape} -> probabilities {probs.shape}")
print(f"row sums (independent sigmoids, no softmax constraint): {probs.sum(axis=1)}")

# squeeze-excite recalibration: each channel is scaled by a gate in (0, 1)
# computed from its global average
features = rng.normal(size=(4, 16))
gate_params = {
    "W1": rng.normal(size=(4, 2)) * 0.5, "b1": np.zeros(2),
    "W2": rng.normal(size=(2, 4)) * 0.5, "b2": np.zeros(4),
}
scaled = se_recalibrate(features, gate_params)
ratios = scaled[:, 0] / features[:, 0]
print(f"\nper-channel SE gates: {np.round(ratios, 4)} (all inside (0, 1))")
