"""Residual SE network over (12 x T signal, 5-vector demographics).

Each residual block runs two parallel convolution paths
(conv -> batchnorm -> relu -> dropout), merges them by addition, applies
squeeze-excite channel recalibration, and adds the skip connection (a 1x1
projection when the channel count changes). Every ``pool_every``-th block
is followed by width-2 max pooling. The pooled features are globally
averaged, concatenated with a small hidden encoding of the demographics,
and mapped through a dense layer to per-class sigmoid probabilities
(independent classes: no row-sum constraint).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ModelConfig, layer_shapes
from .layers import (
    BatchNorm1d,
    Conv1d,
    Dense,
    Dropout,
    GlobalAvgPool,
    Layer,
    MaxPool1d,
    ReLU,
    SEGate,
    Sigmoid,
)

CHECKPOINT_FORMAT_VERSION = 1


class ResBlock(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 dropout: float, se_reduction: int, rng):
        super().__init__()
        self.path_a = [Conv1d(in_channels, out_channels, kernel, rng),
                       BatchNorm1d(out_channels), ReLU(), Dropout(dropout)]
        self.path_b = [Conv1d(in_channels, out_channels, kernel, rng),
                       BatchNorm1d(out_channels), ReLU(), Dropout(dropout)]
        self.se = SEGate(out_channels, se_reduction, rng)
        self.skip = Conv1d(in_channels, out_channels, 1, rng) if in_channels != out_channels else None

    def forward(self, x, train=False, rng=None):
        a = x
        for layer in self.path_a:
            a = layer.forward(a, train, rng)
        b = x
        for layer in self.path_b:
            b = layer.forward(b, train, rng)
        merged = a + b
        recalibrated = self.se.forward(merged, train, rng)
        shortcut = x if self.skip is None else self.skip.forward(x, train, rng)
        return recalibrated + shortcut

    def backward(self, dy):
        dmerged = self.se.backward(dy)
        da = dmerged
        for layer in reversed(self.path_a):
            da = layer.backward(da)
        db = dmerged
        for layer in reversed(self.path_b):
            db = layer.backward(db)
        dskip = dy if self.skip is None else self.skip.backward(dy)
        return da + db + dskip

    def named_layers(self):
        yield from (("path_a.conv", self.path_a[0]), ("path_a.bn", self.path_a[1]),
                    ("path_b.conv", self.path_b[0]), ("path_b.bn", self.path_b[1]),
                    ("se", self.se))
        if self.skip is not None:
            yield ("skip", self.skip)


class EcgResNet:
    """The full computation graph; owns all parameters."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        self.stem = [Conv1d(c.input_leads, c.channels(1), c.first_kernel, rng),
                     BatchNorm1d(c.channels(1)), ReLU()]
        self.trunk: list[tuple[str, Layer]] = []
        in_ch = c.channels(1)
        for b in range(1, c.n_resblocks + 1):
            out_ch = c.channels(b)
            self.trunk.append((f"block{b:02d}",
                               ResBlock(in_ch, out_ch, c.block_kernel, c.dropout,
                                        c.se_reduction, rng)))
            if b % c.pool_every == 0:
                self.trunk.append((f"pool{b:02d}", MaxPool1d()))
            in_ch = out_ch
        self.gap = GlobalAvgPool()
        self.demo_dense = Dense(5, c.demographic_hidden, rng)
        self.demo_relu = ReLU()
        self.head = Dense(in_ch + c.demographic_hidden, c.n_classes, rng)
        self.out_sigmoid = Sigmoid()
        self._feature_width = in_ch

    def forward(self, signals: np.ndarray, demographics: np.ndarray,
                train: bool = False, rng=None) -> np.ndarray:
        """Probabilities (B, n_classes), each strictly inside (0, 1)."""
        signals = np.asarray(signals, dtype=float)
        demographics = np.asarray(demographics, dtype=float)
        c = self.config
        if signals.ndim != 3 or signals.shape[1:] != (c.input_leads, c.input_length):
            raise ValueError(
                f"signal batch shape {signals.shape} does not match "
                f"(B, {c.input_leads}, {c.input_length})"
            )
        if demographics.shape != (signals.shape[0], 5):
            raise ValueError(
                f"demographics shape {demographics.shape} does not match ({signals.shape[0]}, 5)"
            )
        if train and rng is None and c.dropout > 0:
            raise ValueError("training forward with dropout needs an rng")
        x = signals
        for layer in self.stem:
            x = layer.forward(x, train, rng)
        for _, layer in self.trunk:
            x = layer.forward(x, train, rng)
        feats = self.gap.forward(x, train, rng)
        demo = self.demo_relu.forward(self.demo_dense.forward(demographics, train, rng), train, rng)
        joined = np.concatenate([feats, demo], axis=1)
        return self.out_sigmoid.forward(self.head.forward(joined, train, rng), train, rng)

    def backward(self, dprobs: np.ndarray) -> None:
        """Backpropagate loss gradients into every layer's ``grads``."""
        djoined = self.head.backward(self.out_sigmoid.backward(dprobs))
        dfeats = djoined[:, : self._feature_width]
        ddemo = djoined[:, self._feature_width :]
        self.demo_dense.backward(self.demo_relu.backward(ddemo))
        dx = self.gap.backward(dfeats)
        for _, layer in reversed(self.trunk):
            dx = layer.backward(dx)
        for layer in reversed(self.stem):
            dx = layer.backward(dx)

    def named_layers(self):
        yield ("stem.conv", self.stem[0])
        yield ("stem.bn", self.stem[1])
        for name, layer in self.trunk:
            if isinstance(layer, ResBlock):
                for sub, l in layer.named_layers():
                    yield (f"{name}.{sub}", l)
        yield ("demo", self.demo_dense)
        yield ("head", self.head)

    def parameters(self) -> dict[str, np.ndarray]:
        """Flat path -> array view of every learnable parameter."""
        return {f"{name}.{key}": arr
                for name, layer in self.named_layers()
                for key, arr in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{name}.{key}": arr
                for name, layer in self.named_layers()
                for key, arr in layer.grads.items()}

    def state(self) -> dict[str, np.ndarray]:
        """Parameters plus non-learnable buffers (batch-norm running stats)."""
        out = self.parameters()
        for name, layer in self.named_layers():
            for key, arr in layer.buffers.items():
                out[f"{name}.{key}"] = arr
        return out

    def set_state(self, flat: dict[str, np.ndarray]) -> None:
        own = self.state()
        if set(own) != set(flat):
            missing = set(own) ^ set(flat)
            raise ValueError(f"state name mismatch: {sorted(missing)[:4]}...")
        for name, layer in self.named_layers():
            for store in (layer.params, layer.buffers):
                for key in store:
                    src = np.asarray(flat[f"{name}.{key}"], dtype=float)
                    if src.shape != store[key].shape:
                        raise ValueError(
                            f"shape mismatch for {name}.{key}: {src.shape} vs {store[key].shape}"
                        )
                    store[key] = src.copy()

    def snapshot(self) -> dict[str, np.ndarray]:
        """Deep copy of the full state (for checkpointing)."""
        return {k: v.copy() for k, v in self.state().items()}


def se_recalibrate(features: np.ndarray, se_params: dict[str, np.ndarray]) -> np.ndarray:
    """Squeeze-excite one (C, T) feature map with explicit gate parameters.

    ``se_params`` uses the same keys as SEGate: W1 (C, H), b1 (H),
    W2 (H, C), b2 (C).
    """
    features = np.asarray(features, dtype=float)
    squeeze = features.mean(axis=1)
    hidden = np.maximum(squeeze @ se_params["W1"] + se_params["b1"], 0.0)
    gates = 1.0 / (1.0 + np.exp(-(hidden @ se_params["W2"] + se_params["b2"])))
    return features * gates[:, None]


def save_checkpoint(path: str | Path, model: EcgResNet, metadata: dict | None = None) -> None:
    """Versioned checkpoint: config echo + parameter tensors + metadata."""
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "metadata": metadata or {},
    }
    np.savez_compressed(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                        **model.state())


def load_checkpoint(path: str | Path) -> tuple[EcgResNet, dict]:
    """Rebuild a model from a checkpoint; returns (model, metadata)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format: {meta.get('format_version')}")
        state = {k: data[k] for k in data.files if k != "__meta__"}
    model = EcgResNet(ModelConfig.from_dict(meta["config"]))
    model.set_state(state)
    return model, meta["metadata"]
