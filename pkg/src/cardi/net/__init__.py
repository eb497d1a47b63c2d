from .config import ConfigError, ModelConfig, layer_shapes
from .resnet import EcgResNet, load_checkpoint, save_checkpoint, se_recalibrate

__all__ = [
    "ConfigError",
    "ModelConfig",
    "layer_shapes",
    "EcgResNet",
    "se_recalibrate",
    "save_checkpoint",
    "load_checkpoint",
]
