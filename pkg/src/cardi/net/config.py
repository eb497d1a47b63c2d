"""Architecture hyperparameters and symbolic shape propagation.

The network is a stack of residual blocks over a 12-lead signal: filters
start at ``init_filters`` and double every ``filter_double_every`` blocks
up to ``filter_cap``; the temporal axis halves after every
``pool_every``-th block. Literal doubling across 16 blocks would reach
8192 channels, so the cap (default 512) keeps the parameter count sane
while the literal reading stays expressible by raising it.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict


class ConfigError(ValueError):
    """Raised when hyperparameters describe an unbuildable network."""


@dataclass(frozen=True)
class ModelConfig:
    n_resblocks: int = 16
    init_filters: int = 64
    filter_double_every: int = 2
    filter_cap: int = 512
    first_kernel: int = 15
    block_kernel: int = 7
    pool_every: int = 2
    dropout: float = 0.2
    se_reduction: int = 8
    demographic_hidden: int = 10
    n_classes: int = 24
    input_leads: int = 12
    input_length: int = 4096

    def __post_init__(self):
        if self.n_resblocks < 1:
            raise ConfigError("n_resblocks must be at least 1")
        for name in ("first_kernel", "block_kernel"):
            k = getattr(self, name)
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"{name} must be odd and positive, got {k}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout {self.dropout} outside [0, 1)")
        if min(self.init_filters, self.filter_cap, self.filter_double_every,
               self.pool_every, self.se_reduction, self.demographic_hidden,
               self.n_classes, self.input_leads, self.input_length) < 1:
            raise ConfigError("all size hyperparameters must be positive")
        n_pools = self.n_resblocks // self.pool_every
        if self.input_length % (2**n_pools) != 0:
            raise ConfigError(
                f"input_length {self.input_length} not divisible by 2^{n_pools} "
                f"(one halving per {self.pool_every} blocks)"
            )
        layer_shapes(self)  # raises if the temporal axis collapses below 1

    def channels(self, block: int) -> int:
        """Filter count of 1-indexed block ``block``."""
        return min(self.filter_cap,
                   self.init_filters * 2 ** ((block - 1) // self.filter_double_every))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def layer_shapes(config: ModelConfig) -> list[tuple[int, int, int]]:
    """(block_index, channels, temporal_length_after_block) for each block.

    The reported length includes the halving of the max-pool that follows
    every ``pool_every``-th block.
    """
    shapes = []
    length = config.input_length
    for b in range(1, config.n_resblocks + 1):
        if b % config.pool_every == 0:
            length //= 2
        if length < 1:
            raise ConfigError(f"temporal length collapses below 1 at block {b}")
        shapes.append((b, config.channels(b), length))
    return shapes
