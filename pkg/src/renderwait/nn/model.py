"""The rendering-state classifier network."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from renderwait.nn.layers import (
    BatchNorm2d,
    Conv3x3,
    GlobalAvgPool,
    InvertedResidual,
    Linear,
    ReLU6,
    Sequential,
)

# (out_channels, stride) for each inverted residual block
DEFAULT_BLOCKS = ((16, 2), (16, 1), (24, 2), (24, 1))


@dataclass(frozen=True)
class ModelConfig:
    input_width: int = 56
    input_height: int = 96
    in_channels: int = 1
    stem_channels: int = 8
    blocks: tuple[tuple[int, int], ...] = DEFAULT_BLOCKS
    expand_ratio: int = 6

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blocks"] = [list(b) for b in self.blocks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        d = dict(d)
        d["blocks"] = tuple(tuple(b) for b in d["blocks"])
        return cls(**d)


# Phone-screen-sized input, available behind a flag.
FULL_RESOLUTION = ModelConfig(input_width=448, input_height=768)


class Classifier(Sequential):
    """Stem conv -> inverted residual blocks -> global pool -> single logit."""

    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        config = config or ModelConfig()
        self.config = config
        rng = np.random.default_rng(seed)
        layers = [
            ("stem", Conv3x3(config.in_channels, config.stem_channels, stride=2, rng=rng)),
            ("stem_bn", BatchNorm2d(config.stem_channels)),
            ("stem_act", ReLU6()),
        ]
        width = config.stem_channels
        for i, (out, stride) in enumerate(config.blocks):
            layers.append((f"block{i}", InvertedResidual(width, out, stride, config.expand_ratio, rng)))
            width = out
        layers += [("pool", GlobalAvgPool()), ("head", Linear(width, 1, rng))]
        super().__init__(*layers)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[:, 0]
