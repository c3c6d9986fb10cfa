"""Full network: ViT encoder -> reassemble -> iterative fusion decoder -> heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn

from .decoder import (DecoderConfig, FusionDecoder, IterationState, PredictionHeads,
                      Predictions, run_iterations)
from .encoder import EncoderConfig, ViTEncoder
from .reassemble import FeaturePyramid, Reassemble, ReassembleConfig


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    channels: int = 64
    reduction: int = 4
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    use_sgfm: bool = True

    def reassemble_config(self) -> ReassembleConfig:
        e = self.encoder
        return ReassembleConfig(e.image_size, e.patch_size, e.embed_dim, self.channels)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d.get("encoder", {}))
        d["decoder"] = DecoderConfig(**d.get("decoder", {}))
        return cls(**d)


@dataclass
class ModelOutput:
    pyramids: tuple[FeaturePyramid, FeaturePyramid]
    states: list[IterationState]


class MonoTransNet(nn.Module):
    """Maps an RGB batch [B, 3, H, W] to depth [B, H, W] and logits [B, K, H, W]."""

    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        cfg = cfg or ModelConfig()
        self.cfg = cfg
        self.encoder = ViTEncoder(cfg.encoder)
        self.reassemble = Reassemble(cfg.reassemble_config())
        self.decoder = FusionDecoder(cfg.channels, cfg.reduction, cfg.use_sgfm)
        self.heads = PredictionHeads(cfg.channels, cfg.decoder.num_classes)

    @property
    def image_size(self) -> int:
        return self.cfg.encoder.image_size

    def run(self, image: torch.Tensor) -> ModelOutput:
        """Forward pass keeping every iteration's features (used for training)."""
        tokens = self.encoder(image)
        pyramids = self.reassemble(tokens)
        states = run_iterations(pyramids, self.cfg.decoder, self.decoder)
        return ModelOutput(pyramids, states)

    def forward(self, image: torch.Tensor) -> Predictions:
        out = self.run(image)
        return self.heads(out.states[-1], image.shape[-2:], level=0)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
