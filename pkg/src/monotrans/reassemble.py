"""Turn the four token sets into two four-level feature pyramids (depth, segmentation)."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .encoder import LayerTokens

LEVEL_STRIDES = (4, 8, 16, 32)


@dataclass
class ReassembleConfig:
    image_size: int = 96
    patch_size: int = 8
    embed_dim: int = 64
    channels: int = 64

    def __post_init__(self):
        if self.image_size % 32 != 0:
            raise ValueError(f"image_size must be divisible by 32, got {self.image_size}")
        p = self.patch_size
        if p < 1 or p & (p - 1):
            raise ValueError(f"patch_size must be a power of two, got {p}")

    def level_sizes(self) -> list[int]:
        return [self.image_size // s for s in LEVEL_STRIDES]


@dataclass
class FeaturePyramid:
    """Four [B, C, H_f, W_f] maps at 1/4, 1/8, 1/16, 1/32 resolution, shallow to deep."""
    levels: list[torch.Tensor]
    branch: str  # "depth" or "segmentation"

    def __post_init__(self):
        if self.branch not in ("depth", "segmentation"):
            raise ValueError(f"unknown branch {self.branch!r}")
        if len(self.levels) != 4:
            raise ValueError(f"a pyramid has 4 levels, got {len(self.levels)}")


def _resampler(channels: int, patch_size: int, stride: int) -> nn.Module:
    # tokens sit on a 1/patch grid; move them to 1/stride
    if stride < patch_size:
        f = patch_size // stride
        return nn.ConvTranspose2d(channels, channels, kernel_size=f, stride=f)
    if stride > patch_size:
        f = stride // patch_size
        return nn.Conv2d(channels, channels, kernel_size=f, stride=f)
    return nn.Identity()


class BranchReassemble(nn.Module):
    """Per-level 1x1 projection followed by resampling, for one task branch."""

    def __init__(self, cfg: ReassembleConfig):
        super().__init__()
        self.project = nn.ModuleList(
            nn.Conv2d(cfg.embed_dim, cfg.channels, kernel_size=1) for _ in LEVEL_STRIDES)
        self.resample = nn.ModuleList(
            _resampler(cfg.channels, cfg.patch_size, s) for s in LEVEL_STRIDES)

    def forward(self, maps: list[torch.Tensor]) -> list[torch.Tensor]:
        return [rs(pj(m)) for m, pj, rs in zip(maps, self.project, self.resample)]


class Reassemble(nn.Module):
    def __init__(self, cfg: ReassembleConfig):
        super().__init__()
        self.cfg = cfg
        self.depth = BranchReassemble(cfg)
        self.seg = BranchReassemble(cfg)

    def tokens_to_maps(self, tokens: LayerTokens) -> list[torch.Tensor]:
        g = self.cfg.image_size // self.cfg.patch_size
        if tuple(tokens.grid) != (g, g):
            raise ValueError(f"token grid {tokens.grid} does not match configured grid {(g, g)}")
        maps = []
        for t in tokens.tokens:
            b, n, d = t.shape
            if n != g * g or d != self.cfg.embed_dim:
                raise ValueError(f"token tensor {tuple(t.shape)} incompatible with grid {g}x{g}, dim {self.cfg.embed_dim}")
            maps.append(t.transpose(1, 2).reshape(b, d, g, g))
        return maps

    def forward(self, tokens: LayerTokens) -> tuple[FeaturePyramid, FeaturePyramid]:
        maps = self.tokens_to_maps(tokens)
        return (FeaturePyramid(self.depth(maps), "depth"),
                FeaturePyramid(self.seg(maps), "segmentation"))


def reassemble(tokens: LayerTokens, module: Reassemble) -> tuple[FeaturePyramid, FeaturePyramid]:
    return module(tokens)
