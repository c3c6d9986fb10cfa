"""Plain ViT backbone that exposes tokens from four intermediate blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn


@dataclass
class EncoderConfig:
    image_size: int = 96
    patch_size: int = 8
    embed_dim: int = 64
    num_blocks: int = 12
    num_heads: int = 4
    mlp_ratio: float = 4.0
    tap_layers: list[int] = field(default_factory=lambda: [3, 6, 9, 12])

    def __post_init__(self):
        self.tap_layers = [int(t) for t in self.tap_layers]
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        taps = self.tap_layers
        if len(taps) != 4:
            raise ValueError(f"tap_layers must have exactly 4 entries, got {taps}")
        if any(b <= a for a, b in zip(taps, taps[1:])) or taps[0] < 1:
            raise ValueError(f"tap_layers must be strictly increasing and 1-based, got {taps}")
        if taps[-1] > self.num_blocks:
            raise ValueError(f"tap layer {taps[-1]} exceeds num_blocks={self.num_blocks}")

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size ** 2


@dataclass
class LayerTokens:
    """Tokens captured after each tapped block.

    ``tokens`` holds four tensors of shape [B, num_patches, embed_dim], ordered
    shallow to deep. ``grid`` is the (rows, cols) layout of the patches.
    """
    tokens: list[torch.Tensor]
    grid: tuple[int, int]


class PatchEmbed(nn.Module):
    """Non-overlapping patch projection plus learned position embeddings."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.proj = nn.Conv2d(3, cfg.embed_dim, kernel_size=cfg.patch_size, stride=cfg.patch_size)
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.num_patches, cfg.embed_dim))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.dim() != 4 or image.shape[1] != 3:
            raise ValueError(f"expected image of shape [B, 3, H, W], got {tuple(image.shape)}")
        h, w = image.shape[-2:]
        if h != self.cfg.image_size or w != self.cfg.image_size:
            raise ValueError(
                f"image is {h}x{w}, encoder configured for {self.cfg.image_size}x{self.cfg.image_size}")
        x = self.proj(image)                      # [B, D, g, g]
        x = x.flatten(2).transpose(1, 2)          # [B, g*g, D], row-major patch order
        return x + self.pos_embed


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, return_attention: bool = False):
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, self.head_dim).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        out = self.proj(out)
        if return_attention:
            return out, attn
        return out


class Block(nn.Module):
    """Pre-norm transformer block: x + MHSA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


class ViTEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.patch_embed = PatchEmbed(cfg)
        self.blocks = nn.ModuleList(
            Block(cfg.embed_dim, cfg.num_heads, cfg.mlp_ratio) for _ in range(cfg.num_blocks))
        self.apply(_init_weights)

    def forward(self, image: torch.Tensor) -> LayerTokens:
        x = self.patch_embed(image)
        taps = set(self.cfg.tap_layers)
        collected = []
        for i, blk in enumerate(self.blocks, start=1):
            x = blk(x)
            if i in taps:
                collected.append(x)
            if i == self.cfg.tap_layers[-1]:
                break
        g = self.cfg.grid_size
        return LayerTokens(tokens=collected, grid=(g, g))


def _init_weights(m: nn.Module):
    if isinstance(m, nn.Linear):
        nn.init.trunc_normal_(m.weight, std=0.02)
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, nn.LayerNorm):
        nn.init.ones_(m.weight)
        nn.init.zeros_(m.bias)


def patch_embed(image: torch.Tensor, embedder: PatchEmbed) -> torch.Tensor:
    """Embed a single [3, H, W] image (or a batch) into patch tokens."""
    if image.dim() == 3:
        return embedder(image.unsqueeze(0))[0]
    return embedder(image)


def encode(image: torch.Tensor, encoder: ViTEncoder) -> LayerTokens:
    if image.dim() == 3:
        out = encoder(image.unsqueeze(0))
        return LayerTokens([t[0] for t in out.tokens], out.grid)
    return encoder(image)


def attention_weights(block: Block, x: torch.Tensor) -> torch.Tensor:
    """Attention matrix [B, heads, N, N] the block would apply to ``x``."""
    _, attn = block.attn(block.norm1(x), return_attention=True)
    return attn


__all__ = [
    "EncoderConfig", "LayerTokens", "PatchEmbed", "Attention", "Block", "ViTEncoder",
    "patch_embed", "encode", "attention_weights",
]
