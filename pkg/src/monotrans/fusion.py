"""Cross-task semantic/geometric fusion.

Each branch is gated along channels and then along space by attention maps
computed from the *other* branch. Both gates are sigmoid outputs, so fusion
can only shrink feature magnitudes.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class AttentionParams(nn.Module):
    """Parameters of one channel + spatial attention stack.

    ``channel_mlp`` is shared by the average- and max-pooled paths; ``spatial_conv``
    maps the [avg, max] channel-pooled pair to a single logit map.
    """

    def __init__(self, channels: int, reduction: int = 4, kernel_size: int = 7):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.channels = channels
        self.channel_mlp = nn.Sequential(
            nn.Linear(channels, hidden, bias=False),
            nn.ReLU(),
            nn.Linear(hidden, channels, bias=False),
        )
        self.spatial_conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2)

    def zero_(self) -> "AttentionParams":
        with torch.no_grad():
            for p in self.parameters():
                p.zero_()
        return self


def _batched(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise ValueError(f"expected [C, H, W] or [B, C, H, W], got {tuple(x.shape)}")


def channel_attention(feat: torch.Tensor, p: AttentionParams) -> torch.Tensor:
    """sigmoid(MLP(avgpool(F)) + MLP(maxpool(F))), shape [B, C, 1, 1]."""
    x, single = _batched(feat)
    avg = x.mean(dim=(2, 3))
    mx = x.amax(dim=(2, 3))
    w = torch.sigmoid(p.channel_mlp(avg) + p.channel_mlp(mx))[:, :, None, None]
    return w[0] if single else w


def spatial_attention(feat: torch.Tensor, p: AttentionParams) -> torch.Tensor:
    """sigmoid(conv7x7([mean_c F, max_c F])), shape [B, 1, H, W]."""
    x, single = _batched(feat)
    pooled = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
    w = torch.sigmoid(p.spatial_conv(pooled))
    return w[0] if single else w


def sgfm(f_d: torch.Tensor, f_s: torch.Tensor,
         p_d: AttentionParams, p_s: AttentionParams) -> tuple[torch.Tensor, torch.Tensor]:
    """Fuse one pyramid level of the depth and segmentation branches.

    ``p_s`` holds the attention computed *from* segmentation features (and
    applied to depth); ``p_d`` the reverse.
    """
    if f_d.shape != f_s.shape:
        raise ValueError(f"branch shapes differ: {tuple(f_d.shape)} vs {tuple(f_s.shape)}")
    f_d1 = f_d * channel_attention(f_s, p_s)
    f_s1 = f_s * channel_attention(f_d, p_d)
    f_d2 = f_d1 * spatial_attention(f_s1, p_s)
    f_s2 = f_s1 * spatial_attention(f_d1, p_d)
    return f_d2, f_s2


class SGFM(nn.Module):
    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        self.attn_d = AttentionParams(channels, reduction)
        self.attn_s = AttentionParams(channels, reduction)

    def forward(self, f_d, f_s):
        return sgfm(f_d, f_s, self.attn_d, self.attn_s)


class NoFusion(nn.Module):
    """Ablation stand-in: branches pass through untouched."""

    def forward(self, f_d, f_s):
        return f_d, f_s


__all__ = ["AttentionParams", "channel_attention", "spatial_attention", "sgfm", "SGFM",
           "NoFusion"]
