"""Shared-weight iterative fusion decoder and the two prediction heads."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .fusion import SGFM, NoFusion
from .reassemble import FeaturePyramid

NUM_LEVELS = 4


@dataclass
class DecoderConfig:
    num_iterations: int = 3
    num_classes: int = 2

    def __post_init__(self):
        if self.num_iterations < 1:
            raise ValueError(f"num_iterations must be >= 1, got {self.num_iterations}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")


@dataclass
class IterationState:
    """All fused multi-scale features of one refinement iteration (1-based index)."""
    depth: list[torch.Tensor]
    seg: list[torch.Tensor]
    iteration_index: int

    def __post_init__(self):
        if len(self.depth) != NUM_LEVELS or len(self.seg) != NUM_LEVELS:
            raise ValueError("an iteration state holds exactly 4 levels per branch")


@dataclass
class Predictions:
    depth: torch.Tensor       # [B, H, W], >= 0
    seg_logits: torch.Tensor  # [B, num_classes, H, W]


class Gate(nn.Module):
    """1x1 convolution (no bias) + ReLU carrying one level between iterations."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, kernel_size=1, bias=False)

    def forward(self, x):
        return F.relu(self.conv(x))


class ResidualConvUnit(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        out = self.conv1(F.relu(x))
        out = self.conv2(F.relu(out))
        return x + out


class FusionDecoder(nn.Module):
    """One decoding pass. The same instance is reused for every iteration.

    Per level, deepest first: add the gated previous-iteration features to the
    reassembled ones, fuse across branches, add the upsampled result of the
    coarser level, then refine with a residual conv unit.
    """

    def __init__(self, channels: int, reduction: int = 4, use_sgfm: bool = True):
        super().__init__()
        self.use_sgfm = use_sgfm
        self.gates_d = nn.ModuleList(Gate(channels) for _ in range(NUM_LEVELS))
        self.gates_s = nn.ModuleList(Gate(channels) for _ in range(NUM_LEVELS))
        if use_sgfm:
            self.fusion = nn.ModuleList(SGFM(channels, reduction) for _ in range(NUM_LEVELS))
        else:
            self.fusion = nn.ModuleList(NoFusion() for _ in range(NUM_LEVELS))
        self.refine_d = nn.ModuleList(ResidualConvUnit(channels) for _ in range(NUM_LEVELS))
        self.refine_s = nn.ModuleList(ResidualConvUnit(channels) for _ in range(NUM_LEVELS))

    def gate(self, prev: IterationState) -> tuple[list[torch.Tensor], list[torch.Tensor]]:
        gd = [g(x) for g, x in zip(self.gates_d, prev.depth)]
        gs = [g(x) for g, x in zip(self.gates_s, prev.seg)]
        return gd, gs

    def forward(self, fe: tuple[FeaturePyramid, FeaturePyramid],
                prev: IterationState | None = None, iteration_index: int = 1) -> IterationState:
        if (prev is None) != (iteration_index == 1):
            raise RuntimeError(
                f"iteration {iteration_index} called with prev={'None' if prev is None else 'state'}; "
                "prev must be None exactly at iteration 1")
        fe_d, fe_s = fe[0].levels, fe[1].levels
        if prev is not None:
            gd, gs = self.gate(prev)
            in_d = [a + b for a, b in zip(fe_d, gd)]
            in_s = [a + b for a, b in zip(fe_s, gs)]
        else:
            in_d, in_s = list(fe_d), list(fe_s)

        out_d: list[torch.Tensor] = [None] * NUM_LEVELS
        out_s: list[torch.Tensor] = [None] * NUM_LEVELS
        coarse_d = coarse_s = None
        for lvl in reversed(range(NUM_LEVELS)):
            x_d, x_s = self.fusion[lvl](in_d[lvl], in_s[lvl])
            if coarse_d is not None:
                size = x_d.shape[-2:]
                x_d = x_d + F.interpolate(coarse_d, size=size, mode="bilinear", align_corners=False)
                x_s = x_s + F.interpolate(coarse_s, size=size, mode="bilinear", align_corners=False)
            coarse_d = out_d[lvl] = self.refine_d[lvl](x_d)
            coarse_s = out_s[lvl] = self.refine_s[lvl](x_s)
        return IterationState(out_d, out_s, iteration_index)


def gate(prev: IterationState, decoder: FusionDecoder) -> IterationState:
    gd, gs = decoder.gate(prev)
    return IterationState(gd, gs, prev.iteration_index)


def decode_once(fe, prev: IterationState | None, decoder: FusionDecoder,
                iteration_index: int | None = None) -> IterationState:
    if iteration_index is None:
        iteration_index = 1 if prev is None else prev.iteration_index + 1
    return decoder(fe, prev, iteration_index)


def run_iterations(fe, cfg: DecoderConfig, decoder: FusionDecoder) -> list[IterationState]:
    states: list[IterationState] = []
    prev = None
    for n in range(1, cfg.num_iterations + 1):
        prev = decoder(fe, prev, n)
        states.append(prev)
    return states


class DepthHead(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        hidden = max(channels // 2, 1)
        self.conv1 = nn.Conv2d(channels, hidden, 3, padding=1)
        self.conv2 = nn.Conv2d(hidden, 1, 1)
        nn.init.constant_(self.conv2.bias, 0.5)  # start mid-range in normalized depth

    def forward(self, x, size):
        x = self.conv2(F.relu(self.conv1(x)))
        x = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
        return F.relu(x)[:, 0]


class SegHead(nn.Module):
    def __init__(self, channels: int, num_classes: int):
        super().__init__()
        hidden = max(channels // 2, 1)
        self.conv1 = nn.Conv2d(channels, hidden, 3, padding=1)
        self.conv2 = nn.Conv2d(hidden, num_classes, 1)

    def forward(self, x, size):
        x = self.conv2(F.relu(self.conv1(x)))
        return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class PredictionHeads(nn.Module):
    """Depth and segmentation heads, shared across iterations and pyramid levels."""

    def __init__(self, channels: int, num_classes: int):
        super().__init__()
        self.depth = DepthHead(channels)
        self.seg = SegHead(channels, num_classes)

    def forward(self, state: IterationState, size: tuple[int, int], level: int = 0) -> Predictions:
        return Predictions(self.depth(state.depth[level], size), self.seg(state.seg[level], size))


def predict_heads(state: IterationState, heads: PredictionHeads,
                  size: tuple[int, int], level: int = 0) -> Predictions:
    return heads(state, size, level)
