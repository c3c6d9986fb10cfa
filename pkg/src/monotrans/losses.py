"""Hybrid depth/segmentation objective with iteration-ramped multi-scale supervision."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .decoder import IterationState, PredictionHeads


@dataclass
class LossConfig:
    w_d: float = 1.0
    w_g: float = 1.0
    w_n: float = 1.0
    alpha: float = 1.0
    beta: float = 0.1
    iteration_ramp: bool = True

    def __post_init__(self):
        for name in ("w_d", "w_g", "w_n", "alpha", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def depth_gradients(depth: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Forward differences along x (columns) and y (rows); zero on the last column/row."""
    if depth.shape[-1] < 2 or depth.shape[-2] < 2:
        raise ValueError(f"depth map must be at least 2x2, got {tuple(depth.shape[-2:])}")
    gx = F.pad(depth[..., :, 1:] - depth[..., :, :-1], (0, 1, 0, 0))
    gy = F.pad(depth[..., 1:, :] - depth[..., :-1, :], (0, 0, 0, 1))
    return gx, gy


def normals_from_depth(depth: torch.Tensor) -> torch.Tensor:
    """Unit normals (-dD/dx, -dD/dy, 1)/norm on the pixel grid, stacked at dim -3."""
    gx, gy = depth_gradients(depth)
    inv = torch.rsqrt(gx * gx + gy * gy + 1.0)  # norm >= 1, never zero
    return torch.stack([-gx * inv, -gy * inv, inv], dim=-3)


def _as_batch(x: torch.Tensor) -> torch.Tensor:
    return x.unsqueeze(0) if x.dim() == 2 else x


def geometric_loss(pred: torch.Tensor, target: torch.Tensor, cfg: LossConfig | None = None,
                   valid: torch.Tensor | None = None) -> torch.Tensor:
    """w_d * RMS(D - D*) + w_g * mean|grad D - grad D*|_1 + w_n * mean|N_D - N_D*|_1.

    Maps are [H, W] or [B, H, W]; per-image values are averaged over the batch.
    The L1 terms sum over vector components and average over pixels. ``valid``
    optionally restricts every term to valid pixels (gradient and normal terms
    additionally need the right/lower neighbour valid).
    """
    cfg = cfg or LossConfig()
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    pred, target = _as_batch(pred), _as_batch(target)
    b = pred.shape[0]
    if valid is None:
        m = torch.ones_like(pred)
        m_grad = m
    else:
        m = _as_batch(valid).to(pred.dtype)
        right = F.pad(m[..., :, 1:], (0, 1, 0, 0), value=1.0)
        down = F.pad(m[..., 1:, :], (0, 0, 0, 1), value=1.0)
        m_grad = m * right * down
    count = m.flatten(1).sum(1).clamp_min(1.0)
    count_grad = m_grad.flatten(1).sum(1).clamp_min(1.0)

    diff = ((pred - target) * m).flatten(1)
    # vector_norm has a zero subgradient at 0, unlike sqrt(mean(.))
    value = torch.linalg.vector_norm(diff, dim=1) / count.sqrt()

    gx, gy = depth_gradients(pred)
    tx, ty = depth_gradients(target)
    grad = (((gx - tx).abs() + (gy - ty).abs()) * m_grad).flatten(1).sum(1) / count_grad

    nrm = ((normals_from_depth(pred) - normals_from_depth(target)).abs().sum(-3) * m_grad)
    nrm = nrm.flatten(1).sum(1) / count_grad

    per_image = cfg.w_d * value + cfg.w_g * grad + cfg.w_n * nrm
    return per_image.sum() / b


def semantic_loss(seg_logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel cross-entropy. Logits [K, H, W] or [B, K, H, W]; target class ids."""
    if seg_logits.dim() == 3:
        seg_logits, target = seg_logits.unsqueeze(0), target.unsqueeze(0)
    k = seg_logits.shape[1]
    target = target.long()
    if target.numel() and (int(target.min()) < 0 or int(target.max()) >= k):
        raise ValueError(f"class ids must lie in [0, {k}), got range "
                         f"[{int(target.min())}, {int(target.max())}]")
    return F.cross_entropy(seg_logits, target)


@dataclass
class LossBreakdown:
    total: torch.Tensor
    geo: float = 0.0
    sem: float = 0.0
    per_iteration: list[float] = field(default_factory=list)


def iteration_weights(n_iter: int, ramp: bool = True) -> list[float]:
    if ramp:
        return [n / n_iter for n in range(1, n_iter + 1)]
    return [1.0] * n_iter


def combine_iterations(per_iteration: list[torch.Tensor], ramp: bool = True) -> torch.Tensor:
    """sum_n (n/N) * L_n."""
    weights = iteration_weights(len(per_iteration), ramp)
    return sum(w * l for w, l in zip(weights, per_iteration))


def total_loss(states: list[IterationState], heads: PredictionHeads,
               depth_target: torch.Tensor, seg_target: torch.Tensor,
               cfg: LossConfig | None = None,
               valid: torch.Tensor | None = None) -> LossBreakdown:
    """Ramp-weighted sum over iterations of the scale-averaged hybrid loss.

    Every pyramid level of every iteration is passed through the shared heads,
    upsampled to full resolution and compared to the full-resolution targets.
    """
    cfg = cfg or LossConfig()
    size = depth_target.shape[-2:]
    per_iter, geo_terms, sem_terms = [], [], []
    for state in states:
        level_losses = []
        for lvl in range(len(state.depth)):
            pred = heads(state, size, level=lvl)
            l_geo = geometric_loss(pred.depth, depth_target, cfg, valid)
            l_sem = semantic_loss(pred.seg_logits, seg_target)
            geo_terms.append(l_geo.detach())
            sem_terms.append(l_sem.detach())
            level_losses.append(cfg.alpha * l_geo + cfg.beta * l_sem)
        per_iter.append(sum(level_losses) / len(level_losses))
    total = combine_iterations(per_iter, cfg.iteration_ramp)
    return LossBreakdown(
        total=total,
        geo=float(torch.stack(geo_terms).mean()),
        sem=float(torch.stack(sem_terms).mean()),
        per_iteration=[float(l.detach()) for l in per_iter],
    )


__all__ = ["LossConfig", "depth_gradients", "normals_from_depth", "geometric_loss",
           "semantic_loss", "LossBreakdown", "iteration_weights", "combine_iterations",
           "total_loss"]
