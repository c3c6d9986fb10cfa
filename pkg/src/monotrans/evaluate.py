"""Inference over a dataset, metric aggregation, and single-image prediction to disk."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from . import data
from .metrics import MetricsReport, aggregate, image_metrics
from .model import MonoTransNet


@torch.no_grad()
def infer(model: MonoTransNet, rgb: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Return (depth [B,H,W], class probabilities [B,K,H,W]) for an RGB batch."""
    model.eval()
    pred = model(rgb)
    return pred.depth, pred.seg_logits.softmax(dim=1)


def evaluate(model: MonoTransNet, samples: list[data.ImageSample], batch_size: int = 8,
             oracle: bool = False) -> MetricsReport:
    """Per-image metrics averaged uniformly over ``samples``.

    With ``oracle`` set the ground truth is scored against itself, which pins
    the harness's upper bound (rmse 0, iou 1).
    """
    if not samples:
        raise ValueError("evaluation dataset is empty")
    k = model.cfg.decoder.num_classes
    per_image = []
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        rgb, depth, seg = data.collate(chunk)
        if oracle:
            pd, prob = depth, F.one_hot(seg, k).permute(0, 3, 1, 2).to(depth.dtype)
        else:
            pd, prob = infer(model, rgb)
        for j in range(len(chunk)):
            gt = depth[j].numpy()
            per_image.append(image_metrics(pd[j].numpy(), gt, prob[j].numpy(), seg[j].numpy(),
                                           k, valid=gt > 0))
    return aggregate(per_image)


def predict_image(model: MonoTransNet, rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predict depth and class mask for one [3, H, W] image at its own resolution."""
    h, w = rgb.shape[-2:]
    x = torch.from_numpy(np.ascontiguousarray(rgb, dtype=np.float32))[None]
    size = model.image_size
    if (h, w) != (size, size):
        x = F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False).clamp(0, 1)
    depth, prob = infer(model, x)
    if (h, w) != (size, size):
        depth = F.interpolate(depth[:, None], size=(h, w), mode="bilinear", align_corners=False)[:, 0]
        prob = F.interpolate(prob, size=(h, w), mode="bilinear", align_corners=False)
    return depth[0].clamp(0, 1).numpy(), prob[0].argmax(0).numpy().astype(np.int64)


def predict_to_files(model: MonoTransNet, image_path: str | Path, out_dir: str | Path,
                     visualize: bool = True) -> dict:
    """Write ``<stem>_depth.png`` (16-bit), ``<stem>_mask.png`` and optionally a color-mapped ``<stem>_viz.png``."""
    image_path, out_dir = Path(image_path), Path(out_dir)
    try:
        rgb = data.read_rgb(image_path)
    except Exception as exc:
        raise data.DatasetError(f"cannot read image {image_path}: {exc}") from exc
    depth, mask = predict_image(model, rgb)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = image_path.stem
    paths = {"depth": out_dir / f"{stem}_depth.png", "mask": out_dir / f"{stem}_mask.png"}
    data.write_depth(paths["depth"], depth)
    data.write_mask(paths["mask"], mask)
    if visualize:
        paths["viz"] = out_dir / f"{stem}_viz.png"
        _write_viz(paths["viz"], depth)
    return {"paths": paths, "depth": depth, "mask": mask}


def _write_viz(path: Path, depth: np.ndarray):
    from matplotlib import colormaps
    colored = colormaps["viridis"](np.clip(depth, 0, 1))[..., :3]
    Image.fromarray(np.round(colored * 255).astype(np.uint8)).save(path)
