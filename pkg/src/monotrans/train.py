"""Training loop and checkpoint IO."""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .config import TrainConfig, from_flat, to_flat
from .data import ImageSample, collate
from .losses import total_loss
from .model import MonoTransNet

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


def set_determinism(cfg: TrainConfig):
    torch.manual_seed(cfg.seed)
    if cfg.deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def build_optimizer(model: MonoTransNet, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                            betas=(cfg.adam_beta1, cfg.adam_beta2), eps=cfg.adam_eps,
                            weight_decay=cfg.weight_decay)


def epoch_order(n: int, seed: int, epoch: int) -> list[int]:
    """Sample order for one epoch; depends only on (seed, epoch) so resumes line up."""
    g = torch.Generator().manual_seed(seed * 1_000_003 + epoch)
    return torch.randperm(n, generator=g).tolist()


def save_checkpoint(path: str | Path, model: MonoTransNet, optimizer, cfg: TrainConfig,
                    epoch: int, step: int):
    path = Path(path)
    payload = {
        "format_version": FORMAT_VERSION,
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "epoch": epoch,
        "step": step,
        "config": to_flat(cfg),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        torch.save(payload, tmp)
        tmp.replace(path)
    except OSError as exc:
        raise CheckpointError(f"failed to write checkpoint {path}: {exc}") from exc


@dataclass
class Checkpoint:
    model: MonoTransNet
    config: TrainConfig
    epoch: int
    step: int
    optimizer_state: dict | None = None


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # torch.load raises a wide variety on corrupt input
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version") if isinstance(payload, dict) else None
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format_version {version!r}, expected {FORMAT_VERSION}")
    cfg = from_flat(payload["config"])
    model = MonoTransNet(cfg.model)
    model.load_state_dict(payload["model"])
    model.eval()
    return Checkpoint(model, cfg, payload["epoch"], payload["step"], payload["optimizer"])


def parameter_bytes(model: MonoTransNet) -> bytes:
    """Serialized parameter payload, used to check save/load round trips."""
    buf = io.BytesIO()
    torch.save(model.state_dict(), buf)
    return buf.getvalue()


@dataclass
class TrainResult:
    model: MonoTransNet
    checkpoint_path: Path | None
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)


def train(cfg: TrainConfig, samples: list[ImageSample], resume: str | Path | None = None,
          write_files: bool = True) -> TrainResult:
    """Minimise the ramped multi-scale hybrid loss with Adam.

    Writes ``last.pt`` and ``train_log.jsonl`` to ``cfg.checkpoint_dir`` when
    ``write_files`` is set. Resuming continues from the epoch after the one
    stored in the checkpoint.
    """
    if not samples:
        raise TrainingError("training dataset is empty")
    size = cfg.model.encoder.image_size
    if samples[0].rgb.shape[-1] != size:
        raise TrainingError(f"samples are {samples[0].rgb.shape[-1]}px, model expects {size}px")
    set_determinism(cfg)
    model = MonoTransNet(cfg.model)
    optimizer = build_optimizer(model, cfg)
    start_epoch, step = 0, 0
    if resume is not None:
        ck = load_checkpoint(resume)
        model.load_state_dict(ck.model.state_dict())
        if ck.optimizer_state is not None:
            optimizer.load_state_dict(ck.optimizer_state)
        start_epoch, step = ck.epoch + 1, ck.step

    out_dir = Path(cfg.checkpoint_dir)
    ckpt_path = out_dir / "last.pt"
    log_file = None
    if write_files:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_file = open(out_dir / "train_log.jsonl", "a" if resume else "w")

    result = TrainResult(model, ckpt_path if write_files else None)
    model.train()
    accum = cfg.grad_accumulation
    try:
        for epoch in range(start_epoch, cfg.epochs):
            order = epoch_order(len(samples), cfg.seed, epoch)
            batches = [order[i:i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
            epoch_losses = []
            optimizer.zero_grad()
            for bi, idx in enumerate(batches):
                rgb, depth, seg = collate([samples[i] for i in idx])
                out = model.run(rgb)
                br = total_loss(out.states, model.heads, depth, seg, cfg.loss)
                if not torch.isfinite(br.total):
                    ids = ",".join(samples[i].id for i in idx)
                    raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bi} (samples {ids})")
                (br.total / accum).backward()
                if (bi + 1) % accum and bi + 1 != len(batches):
                    continue
                optimizer.step()
                optimizer.zero_grad()
                step += 1
                entry = {"step": step, "epoch": epoch, "loss_total": float(br.total.detach()),
                         "loss_geo": br.geo, "loss_sem": br.sem, "per_iteration": br.per_iteration}
                epoch_losses.append(entry["loss_total"])
                result.steps.append(entry)
                if log_file is not None and step % cfg.log_interval == 0:
                    log_file.write(json.dumps(entry) + "\n")
                if cfg.max_steps and step >= cfg.max_steps:
                    break
            summary = {"epoch": epoch, "step": step,
                       "loss_total": sum(epoch_losses) / max(len(epoch_losses), 1)}
            result.epochs.append(summary)
            log.info("epoch %d step %d loss %.5f", epoch, step, summary["loss_total"])
            done = bool(cfg.max_steps and step >= cfg.max_steps) or epoch == cfg.epochs - 1
            if write_files and ((epoch + 1) % cfg.checkpoint_interval == 0 or done):
                save_checkpoint(ckpt_path, model, optimizer, cfg, epoch, step)
            if done:
                break
    finally:
        if log_file is not None:
            log_file.close()
    model.eval()
    return result


__all__ = ["FORMAT_VERSION", "TrainingError", "CheckpointError", "Checkpoint", "TrainResult",
           "train", "save_checkpoint", "load_checkpoint", "parameter_bytes", "epoch_order",
           "set_determinism", "build_optimizer"]
