"""Synthetic transparent-object scenes and the on-disk dataset format.

Layout of a dataset directory::

    root/rgb/<id>.png     8-bit RGB
    root/depth/<id>.png   16-bit grayscale, value = round(depth * depth_scale)
    root/mask/<id>.png    8-bit paletted class ids
    root/meta.json        {"depth_scale": ..., "num_classes": ..., "image_size": ...}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from scipy import ndimage

DEPTH_SCALE = 65535
SHAPES = ("sphere", "box", "cylinder")


class DatasetError(RuntimeError):
    pass


@dataclass
class ImageSample:
    rgb: np.ndarray    # float32 [3, H, W] in [0, 1]
    depth: np.ndarray  # float32 [H, W] in [0, 1]
    seg: np.ndarray    # int64 [H, W]
    id: str


@dataclass
class SceneConfig:
    image_size: int = 96
    num_objects: tuple[int, int] = (1, 3)
    shapes: tuple[str, ...] = SHAPES
    radius: tuple[float, float] = (0.12, 0.26)        # fraction of image size
    alpha_blend: tuple[float, float] = (0.12, 0.3)    # tint opacity, never 0 or 1
    refraction: tuple[float, float] = (0.55, 0.85)    # lens magnification of the background
    texture_seed: int | None = None                   # fixed texture for every scene if set
    background_depth: tuple[float, float] = (0.72, 0.95)
    object_depth: tuple[float, float] = (0.3, 0.55)   # depth of the object's silhouette rim
    relief: tuple[float, float] = (0.05, 0.18)        # how far the surface bulges toward the camera
    depth_jitter: float = 0.03                        # rim depth not explained by apparent size
    haze: float = 0.35                                # fade of the background toward grey with distance
    min_depth_step: float = 0.1
    object_fraction: tuple[float, float] = (0.03, 0.6)
    num_classes: int = 2

    def __post_init__(self):
        self.num_objects = tuple(self.num_objects)
        self.shapes = tuple(self.shapes)
        lo, hi = self.alpha_blend
        if not (0 < lo <= hi < 1):
            raise ValueError(f"alpha_blend must lie in (0, 1), got {self.alpha_blend}")
        if self.object_depth[1] + self.min_depth_step > self.background_depth[0]:
            raise ValueError("object_depth must end at least min_depth_step in front of the background")
        if self.object_depth[0] - self.relief[1] < 0 or self.background_depth[1] > 1:
            raise ValueError("depth ranges must stay inside [0, 1]")
        unknown = set(self.shapes) - set(SHAPES)
        if unknown:
            raise ValueError(f"unknown shapes {sorted(unknown)}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not (0 <= self.haze < 1) or self.depth_jitter < 0:
            raise ValueError("haze must lie in [0, 1) and depth_jitter must be >= 0")


def _texture(rng: np.random.Generator, size: int, scale: np.ndarray) -> np.ndarray:
    """Procedural texture; ``scale`` [H, W] stretches local frequency (farther = finer)."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    u, v = xx * scale / size, yy * scale / size
    img = np.zeros((3, size, size))
    base = rng.uniform(0.3, 0.7, size=3)
    for c in range(3):
        acc = np.zeros((size, size))
        for _ in range(4):
            theta = rng.uniform(0, np.pi)
            freq = rng.uniform(2, 10)
            phase = rng.uniform(0, 2 * np.pi)
            acc += rng.uniform(0.3, 1.0) * np.sin(
                2 * np.pi * freq * (u * np.cos(theta) + v * np.sin(theta)) + phase)
        noise = ndimage.gaussian_filter(rng.standard_normal((2 * size, 2 * size)), sigma=1.5)
        noise = ndimage.map_coordinates(noise, [yy * scale, xx * scale], order=1, mode="wrap")
        acc = acc / 4 + 0.8 * noise
        img[c] = base[c] + 0.2 * acc
    return np.clip(img, 0.0, 1.0)


def _object(rng: np.random.Generator, cfg: SceneConfig, shape: str):
    """Return (mask, depth, radial coordinate, centre) for one object."""
    s = cfg.image_size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    r_frac = rng.uniform(*cfg.radius)
    r = r_frac * s
    cx, cy = rng.uniform(0.15 * s, 0.85 * s, size=2)
    # perspective cue: larger silhouettes sit nearer the camera
    t = (r_frac - cfg.radius[0]) / max(cfg.radius[1] - cfg.radius[0], 1e-9)
    near, far = cfg.object_depth
    rim = far - t * (far - near) + rng.uniform(-cfg.depth_jitter, cfg.depth_jitter)
    rim = float(np.clip(rim, near, far))
    relief = rng.uniform(*cfg.relief)
    theta = rng.uniform(0, np.pi)
    u = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
    v = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
    if shape == "sphere":
        rho = np.hypot(u, v) / r
        mask = rho < 1
        depth = rim - relief * np.sqrt(np.clip(1 - rho ** 2, 0, 1))
    elif shape == "cylinder":
        half_len = r * rng.uniform(1.2, 1.8)
        rho = np.abs(u) / r
        mask = (rho < 1) & (np.abs(v) < half_len)
        depth = rim - relief * np.sqrt(np.clip(1 - rho ** 2, 0, 1))
        rho = np.maximum(rho, np.abs(v) / half_len)
    else:  # box: a tilted planar face
        a, b = r, r * rng.uniform(0.6, 1.0)
        rho = np.maximum(np.abs(u) / a, np.abs(v) / b)
        mask = rho < 1
        tilt = rng.uniform(-0.5, 0.5)
        depth = rim - relief * (0.5 + tilt * u / a)
    return mask, depth, rho, (cx, cy)


def generate_scene(seed: int, cfg: SceneConfig | None = None) -> ImageSample:
    """Deterministic synthetic scene for ``seed``."""
    cfg = cfg or SceneConfig()
    rng = np.random.default_rng(seed)
    s = cfg.image_size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64) / s - 0.5
    d_lo, d_hi = cfg.background_depth
    d0 = rng.uniform(d_lo, d_hi)
    slack = min(d0 - d_lo, d_hi - d0)
    gx, gy = rng.uniform(-1, 1, size=2) * slack
    bg_depth = np.clip(d0 + gx * xx + gy * yy, d_lo, d_hi)

    # monocular cues for the background: texture gets finer and hazier with distance
    tex_rng = np.random.default_rng(cfg.texture_seed) if cfg.texture_seed is not None else rng
    background = _texture(tex_rng, s, (bg_depth / d_lo) ** 2)
    fog = cfg.haze * (bg_depth - d_lo) / max(d_hi - d_lo, 1e-9)
    background = (1 - fog) * background + fog * 0.5

    n_obj = int(rng.integers(cfg.num_objects[0], cfg.num_objects[1] + 1))
    for _attempt in range(100):
        objects = [_object(rng, cfg, str(rng.choice(cfg.shapes))) for _ in range(n_obj)]
        cover = np.zeros((s, s), bool)
        for m, *_ in objects:
            cover |= m
        frac = cover.mean()
        if n_obj == 0 or cfg.object_fraction[0] <= frac <= cfg.object_fraction[1]:
            break
    else:
        raise RuntimeError(f"seed {seed}: could not place objects within object_fraction bounds")

    depth = bg_depth.copy()
    seg = np.zeros((s, s), np.int64)
    rgb = background.copy()
    ys, xs = np.mgrid[0:s, 0:s].astype(np.float64)
    # composite far-to-near so nearer surfaces overwrite
    def mean_depth(item):
        mask, obj_depth = item[1][0], item[1][1]
        return float(obj_depth[mask].mean()) if mask.any() else 1.0

    for shape_idx, (mask, obj_depth, rho, (cx, cy)) in sorted(
            enumerate(objects), key=mean_depth, reverse=True):
        if not mask.any():
            continue
        front = mask & (obj_depth < depth)
        depth[front] = obj_depth[front]
        seg[front] = 1 + shape_idx % (cfg.num_classes - 1)

        mag = rng.uniform(*cfg.refraction)
        src_x = cx + (xs - cx) * mag
        src_y = cy + (ys - cy) * mag
        warped = np.stack([
            ndimage.map_coordinates(rgb[c], [src_y, src_x], order=1, mode="reflect")
            for c in range(3)])
        alpha = rng.uniform(*cfg.alpha_blend)
        tint = rng.uniform(0.6, 1.0, size=3)[:, None, None]
        obj_rgb = (1 - alpha) * warped + alpha * tint
        # faint darkening toward the silhouette, where real glass refracts most
        obj_rgb = obj_rgb * (1 - 0.15 * np.clip(rho, 0, 1) ** 6)
        rgb = np.where(front[None], obj_rgb, rgb)

    return ImageSample(
        rgb=np.clip(rgb, 0, 1).astype(np.float32),
        depth=np.clip(depth, 0, 1).astype(np.float32),
        seg=seg,
        id=f"{seed:06d}",
    )


def generate_dataset(count: int, seed: int = 0, cfg: SceneConfig | None = None) -> list[ImageSample]:
    """Samples for seeds ``seed .. seed + count - 1``."""
    return [generate_scene(seed + i, cfg) for i in range(count)]


def split_seeds(n_train: int, n_test: int, base: int = 0) -> tuple[range, range]:
    """Disjoint seed ranges for a train/test split."""
    return range(base, base + n_train), range(base + n_train, base + n_train + n_test)


def save_dataset(root: str | Path, samples: list[ImageSample], num_classes: int = 2,
                 depth_scale: int = DEPTH_SCALE):
    root = Path(root)
    for sub in ("rgb", "depth", "mask"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    size = samples[0].depth.shape[0] if samples else 0
    for s in samples:
        write_rgb(root / "rgb" / f"{s.id}.png", s.rgb)
        write_depth(root / "depth" / f"{s.id}.png", s.depth, depth_scale)
        write_mask(root / "mask" / f"{s.id}.png", s.seg)
    meta = {"depth_scale": depth_scale, "num_classes": num_classes, "image_size": int(size)}
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def write_rgb(path, rgb: np.ndarray):
    arr = np.round(np.clip(rgb, 0, 1).transpose(1, 2, 0) * 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def write_depth(path, depth: np.ndarray, depth_scale: int = DEPTH_SCALE):
    if depth_scale > 65535:
        raise ValueError("depth_scale must fit a 16-bit PNG")
    arr = np.round(np.clip(depth, 0, 1) * depth_scale).astype(np.uint16)
    Image.fromarray(arr).save(path)


_PALETTE = [0, 0, 0, 255, 255, 255] + [v for i in range(2, 256) for v in
                                      ((i * 67) % 256, (i * 137) % 256, (i * 199) % 256)]


def write_mask(path, seg: np.ndarray):
    img = Image.fromarray(seg.astype(np.uint8), mode="P")
    img.putpalette(_PALETTE)
    img.save(path)


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float32).transpose(2, 0, 1) / 255.0


def read_depth(path, depth_scale: int = DEPTH_SCALE) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img)
    return arr.astype(np.float64) / depth_scale


def read_mask(path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode not in ("P", "L"):
            raise DatasetError(f"{path}: mask must be an 8-bit paletted or grayscale PNG, got {img.mode}")
        return np.asarray(img).astype(np.int64)


def _resize(arr: np.ndarray, size: int, resample) -> np.ndarray:
    if arr.shape[-1] == size and arr.shape[-2] == size:
        return arr
    if arr.ndim == 3:
        return np.stack([_resize(c, size, resample) for c in arr])
    img = Image.fromarray(arr.astype(np.float32), mode="F")
    return np.asarray(img.resize((size, size), resample=resample))


def load_dataset(root: str | Path, image_size: int | None = None) -> list[ImageSample]:
    """Read every rgb/depth/mask triplet under ``root``, sorted by id.

    ``image_size`` resizes samples (bilinear for RGB, nearest for depth and masks);
    no other transformation is applied.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a directory")
    meta_path = root / "meta.json"
    ids = set()
    for sub in ("rgb", "depth", "mask"):
        d = root / sub
        if d.is_dir():
            ids |= {p.stem for p in d.glob("*.png")}
    if not ids:
        return []
    if not meta_path.exists():
        raise DatasetError(f"{root}: missing meta.json")
    meta = json.loads(meta_path.read_text())
    scale = meta.get("depth_scale", DEPTH_SCALE)
    num_classes = meta.get("num_classes", 2)

    samples = []
    for sid in sorted(ids):
        paths = {sub: root / sub / f"{sid}.png" for sub in ("rgb", "depth", "mask")}
        missing = [sub for sub, p in paths.items() if not p.exists()]
        if missing:
            raise DatasetError(f"sample {sid}: missing {', '.join(missing)} file(s)")
        try:
            rgb = read_rgb(paths["rgb"])
            depth = read_depth(paths["depth"], scale)
            seg = read_mask(paths["mask"])
        except DatasetError:
            raise
        except Exception as exc:
            raise DatasetError(f"sample {sid}: unreadable image ({exc})") from exc
        if not (rgb.shape[1:] == depth.shape == seg.shape):
            raise DatasetError(
                f"sample {sid}: mismatched sizes rgb {rgb.shape[1:]}, depth {depth.shape}, mask {seg.shape}")
        if seg.max() >= num_classes:
            raise DatasetError(f"sample {sid}: mask id {seg.max()} >= num_classes {num_classes}")
        if image_size is not None:
            rgb = np.clip(_resize(rgb, image_size, Image.BILINEAR), 0, 1)
            depth = _resize(depth, image_size, Image.NEAREST)
            seg = _resize(seg, image_size, Image.NEAREST).astype(np.int64)
        samples.append(ImageSample(rgb.astype(np.float32), depth.astype(np.float32), seg, sid))
    return samples


def read_meta(root: str | Path) -> dict:
    return json.loads((Path(root) / "meta.json").read_text())


def collate(samples: list[ImageSample]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack samples into (rgb [B,3,H,W], depth [B,H,W], seg [B,H,W]) tensors."""
    rgb = torch.from_numpy(np.stack([s.rgb for s in samples]))
    depth = torch.from_numpy(np.stack([s.depth for s in samples]))
    seg = torch.from_numpy(np.stack([s.seg for s in samples]))
    return rgb, depth, seg


__all__ = ["DEPTH_SCALE", "SHAPES", "DatasetError", "ImageSample", "SceneConfig",
           "generate_scene", "generate_dataset", "split_seeds", "save_dataset", "load_dataset",
           "read_meta", "read_rgb", "read_depth", "read_mask", "write_rgb", "write_depth",
           "write_mask", "collate"]
