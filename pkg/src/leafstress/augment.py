"""Online training-time augmentation: flips, rotation, colour jitter and mixup.

Images are channel-first ``3 x H x W`` float arrays with values in [0, 1].
All randomness comes from an :class:`~leafstress.tensor.RngStream` keyed by
the caller, so a sample's transform never depends on processing order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BatchTooSmall, InvalidFactor, InvalidParameter
from .tensor import RngStream

LUMA = np.array([0.299, 0.587, 0.114])

# uniforms consumed by standard_augment per sample:
# hflip coin, vflip coin, angle, brightness, contrast, saturation
DRAWS_PER_SAMPLE = 6


@dataclass
class AugmentConfig:
    enabled: bool = True
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    rotation_range: float = 30.0
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    fill: tuple = (1.0, 1.0, 1.0)
    mixup_enabled: bool = False
    mixup_alpha: float = 0.2
    mixup_heads: tuple = ("stress", "severity")

    def validate(self):
        for name in ("hflip_prob", "vflip_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidParameter(f"{name} must lie in [0, 1]")
        for name in ("brightness", "contrast", "saturation"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise InvalidParameter(f"{name} jitter must lie in [0, 1) to keep factors positive")
        if self.rotation_range < 0:
            raise InvalidParameter("rotation_range must be non-negative")
        if not self.mixup_alpha > 0:
            raise InvalidParameter("mixup_alpha must be positive")
        self.mixup_heads = tuple(self.mixup_heads)
        self.fill = tuple(float(f) for f in self.fill)
        return self

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(enabled=False, mixup_enabled=False)


@dataclass
class LabeledSample:
    image: np.ndarray
    y_stress: np.ndarray
    y_severity: np.ndarray | None = None

    def labels(self):
        out = {"stress": self.y_stress}
        if self.y_severity is not None:
            out["severity"] = self.y_severity
        return out


def hflip(img):
    return img[:, :, ::-1].copy()


def vflip(img):
    return img[:, ::-1, :].copy()


def rotate(img, angle_deg: float, fill=(1.0, 1.0, 1.0)):
    """Rotate counter-clockwise (as displayed) about the image centre.

    Bilinear sampling; samples falling outside the image blend towards
    ``fill``. Quarter turns of square images are exact permutations.
    """
    c, h, w = img.shape
    quarter = angle_deg / 90.0
    if quarter == round(quarter) and (h == w or round(quarter) % 2 == 0):
        return np.ascontiguousarray(np.rot90(img, int(round(quarter)) % 4, axes=(1, 2)))
    theta = math.radians(angle_deg)
    cos, sin = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rr, cc = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = rr - cy, cc - cx
    sx = cx + cos * dx - sin * dy
    sy = cy + sin * dx + cos * dy
    fill_arr = np.asarray(fill, dtype=img.dtype).reshape(c, 1, 1)
    padded = np.empty((c, h + 2, w + 2), dtype=img.dtype)
    padded[...] = fill_arr
    padded[:, 1:-1, 1:-1] = img
    return _bilinear_sample(padded, sy + 1.0, sx + 1.0, fill_arr)


def _bilinear_sample(src, sy, sx, fill_arr):
    c, h, w = src.shape
    inside = (sy >= 0) & (sy <= h - 1) & (sx >= 0) & (sx <= w - 1)
    sy = np.clip(sy, 0, h - 1)
    sx = np.clip(sx, 0, w - 1)
    y0 = np.minimum(np.floor(sy).astype(np.intp), h - 2)
    x0 = np.minimum(np.floor(sx).astype(np.intp), w - 2)
    fy = (sy - y0).astype(src.dtype)
    fx = (sx - x0).astype(src.dtype)
    top = src[:, y0, x0] * (1 - fx) + src[:, y0, x0 + 1] * fx
    bot = src[:, y0 + 1, x0] * (1 - fx) + src[:, y0 + 1, x0 + 1] * fx
    out = top * (1 - fy) + bot * fy
    return np.where(inside, out, fill_arr).astype(src.dtype, copy=False)


def geometric(img, op: str, angle: float = 0.0, fill=(1.0, 1.0, 1.0)):
    if op == "hflip":
        return hflip(img)
    if op == "vflip":
        return vflip(img)
    if op == "rotate":
        return rotate(img, angle, fill)
    raise InvalidParameter(f"unknown geometric op {op!r}")


def _luma(img):
    return np.tensordot(LUMA.astype(img.dtype), img, axes=(0, 0))


def color_jitter(img, factors):
    """Brightness, then contrast, then saturation, clamping after each step.

    Saturation 0 is allowed and gives the grayscale image.
    """
    b, c, s = factors
    if min(b, c) <= 0 or s < 0:
        raise InvalidFactor(f"brightness/contrast must be positive and saturation non-negative, got {factors}")
    one = img.dtype.type(1)
    out = np.clip(img * img.dtype.type(b), 0, one)
    mean = _luma(out).mean(dtype=np.float64).astype(img.dtype)
    out = np.clip(mean + (out - mean) * img.dtype.type(c), 0, one)
    gray = _luma(out)[None]
    return np.clip(gray + (out - gray) * img.dtype.type(s), 0, one)


def augment_image(img, cfg: AugmentConfig, stream: RngStream):
    u = stream.uniform(DRAWS_PER_SAMPLE)
    out = img
    if u[0] < cfg.hflip_prob:
        out = hflip(out)
    if u[1] < cfg.vflip_prob:
        out = vflip(out)
    if cfg.rotation_range > 0:
        out = rotate(out, (2.0 * u[2] - 1.0) * cfg.rotation_range, cfg.fill)
    factors = tuple(1.0 + (2.0 * u[3 + i] - 1.0) * r for i, r in enumerate((cfg.brightness, cfg.contrast, cfg.saturation)))
    if factors != (1.0, 1.0, 1.0):
        out = color_jitter(out, factors)
    return out


def standard_augment(sample: LabeledSample, cfg: AugmentConfig, stream: RngStream) -> LabeledSample:
    """Flip/rotate/jitter one sample; labels pass through untouched."""
    return replace(sample, image=augment_image(sample.image, cfg, stream))


def mixup_plan(n: int, alpha: float, stream: RngStream):
    """Per-position mixing weights and partner indices for a batch of ``n``."""
    if n < 2:
        raise BatchTooSmall("mixup needs at least two samples")
    lam = stream.beta(alpha, alpha, n)
    partners = stream.permutation(n)
    return lam, partners


def mix_arrays(images, targets: dict, lam, partners, heads=("stress", "severity")):
    """Convex combination ``lam*x_i + (1-lam)*x_partner`` of images and labels.

    Labels of tasks not in ``heads`` are left as they were.
    """
    lam_img = lam.astype(images.dtype).reshape(-1, *([1] * (images.ndim - 1)))
    other = images[partners]
    mixed = lam_img * images + (1 - lam_img) * other
    # rounding guard: keep every pixel inside its convex hull
    mixed = np.clip(mixed, np.minimum(images, other), np.maximum(images, other))
    out_targets = {}
    for task, y in targets.items():
        if task in heads:
            lam_y = lam.astype(y.dtype)[:, None]
            out_targets[task] = lam_y * y + (1 - lam_y) * y[partners]
        else:
            out_targets[task] = y
    return mixed, out_targets


def mixup_batch(batch: list, alpha: float, stream: RngStream, heads=("stress", "severity")) -> list:
    lam, partners = mixup_plan(len(batch), alpha, stream)
    images = np.stack([s.image for s in batch])
    targets = {"stress": np.stack([s.y_stress for s in batch])}
    if all(s.y_severity is not None for s in batch):
        targets["severity"] = np.stack([s.y_severity for s in batch])
    mixed, mixed_t = mix_arrays(images, targets, lam, partners, heads)
    sev = mixed_t.get("severity")
    return [
        LabeledSample(mixed[i], mixed_t["stress"][i], None if sev is None else sev[i])
        for i in range(len(batch))
    ]
