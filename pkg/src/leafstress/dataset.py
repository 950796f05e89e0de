"""Manifest handling, stratified splits, preprocessing cache and synthetic leaves."""

from __future__ import annotations

import csv
import logging
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import imaging
from .errors import (
    FileNotFound,
    IoError,
    MissingHeader,
    MissingSeverity,
    UnknownLabel,
    ValidationError,
)
from .labels import SEVERITY_NAMES, STRESS_NAMES, SeverityClass, StressClass
from .tensor import RngStream

log = logging.getLogger(__name__)

MANIFEST_HEADER = ["path", "kind", "stress", "severity", "split"]
KINDS = ("leaf", "symptom")
SPLITS = ("train", "val", "test")


@dataclass
class ManifestRecord:
    path: str
    kind: str
    stress: StressClass
    severity: SeverityClass | None = None
    split: str | None = None

    def row(self):
        return [
            self.path,
            self.kind,
            self.stress.name,
            "" if self.severity is None else self.severity.name,
            self.split or "",
        ]


def load_manifest(path, check_files: bool = False) -> list:
    """Parse and validate ``path,kind,stress,severity,split`` rows.

    Image paths are kept as written; with ``check_files`` they must exist
    relative to the manifest's directory.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != MANIFEST_HEADER:
        raise MissingHeader(f"manifest must start with '{','.join(MANIFEST_HEADER)}'")
    base = os.path.dirname(os.path.abspath(path))
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(c.strip() for c in row):
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise ValidationError(f"row {lineno}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}")
        img, kind, stress, severity, split = (c.strip() for c in row)
        if kind not in KINDS:
            raise UnknownLabel(lineno, "kind", kind)
        if stress not in STRESS_NAMES:
            raise UnknownLabel(lineno, "stress", stress)
        if severity and severity not in SEVERITY_NAMES:
            raise UnknownLabel(lineno, "severity", severity)
        if split and split not in SPLITS:
            raise UnknownLabel(lineno, "split", split)
        if kind == "leaf" and not severity:
            raise MissingSeverity(f"row {lineno}: leaf record without severity")
        if check_files and not os.path.exists(os.path.join(base, img)):
            raise FileNotFound(f"row {lineno}: image {img} not found")
        records.append(
            ManifestRecord(
                img, kind, StressClass[stress], SeverityClass[severity] if severity else None, split or None
            )
        )
    return records


def write_manifest(path, records):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(MANIFEST_HEADER)
            w.writerows(r.row() for r in records)
    except OSError as exc:
        raise IoError(f"cannot write manifest {path}: {exc}") from exc


# --------------------------------------------------------------------------
# splitting


@dataclass
class SplitSpec:
    train: Fraction = Fraction(70, 100)
    val: Fraction = Fraction(15, 100)
    test: Fraction = Fraction(15, 100)
    seed: int = 0
    stratify_on: str = "stress"

    def validate(self):
        self.train, self.val, self.test = (Fraction(str(f)) for f in (self.train, self.val, self.test))
        if min(self.train, self.val, self.test) < 0 or self.train + self.val + self.test != 1:
            raise ValidationError("split fractions must be non-negative and sum to 1")
        if self.stratify_on not in ("stress", "severity"):
            raise ValidationError(f"cannot stratify on {self.stratify_on!r}")
        return self


def split_sizes(n: int, spec: SplitSpec):
    """floor / floor / remainder, computed exactly."""
    n_train = math.floor(spec.train * n)
    n_val = math.floor(spec.val * n)
    return n_train, n_val, n - n_train - n_val


def stratified_split(records, spec: SplitSpec | None = None, respect_existing: bool = False):
    """Assign train/val/test per class; returns new records grouped by class.

    Each class is shuffled with its own stream keyed by (seed, class name).
    With ``respect_existing`` already-assigned records keep their split and
    only the unassigned ones are distributed.
    """
    spec = (spec or SplitSpec()).validate()
    if not respect_existing and any(r.split for r in records):
        raise ValidationError("records already carry split assignments")
    enum = StressClass if spec.stratify_on == "stress" else SeverityClass
    kept = [r for r in records if r.split] if respect_existing else []
    todo = [r for r in records if not r.split]
    out = list(kept)
    for cls in enum:
        members = [r for r in todo if getattr(r, spec.stratify_on) == cls]
        if spec.stratify_on == "severity" and any(r.severity is None for r in todo):
            raise MissingSeverity("cannot stratify on severity: some records lack it")
        if not members:
            warnings.warn(f"class {cls.name} has no records to split", stacklevel=2)
            continue
        order = RngStream.derive(spec.seed, "split", spec.stratify_on, cls.name).permutation(len(members))
        n_train, n_val, _ = split_sizes(len(members), spec)
        for pos, idx in enumerate(order):
            split = "train" if pos < n_train else "val" if pos < n_train + n_val else "test"
            out.append(replace(members[idx], split=split))
    return out


# --------------------------------------------------------------------------
# preprocessing cache


def load_arrays(records, base_dir, cfg: imaging.ImagingConfig, input_size: int):
    """Decode, segment, crop and resize every record to ``3 x S x S`` float32."""
    out = np.empty((len(records), 3, input_size, input_size), dtype=np.float32)
    for i, r in enumerate(records):
        img = imaging.read_image(os.path.join(base_dir, r.path))
        out[i] = imaging.preprocess(img, cfg, (input_size, input_size)).transpose(2, 0, 1)
    return out


# --------------------------------------------------------------------------
# synthetic leaves


# hue (deg), saturation, value of the lesion colour per stress class
LESION_COLOURS = {
    StressClass.leaf_miner: (45.0, 0.55, 0.85),
    StressClass.rust: (28.0, 0.90, 0.95),
    StressClass.brown_leaf_spot: (15.0, 0.65, 0.30),
    StressClass.cercospora_leaf_spot: (330.0, 0.50, 0.60),
}

# base leaf hue (deg) per stress class, all inside the healthy-tissue hue window
LEAF_HUES = {
    StressClass.healthy: 95.0,
    StressClass.leaf_miner: 107.0,
    StressClass.rust: 119.0,
    StressClass.brown_leaf_spot: 131.0,
    StressClass.cercospora_leaf_spot: 143.0,
}

# symptomatic-area fraction ranges, each strictly inside its severity bin
AREA_RANGES = {
    SeverityClass.very_low: (0.015, 0.035),
    SeverityClass.low: (0.065, 0.085),
    SeverityClass.high: (0.115, 0.135),
    SeverityClass.very_high: (0.19, 0.27),
}


@dataclass
class SynthConfig:
    image_size: int = 96
    counts: dict = field(default_factory=lambda: {c: 100 for c in StressClass})
    kind: str = "leaf"
    lesion_colours: dict = field(default_factory=lambda: dict(LESION_COLOURS))
    area_ranges: dict = field(default_factory=lambda: dict(AREA_RANGES))
    background: tuple = (1.0, 1.0, 1.0)
    seed: int = 0

    def validate(self):
        if self.image_size < 16:
            raise ValidationError("image_size must be at least 16")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}")
        self.counts = {StressClass[c] if isinstance(c, str) else StressClass(c): int(n) for c, n in self.counts.items()}
        for sev, (lo, hi) in self.area_ranges.items():
            if not (lo < hi and imaging.severity_class(lo) == sev and imaging.severity_class(hi) == sev):
                raise ValidationError(f"area range {lo}-{hi} does not sit inside the {SeverityClass(sev).name} bin")
        return self


def _hsv_pixel(h, s, v):
    return imaging.hsv_to_rgb(np.array([h]), np.array([s]), np.array([v]))[0]


def _leaf_colour(stress, u):
    """Class-specific green with a little per-image jitter in hue, saturation and value."""
    return _hsv_pixel(LEAF_HUES[stress] + 4.0 * (u[0] - 0.5), 0.50 + 0.30 * u[1], 0.45 + 0.30 * u[2])


def _ellipse(size, stream):
    u = stream.uniform(5)
    cy = size / 2 + (u[0] - 0.5) * 0.1 * size
    cx = size / 2 + (u[1] - 0.5) * 0.1 * size
    a = (0.30 + 0.12 * u[2]) * size
    b = (0.20 + 0.10 * u[3]) * size
    # near axis-aligned, like a leaf photographed square to the frame; the leaf
    # then fills a steady share of its crop
    t = (math.pi / 2 if u[4] >= 0.5 else 0.0) + (u[4] % 0.5 - 0.25) * 0.2
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    xr = dx * math.cos(t) + dy * math.sin(t)
    yr = -dx * math.sin(t) + dy * math.cos(t)
    return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0


def _discs(leaf, target, stream):
    """Union of 1-4 random discs centred on leaf pixels, clipped to the leaf."""
    size = leaf.shape[0]
    yy, xx = np.mgrid[0:size, 0:size]
    coords = np.argwhere(leaf)
    k = 1 + int(stream.uniform(1)[0] * 4)
    centres = coords[(stream.uniform(k) * len(coords)).astype(int)]
    radius = math.sqrt(target / (k * math.pi))
    scale = 1.0
    best = None
    for _ in range(30):
        r2 = (radius * scale) ** 2
        sym = np.zeros_like(leaf)
        for cy, cx in centres:
            sym |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r2
        sym &= leaf
        count = int(sym.sum())
        best = sym
        if count == 0:
            scale *= 1.5
            continue
        if abs(count - target) <= 0.1 * target:
            break
        scale *= math.sqrt(target / count)
    return best


def synth_leaf(cfg: SynthConfig, stress: StressClass, severity: SeverityClass, index: int):
    """One synthetic leaf image with exact ground-truth masks.

    Retries with fresh sub-streams until the rasterized symptom area lands in
    the requested severity bin.
    """
    size = cfg.image_size
    for attempt in range(100):
        stream = RngStream.derive(cfg.seed, "synth", index, attempt)
        leaf = _ellipse(size, stream)
        u = stream.uniform(4)
        leaf_rgb = _leaf_colour(stress, u)
        sym = np.zeros_like(leaf)
        if stress != StressClass.healthy:
            lo, hi = cfg.area_ranges[severity]
            frac = lo + (hi - lo) * u[3]
            sym = _discs(leaf, frac * leaf.sum(), stream)
            if imaging.severity_ratio_and_bin(sym, leaf)[1] != severity:
                continue
        img = np.empty((size, size, 3))
        img[...] = cfg.background
        img[leaf] = leaf_rgb
        if sym.any():
            h, s, v = cfg.lesion_colours[stress]
            j = stream.uniform(3) - 0.5
            img[sym] = _hsv_pixel((h + 8.0 * j[0]) % 360.0, s + 0.08 * j[1], v + 0.08 * j[2])
        # leaf texture: small brightness noise kept away from every threshold
        noise = 1.0 + 0.06 * (stream.uniform(size * size).reshape(size, size) - 0.5)
        img[leaf] *= noise[leaf][:, None]
        img = np.clip(img, 0.0, 1.0)
        return imaging.to_bytes8(img).astype(np.float64) / 255.0, leaf, sym
    raise ValidationError(f"could not synthesize sample {index} for {severity.name}")


def synth_symptom(cfg: SynthConfig, stress: StressClass, index: int):
    """A lesion crop: green patch filling most of the frame with one lesion."""
    size = cfg.image_size
    stream = RngStream.derive(cfg.seed, "synth-symptom", index)
    u = stream.uniform(6)
    img = np.empty((size, size, 3))
    img[...] = cfg.background
    m = int(size * 0.08)
    leaf = np.zeros((size, size), dtype=bool)
    leaf[m : size - m, m : size - m] = True
    img[leaf] = _leaf_colour(stress, u)
    sym = np.zeros_like(leaf)
    if stress != StressClass.healthy:
        yy, xx = np.mgrid[0:size, 0:size]
        r = size * (0.15 + 0.15 * u[3])
        c = size / 2 + (u[4:6] - 0.5) * size * 0.2
        sym = leaf & ((yy - c[0]) ** 2 + (xx - c[1]) ** 2 <= r * r)
        img[sym] = _hsv_pixel(*cfg.lesion_colours[stress])
    return imaging.to_bytes8(img).astype(np.float64) / 255.0, leaf, sym


def generate_synthetic(cfg: SynthConfig, out_dir) -> list:
    """Write images, ground-truth masks and ``manifest.csv`` under ``out_dir``."""
    cfg = cfg.validate()
    try:
        os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
        os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc
    diseased = [s for s in SeverityClass if s != SeverityClass.healthy]
    records = []
    index = 0
    for stress in StressClass:
        for j in range(cfg.counts.get(stress, 0)):
            name = f"img_{index:05d}"
            if cfg.kind == "leaf":
                severity = SeverityClass.healthy if stress == StressClass.healthy else diseased[j % len(diseased)]
                img, leaf, sym = synth_leaf(cfg, stress, severity, index)
            else:
                severity = None
                img, leaf, sym = synth_symptom(cfg, stress, index)
            imaging.write_bytes(os.path.join(out_dir, "images", name + ".ppm"), imaging.encode_ppm(img))
            imaging.write_bytes(os.path.join(out_dir, "masks", name + "_leaf.pgm"), imaging.encode_pgm_mask(leaf))
            imaging.write_bytes(os.path.join(out_dir, "masks", name + "_symptom.pgm"), imaging.encode_pgm_mask(sym))
            records.append(ManifestRecord(f"images/{name}.ppm", cfg.kind, stress, severity))
            index += 1
    write_manifest(os.path.join(out_dir, "manifest.csv"), records)
    return records


def mask_paths(image_path):
    """Ground-truth mask files written next to a synthetic image."""
    root, _ = os.path.splitext(image_path)
    base = os.path.join(os.path.dirname(os.path.dirname(root)), "masks", os.path.basename(root))
    return base + "_leaf.pgm", base + "_symptom.pgm"
