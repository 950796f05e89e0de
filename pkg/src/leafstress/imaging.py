"""Image decoding, HSV segmentation, crop-and-resize and severity binning.

Images here are ``H x W x 3`` float64 arrays in [0, 1]; masks are ``H x W``
boolean arrays.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (
    EmptyLeafMask,
    EmptyMask,
    InvalidParameter,
    IoError,
    MalformedHeader,
    NoLeafFound,
    SymptomOutsideLeaf,
    TruncatedPixelData,
    UnsupportedFormat,
)
from .labels import SeverityClass

# healthy < 0.1%, very_low <= 5%, low <= 10%, high <= 15%, very_high above
SEVERITY_BOUNDS = (0.001, 0.05, 0.10, 0.15)


@dataclass
class ImagingConfig:
    s_threshold: float = 0.25
    margin_frac: float = 0.05
    hue_lo: float = 60.0
    hue_hi: float = 170.0
    s_min: float = 0.15
    v_max: float = 0.35

    def validate(self):
        if not 0 < self.s_threshold < 1:
            raise InvalidParameter("s_threshold must lie in (0, 1)")
        if not 0 <= self.margin_frac < 0.5:
            raise InvalidParameter("margin_frac must lie in [0, 0.5)")
        if not self.hue_lo <= self.hue_hi:
            raise InvalidParameter("hue window is empty")
        return self


# --------------------------------------------------------------------------
# netpbm / png


_PNM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def _parse_pnm_header(buf: bytes, magic: bytes):
    if not buf.startswith(magic):
        raise MalformedHeader(f"expected {magic!r} header, got {buf[:2]!r}")
    pos = len(magic)
    fields = []
    for _ in range(3):
        m = _PNM_TOKEN.match(buf, pos)
        if not m or not m.group(1).isdigit():
            raise MalformedHeader("bad width/height/maxval field")
        fields.append(int(m.group(1)))
        pos = m.end()
    if pos < len(buf) and buf[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise MalformedHeader("missing whitespace after maxval")
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise MalformedHeader(f"invalid dimensions {width}x{height} or maxval {maxval}")
    if maxval > 255:
        raise UnsupportedFormat("only 8-bit netpbm files are supported")
    return width, height, maxval, pos + 1


def decode_ppm(buf: bytes) -> np.ndarray:
    width, height, maxval, start = _parse_pnm_header(buf, b"P6")
    need = width * height * 3
    data = buf[start : start + need]
    if len(data) < need:
        raise TruncatedPixelData(f"expected {need} pixel bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
    return arr.astype(np.float64) / maxval


def decode_pgm(buf: bytes) -> np.ndarray:
    width, height, maxval, start = _parse_pnm_header(buf, b"P5")
    need = width * height
    data = buf[start : start + need]
    if len(data) < need:
        raise TruncatedPixelData(f"expected {need} pixel bytes, found {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width).astype(np.float64) / maxval


def to_bytes8(img) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def encode_ppm(img) -> bytes:
    img8 = to_bytes8(img)
    h, w = img8.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + img8.tobytes()


def encode_pgm_mask(mask) -> bytes:
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    return b"P5\n%d %d\n255\n" % (w, h) + (mask.astype(np.uint8) * 255).tobytes()


def decode_mask(buf: bytes) -> np.ndarray:
    return decode_pgm(buf) >= 0.5


def decode_png(buf: bytes) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise UnsupportedFormat("PNG support needs Pillow") from exc
    try:
        im = Image.open(io.BytesIO(buf))
        im.load()
    except Exception as exc:
        raise MalformedHeader(f"unreadable PNG: {exc}") from exc
    if im.format != "PNG":
        raise MalformedHeader(f"not a PNG ({im.format})")
    return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def decode_image(buf: bytes, fmt: str = "ppm_p6") -> np.ndarray:
    if fmt == "ppm_p6":
        return decode_ppm(buf)
    if fmt == "png":
        return decode_png(buf)
    raise UnsupportedFormat(f"unknown image format {fmt!r}")


def read_image(path) -> np.ndarray:
    path = str(path)
    fmt = "png" if path.lower().endswith(".png") else "ppm_p6"
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc
    return decode_image(buf, fmt)


def write_bytes(path, data: bytes):
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# --------------------------------------------------------------------------
# colour


def rgb_to_hsv(img):
    """Hexcone HSV. Returns ``(H in [0, 360), S, V)`` planes; achromatic hue is 0."""
    img = np.asarray(img, dtype=np.float64)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    v = img.max(axis=-1)
    c = v - img.min(axis=-1)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)
    safe = np.where(c > 0, c, 1.0)
    h = np.where(
        v == r,
        ((g - b) / safe) % 6.0,
        np.where(v == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    h = np.where(c > 0, h * 60.0, 0.0)
    h = np.where(h >= 360.0, h - 360.0, h)
    return h, s, v


def hsv_to_rgb(h, s, v):
    """Inverse of :func:`rgb_to_hsv`."""
    h = np.asarray(h, dtype=np.float64) / 60.0
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    c = v * s
    x = c * (1 - np.abs(h % 2 - 1))
    m = v - c
    sector = np.floor(h).astype(int) % 6
    zero = np.zeros_like(c)
    table = [(c, x, zero), (x, c, zero), (zero, c, x), (zero, x, c), (x, zero, c), (c, zero, x)]
    out = np.zeros(h.shape + (3,))
    for k, (rr, gg, bb) in enumerate(table):
        sel = sector == k
        out[sel] = np.stack([rr[sel], gg[sel], bb[sel]], axis=-1)
    return out + m[..., None]


# --------------------------------------------------------------------------
# segmentation


def largest_component(mask) -> np.ndarray:
    """Largest 4-connected component (earliest in raster order on ties)."""
    labels, n = ndimage.label(mask)
    if n == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def segment_leaf(img, s_threshold: float = 0.25) -> np.ndarray:
    if not 0 < s_threshold < 1:
        raise InvalidParameter("s_threshold must lie in (0, 1)")
    _, s, _ = rgb_to_hsv(img)
    mask = s >= s_threshold
    if not mask.any():
        raise NoLeafFound(f"no pixel reaches saturation {s_threshold}")
    return largest_component(mask)


def segment_symptoms(img, leaf_mask, hue_window=(60.0, 170.0), s_min: float = 0.15, v_max: float = 0.35):
    """Leaf pixels whose hue leaves the healthy-green window or that are dark."""
    leaf_mask = np.asarray(leaf_mask, dtype=bool)
    if not leaf_mask.any():
        raise EmptyMask("leaf mask is empty")
    h, s, v = rgb_to_hsv(img)
    lo, hi = hue_window
    off_green = (h < lo) | (h > hi)
    return leaf_mask & (s >= s_min) & (off_green | (v <= v_max))


def bounding_box(mask):
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return rows[0], rows[-1] + 1, cols[0], cols[-1] + 1


def _resize_axis(img, out_len, axis):
    n = img.shape[axis]
    src = (np.arange(out_len) + 0.5) * (n / out_len) - 0.5
    src = np.clip(src, 0.0, n - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    shape = [1] * img.ndim
    shape[axis] = out_len
    f = (src - i0).reshape(shape)
    a = np.take(img, i0, axis=axis)
    b = np.take(img, i1, axis=axis)
    out = a + f * (b - a)
    return np.clip(out, np.minimum(a, b), np.maximum(a, b))


def resize_bilinear(img, out_size):
    """Half-pixel-centre bilinear resize of ``H x W [x C]`` to ``out_size=(H, W)``."""
    out = _resize_axis(np.asarray(img, dtype=np.float64), out_size[0], 0)
    return _resize_axis(out, out_size[1], 1)


def crop_and_resize(img, leaf_mask, margin_frac: float = 0.05, out_size=(224, 224)):
    """Crop to the mask's box (plus margin, clamped) and resize bilinearly."""
    leaf_mask = np.asarray(leaf_mask, dtype=bool)
    if not leaf_mask.any():
        raise EmptyMask("cannot crop to an empty mask")
    if not 0 <= margin_frac < 0.5:
        raise InvalidParameter("margin_frac must lie in [0, 0.5)")
    r0, r1, c0, c1 = bounding_box(leaf_mask)
    mr = int(margin_frac * (r1 - r0))
    mc = int(margin_frac * (c1 - c0))
    h, w = leaf_mask.shape
    r0, r1 = max(r0 - mr, 0), min(r1 + mr, h)
    c0, c1 = max(c0 - mc, 0), min(c1 + mc, w)
    return resize_bilinear(np.asarray(img)[r0:r1, c0:c1], out_size)


# --------------------------------------------------------------------------
# severity


def severity_class(ratio: float) -> SeverityClass:
    """Bin a symptomatic-area ratio; every interval above the first is (lo, hi]."""
    if ratio < SEVERITY_BOUNDS[0]:
        return SeverityClass.healthy
    if ratio <= SEVERITY_BOUNDS[1]:
        return SeverityClass.very_low
    if ratio <= SEVERITY_BOUNDS[2]:
        return SeverityClass.low
    if ratio <= SEVERITY_BOUNDS[3]:
        return SeverityClass.high
    return SeverityClass.very_high


def severity_ratio_and_bin(symptom, leaf):
    symptom = np.asarray(symptom, dtype=bool)
    leaf = np.asarray(leaf, dtype=bool)
    n_leaf = int(leaf.sum())
    if n_leaf == 0:
        raise EmptyLeafMask("leaf mask has no pixels")
    if np.any(symptom & ~leaf):
        raise SymptomOutsideLeaf("symptom mask extends outside the leaf")
    ratio = int(symptom.sum()) / n_leaf
    return ratio, severity_class(ratio)


def preprocess(img, cfg: ImagingConfig, out_size):
    """Leaf segmentation then crop-and-resize; returns the resized image."""
    leaf = segment_leaf(img, cfg.s_threshold)
    return crop_and_resize(img, leaf, cfg.margin_frac, out_size)


def measure_severity(img, cfg: ImagingConfig):
    leaf = segment_leaf(img, cfg.s_threshold)
    sym = segment_symptoms(img, leaf, (cfg.hue_lo, cfg.hue_hi), cfg.s_min, cfg.v_max)
    ratio, cls = severity_ratio_and_bin(sym, leaf)
    return ratio, cls, leaf, sym
