"""Dense float arrays, elementary math and a counter-based random source.

Tensors are plain :class:`numpy.ndarray` objects (float32 by default, float64
for gradient-check builds). The helpers here add the shape/domain checks the
rest of the package relies on.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

from .errors import DomainError, InvalidAxis, InvalidParameter, ShapeMismatch

DEFAULT_DTYPE = np.float32

_MASK64 = (1 << 64) - 1
_TWO_NEG53 = 1.0 / (1 << 53)


def tensor(data, dtype=None) -> np.ndarray:
    """Return ``data`` as a contiguous float array (float32 unless told otherwise)."""
    arr = np.ascontiguousarray(data, dtype=dtype or DEFAULT_DTYPE)
    if arr.ndim and min(arr.shape) < 1:
        raise ShapeMismatch(f"dimensions must be positive, got {arr.shape}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray, ordered: bool = True) -> np.ndarray:
    """Matrix product of ``a`` (m x k) and ``b`` (k x n).

    With ``ordered=True`` every output element is accumulated strictly left
    to right over k, which makes results independent of the BLAS build.
    ``ordered=False`` hands the product to BLAS; the layers use that path
    since it is deterministic for a fixed library and thread count.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner dimensions differ: {a.shape} @ {b.shape}")
    if not ordered:
        return a @ b
    dtype = np.result_type(a, b)
    out = np.zeros((a.shape[0], b.shape[1]), dtype=dtype)
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def elementwise(op: str, a: np.ndarray, b=None) -> np.ndarray:
    """Apply ``op`` pointwise. ``b`` is a same-shaped array or a scalar.

    Supported ops: add, sub, mul, scale (b must be scalar), relu, exp, log.
    """
    a = np.asarray(a)
    if op in _BINARY or op == "scale":
        if b is None:
            raise InvalidParameter(f"{op} needs a second operand")
        if op == "scale" and np.ndim(b) != 0:
            raise ShapeMismatch("scale takes a scalar factor")
        if np.ndim(b) != 0 and np.shape(b) != a.shape:
            raise ShapeMismatch(f"{op}: shapes {a.shape} and {np.shape(b)} differ")
        if np.ndim(b) == 0:
            b = a.dtype.type(b)
        fn = np.multiply if op == "scale" else _BINARY[op]
        return fn(a, b)
    if op == "relu":
        return np.where(a > 0, a, a.dtype.type(0))
    if op == "exp":
        return np.exp(a)
    if op == "log":
        if np.any(a <= 0):
            raise DomainError("log of non-positive input")
        return np.log(a)
    raise InvalidParameter(f"unknown elementwise op {op!r}")


def reduce(op: str, a: np.ndarray, axis=None) -> np.ndarray:
    """Reduce along ``axis`` (int, tuple or None for all axes).

    argmax ties resolve to the lowest index and accept only a single axis
    (or None, meaning the flattened array).
    """
    a = np.asarray(a)
    axes = range(a.ndim) if axis is None else (axis if isinstance(axis, tuple) else (axis,))
    for ax in axes:
        if not isinstance(ax, (int, np.integer)) or not -a.ndim <= ax < a.ndim:
            raise InvalidAxis(f"axis {ax} invalid for rank {a.ndim}")
    if op == "sum":
        return np.sum(a, axis=axis)
    if op == "mean":
        return np.mean(a, axis=axis)
    if op == "argmax":
        if isinstance(axis, tuple):
            raise InvalidAxis("argmax takes a single axis")
        return np.argmax(a, axis=axis)
    raise InvalidParameter(f"unknown reduction {op!r}")


def stream_id_for(*keys) -> int:
    """Map an arbitrary key path, e.g. ``("augment", epoch, index)``, to 64 bits."""
    text = "/".join(str(k) for k in keys).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Every variate consumes exactly one Philox-4x64 block, so the stream
    counter advances by ``n`` for a draw of ``n`` values regardless of the
    distribution. Variate ``i`` of a stream therefore depends only on
    ``(seed, stream_id, i)``, never on what was drawn before it.

    Beta variates use two Marsaglia-Tsang gamma draws. Their rejection loops
    run on a private sub-stream keyed by the variate's own block, which keeps
    the outer counter advance fixed.
    """

    def __init__(self, seed: int, stream_id: int = 0, counter: int = 0):
        for name, v in (("seed", seed), ("stream_id", stream_id), ("counter", counter)):
            if not 0 <= int(v) <= _MASK64:
                raise InvalidParameter(f"{name} must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.counter = int(counter)

    @classmethod
    def derive(cls, seed: int, *keys) -> "RngStream":
        return cls(int(seed) & _MASK64, stream_id_for(*keys))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def _blocks(self, n: int) -> np.ndarray:
        bg = np.random.Philox(key=[self.seed, self.stream_id], counter=self.counter)
        raw = bg.random_raw(4 * n).reshape(n, 4)
        self.counter = (self.counter + n) & _MASK64
        return raw

    def uniform(self, n: int) -> np.ndarray:
        """``n`` float64 values in [0, 1)."""
        _check_n(n)
        return (self._blocks(n)[:, 0] >> np.uint64(11)).astype(np.float64) * _TWO_NEG53

    def normal(self, n: int) -> np.ndarray:
        """``n`` standard normals by Box-Muller (cosine branch only)."""
        _check_n(n)
        words = self._blocks(n)
        u1 = ((words[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_NEG53
        u2 = (words[:, 1] >> np.uint64(11)).astype(np.float64) * _TWO_NEG53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)

    def beta(self, alpha: float, beta: float, n: int) -> np.ndarray:
        _check_n(n)
        if not (alpha > 0 and beta > 0):
            raise InvalidParameter("beta parameters must be positive")
        out = np.empty(n)
        for i, word in enumerate(self._blocks(n)):
            sub = _SubStream(int(word[0]), int(word[1]))
            x = _gamma(sub, alpha)
            y = _gamma(sub, beta)
            out[i] = x / (x + y) if x + y > 0 else (1.0 if alpha >= beta else 0.0)
        return out

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of ``range(n)``; consumes ``n`` counters."""
        return np.argsort(self.uniform(n), kind="stable")


def _check_n(n):
    if int(n) < 1:
        raise InvalidParameter("n must be >= 1")


class _SubStream:
    """Sequential uniform/normal source for rejection sampling."""

    def __init__(self, k0: int, k1: int):
        self._bg = np.random.Philox(key=[k0, k1])

    def draw(self):
        w = self._bg.random_raw(4)
        u1 = ((int(w[0]) >> 11) + 1) * _TWO_NEG53
        u2 = (int(w[1]) >> 11) * _TWO_NEG53
        normal = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        uniform = ((int(w[2]) >> 11) + 1) * _TWO_NEG53  # (0, 1]
        extra = ((int(w[3]) >> 11) + 1) * _TWO_NEG53
        return normal, uniform, extra


def _gamma(sub: _SubStream, shape: float) -> float:
    # Marsaglia & Tsang (2000); shape < 1 boosted via U^(1/shape).
    boost = 1.0
    if shape < 1.0:
        _, _, u = sub.draw()
        boost = u ** (1.0 / shape)
        shape += 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x, u, _ = sub.draw()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        if u < 1.0 - 0.0331 * x**4 or math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v * boost


def rng_draw(stream: RngStream, dist: str, n: int, alpha: float = 1.0, beta: float = 1.0) -> np.ndarray:
    """Draw ``n`` values of ``dist`` in {uniform01, standard_normal, beta}."""
    if dist == "uniform01":
        return stream.uniform(n)
    if dist == "standard_normal":
        return stream.normal(n)
    if dist == "beta":
        return stream.beta(alpha, beta, n)
    raise InvalidParameter(f"unknown distribution {dist!r}")
