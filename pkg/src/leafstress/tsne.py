"""Exact t-SNE for projecting trunk features to two dimensions."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationFailed, InvalidParameter
from .tensor import RngStream

log = logging.getLogger(__name__)

P_FLOOR = 1e-12


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    output_dim: int = 2
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch: int = 250
    entropy_tol: float = 1e-4
    max_bisection_steps: int = 50
    min_gain: float = 0.01
    standardize: bool = False

    def validate(self, n=None):
        if n is not None and not 1 < self.perplexity < n - 1:
            raise InvalidParameter(f"perplexity must lie in (1, {n - 1}) for {n} points")
        if self.iterations < 1 or self.learning_rate <= 0 or self.output_dim < 1:
            raise InvalidParameter("iterations, learning_rate and output_dim must be positive")
        return self


def squared_distances(x):
    x = np.asarray(x, dtype=np.float64)
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _row_entropy(d, beta):
    # d: n x (n-1) off-diagonal distances, already shifted by the row minimum
    p = np.exp(-d * beta[:, None])
    sum_p = p.sum(axis=1)
    h = np.log(sum_p) + beta * (d * p).sum(axis=1) / sum_p
    return h, p / sum_p[:, None]


def calibrate_perplexity(dist2, perplexity: float, tol: float = 1e-4, max_steps: int = 50, strict: bool = True):
    """Per-row Gaussian bandwidths whose conditional entropy matches ``log(perplexity)``.

    Bisection runs on the precision ``beta = 1 / (2 sigma^2)`` for all rows at
    once; each row stops as soon as its entropy (nats) is within ``tol``.
    Returns ``(conditional P, sigma)`` with zero diagonal and unit row sums.
    """
    dist2 = np.asarray(dist2, dtype=np.float64)
    n = dist2.shape[0]
    if dist2.shape != (n, n):
        raise InvalidParameter("distance matrix must be square")
    if not 1 < perplexity <= n - 1:
        raise InvalidParameter(f"perplexity must lie in (1, {n - 1}]")
    off = ~np.eye(n, dtype=bool)
    d = dist2[off].reshape(n, n - 1)
    d = d - d.min(axis=1, keepdims=True)
    target = np.log(perplexity)
    beta = np.ones(n)
    lo = np.full(n, 0.0)
    hi = np.full(n, np.inf)
    h, p = _row_entropy(d, beta)
    done = np.abs(h - target) < tol
    for _ in range(max_steps):
        if done.all():
            break
        act = ~done
        too_flat = act & (h > target)  # entropy too high -> sharpen
        too_peaked = act & (h <= target)
        lo[too_flat] = beta[too_flat]
        hi[too_peaked] = beta[too_peaked]
        beta = np.where(
            too_flat,
            np.where(np.isinf(hi), beta * 2.0, (beta + hi) / 2.0),
            np.where(too_peaked, (beta + lo) / 2.0, beta),
        )
        h_new, p_new = _row_entropy(d[act], beta[act])
        h[act] = h_new
        p[act] = p_new
        done = np.abs(h - target) < tol
    cond = np.zeros((n, n))
    cond[off] = p.ravel()
    sigma = np.sqrt(1.0 / (2.0 * beta))
    if not done.all():
        rows = np.flatnonzero(~done)
        msg = f"{rows.size} rows missed the entropy tolerance after {max_steps} steps"
        if strict:
            err = CalibrationFailed(msg, rows, sigma)
            err.conditional = cond
            raise err
        log.warning(msg)
    return cond, sigma


def joint_probabilities(cond):
    """Symmetrize: ``p_ij = (p_j|i + p_i|j) / 2n``, floored and renormalized."""
    cond = np.asarray(cond, dtype=np.float64)
    n = cond.shape[0]
    p = (cond + cond.T) / (2.0 * n)
    p = np.maximum(p, P_FLOOR)
    np.fill_diagonal(p, 0.0)
    p /= p.sum()
    return p


def _student_q(y):
    num = 1.0 / (1.0 + squared_distances(y))
    np.fill_diagonal(num, 0.0)
    return num, num / num.sum()


def _kl(p, q):
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], P_FLOOR))))


def _grad(p, q, num, y):
    w = (p - q) * num
    return 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)


def kl_and_gradient(p, y):
    """KL(P || Q) for the Student-t affinities of ``y``, and its gradient."""
    y = np.asarray(y, dtype=np.float64)
    num, q = _student_q(y)
    return _kl(p, q), _grad(p, q, num, y)


def run_tsne(features, cfg: TsneConfig | None = None, stream: RngStream | None = None):
    """Embed ``features`` (n x F). Returns ``(Y, kl_trace)``.

    KL values in the trace are always measured against the unexaggerated P.
    """
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if n < 5:
        raise InvalidParameter("t-SNE needs at least 5 points")
    cfg = (cfg or TsneConfig()).validate(n)
    stream = stream or RngStream(0)
    if cfg.standardize:
        std = x.std(axis=0)
        x = (x - x.mean(axis=0)) / np.where(std > 0, std, 1.0)
    cond, _ = calibrate_perplexity(squared_distances(x), cfg.perplexity, cfg.entropy_tol, cfg.max_bisection_steps)
    p = joint_probabilities(cond)
    y = stream.normal(n * cfg.output_dim).reshape(n, cfg.output_dim) * 1e-2
    y -= y.mean(axis=0)
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    trace = []
    for it in range(cfg.iterations):
        num, q = _student_q(y)
        trace.append(_kl(p, q))
        scale = cfg.early_exaggeration if it < cfg.exaggeration_iters else 1.0
        grad = _grad(p * scale, q, num, y)
        mom = cfg.momentum_early if it < cfg.momentum_switch else cfg.momentum_late
        same = (grad > 0) == (update > 0)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, cfg.min_gain, out=gains)
        update = mom * update - cfg.learning_rate * gains * grad
        y = y + update
        y -= y.mean(axis=0)
    trace.append(_kl(p, _student_q(y)[1]))
    return y, np.asarray(trace)


EMBEDDING_HEADER = ["sample_id", "x", "y", "stress_label", "severity_label"]


def write_embedding_csv(path, ids, y, stress, severity=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EMBEDDING_HEADER)
        for i, sid in enumerate(ids):
            sev = "" if severity is None or severity[i] is None else severity[i]
            w.writerow([sid, repr(float(y[i, 0])), repr(float(y[i, 1])), stress[i], sev])


def read_embedding_csv(path):
    """Returns ``(ids, Y, stress_labels, severity_labels)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != EMBEDDING_HEADER:
            raise InvalidParameter("unexpected embedding header")
        rows = list(reader)
    ids = [r[0] for r in rows]
    y = np.array([[float(r[1]), float(r[2])] for r in rows])
    return ids, y, [r[3] for r in rows], [r[4] or None for r in rows]
