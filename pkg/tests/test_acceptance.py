"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the terminal summary (see
conftest.py), so ``pytest -v`` output shows them without ``-s``. The module
also runs as a script: ``python tests/test_acceptance.py``.
"""

import csv
import os
import sys
import time
import warnings
from collections import Counter

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gradcheck import SETTINGS, numerical_grad, rel_error  # noqa: E402
from leafstress import checkpoint as ckpt_io  # noqa: E402
from leafstress import imaging  # noqa: E402
from leafstress.augment import mix_arrays, mixup_plan  # noqa: E402
from leafstress.cli import main as cli_main  # noqa: E402
from leafstress.dataset import (  # noqa: E402
    ManifestRecord,
    SplitSpec,
    SynthConfig,
    generate_synthetic,
    mask_paths,
    split_sizes,
    stratified_split,
)
from leafstress.errors import CrcMismatch  # noqa: E402
from leafstress.labels import SeverityClass, StressClass  # noqa: E402
from leafstress.layers import (  # noqa: E402
    BatchNormParams,
    Conv2dParams,
    DenseParams,
    batchnorm2d_backward,
    batchnorm2d_forward,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    pool_backward,
    pool_forward,
    softmax_cross_entropy,
)
from leafstress.metrics import (  # noqa: E402
    ConfusionMatrix,
    read_confusion_csv,
    read_metrics_csv,
    summarize,
    write_confusion_csv,
    write_metrics_csv,
)
from leafstress.model import ArchConfig, build_model, multitask_loss  # noqa: E402
from leafstress.tensor import RngStream  # noqa: E402
from leafstress.train import LrSchedule, TrainReport, lr_at_epoch, one_hot  # noqa: E402
from leafstress.tsne import (  # noqa: E402
    TsneConfig,
    calibrate_perplexity,
    joint_probabilities,
    kl_and_gradient,
    read_embedding_csv,
    run_tsne,
    squared_distances,
    write_embedding_csv,
)

RESULTS = {}


def report(n, ok, detail):
    RESULTS[n] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


# ---------------------------------------------------------------- 2 gradients


def _projected_check(run, backward, arrays, dtype, seed):
    h, _ = SETTINGS[dtype]
    out, cache = run()
    r = np.random.default_rng(seed).normal(size=out.shape)
    grads = backward(r.astype(dtype), cache)
    probe = lambda: float(np.sum(run()[0].astype(np.float64) * r))  # noqa: E731
    return max(rel_error(g, numerical_grad(probe, a, h)) for a, g in zip(arrays, grads))


def _conv(shape, dtype):
    n, ci, h, w, co, k, s, pad = shape
    rng = np.random.default_rng(sum(shape))
    x = rng.normal(size=(n, ci, h, w)).astype(dtype)
    p = Conv2dParams(rng.normal(size=(co, ci, k, k)).astype(dtype) * 0.3, rng.normal(size=co).astype(dtype), s, pad)
    return _projected_check(lambda: conv2d_forward(x, p), conv2d_backward, [x, p.weight, p.bias], dtype, 1)


def _bn(shape, dtype, mode):
    rng = np.random.default_rng(sum(shape))
    x = (rng.normal(size=shape) * 2 + 1).astype(dtype)
    p = BatchNormParams.create(shape[1], dtype, mode=mode)
    p.gamma[...] = rng.uniform(0.5, 1.5, shape[1])
    p.beta[...] = rng.normal(size=shape[1])
    p.running_var[...] = rng.uniform(0.5, 2.0, shape[1])
    return _projected_check(lambda: batchnorm2d_forward(x, p), batchnorm2d_backward, [x, p.gamma, p.beta], dtype, 2)


def _pool(shape, dtype, kind):
    rng = np.random.default_rng(sum(shape))
    x = (rng.permutation(np.prod(shape)).reshape(shape) * 0.1).astype(dtype)
    return _projected_check(lambda: pool_forward(x, kind), lambda d, c: (pool_backward(d, c, kind),), [x], dtype, 3)


def _dense(shape, dtype):
    n, fin, fout = shape
    rng = np.random.default_rng(sum(shape))
    x = rng.normal(size=(n, fin)).astype(dtype)
    p = DenseParams(rng.normal(size=(fout, fin)).astype(dtype), rng.normal(size=fout).astype(dtype))
    return _projected_check(lambda: dense_forward(x, p), dense_backward, [x, p.weight, p.bias], dtype, 4)


def _ce(shape, dtype):
    rng = np.random.default_rng(sum(shape))
    logits = (rng.normal(size=shape) * 2).astype(dtype)
    t = rng.dirichlet(np.ones(shape[1]), size=shape[0])
    _, g = softmax_cross_entropy(logits, t)
    return rel_error(g, numerical_grad(lambda: softmax_cross_entropy(logits, t)[0], logits, SETTINGS[dtype][0]))


def _kl(n):
    rng = np.random.default_rng(n)
    cond, _ = calibrate_perplexity(squared_distances(rng.normal(size=(n, 4))), min(3.0, n - 2))
    p = joint_probabilities(cond)
    y = rng.normal(size=(n, 2))
    _, g = kl_and_gradient(p, y)
    return rel_error(g, numerical_grad(lambda: kl_and_gradient(p, y)[0], y, 1e-5))


CONV = [(2, 3, 8, 8, 4, 3, 1, 1), (1, 2, 5, 7, 3, 3, 2, 1), (3, 1, 6, 6, 2, 1, 1, 0), (2, 2, 7, 5, 3, 2, 2, 0),
        (1, 4, 9, 9, 2, 5, 2, 2)]
BN = [(4, 3, 5, 5), (2, 2, 3, 4), (8, 1, 1, 1), (3, 5, 2, 2), (1, 4, 6, 3)]
POOL = [(1, 1, 2, 2), (2, 3, 4, 4), (1, 2, 6, 4), (3, 1, 2, 8), (2, 2, 8, 6)]
DENSE = [(4, 6, 5), (1, 3, 2), (7, 64, 5), (2, 1, 1), (5, 10, 8)]
CE = [(4, 5), (1, 5), (3, 2), (8, 5), (2, 7)]


def test_criterion_02_gradient_checks():
    t0 = time.perf_counter()
    worst = {}
    for dtype in (np.float32, np.float64):
        tol = SETTINGS[dtype][1]
        errs = {
            "conv2d": [_conv(s, dtype) for s in CONV],
            "batchnorm2d/train": [_bn(s, dtype, "train") for s in BN],
            "batchnorm2d/eval": [_bn(s, dtype, "eval") for s in BN[1:]] + [_bn(BN[0], dtype, "eval")],
            "maxpool": [_pool(s, dtype, "max2x2_stride2") for s in POOL],
            "global_avg": [_pool(s, dtype, "global_avg") for s in POOL],
            "dense": [_dense(s, dtype) for s in DENSE],
            "softmax_ce": [_ce(s, dtype) for s in CE],
        }
        if dtype == np.float64:
            errs["tsne_kl"] = [_kl(n) for n in (5, 8, 12, 20, 30)]
        for name, e in errs.items():
            assert len(e) >= 5
            worst[(name, np.dtype(dtype).name)] = (max(e), tol)
    seconds = time.perf_counter() - t0
    failing = [k for k, (e, tol) in worst.items() if e >= tol]
    top32 = max(e for (n, d), (e, _) in worst.items() if d == "float32")
    top64 = max(e for (n, d), (e, _) in worst.items() if d == "float64")
    report(2, not failing and seconds < 60,
           f"max rel err fp32 {top32:.1e} (<1e-3), fp64 {top64:.1e} (<1e-6) over {len(worst)} layer/dtype suites, "
           f"{seconds:.1f}s; failing {failing}")


# ---------------------------------------------------------------- 3 end-to-end

# default hyperparameters over 30 epochs, the step schedule compressed to 6-epoch periods
E2E_CONFIG = """[model]
input_size = 64
[sgd]
epochs = 30
[schedule]
period = 6
"""


def _e2e(root, cfg):
    c = ["--config", str(cfg), "--seed", "0"]
    t0 = time.perf_counter()
    codes = [
        cli_main(["synth", *c, "--out-dir", str(root / "synth"), "--count-per-class", "100", "--image-size", "96"]),
        cli_main(["prepare", *c, "--out-dir", str(root / "prep"), "--manifest", str(root / "synth/manifest.csv")]),
        cli_main(["train", *c, "--out-dir", str(root / "run"), "--data", str(root / "prep"), "--mode", "multi_task"]),
    ]
    return codes, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_03_end_to_end_training(tmp_path):
    cfg = tmp_path / "e2e.ini"
    cfg.write_text(E2E_CONFIG)
    codes_a, secs_a = _e2e(tmp_path / "a", cfg)
    codes_b, secs_b = _e2e(tmp_path / "b", cfg)
    assert codes_a == codes_b == [0, 0, 0]
    rep_a = TrainReport.read_csv(tmp_path / "a/run/train_report.csv")
    rep_b = TrainReport.read_csv(tmp_path / "b/run/train_report.csv")
    best = rep_a.epochs[rep_a.best_epoch]
    with np.load(tmp_path / "a/prep/cache.npz") as za, np.load(tmp_path / "b/prep/cache.npz") as zb:
        same_cache = all(za[k].tobytes() == zb[k].tobytes() for k in za.files)
    bitwise = (
        rep_a.numbers() == rep_b.numbers()
        and (tmp_path / "a/run/best.ckpt").read_bytes() == (tmp_path / "b/run/best.ckpt").read_bytes()
        and same_cache
    )
    n_images = sum(1 for _ in open(tmp_path / "a/synth/manifest.csv")) - 1
    ok = (
        n_images == 500
        and min(best.val_acc.values()) >= 0.90
        and max(secs_a, secs_b) < 600
        and bitwise
    )
    report(3, ok,
           f"{n_images} images, best epoch {rep_a.best_epoch} val acc stress {best.val_acc['stress']:.4f} "
           f"severity {best.val_acc['severity']:.4f} (>=0.90), run {secs_a:.0f}s/{secs_b:.0f}s (<600s), "
           f"rerun bitwise {bitwise}")


# ---------------------------------------------------------------- 4 sharing


def test_criterion_04_multitask_sharing():
    cfg = dict(input_size=32)
    net = build_model(ArchConfig(**cfg))
    shared = all(
        a is b
        for mode in ("single_task_stress", "single_task_severity")
        for a, b in zip(net.trunk_parameters(), net.with_mode(mode).trunk_parameters())
    )
    _, feats, cache = net.forward(np.random.default_rng(0).uniform(size=(2, 3, 32, 32)).astype(np.float32))
    same_input = cache[1]["stress"][0] is cache[1]["severity"][0] is feats
    multi = net.num_parameters()
    single = sum(build_model(ArchConfig(mode=m, **cfg)).num_parameters()
                 for m in ("single_task_stress", "single_task_severity"))

    net64 = build_model(ArchConfig(**cfg), dtype=np.float64)
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(4, 3, 32, 32))
    t = {k: one_hot(rng.integers(0, 5, 4), 5, np.float64) for k in ("stress", "severity")}
    _, _, g_all, _, _ = multitask_loss(net64, x, t)
    _, _, g_s, _, _ = multitask_loss(net64, x, t, tasks=["stress"])
    _, _, g_v, _, _ = multitask_loss(net64, x, t, tasks=["severity"])
    names = [n for n, _ in net64.trunk.params()]
    err = rel_error(np.concatenate([g_all[n].ravel() for n in names]),
                    np.concatenate([(g_s[n] + g_v[n]).ravel() for n in names]))
    report(4, shared and same_input and multi < single and err < 1e-5,
           f"trunk tensors shared {shared}, heads read one feature tensor {same_input}, "
           f"params multi {multi} < single sum {single}, trunk grad rel err {err:.1e} (<1e-5)")


# ---------------------------------------------------------------- 5 binning


def severity_oracle(r):
    if r < 0.001:
        return SeverityClass.healthy
    if r <= 0.05:
        return SeverityClass.very_low
    if r <= 0.10:
        return SeverityClass.low
    if r <= 0.15:
        return SeverityClass.high
    return SeverityClass.very_high


def test_criterion_05_severity_binning():
    rng = np.random.default_rng(5)
    edges = np.array([0.001, 0.05, 0.10, 0.15])
    ratios = list(rng.uniform(0, 0.3, 9000)) + list(rng.uniform(0, 1, 940)) + [0.0, 1.0]
    for e in edges:
        ratios += [e, np.nextafter(e, 0), np.nextafter(e, 1)]
        ratios += list(e + rng.uniform(-1e-9, 1e-9, 12))
    ratios = ratios[:10_000]
    agree = sum(imaging.severity_class(float(r)) == severity_oracle(float(r)) for r in ratios)
    report(5, agree == len(ratios) == 10_000, f"{agree}/{len(ratios)} ratios agree with the if-chain oracle")


# ---------------------------------------------------------------- 6 schedule


def test_criterion_06_lr_schedule():
    seq = [lr_at_epoch(LrSchedule(), e, 0.01, 100) for e in range(100)]
    expected = [v for v in (0.01, 0.005, 0.001, 0.0005, 0.0001) for _ in range(20)]
    report(6, seq == expected, f"100-epoch sequence exact: {seq == expected}; distinct values {sorted(set(seq))}")


# ---------------------------------------------------------------- 7 mixup


def test_criterion_07_mixup():
    convex = rows = endpoints = True
    worst_lin = 0.0
    for b in range(1000):
        stream = RngStream.derive(7, "acceptance-mixup", b)
        rng = np.random.default_rng(b)
        n = int(rng.integers(2, 9))
        x = rng.uniform(size=(n, 3, 4, 4)).astype(np.float32)
        y = {"stress": np.eye(5)[rng.integers(0, 5, n)], "severity": np.eye(5)[rng.integers(0, 5, n)]}
        lam, partners = mixup_plan(n, float(rng.choice([0.2, 0.4, 1.0])), stream)
        mixed, t = mix_arrays(x, y, lam, partners)
        lo, hi = np.minimum(x, x[partners]), np.maximum(x, x[partners])
        convex &= bool(np.all(mixed >= lo) and np.all(mixed <= hi))
        for task in t:
            rows &= bool(np.all(np.abs(t[task].sum(axis=1) - 1) <= 1e-6))
            rows &= bool(np.all(t[task] >= 0))
        ends = np.where(np.arange(n) % 2 == 0, 1.0, 0.0)
        m_end, t_end = mix_arrays(x, y, ends, partners)
        for i in range(n):
            src = i if ends[i] == 1.0 else partners[i]
            endpoints &= m_end[i].tobytes() == x[src].tobytes()
            endpoints &= all(t_end[k][i].tobytes() == y[k][src].tobytes() for k in y)
        logits = rng.normal(size=(1, 5)) * 3
        for i in range(n):
            mixed_ce = softmax_cross_entropy(logits, t["stress"][i : i + 1])[0]
            a = softmax_cross_entropy(logits, y["stress"][i : i + 1])[0]
            c = softmax_cross_entropy(logits, y["stress"][partners[i] : partners[i] + 1])[0]
            worst_lin = max(worst_lin, abs(mixed_ce - (lam[i] * a + (1 - lam[i]) * c)))
    report(7, convex and rows and endpoints and worst_lin <= 1e-6,
           f"1000 batches: convex {convex}, label rows sum to 1 {rows}, endpoints exact {endpoints}, "
           f"CE linearity max err {worst_lin:.1e} (<=1e-6)")


# ---------------------------------------------------------------- 8 split


FIELD_COUNTS = {StressClass.healthy: 272, StressClass.leaf_miner: 387, StressClass.rust: 531,
          StressClass.brown_leaf_spot: 348, StressClass.cercospora_leaf_spot: 147}
FIELD_SPLITS = {272: (190, 40, 42), 387: (270, 58, 59), 531: (371, 79, 81), 348: (243, 52, 53), 147: (102, 22, 23)}


def _records(counts):
    return [ManifestRecord(f"{c.name}_{i}.ppm", "symptom", c) for c, n in counts.items() for i in range(n)]


def _per_class(out, cls):
    c = Counter(r.split for r in out if r.stress == cls)
    return c["train"], c["val"], c["test"]


def test_criterion_08_split():
    out = stratified_split(_records(FIELD_COUNTS), SplitSpec(seed=0))
    table_ok = all(_per_class(out, c) == FIELD_SPLITS[n] for c, n in FIELD_COUNTS.items())
    rng = np.random.default_rng(8)
    partitions = 0
    for k in range(100):
        counts = dict(zip(StressClass, rng.integers(0, 60, 5)))
        recs = _records(counts)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = stratified_split(recs, SplitSpec(seed=k))
        ok = sorted(r.path for r in res) == sorted(r.path for r in recs)
        ok &= all(_per_class(res, c) == split_sizes(int(n), SplitSpec()) for c, n in counts.items())
        partitions += ok
    totals = Counter(r.split for r in out)
    report(8, table_ok and partitions == 100,
           f"per-class floor-rule splits match {table_ok} (totals {totals['train']}/{totals['val']}/{totals['test']}); "
           f"partition holds on {partitions}/100 random manifests")


# ---------------------------------------------------------------- 9 metrics


def test_criterion_09_metrics_oracle():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(2, 8))
        n = int(rng.integers(1, 200))
        t, p = rng.integers(0, k, n), rng.integers(0, k, n)
        m = summarize(ConfusionMatrix.from_labels(k, t, p))
        acc = sum(int(a == b) for a, b in zip(t, p)) / n
        precs, recs = [], []
        for c in range(k):
            tp = sum(1 for a, b in zip(t, p) if a == c and b == c)
            pc = sum(1 for b in p if b == c)
            ac = sum(1 for a in t if a == c)
            precs.append(tp / pc if pc else 0.0)
            recs.append(tp / ac if ac else 0.0)
        worst = max(worst, abs(m["accuracy"] - acc), abs(m["precision"] - sum(precs) / k),
                    abs(m["recall"] - sum(recs) / k))
    report(9, worst <= 1e-12, f"100 random samples, max deviation from brute force {worst:.1e} (<=1e-12)")


# ---------------------------------------------------------------- 10 imaging


def _naive_bilinear(img, oh, ow):
    h, w = img.shape[:2]
    out = np.zeros((oh, ow) + img.shape[2:])
    for i in range(oh):
        for j in range(ow):
            y = min(max((i + 0.5) * h / oh - 0.5, 0.0), h - 1)
            x = min(max((j + 0.5) * w / ow - 0.5, 0.0), w - 1)
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = y - y0, x - x0
            out[i, j] = ((1 - fy) * (1 - fx) * img[y0, x0] + (1 - fy) * fx * img[y0, x1]
                         + fy * (1 - fx) * img[y1, x0] + fy * fx * img[y1, x1])
    return out


def test_criterion_10_imaging(tmp_path):
    # hand-built fixture: green rectangle with an orange lesion on white
    img = np.ones((20, 24, 3))
    img[3:17, 2:21] = (0.2, 0.7, 0.2)
    img[6:10, 8:13] = (1.0, 0.5, 0.0)
    leaf_truth = np.zeros((20, 24), bool)
    leaf_truth[3:17, 2:21] = True
    sym_truth = np.zeros((20, 24), bool)
    sym_truth[6:10, 8:13] = True
    leaf = imaging.segment_leaf(img)
    fixture_ok = np.array_equal(leaf, leaf_truth) and np.array_equal(imaging.segment_symptoms(img, leaf), sym_truth)

    records = generate_synthetic(SynthConfig(image_size=64, counts={c: 40 for c in StressClass}, seed=10), tmp_path)
    cfg = imaging.ImagingConfig()
    match = masks = 0
    for r in records:
        path = os.path.join(tmp_path, r.path)
        _, cls, leaf, sym = imaging.measure_severity(imaging.read_image(path), cfg)
        lp, sp = mask_paths(path)
        masks += np.array_equal(leaf, imaging.decode_mask(open(lp, "rb").read())) and np.array_equal(
            sym, imaging.decode_mask(open(sp, "rb").read()))
        match += cls == r.severity

    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(40):
        h, w, oh, ow = rng.integers(1, 12, 4)
        src = rng.uniform(size=(h, w, 3))
        worst = max(worst, float(np.max(np.abs(imaging.resize_bilinear(src, (oh, ow)) - _naive_bilinear(src, oh, ow)))))
    n = len(records)
    report(10, fixture_ok and match == n == 200 and worst < 1e-6,
           f"fixture masks exact {fixture_ok}; severity from pipeline masks matches labels {match}/{n} "
           f"(masks exact {masks}/{n}); bilinear max err {worst:.1e} (<1e-6)")


# ---------------------------------------------------------------- 11 t-SNE


def test_criterion_11_tsne():
    t0 = time.perf_counter()
    x = np.random.default_rng(11).normal(size=(200, 10))
    cond, _ = calibrate_perplexity(squared_distances(x), 30.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.sum(np.where(cond > 0, cond * np.log2(np.where(cond > 0, cond, 1.0)), 0.0), axis=1)
    perp_err = float(np.max(np.abs(2.0**h - 30)))

    rng = np.random.default_rng(12)
    centres = np.zeros((3, 8))
    centres[1, 0] = centres[2, 1] = 10.0
    feats = np.concatenate([rng.normal(size=(50, 8)) + c for c in centres])
    labels = np.repeat(np.arange(3), 50)
    y, trace = run_tsne(feats, TsneConfig(), RngStream(0))
    d = squared_distances(y)
    np.fill_diagonal(d, np.inf)
    purity = float(np.mean(labels[np.argmin(d, axis=1)] == labels))
    seconds = time.perf_counter() - t0
    report(11, perp_err <= 0.03 and trace[-1] < trace[0] and purity >= 0.95 and seconds < 60,
           f"max |2^H - 30| {perp_err:.1e} (<=0.03), KL {trace[0]:.3f} -> {trace[-1]:.3f}, "
           f"1-NN purity {purity:.3f} (>=0.95), {seconds:.1f}s")


# ---------------------------------------------------------------- 12 serialization


def test_criterion_12_serialization(tmp_path):
    rng = np.random.default_rng(12)
    net = build_model(ArchConfig(input_size=32), seed=3)
    ck = ckpt_io.Checkpoint({k: v.copy() for k, v in net.state_dict().items()}, 7, 0.123, net.cfg.fingerprint())
    ckpt_io.save(tmp_path / "m.ckpt", ck)
    back = ckpt_io.load(tmp_path / "m.ckpt")
    tensors_ok = list(back.tensors) == list(ck.tensors) and all(
        back.tensors[k].tobytes() == v.tobytes() and back.tensors[k].dtype == v.dtype for k, v in ck.tensors.items())
    meta_ok = (back.epoch, back.val_loss, back.fingerprint) == (ck.epoch, ck.val_loss, ck.fingerprint)
    raw = bytearray((tmp_path / "m.ckpt").read_bytes())
    raw[len(raw) // 2] ^= 0x10
    try:
        ckpt_io.decode(bytes(raw))
        crc_ok = False
    except CrcMismatch:
        crc_ok = True

    cm = ConfusionMatrix(5, rng.integers(0, 40, (5, 5)))
    names = [c.name for c in StressClass]
    write_confusion_csv(tmp_path / "c.csv", cm, names)
    conf_ok = read_confusion_csv(tmp_path / "c.csv") == (names, cm)
    write_metrics_csv(tmp_path / "m.csv", {"stress": summarize(cm), "severity": summarize(cm.merge(cm))})
    write_metrics_csv(tmp_path / "m2.csv", read_metrics_csv(tmp_path / "m.csv"))
    metrics_ok = (tmp_path / "m.csv").read_bytes() == (tmp_path / "m2.csv").read_bytes()
    y = rng.normal(size=(6, 2)) * 50
    ids = [f"images/img_{i}.ppm" for i in range(6)]
    write_embedding_csv(tmp_path / "e.csv", ids, y, ["rust"] * 6, ["low", None, "high", "healthy", None, "low"])
    rid, ry, rs, rv = read_embedding_csv(tmp_path / "e.csv")
    emb_ok = rid == ids and ry.tobytes() == y.tobytes() and rv[1] is None
    with open(tmp_path / "e.csv") as fh:
        emb_ok &= len(list(csv.reader(fh))) == 7
    report(12, tensors_ok and meta_ok and crc_ok and conf_ok and metrics_ok and emb_ok,
           f"checkpoint bitwise {tensors_ok} meta {meta_ok} CRC rejects flipped byte {crc_ok}; "
           f"confusion CSV {conf_ok}, metrics CSV {metrics_ok}, embedding CSV {emb_ok}")


# ---------------------------------------------------------------- 1 field-data numbers


def test_criterion_01_field_numbers_substituted():
    # Accuracy on the original field photographs needs that dataset and pretrained
    # backbones, neither of which ships here. The criterion is met by running the
    # desk-scale substitutes 2-12; it passes only when every one of them passed.
    substitutes = range(2, 13)
    missing = [n for n in substitutes if n not in RESULTS]
    failed = [n for n in substitutes if n in RESULTS and not RESULTS[n][0]]
    if missing:
        pytest.skip(f"substitute criteria {missing} were not run in this session")
    report(1, not failed,
           f"field-data accuracies not reproducible at desk scale; substitutes 2-12 "
           f"{'all pass' if not failed else f'failing {failed}'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
