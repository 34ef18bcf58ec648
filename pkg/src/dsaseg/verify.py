"""Self-check suites run by ``dsaseg verify``.

Each check returns ``(ok, detail)``. Oracles here are written independently of
the code they check (direct formulas, brute force, or finite differences).
"""
from __future__ import annotations

import math
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import ops
from .model import DSANet, ModelConfig

PRIMITIVE_TOL = 1e-6
ATTN_TOL = 1e-6

Check = Callable[[], Tuple[bool, str]]


def _rng(seed=0):
    return np.random.default_rng(seed)


def _weighted_sum(out: ad.Tensor, seed=1) -> ad.Tensor:
    """Reduce to a scalar with fixed random weights so every output element matters."""
    w = _rng(seed).standard_normal(out.shape)
    return (out * ad.Tensor(w)).sum()


def _primitive_cases():
    r = _rng(0)
    pos = np.abs(r.standard_normal((3, 4))) + 0.5
    a = r.standard_normal((3, 4))
    b = r.standard_normal((3, 4))
    m1, m2 = r.standard_normal((2, 3, 4)), r.standard_normal((2, 4, 5))
    img = r.standard_normal((2, 3, 6, 6))
    wconv = r.standard_normal((4, 3, 3, 3)) * 0.3
    wt = r.standard_normal((3, 2, 2, 2)) * 0.3
    gam, bet = r.standard_normal(3), r.standard_normal(3)
    gam4, bet4 = r.standard_normal(4), r.standard_normal(4)
    seq = r.standard_normal((2, 3, 2, 4, 4))
    T = ad.Tensor
    return {
        "add": (lambda x: _weighted_sum(x + T(b)), a),
        "mul": (lambda x: _weighted_sum(x * T(b)), a),
        "div": (lambda x: _weighted_sum(T(b) / x), pos),
        "exp": (lambda x: _weighted_sum(ops.exp(x)), a),
        "log": (lambda x: _weighted_sum(ops.log(x)), pos),
        "gelu": (lambda x: _weighted_sum(ops.gelu(x)), a * 2),
        "softmax": (lambda x: _weighted_sum(ops.softmax(x, axis=-1)), a),
        "log_softmax": (lambda x: _weighted_sum(ops.log_softmax(x, axis=1)), a),
        "matmul": (lambda x: _weighted_sum(ops.matmul(x, T(m2))), m1),
        "conv2d": (lambda x: _weighted_sum(ops.conv2d(x, T(wconv), None, 1, 1)), img),
        "conv2d_weight": (lambda w: _weighted_sum(ops.conv2d(T(img), w, None, 2, 1)), wconv),
        "conv_transpose2d": (lambda x: _weighted_sum(ops.conv_transpose2d(x, T(wt), None, 2)), img),
        "group_norm": (lambda x: _weighted_sum(ops.group_norm(x, 3, T(gam), T(bet))), img),
        "layer_norm": (lambda x: _weighted_sum(ops.layer_norm(x, T(gam4), T(bet4))), a),
        "maxpool2d": (lambda x: _weighted_sum(ops.maxpool2d(x, 2, 2)), img),
        "pool_max_T": (lambda x: _weighted_sum(ops.pool_over_axis(x, 1, "max")), seq),
        "upsample_bilinear": (lambda x: _weighted_sum(ops.upsample2d(x, 2, "bilinear")), img),
        "concat": (lambda x: _weighted_sum(ops.concat([x, x * 2.0], axis=1)), img),
        "regroup": (lambda x: _weighted_sum(
            ad.Regroup("b t c h w -> (b h w) t c")(x)), seq),
    }


def gradcheck_suite() -> Dict[str, Check]:
    checks = {}
    for name, (fn, x) in _primitive_cases().items():
        def run(fn=fn, x=x):
            err = ad.grad_check(fn, x)
            return err < PRIMITIVE_TOL, f"max rel err {err:.2e}"
        checks[name] = run
    return checks


def tiny_model(frames=4, size=16, base=4, levels=4, seed=0, ablation="none") -> Tuple[DSANet, np.ndarray, np.ndarray]:
    cfg = ModelConfig(base_channels=base, levels=levels, frames=frames, tf_layers=2, tf_heads=2,
                      mlp_ratio=2.0, patch_size=size, ablation=ablation)
    model = DSANet(cfg, seed=seed, dtype=np.float64)
    r = _rng(seed + 7)
    return model, r.standard_normal((1, frames, 1, size, size)), r.standard_normal((1, 1, size, size))


def _record_attention(model: DSANet):
    for m in model.attention_modules() + [model.stf]:
        m.record = []


def attention_suite() -> Dict[str, Check]:
    def rows_sum():
        model, seq, mip = tiny_model(size=32)
        _record_attention(model)
        with ad.no_grad():
            model(seq, mip)
        worst = 0.0
        for m in model.attention_modules():
            for a in m.record:
                worst = max(worst, float(np.max(np.abs(a.sum(-1) - 1.0))))
        for ai, as_ in model.stf.record:
            worst = max(worst, float(np.max(np.abs(ai.sum(-1) - 1.0))),
                        float(np.max(np.abs(as_.sum(-1) - 1.0))))
        return worst < ATTN_TOL, f"max |row sum - 1| = {worst:.2e}"

    def uniform_temporal():
        model, seq, mip = tiny_model()
        for layer in model.tf.layers:
            layer.pos.data[:] = 0.0
        seq = np.repeat(seq[:, :1], seq.shape[1], axis=1)
        layer0 = model.tf.layers[0].attn_t
        layer0.record = []
        with ad.no_grad():
            model(seq, mip)
        a = layer0.record[0]
        dev = float(np.max(np.abs(a - 1.0 / seq.shape[1])))
        return dev < 1e-12, f"max |attn - 1/T| = {dev:.2e}"

    return {"rows_sum_to_one": rows_sum, "identical_frames_uniform": uniform_temporal}


def stitch_suite() -> Dict[str, Check]:
    from .pipeline import extract_patches, stitch

    def roundtrip():
        r = _rng(3)
        for patch, stride in ((8, 8), (8, 4), (16, 5), (7, 3), (4, 1)):
            for _ in range(10):
                img = r.standard_normal((2, int(r.integers(3, 40)), int(r.integers(3, 40))))
                grid, patches = extract_patches(img, patch, stride)
                back = stitch(grid, list(patches))
                if not np.array_equal(back.shape, img.shape) or np.max(np.abs(back - img)) > 1e-12:
                    return False, f"round trip failed for patch={patch} stride={stride}"
        return True, "50 random images"

    def mirror():
        from .pipeline import mirror_pad
        out = mirror_pad(np.array([[1, 2, 3]]), (0, 0), (1, 1))
        return out.tolist() == [[2, 1, 2, 3, 2]], f"got {out.tolist()}"

    return {"roundtrip": roundtrip, "mirror_pad": mirror}


def _trapezoid_auc(scores, gt):
    """ROC by sweeping every distinct threshold, integrated with the trapezoid rule."""
    thr = np.concatenate([[np.inf], np.unique(scores)[::-1]])
    pos, neg = gt.sum(), (~gt).sum()
    tpr = np.array([(scores[gt] >= t).sum() / pos for t in thr])
    fpr = np.array([(scores[~gt] >= t).sum() / neg for t in thr])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def metrics_suite() -> Dict[str, Check]:
    from .metrics import auc, binary_counts, cl_dice, paired_t_test, scalar_metrics

    def confusion():
        pred = np.array([1, 1, 0, 0, 1, 0], dtype=bool)
        gt = np.array([1, 0, 0, 1, 1, 0], dtype=bool)
        m = scalar_metrics(binary_counts(pred, gt))
        want = {"jac": 0.5, "dice": 2 / 3, "sen": 2 / 3, "pre": 2 / 3}
        ok = all(abs(m[k] - v) < 1e-15 for k, v in want.items())
        empty = scalar_metrics(binary_counts(np.zeros(4, bool), np.zeros(4, bool)))
        ok &= all(empty[k] == 1.0 for k in want)
        return ok, str(m)

    def auc_oracle():
        r = _rng(5)
        worst = 0.0
        for _ in range(100):
            n = int(r.integers(4, 30))
            gt = r.random(n) < 0.4
            gt[0], gt[1] = True, False
            scores = np.round(r.random(n), 1)  # ties on purpose
            worst = max(worst, abs(auc(scores, gt) - _trapezoid_auc(scores, gt)))
        return worst < 1e-12, f"max diff {worst:.2e}"

    def cldice_identity():
        m = np.zeros((12, 12), bool)
        m[5:7, 1:11] = True
        m[1:11, 5:7] = True
        v = cl_dice(m, m)
        empty = cl_dice(np.zeros_like(m), np.zeros_like(m))
        return v == 1.0 and empty == 1.0, f"self {v}, empty {empty}"

    def ttest():
        r = _rng(9)
        from scipy import stats
        worst = 0.0
        for _ in range(20):
            a, b = r.random(6), r.random(6)
            d = a - b
            t = d.mean() / (d.std(ddof=1) / math.sqrt(len(d)))
            p = 2 * stats.t.sf(abs(t), len(d) - 1)
            res = paired_t_test(a, b)
            worst = max(worst, abs(res["t"] - t), abs(res["p"] - p))
        same = paired_t_test(a, a)["p"]
        return worst < 1e-10 and same == 1.0, f"max diff {worst:.2e}, identical p={same}"

    return {"confusion": confusion, "auc": auc_oracle, "cldice": cldice_identity, "ttest": ttest}


SUITES = {
    "gradcheck": gradcheck_suite,
    "attention": attention_suite,
    "stitch": stitch_suite,
    "metrics": metrics_suite,
}


def run(only: Optional[Iterable[str]] = None, out=print) -> Optional[str]:
    """Run suites in order; return the first failing ``suite.check`` name or None."""
    names = list(only) if only else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s) {unknown}; choose from {list(SUITES)}")
    first_fail = None
    for suite in names:
        for check, fn in SUITES[suite]().items():
            try:
                ok, detail = fn()
            except Exception as exc:  # a crash is a failure, reported with its message
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            out(f"{'PASS' if ok else 'FAIL'} {suite}.{check}: {detail}")
            if not ok and first_fail is None:
                first_fail = f"{suite}.{check}"
    return first_fail
