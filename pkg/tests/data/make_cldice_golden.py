"""Regenerate the frozen clDice golden cases from the brute-force oracle.

Run from the repository root: ``python3 tests/data/make_cldice_golden.py``.
"""
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
from oracles import cldice_oracle, zhang_suen_bruteforce  # noqa: E402

OUT = Path(__file__).parent / "cldice_golden"


def tube(shape, pts, radius):
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    m = np.zeros(shape, bool)
    for (y0, x0), (y1, x1) in zip(pts, pts[1:]):
        for s in np.linspace(0, 1, 40):
            cy, cx = y0 + s * (y1 - y0), x0 + s * (x1 - x0)
            m |= (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
    return m


def main():
    OUT.mkdir(exist_ok=True)
    rng = np.random.default_rng(20240601)
    for i in range(20):
        shape = (int(rng.integers(12, 25)), int(rng.integers(12, 25)))
        kind = i % 4
        if kind == 0:  # noisy blobs
            gt = rng.random(shape) < 0.35
            pred = gt ^ (rng.random(shape) < 0.1)
        elif kind == 1:  # vessel-like polylines, shifted prediction
            pts = [tuple(rng.uniform(1, s - 2) for s in shape) for _ in range(3)]
            gt = tube(shape, pts, rng.uniform(0.8, 2.2))
            pred = np.roll(gt, int(rng.integers(-1, 2)), axis=int(rng.integers(0, 2)))
        elif kind == 2:  # branch present in gt only
            a = [tuple(rng.uniform(1, s - 2) for s in shape) for _ in range(2)]
            b = [a[1], tuple(rng.uniform(1, s - 2) for s in shape)]
            pred = tube(shape, a, 1.2)
            gt = pred | tube(shape, b, 1.0)
        else:  # one side empty or tiny
            gt = tube(shape, [(2, 2), (shape[0] - 3, shape[1] - 3)], 1.5)
            pred = np.zeros(shape, bool) if i % 8 == 3 else (rng.random(shape) < 0.03)
        value = cldice_oracle(pred, gt)
        np.savez_compressed(OUT / f"case_{i:02d}.npz", pred=pred, gt=gt,
                            skel_pred=zhang_suen_bruteforce(pred),
                            skel_gt=zhang_suen_bruteforce(gt), cldice=value)
        print(f"case_{i:02d}: {shape} clDice={value:.6f}")

    # 8x8 L-shaped vessel, prediction broken by a one-pixel gap
    gt = np.zeros((8, 8), bool)
    gt[1:7, 2] = True
    gt[6, 2:7] = True
    pred = gt.copy()
    pred[4, 2] = False
    value = cldice_oracle(pred, gt)
    np.savez_compressed(OUT / "lshape_gap.npz", pred=pred, gt=gt,
                        skel_pred=zhang_suen_bruteforce(pred),
                        skel_gt=zhang_suen_bruteforce(gt), cldice=value)
    print(f"lshape_gap: clDice={value:.6f}")


if __name__ == "__main__":
    main()
