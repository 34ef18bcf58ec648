"""Synthetic DSA phantoms: a vessel tree filling with contrast over time.

Each sample is a trunk (label 2) with recursive side branches (label 1). Every
centreline point carries its geodesic distance from the trunk root, and a pixel
darkens at frame ``t`` once ``arrival <= t * speed``. Static ring arcs mimic
residual skull edges: they look like vessels in the MinIP but never change.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import FormatError, GenerationError
from .pipeline.io import DsaSequence, LabelMap, MinipImage, save_sequence

N_FOLDS = 5
_STEP = 0.5  # centreline sampling step in pixels


@dataclass(frozen=True)
class PhantomSpec:
    height: int = 64
    width: int = 64
    frames: int = 8
    trunk_width: Tuple[float, float] = (3.5, 5.0)
    branch_depth: int = 2
    branch_angle: Tuple[float, float] = (25.0, 60.0)
    branches_per_segment: Tuple[int, int] = (2, 3)
    width_ratio: Tuple[float, float] = (0.6, 0.8)
    min_width: float = 1.5
    contrast_speed: Optional[float] = None  # px/frame; None fills the tree at the last frame
    background: float = 200.0
    vessel_intensity: float = 70.0
    skull_arcs: int = 2
    skull_intensity: float = 80.0
    skull_thickness: float = 2.5
    noise_sigma: float = 6.0
    seed: int = 0

    def validate(self):
        for name in ("trunk_width", "branch_angle", "branches_per_segment", "width_ratio"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise GenerationError(f"{name} must satisfy 0 <= lo <= hi, got {(lo, hi)}")
        if self.frames < 1:
            raise GenerationError(f"frames must be >= 1, got {self.frames}")
        if self.branch_depth < 0:
            raise GenerationError(f"branch_depth must be >= 0, got {self.branch_depth}")
        if not 0 < self.width_ratio[1] < 1:
            raise GenerationError("width_ratio must lie in (0, 1) so branches get thinner")
        if self.trunk_width[0] < self.min_width:
            raise GenerationError("trunk narrower than min_width")
        if min(self.height, self.width) < max(16.0, 4 * self.trunk_width[1]):
            raise GenerationError(
                f"canvas {self.height}x{self.width} too small for trunk width {self.trunk_width[1]}")
        if self.contrast_speed is not None and self.contrast_speed <= 0:
            raise GenerationError("contrast_speed must be positive")
        if not self.vessel_intensity < self.background:
            raise GenerationError("vessels must be darker than the background")
        if self.noise_sigma < 0 or self.skull_arcs < 0:
            raise GenerationError("noise_sigma and skull_arcs must be non-negative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("trunk_width", "branch_angle", "branches_per_segment", "width_ratio"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class Segment:
    points: np.ndarray    # (N, 2) float (y, x)
    geodesic: np.ndarray  # (N,) distance from the trunk root along the tree
    width: float
    tag: str              # "MAT" or "BV"
    parent: int = -1
    depth: int = 0


@dataclass
class VesselTree:
    shape: Tuple[int, int]
    segments: List[Segment] = field(default_factory=list)

    @property
    def extent(self) -> float:
        return max(float(s.geodesic.max()) for s in self.segments)


@dataclass
class PhantomSample:
    sequence: DsaSequence
    minip: MinipImage
    label: LabelMap
    arrival: np.ndarray     # per-pixel front arrival distance, inf off-vessel
    skull: np.ndarray       # bool mask of distractor pixels
    speed: float


def _inside(p, shape, margin=0.0):
    return margin <= p[0] <= shape[0] - 1 - margin and margin <= p[1] <= shape[1] - 1 - margin


def _walk(rng, start, heading, length, shape, g0, wiggle):
    """Trace a gently curving path until ``length`` or the canvas edge."""
    pts, geo = [np.array(start, dtype=np.float64)], [g0]
    turn = 0.0
    n = int(length / _STEP)
    for _ in range(n):
        turn = 0.9 * turn + rng.normal(0.0, wiggle)
        heading += turn
        nxt = pts[-1] + _STEP * np.array([math.sin(heading), math.cos(heading)])
        if not _inside(nxt, shape):
            break
        pts.append(nxt)
        geo.append(geo[-1] + _STEP)
    return np.array(pts), np.array(geo), heading


def gen_tree(spec: PhantomSpec, rng: Optional[np.random.Generator] = None) -> VesselTree:
    spec.validate()
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    tree = VesselTree((h, w))
    min_len = 0.5 * min(h, w)
    for _ in range(20):
        # trunk enters from the bottom edge and heads roughly upward
        start = (h - 1.0, rng.uniform(0.3, 0.7) * (w - 1))
        heading = -math.pi / 2 + rng.uniform(-0.3, 0.3)
        pts, geo, _ = _walk(rng, start, heading, rng.uniform(0.65, 0.85) * h, (h, w), 0.0, 0.004)
        if geo[-1] >= min_len:
            break
    else:
        raise GenerationError(f"could not place a trunk of length >= {min_len:.1f} on {h}x{w}")
    tree.segments.append(Segment(pts, geo, float(rng.uniform(*spec.trunk_width)), "MAT"))

    frontier = [0]
    for depth in range(1, spec.branch_depth + 1):
        nxt = []
        for pi in frontier:
            parent = tree.segments[pi]
            child_w = parent.width * rng.uniform(*spec.width_ratio)
            if child_w < spec.min_width:
                continue
            n_child = int(rng.integers(spec.branches_per_segment[0], spec.branches_per_segment[1] + 1))
            plen = parent.geodesic[-1] - parent.geodesic[0]
            for _ in range(n_child):
                k = int(rng.uniform(0.25, 0.9) * (len(parent.points) - 1))
                if k < 1:
                    continue
                d = parent.points[k] - parent.points[k - 1]
                base = math.atan2(d[0], d[1])
                side = 1.0 if rng.random() < 0.5 else -1.0
                heading = base + side * math.radians(rng.uniform(*spec.branch_angle))
                length = max(plen, 8.0) * rng.uniform(0.45, 0.75)
                cp, cg, _ = _walk(rng, parent.points[k], heading, length, (h, w),
                                  float(parent.geodesic[k]), 0.012)
                if len(cp) < 6:
                    continue
                # siblings share the parent width draw but each stays strictly thinner
                tree.segments.append(Segment(cp, cg, float(child_w), "BV", pi, depth))
                nxt.append(len(tree.segments) - 1)
        frontier = nxt
    return tree


def _disk_offsets(radius: float):
    r = int(math.ceil(radius)) + 1
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return yy.ravel(), xx.ravel()


def rasterize(tree: VesselTree):
    """Return (label, arrival): trunk pixels win over branches, arrival is a min."""
    h, w = tree.shape
    label = np.zeros((h, w), dtype=np.uint8)
    arrival = np.full((h, w), np.inf)
    # branches first so the trunk overwrites shared pixels
    order = sorted(range(len(tree.segments)), key=lambda i: tree.segments[i].tag == "MAT")
    for i in order:
        seg = tree.segments[i]
        radius = seg.width / 2.0
        oy, ox = _disk_offsets(radius)
        cls = 2 if seg.tag == "MAT" else 1
        for (py, px), g in zip(seg.points, seg.geodesic):
            yy = np.rint(py).astype(int) + oy
            xx = np.rint(px).astype(int) + ox
            keep = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            yy, xx = yy[keep], xx[keep]
            hit = (yy - py) ** 2 + (xx - px) ** 2 <= radius ** 2
            yy, xx = yy[hit], xx[hit]
            label[yy, xx] = cls
            arrival[yy, xx] = np.minimum(arrival[yy, xx], g)
    return label, arrival


def skull_mask(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.height, spec.width
    mask = np.zeros((h, w), dtype=bool)
    if spec.skull_arcs == 0:
        return mask
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    for _ in range(spec.skull_arcs):
        radius = rng.uniform(0.3, 0.48) * min(h, w)
        oy, ox = rng.uniform(-0.1, 0.1, size=2) * min(h, w)
        r = np.hypot(yy - cy - oy, xx - cx - ox)
        ang = np.arctan2(yy - cy - oy, xx - cx - ox)
        a0 = rng.uniform(-math.pi, math.pi)
        span = rng.uniform(0.6, 1.4)
        dang = np.angle(np.exp(1j * (ang - a0)))
        mask |= (np.abs(r - radius) <= spec.skull_thickness / 2.0) & (np.abs(dang) <= span / 2.0)
    return mask


def render_sequence(tree: VesselTree, spec: PhantomSpec,
                    rng: Optional[np.random.Generator] = None, sample_id: str = "") -> PhantomSample:
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    h, w = tree.shape
    label, arrival = rasterize(tree)
    skull = skull_mask(spec, rng)
    speed = spec.contrast_speed
    if speed is None:
        extent = float(arrival[np.isfinite(arrival)].max())
        speed = extent / (spec.frames - 1) if spec.frames > 1 else max(extent, 1.0)
        speed = max(speed, 1e-6)
    base = np.full((h, w), spec.background)
    base[skull] = spec.skull_intensity
    frames = np.empty((spec.frames, h, w))
    noise_rng = np.random.default_rng(rng.integers(2 ** 63))
    for t in range(spec.frames):
        # same tolerance on both sides keeps the last frame saturated under rounding
        lit = arrival <= t * speed * (1 + 1e-12)
        f = base.copy()
        f[lit] = np.minimum(f[lit], spec.vessel_intensity)
        if spec.noise_sigma > 0:
            f = f + noise_rng.normal(0.0, spec.noise_sigma, size=(h, w))
        frames[t] = f
    frames = np.clip(np.rint(frames), 0, 255).astype(np.uint8)
    seq = DsaSequence(frames, spec.frames, sample_id)
    return PhantomSample(seq, MinipImage(frames.min(axis=0), sample_id), LabelMap(label),
                         arrival, skull, float(speed))


def generate(spec: PhantomSpec, sample_id: str = "") -> PhantomSample:
    """Tree and rendering from one seed; streams are split so each part is independent."""
    tree_ss, render_ss = np.random.SeedSequence(spec.seed).spawn(2)
    tree = gen_tree(spec, np.random.default_rng(tree_ss))
    return render_sequence(tree, spec, np.random.default_rng(render_ss), sample_id)


def sample_seeds(n: int, master_seed: int) -> List[int]:
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(master_seed).spawn(n)]


def assign_folds(ids: List[str], master_seed: int, n_folds: int = N_FOLDS) -> Dict[str, List[str]]:
    perm = np.random.default_rng([master_seed, 5]).permutation(len(ids))
    folds: Dict[str, List[str]] = {str(k): [] for k in range(n_folds)}
    for rank, i in enumerate(perm):
        folds[str(rank % n_folds)].append(ids[i])
    for k in folds:
        folds[k].sort()
    return folds


def emit_dataset(n: int, spec: PhantomSpec, out_dir, master_seed: int = 0) -> Dict[str, List[str]]:
    """Write ``n`` samples plus ``folds.json`` and ``dataset.json``; returns the fold map."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        ids = []
        for i, s in enumerate(sample_seeds(n, master_seed)):
            sid = f"phantom_{i:04d}"
            sample = generate(replace(spec, seed=s), sid)
            save_sequence(out / sid, sample.sequence, sample.label, sample.minip)
            ids.append(sid)
        folds = assign_folds(ids, master_seed)
        (out / "folds.json").write_text(json.dumps(folds, indent=2))
        meta = {"n": n, "master_seed": master_seed, "spec": spec.to_dict()}
        (out / "dataset.json").write_text(json.dumps(meta, indent=2))
    except OSError as exc:
        raise FormatError(f"cannot write dataset: {exc.strerror}", exc.filename or out) from exc
    return folds


def load_folds(data_dir) -> Dict[str, List[str]]:
    path = Path(data_dir) / "folds.json"
    if not path.is_file():
        raise FormatError("missing folds.json", path)
    try:
        return {str(k): list(v) for k, v in json.loads(path.read_text()).items()}
    except (json.JSONDecodeError, AttributeError) as exc:
        raise FormatError(f"invalid fold file: {exc}", path) from exc
