"""Sequence directories: binary PGM frames plus a JSON manifest.

Layout of one sample directory::

    manifest.json   {"id", "frame_files": [...], "height", "width", "source_frame_count"}
    frame_000.pgm   8- or 16-bit binary PGM (P5), one per manifest entry
    label.pgm       optional, 8-bit, values in {0, 1, 2}
    minip.pgm       optional cached MinIP
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import FormatError

CLASS_NAMES = {0: "background", 1: "BV", 2: "MAT"}


@dataclass
class DsaSequence:
    frames: np.ndarray  # (T, H, W)
    source_frame_count: int
    id: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise FormatError(f"sequence frames must be (T>=1, H, W), got {self.frames.shape}")

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.frames.shape[1:]


@dataclass
class MinipImage:
    pixels: np.ndarray
    source_id: str = ""


@dataclass
class LabelMap:
    classes: np.ndarray
    class_names: Dict[int, str] = field(default_factory=lambda: dict(CLASS_NAMES))

    def __post_init__(self):
        self.classes = np.asarray(self.classes)
        bad = np.setdiff1d(np.unique(self.classes), [0, 1, 2])
        if bad.size:
            raise FormatError(f"label values must be in {{0,1,2}}, found {bad.tolist()}")


_HEADER = re.compile(rb"P5\s+(?:#.*?\n\s*)*(\d+)\s+(?:#.*?\n\s*)*(\d+)\s+(?:#.*?\n\s*)*(\d+)\s")


def read_pgm(path) -> np.ndarray:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read PGM: {exc.strerror}", path) from exc
    m = _HEADER.match(buf)
    if not m:
        raise FormatError("not a binary PGM (P5) file", path)
    w, h, maxval = (int(g) for g in m.groups())
    if not 0 < maxval < 65536:
        raise FormatError(f"invalid maxval {maxval}", path)
    dt = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    n = w * h * dt.itemsize
    data = buf[m.end():m.end() + n]
    if len(data) != n:
        raise FormatError(f"truncated pixel data ({len(data)} of {n} bytes)", path)
    arr = np.frombuffer(data, dtype=dt).reshape(h, w)
    return arr.astype(np.uint16) if dt.itemsize == 2 else arr.copy()


def write_pgm(path, image):
    image = np.asarray(image)
    if image.ndim != 2:
        raise FormatError(f"PGM needs a 2-D image, got {image.shape}", path)
    if image.dtype == np.uint8:
        maxval, payload = 255, image.tobytes()
    elif image.dtype == np.uint16:
        maxval, payload = 65535, image.astype(">u2").tobytes()
    else:
        raise FormatError(f"PGM supports uint8/uint16, got {image.dtype}", path)
    h, w = image.shape
    Path(path).write_bytes(b"P5\n%d %d\n%d\n" % (w, h, maxval) + payload)


def load_sequence(directory) -> Tuple[DsaSequence, Optional[LabelMap]]:
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise FormatError("missing manifest.json", mpath)
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}", mpath) from exc
    for key in ("id", "frame_files", "height", "width"):
        if key not in manifest:
            raise FormatError(f"manifest lacks {key!r}", mpath)
    h, w = int(manifest["height"]), int(manifest["width"])
    frames = []
    for name in manifest["frame_files"]:
        fpath = directory / name
        if not fpath.is_file():
            raise FormatError("frame listed in manifest is missing", fpath)
        img = read_pgm(fpath)
        if img.shape != (h, w):
            raise FormatError(f"frame is {img.shape[0]}x{img.shape[1]}, manifest says {h}x{w}",
                              fpath)
        frames.append(img)
    if not frames:
        raise FormatError("manifest lists no frames", mpath)
    seq = DsaSequence(np.stack(frames), int(manifest.get("source_frame_count", len(frames))),
                      str(manifest["id"]))
    label = None
    lpath = directory / "label.pgm"
    if lpath.is_file():
        lab = read_pgm(lpath)
        if lab.shape != (h, w):
            raise FormatError(f"label is {lab.shape[0]}x{lab.shape[1]}, frames are {h}x{w}", lpath)
        try:
            label = LabelMap(lab)
        except FormatError as exc:
            raise FormatError(str(exc), lpath) from None
    return seq, label


def save_sequence(directory, seq: DsaSequence, label: Optional[LabelMap] = None,
                  minip: Optional[MinipImage] = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frames = seq.frames
    if frames.dtype not in (np.uint8, np.uint16):
        raise FormatError(f"frames must be uint8 or uint16 to store as PGM, got {frames.dtype}")
    names = []
    for t, frame in enumerate(frames):
        name = f"frame_{t:03d}.pgm"
        write_pgm(directory / name, frame)
        names.append(name)
    manifest = {
        "id": seq.id,
        "frame_files": names,
        "height": int(frames.shape[1]),
        "width": int(frames.shape[2]),
        "source_frame_count": int(seq.source_frame_count),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    if label is not None:
        write_pgm(directory / "label.pgm", label.classes.astype(np.uint8))
    if minip is not None:
        write_pgm(directory / "minip.pgm", minip.pixels.astype(frames.dtype))
