"""Reading and writing 8-bit luma sequences.

Supported containers: binary PGM (P5) sequences, 8-bit grayscale PNG
sequences and YUV4MPEG2 (luma plane only).  Frames are returned as float64
arrays; on write they are rounded half-to-even and clamped to ``[0, 255]``.
"""

from __future__ import annotations

import glob
import os
import re
from pathlib import Path

import numpy as np

FORMATS = ("pgm", "png", "y4m")


class FrameIOError(IOError):
    """Unsupported format or corrupt file."""


def quantize(frame) -> np.ndarray:
    return np.clip(np.rint(np.asarray(frame, dtype=np.float64)), 0, 255).astype(np.uint8)


def detect_format(path) -> str:
    ext = Path(str(path)).suffix.lower().lstrip(".")
    if ext in ("pgm", "pnm"):
        return "pgm"
    if ext in FORMATS:
        return ext
    raise FrameIOError(f"unsupported format for {path!s}")


# --------------------------------------------------------------------------- #
# PGM
# --------------------------------------------------------------------------- #

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(blob, pos)
        if not m:
            raise FrameIOError(f"{path}: corrupt PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise FrameIOError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise FrameIOError(f"{path}: corrupt PGM header") from None
    if w <= 0 or h <= 0 or not (0 < maxval < 65536):
        raise FrameIOError(f"{path}: corrupt PGM header")
    if maxval > 255:
        raise FrameIOError(f"{path}: unsupported bit depth (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    data = blob[pos:pos + w * h]
    if len(data) != w * h:
        raise FrameIOError(f"{path}: truncated PGM data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).astype(np.float64)


def write_pgm(path, frame) -> None:
    q = quantize(frame)
    h, w = q.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + q.tobytes())


# --------------------------------------------------------------------------- #
# PNG (Pillow)
# --------------------------------------------------------------------------- #


def read_png(path) -> np.ndarray:
    from PIL import Image

    try:
        img = Image.open(path)
        img.load()
    except (OSError, SyntaxError) as exc:
        raise FrameIOError(f"{path}: {exc}") from None
    if img.mode in ("L", "P", "RGB", "RGBA", "LA"):
        if img.mode != "L":
            img = img.convert("L")
        return np.asarray(img, dtype=np.float64)
    raise FrameIOError(f"{path}: unsupported bit depth (mode {img.mode})")


def write_png(path, frame) -> None:
    from PIL import Image

    Image.fromarray(quantize(frame), mode="L").save(path)


# --------------------------------------------------------------------------- #
# Y4M
# --------------------------------------------------------------------------- #


def _chroma_size(colorspace: str, w: int, h: int) -> int:
    cw, ch = -(-w // 2), -(-h // 2)
    if colorspace.startswith("420"):
        return 2 * cw * ch
    if colorspace.startswith("422"):
        return 2 * cw * h
    if colorspace.startswith("444"):
        return 2 * w * h
    if colorspace.startswith("mono"):
        return 0
    raise FrameIOError(f"unsupported Y4M colorspace {colorspace}")


def read_y4m(path) -> list:
    blob = Path(path).read_bytes()
    end = blob.find(b"\n")
    if end < 0 or not blob.startswith(b"YUV4MPEG2"):
        raise FrameIOError(f"{path}: not a YUV4MPEG2 stream")
    params = {}
    for tok in blob[9:end].decode("ascii", "replace").split():
        params[tok[0]] = tok[1:]
    try:
        w, h = int(params["W"]), int(params["H"])
    except (KeyError, ValueError):
        raise FrameIOError(f"{path}: Y4M header lacks frame size") from None
    cs = params.get("C", "420jpeg")
    if re.search(r"p(9|1[0-6])$", cs):
        raise FrameIOError(f"{path}: unsupported bit depth ({cs})")
    chroma = _chroma_size(cs, w, h)
    frames = []
    pos = end + 1
    while pos < len(blob):
        line_end = blob.find(b"\n", pos)
        if line_end < 0 or not blob.startswith(b"FRAME", pos):
            raise FrameIOError(f"{path}: corrupt frame header at byte {pos}")
        start = line_end + 1
        luma = blob[start:start + w * h]
        if len(luma) != w * h or start + w * h + chroma > len(blob):
            raise FrameIOError(f"{path}: truncated frame {len(frames)}")
        frames.append(np.frombuffer(luma, dtype=np.uint8).reshape(h, w).astype(np.float64))
        pos = start + w * h + chroma
    return frames


def write_y4m(path, frames, fps: str = "25:1") -> None:
    """Write luma with neutral 4:2:0 chroma."""
    frames = [quantize(f) for f in frames]
    if not frames:
        raise FrameIOError("no frames to write")
    h, w = frames[0].shape
    chroma = bytes([128]) * _chroma_size("420jpeg", w, h)
    parts = [f"YUV4MPEG2 W{w} H{h} F{fps} Ip A1:1 C420jpeg\n".encode()]
    for q in frames:
        if q.shape != (h, w):
            raise FrameIOError("all frames must share one size")
        parts += [b"FRAME\n", q.tobytes(), chroma]
    Path(path).write_bytes(b"".join(parts))


# --------------------------------------------------------------------------- #
# Sequences
# --------------------------------------------------------------------------- #

_READERS = {"pgm": read_pgm, "png": read_png}
_WRITERS = {"pgm": write_pgm, "png": write_png}


def _natural_key(path: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", path)]


def frames_read(source, fmt: str | None = None) -> list:
    """Read a sequence from a Y4M file, a directory, or a glob pattern."""
    source = str(source)
    if os.path.isdir(source):
        paths = [p for p in glob.glob(os.path.join(source, "*")) if Path(p).suffix.lower() in (".pgm", ".pnm", ".png")]
    elif any(c in source for c in "*?["):
        paths = glob.glob(source)
    else:
        if not os.path.exists(source):
            raise FileNotFoundError(source)
        paths = [source]
    if not paths:
        raise FileNotFoundError(f"no frames match {source}")
    paths.sort(key=_natural_key)
    fmt = fmt or detect_format(paths[0])
    if fmt == "y4m":
        if len(paths) != 1:
            raise FrameIOError("expected a single Y4M file")
        return read_y4m(paths[0])
    if fmt not in _READERS:
        raise FrameIOError(f"unsupported format {fmt}")
    return [_READERS[fmt](p) for p in paths]


def frames_write(target, frames, fmt: str = "pgm", prefix: str = "frame") -> list:
    """Write frames as ``<target>/<prefix>_NNNN.<fmt>`` or a single Y4M file."""
    if fmt == "y4m":
        write_y4m(target, frames)
        return [str(target)]
    if fmt not in _WRITERS:
        raise FrameIOError(f"unsupported format {fmt}")
    os.makedirs(target, exist_ok=True)
    out = []
    for k, f in enumerate(frames):
        p = os.path.join(str(target), f"{prefix}_{k:04d}.{fmt}")
        _WRITERS[fmt](p, f)
        out.append(p)
    return out
