"""Readers and writers for the plain-text and PGM artifacts."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import ConfigError


def fmt(x) -> str:
    """Shortest round-tripping text for a scalar."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    if x is None:
        return ""
    return str(x)


def write_text(path: Path, text: str) -> None:
    Path(path).write_bytes(text.encode("utf-8"))


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    write_text(path, "\n".join(lines) + "\n")


def read_csv(path: Path) -> list[dict[str, str]]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:] if line]


def format_kv(items: dict) -> str:
    return "".join(f"{k}={fmt(v)}\n" for k, v in items.items())


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def _pgm_tokens(data: bytes):
    """Yield whitespace-separated header tokens, skipping comments, and the offset after each."""
    i, n = 0, len(data)
    while i < n:
        c = data[i:i + 1]
        if c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path: Path) -> np.ndarray:
    """Read a P2 or P5 graymap as floats scaled to [0, 1] by its maxval."""
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
        width, _ = next(tokens)
        height, _ = next(tokens)
        maxval, end = next(tokens)
        width, height, maxval = int(width), int(height), int(maxval)
    except (StopIteration, ValueError) as exc:
        raise ConfigError(f"{path}: malformed PGM header") from exc
    if not 0 < maxval < 65536:
        raise ConfigError(f"{path}: bad maxval {maxval}")
    if magic == b"P2":
        values = [int(t) for t, _ in tokens]
        if len(values) != width * height:
            raise ConfigError(f"{path}: expected {width * height} samples, got {len(values)}")
        arr = np.array(values, dtype=float)
    elif magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[end + 1:end + 1 + width * height * dtype.itemsize]
        if len(raw) != width * height * dtype.itemsize:
            raise ConfigError(f"{path}: truncated raster")
        arr = np.frombuffer(raw, dtype=dtype).astype(float)
    else:
        raise ConfigError(f"{path}: not a PGM file (magic {magic!r})")
    if np.any(arr > maxval):
        raise ConfigError(f"{path}: sample exceeds maxval")
    return arr.reshape(height, width) / maxval


def write_pgm(path: Path, pixels: np.ndarray, binary: bool = True) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8)
    height, width = pixels.shape
    if binary:
        Path(path).write_bytes(f"P5\n{width} {height}\n255\n".encode() + pixels.tobytes())
    else:
        rows = "\n".join(" ".join(str(v) for v in row) for row in pixels)
        write_text(path, f"P2\n{width} {height}\n255\n{rows}\n")


def read_grid(path: Path) -> np.ndarray:
    """Whitespace-separated float rows; '#' starts a comment."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(v) for v in line.split()])
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: empty or ragged grid")
    return np.array(rows)


def write_grid(path: Path, values: np.ndarray) -> None:
    write_text(path, "".join(" ".join(fmt(float(v)) for v in row) + "\n" for row in np.asarray(values)))


def read_object(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"object file {path} not found")
    head = path.read_bytes()[:2]
    if head in (b"P2", b"P5"):
        return read_pgm(path)
    try:
        return read_grid(path)
    except ValueError as exc:
        raise ConfigError(f"{path}: unreadable object grid") from exc


def write_patterns(path: Path, patterns: np.ndarray) -> None:
    """One pattern per line, blocks row-major as 0/1 characters."""
    flat = np.asarray(patterns, dtype=np.uint8).reshape(len(patterns), -1)
    write_text(path, "".join("".join("1" if v else "0" for v in row) + "\n" for row in flat))
