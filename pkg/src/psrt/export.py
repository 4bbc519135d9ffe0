"""Grayscale frame export (binary PGM) for visual inspection."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fileio import atomic_write_bytes

__all__ = ["FORMATS", "to_uint8", "pgm_bytes", "export_frames"]

FORMATS = ("pgm",)


def to_uint8(mag: np.ndarray, peak: float) -> np.ndarray:
    """Map magnitudes to 0..255 with ``peak`` at 255; an all-zero input stays 0."""
    if peak <= 0:
        return np.zeros(mag.shape, dtype=np.uint8)
    return np.clip(np.rint(255.0 * mag / peak), 0, 255).astype(np.uint8)


def pgm_bytes(img: np.ndarray) -> bytes:
    """P5 encoding of a 2D ``uint8`` array (rows are image lines)."""
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("PGM export needs a 2D uint8 array")
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def export_frames(X: np.ndarray, shape: tuple[int, int], directory, fmt: str = "pgm", mmode_col: int | None = None):
    """Write ``|X|`` frame by frame plus one M-mode image.

    Parameters
    ----------
    X : ndarray, shape (N, T)
        Casorati image.
    shape : (nx, ny)
        Spatial grid; frames are written with ``nx`` rows of ``ny`` pixels.
    directory : path
        Created if missing.
    fmt : {"pgm"}
    mmode_col : int, optional
        ``ny`` index of the line tracked over time; defaults to ``ny // 2``.

    Returns
    -------
    list of Path
        ``T`` frame files followed by ``mmode.pgm``. All files share the
        global magnitude maximum as white.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unsupported export format {fmt!r}; expected one of {FORMATS}")
    nx, ny = shape
    if X.ndim != 2 or X.shape[0] != nx * ny:
        raise ValueError(f"image of shape {X.shape} does not match grid {shape}")
    col = ny // 2 if mmode_col is None else mmode_col
    if not 0 <= col < ny:
        raise ValueError(f"M-mode column {col} outside [0, {ny})")
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create export directory {directory}: {exc}") from exc

    mag = np.abs(X).reshape(nx, ny, -1)
    T = mag.shape[2]
    peak = float(mag.max())
    img = to_uint8(mag, peak)
    width = max(4, len(str(T - 1)))
    files = []
    for t in range(T):
        path = directory / f"frame_{t:0{width}d}.pgm"
        atomic_write_bytes(path, pgm_bytes(img[:, :, t]))
        files.append(path)
    path = directory / "mmode.pgm"
    atomic_write_bytes(path, pgm_bytes(np.ascontiguousarray(img[:, col, :])))
    files.append(path)
    return files
