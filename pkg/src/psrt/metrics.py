"""Reconstruction quality metrics on dynamic (Casorati or image-series) data."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import convolve2d

from .fileio import append_csv

__all__ = ["MetricsRecord", "METRICS_HEADER", "nrmse", "psnr", "ssim", "append_metrics_csv"]

METRICS_HEADER = ["algorithm", "lambda", "nkspc", "L", "nrmse", "psnr_db", "ssim", "recon_seconds"]


@dataclass
class MetricsRecord:
    nrmse: float
    psnr_db: float
    ssim: float
    recon_seconds: float = float("nan")
    algorithm: str = ""
    lam: float = float("nan")
    nkspc: float = float("nan")
    L: int = 0

    def row(self) -> list:
        return [
            self.algorithm,
            repr(float(self.lam)),
            repr(float(self.nkspc)),
            self.L,
            repr(float(self.nrmse)),
            "inf" if np.isinf(self.psnr_db) else repr(float(self.psnr_db)),
            repr(float(self.ssim)),
            repr(float(self.recon_seconds)),
        ]

    def as_dict(self) -> dict:
        return asdict(self)


def _pair(xhat, xref):
    xhat = np.asarray(xhat)
    xref = np.asarray(xref)
    if xhat.shape != xref.shape:
        raise ValueError(f"shape mismatch: {xhat.shape} vs {xref.shape}")
    return xhat, xref


def nrmse(xhat, xref) -> float:
    """``||xhat - xref||_F / ||xref||_F`` over all pixels and frames."""
    xhat, xref = _pair(xhat, xref)
    ref_norm = np.linalg.norm(xref)
    if ref_norm == 0:
        raise ValueError("nRMSE undefined for an all-zero reference")
    return float(np.linalg.norm(xhat - xref) / ref_norm)


def psnr(xhat, xref) -> float:
    """``20 log10(max|xref| / RMSE)`` in dB; ``inf`` for identical inputs."""
    xhat, xref = _pair(xhat, xref)
    peak = np.max(np.abs(xref))
    if peak == 0:
        raise ValueError("PSNR undefined for an all-zero reference")
    rmse = np.sqrt(np.mean(np.abs(xhat - xref) ** 2))
    if rmse == 0:
        return float("inf")
    return float(20.0 * np.log10(peak / rmse))


def _gaussian_window(size, sigma=1.5):
    r = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - r) ** 2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_frame(a, b, window, c1, c2):
    def filt(z):
        return convolve2d(z, window, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a**2
    sbb = filt(b * b) - mu_b**2
    sab = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def ssim(xhat, xref, shape: tuple[int, int] | None = None) -> float:
    """Frame-averaged structural similarity of magnitude images.

    Parameters
    ----------
    xhat, xref : array_like
        Either image series ``(nx, ny, T)`` or Casorati ``(N, T)`` matrices
        with ``shape=(nx, ny)``.
    shape : tuple, optional
        Spatial grid for Casorati inputs.

    Notes
    -----
    Gaussian window 11x11 with sigma 1.5, ``K1=0.01``, ``K2=0.03`` and data
    range ``max|xref|``. Frames smaller than the window use the largest odd
    window that fits.
    """
    xhat, xref = _pair(xhat, xref)
    if xref.ndim == 2:
        if shape is None:
            raise ValueError("Casorati inputs need the spatial shape")
        xhat = xhat.reshape(*shape, -1)
        xref = xref.reshape(*shape, -1)
    a_all = np.abs(xhat).astype(np.float64)
    b_all = np.abs(xref).astype(np.float64)
    drange = b_all.max()
    if drange == 0:
        raise ValueError("SSIM undefined for an all-zero reference")
    size = min(11, *a_all.shape[:2])
    if size % 2 == 0:
        size -= 1
    window = _gaussian_window(size)
    c1 = (0.01 * drange) ** 2
    c2 = (0.03 * drange) ** 2
    vals = [_ssim_frame(b_all[..., t], a_all[..., t], window, c1, c2) for t in range(a_all.shape[-1])]
    return float(np.mean(vals))


def append_metrics_csv(path, records) -> None:
    append_csv(path, METRICS_HEADER, [r.row() for r in records])
