"""Partial separable encoding operator and its normal-operator variants.

Array layout used throughout the package:

* spatial basis ``U``: ``(N, L)`` with ``N = nx * ny`` (C order over ``(nx, ny)``)
* temporal basis ``V``: ``(L, T)``
* coil sensitivities ``S``: ``(J, nx, ny)``
* k-t mask ``M``: ``(ny, T)`` boolean, broadcast along ``kx``
* k-space: ``(J, nx, ny, T)``

Time acts by right multiplication on the ``N x T`` Casorati matrix
``X = U @ V``. The spatial transform is the centred unitary 2D DFT, so the
k-space centre line is ``ky = ny // 2`` and a fully sampled normal operator
with root-sum-of-squares normalised maps is the identity.
"""

from __future__ import annotations

import os
from collections.abc import Callable, MutableMapping
from dataclasses import dataclass

import numpy as np
import scipy.fft

__all__ = [
    "ShapeError",
    "PhiOperator",
    "fft2c",
    "ifft2c",
    "fft_workers",
    "forward_encode",
    "adjoint_encode",
    "normal_naive",
    "normal_exchanged",
    "build_phi",
    "normal_reduced",
    "temporal_difference",
    "build_psi",
    "operator_norm_estimate",
]


class ShapeError(ValueError):
    """Raised when operator inputs disagree along a named axis."""


def fft_workers() -> int:
    """Worker count for FFTs, capped by ``PSRT_THREADS`` (0 or unset -> 1)."""
    raw = os.environ.get("PSRT_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    return n if n > 0 else 1


def fft2c(x: np.ndarray, axes=(-3, -2)) -> np.ndarray:
    """Centred unitary 2D DFT over ``axes``."""
    x = scipy.fft.ifftshift(x, axes=axes)
    x = scipy.fft.fft2(x, axes=axes, norm="ortho", workers=fft_workers())
    return scipy.fft.fftshift(x, axes=axes)


def ifft2c(x: np.ndarray, axes=(-3, -2)) -> np.ndarray:
    """Inverse of :func:`fft2c`."""
    x = scipy.fft.ifftshift(x, axes=axes)
    x = scipy.fft.ifft2(x, axes=axes, norm="ortho", workers=fft_workers())
    return scipy.fft.fftshift(x, axes=axes)


def _check_dims(U=None, V=None, S=None, M=None, Y=None):
    """Validate that all provided operands agree; return ``(J, nx, ny, L, T)``."""
    J = nx = ny = L = T = None
    if S is not None:
        if S.ndim != 3:
            raise ShapeError(f"sensitivities must be (J, nx, ny), got shape {S.shape}")
        J, nx, ny = S.shape
    if V is not None:
        if V.ndim != 2:
            raise ShapeError(f"temporal basis must be (L, T), got shape {V.shape}")
        L, T = V.shape
    if U is not None:
        if U.ndim != 2:
            raise ShapeError(f"spatial basis must be (N, L), got shape {U.shape}")
        if nx is not None and U.shape[0] != nx * ny:
            raise ShapeError(
                f"spatial axis mismatch: U has {U.shape[0]} rows, sensitivities "
                f"imply N = {nx}*{ny} = {nx * ny}"
            )
        if L is not None and U.shape[1] != L:
            raise ShapeError(
                f"model-order axis mismatch: U has {U.shape[1]} columns, V has {L} rows"
            )
    if M is not None:
        if M.ndim != 2:
            raise ShapeError(f"mask must be (ny, T), got shape {M.shape}")
        if ny is not None and M.shape[0] != ny:
            raise ShapeError(f"ky axis mismatch: mask has {M.shape[0]} rows, ny = {ny}")
        if T is not None and M.shape[1] != T:
            raise ShapeError(f"time axis mismatch: mask has {M.shape[1]} frames, V has {T}")
    if Y is not None:
        if Y.ndim != 4:
            raise ShapeError(f"k-space must be (J, nx, ny, T), got shape {Y.shape}")
        if S is not None and Y.shape[:3] != S.shape:
            raise ShapeError(
                f"coil/grid axis mismatch: k-space {Y.shape[:3]} vs sensitivities {S.shape}"
            )
        if T is not None and Y.shape[3] != T:
            raise ShapeError(f"time axis mismatch: k-space has {Y.shape[3]} frames, V has {T}")
    return J, nx, ny, L, T


def forward_encode(U: np.ndarray, V: np.ndarray, S: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Evaluate ``M * F(S * (U @ V))``.

    Returns
    -------
    ndarray, shape (J, nx, ny, T)
        Multi-coil k-space, exactly zero at unsampled ``(ky, t)``.
    """
    J, nx, ny, L, T = _check_dims(U=U, V=V, S=S, M=M)
    X = (U @ V).reshape(nx, ny, T)
    out = np.empty((J, nx, ny, T), dtype=np.complex128)
    for j in range(J):
        out[j] = fft2c(S[j][..., None] * X) * M[None]
    return out


def adjoint_encode(Y: np.ndarray, V: np.ndarray, S: np.ndarray, M: np.ndarray | None = None) -> np.ndarray:
    """Apply the adjoint of :func:`forward_encode` to k-space ``Y``.

    ``Y`` is assumed masked already; pass ``M`` to enforce it.
    """
    J, nx, ny, L, T = _check_dims(V=V, S=S, M=M, Y=Y)
    acc = np.zeros((nx, ny, T), dtype=np.complex128)
    for j in range(J):
        k = Y[j] if M is None else Y[j] * M[None]
        acc += np.conj(S[j])[..., None] * ifft2c(k)
    return acc.reshape(nx * ny, T) @ V.conj().T


def normal_naive(U: np.ndarray, V: np.ndarray, S: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``A^H A U`` evaluated literally through the full ``T``-frame image series."""
    J, nx, ny, L, T = _check_dims(U=U, V=V, S=S, M=M)
    X = (U @ V).reshape(nx, ny, T)
    acc = np.zeros((nx, ny, T), dtype=np.complex128)
    # coil loop keeps peak memory at one T-frame coil series
    for j in range(J):
        k = fft2c(S[j][..., None] * X) * M[None]
        acc += np.conj(S[j])[..., None] * ifft2c(k)
    return acc.reshape(nx * ny, T) @ V.conj().T


def normal_exchanged(U: np.ndarray, V: np.ndarray, S: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``A^H A U`` with coil weighting and DFT applied to the ``L`` basis images.

    Only the mask contraction ``V^H M V`` visits the time axis.
    """
    J, nx, ny, L, T = _check_dims(U=U, V=V, S=S, M=M)
    Ui = U.reshape(nx, ny, L)
    Vh = V.conj().T
    acc = np.zeros((nx, ny, L), dtype=np.complex128)
    for j in range(J):
        K = fft2c(S[j][..., None] * Ui)
        K = ((K @ V) * M[None]) @ Vh
        acc += np.conj(S[j])[..., None] * ifft2c(K)
    return acc.reshape(nx * ny, L)


@dataclass(frozen=True)
class PhiOperator:
    """Merged ``V diag(m) V^H`` kernels, one per distinct mask row.

    Attributes
    ----------
    blocks : ndarray, shape (n_blocks, L, L)
        Hermitian PSD kernels. A k-space coefficient row ``k`` (length ``L``)
        maps to ``k @ blocks[b]``.
    row_index : ndarray of int
        Block id per ``ky`` (shape ``(ny,)``) or per ``(kx, ky)`` location
        (shape ``(nx, ny)``) for masks that vary along ``kx``.
    """

    blocks: np.ndarray
    row_index: np.ndarray

    @property
    def L(self) -> int:
        return self.blocks.shape[1]

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]

    def apply(self, K: np.ndarray, counter: MutableMapping | None = None) -> np.ndarray:
        """Contract k-space coefficients ``K`` of shape ``(J, nx, ny, L)``."""
        J, nx, ny, L = K.shape
        if L != self.L:
            raise ShapeError(f"model-order axis mismatch: coefficients have {L}, Phi has {self.L}")
        if self.row_index.ndim == 1:
            if self.row_index.shape[0] != ny:
                raise ShapeError(f"ky axis mismatch: Phi indexes {self.row_index.shape[0]} rows, ny = {ny}")
            B = self.blocks[self.row_index]  # (ny, L, L)
            Kt = np.ascontiguousarray(K.transpose(2, 0, 1, 3)).reshape(ny, J * nx, L)
            out = np.matmul(Kt, B).reshape(ny, J, nx, L).transpose(1, 2, 0, 3)
            macs = Kt.shape[0] * Kt.shape[1] * L * L
        else:
            if self.row_index.shape != (nx, ny):
                raise ShapeError(
                    f"grid axis mismatch: Phi indexes {self.row_index.shape}, k-space is {(nx, ny)}"
                )
            B = self.blocks[self.row_index]  # (nx, ny, L, L)
            out = np.einsum("jxyl,xylm->jxym", K, B)
            macs = J * nx * ny * L * L
        if counter is not None:
            counter["mask_macs"] = counter.get("mask_macs", 0) + macs
        return out


def build_phi(V: np.ndarray, M: np.ndarray) -> PhiOperator:
    """Merge ``V^H M V`` into per-row ``L x L`` kernels.

    Cartesian masks depend only on ``ky``, so identical mask rows share one
    block. ``M`` may also be a per-location ``(nx, ny, T)`` mask.
    """
    M = np.asarray(M, dtype=bool)
    if V.ndim != 2:
        raise ShapeError(f"temporal basis must be (L, T), got shape {V.shape}")
    if M.ndim not in (2, 3):
        raise ShapeError(f"mask must be (ny, T) or (nx, ny, T), got shape {M.shape}")
    if M.shape[-1] != V.shape[1]:
        raise ShapeError(f"time axis mismatch: mask has {M.shape[-1]} frames, V has {V.shape[1]}")
    rows = M.reshape(-1, M.shape[-1])
    if rows.shape[0] == 0:
        raise ValueError("mask has no rows; cannot build Phi")
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    w = uniq.astype(np.float64)
    blocks = np.einsum("lt,bt,mt->blm", V, w, V.conj())
    # exact symmetrisation removes rounding asymmetry
    blocks = 0.5 * (blocks + blocks.conj().transpose(0, 2, 1))
    return PhiOperator(blocks=blocks, row_index=inverse.reshape(M.shape[:-1]))


def normal_reduced(
    U: np.ndarray,
    Phi: PhiOperator,
    S: np.ndarray,
    counter: MutableMapping | None = None,
) -> np.ndarray:
    """``A^H A U = S^H F^H Phi F S U`` using only ``L``-frame transforms.

    Parameters
    ----------
    counter : dict, optional
        Accumulates ``"mask_macs"``, the complex multiply-adds spent in the
        kernel contraction (``J * N * L**2`` per call).
    """
    J, nx, ny, _, _ = _check_dims(U=U, S=S)
    L = U.shape[1]
    if L != Phi.L:
        raise ShapeError(f"model-order axis mismatch: U has {L} columns, Phi has {Phi.L}")
    Ui = U.reshape(nx, ny, L)
    K = fft2c(S[..., None] * Ui[None])
    K = Phi.apply(K, counter=counter)
    img = ifft2c(K)
    return np.einsum("jxy,jxyl->xyl", np.conj(S), img).reshape(nx * ny, L)


def temporal_difference(X: np.ndarray) -> np.ndarray:
    """Forward differences along time: column ``t`` is ``X[:, t+1] - X[:, t]``."""
    return np.diff(X, axis=1)


def build_psi(V: np.ndarray) -> np.ndarray:
    """Gram matrix ``(V D^T)(V D^T)^H`` of the temporally differenced basis rows.

    With this kernel ``||U V D^T||_F^2 == trace(Psi U^H U)`` and the
    regulariser gradient is ``U @ Psi``.
    """
    W = np.diff(V, axis=1)
    psi = W @ W.conj().T
    return 0.5 * (psi + psi.conj().T)


def operator_norm_estimate(
    apply: Callable[[np.ndarray], np.ndarray],
    shape: tuple[int, ...],
    iters: int = 30,
    x0: np.ndarray | None = None,
    seed: int = 0,
    history: list | None = None,
) -> float:
    """Largest eigenvalue of a Hermitian PSD map by power iteration.

    The estimate ``||A x_k|| / ||x_k||`` is nondecreasing in ``k`` for PSD
    maps. A zero (or missing) start vector is replaced by a seeded draw.
    """
    x = None if x0 is None else np.asarray(x0, dtype=np.complex128)
    if x is None or not np.any(x):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x = x / np.linalg.norm(x)
    est = 0.0
    for _ in range(max(int(iters), 1)):
        y = apply(x)
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            est = 0.0
            break
        est = float(nrm)
        if history is not None:
            history.append(est)
        x = y / nrm
    return est
