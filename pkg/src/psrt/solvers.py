"""Subspace solvers: PS-LSQR, temporal-difference Tikhonov, and x-f L1 POCS."""

from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .fileio import write_csv
from .operators import (
    PhiOperator,
    adjoint_encode,
    build_phi,
    build_psi,
    fft_workers,
    normal_reduced,
    operator_norm_estimate,
)

__all__ = [
    "NumericalError",
    "ReconConfig",
    "SolveReport",
    "solve_cg",
    "soft_threshold_complex",
    "recon_lsqr",
    "recon_tikhonov",
    "recon_xfl1_pocs",
    "reconstruct",
    "ALGORITHMS",
]

ALGORITHMS = ("lsqr", "tikhonov", "xfl1")


class NumericalError(ArithmeticError):
    """Non-finite values encountered during an iterative solve."""


@dataclass(frozen=True)
class ReconConfig:
    algorithm: str = "tikhonov"
    lam: float = 0.0
    L: int = 20
    max_iters: int = 50
    tol: float = 1e-6
    seed: int = 0
    power_iters: int = 30

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.L < 1:
            raise ValueError("model order L must be at least 1")


@dataclass
class SolveReport:
    iterations: int = 0
    final_residual: float = 0.0
    wall_time: float = 0.0
    residual_trace: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    time_trace: list = field(default_factory=list)

    def rows(self):
        return [
            (k, repr(float(r)), repr(float(o)), repr(float(s)))
            for k, (r, o, s) in enumerate(zip(self.residual_trace, self.objective_trace, self.time_trace))
        ]

    def to_csv(self, path):
        return write_csv(path, ["iter", "residual", "objective", "seconds"], self.rows())


def _check_finite(arr, it, what):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite {what} at iteration {it}")


def solve_cg(
    apply_system: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    tol: float = 1e-6,
    max_iters: int = 50,
    objective_offset: float = 0.0,
):
    """Conjugate gradient for a Hermitian PSD system, started from zero.

    Stops once ``||r_k|| <= tol * ||rhs||`` or after ``max_iters`` steps.
    The recorded objective is the quadratic ``0.5 <x, Hx> - Re<rhs, x>``
    plus ``objective_offset`` (pass ``0.5 ||y||^2`` to get the least-squares
    cost of a normal-equation system).

    Returns
    -------
    x : ndarray
    report : SolveReport
        Traces start at iteration 0 (``x = 0``).
    """
    t0 = time.perf_counter()
    _check_finite(rhs, 0, "right-hand side")
    x = np.zeros_like(rhs, dtype=np.complex128)
    r = np.array(rhs, dtype=np.complex128)
    bnorm = np.linalg.norm(r)
    report = SolveReport()

    def record(res, obj):
        report.residual_trace.append(res)
        report.objective_trace.append(obj)
        report.time_trace.append(time.perf_counter() - t0)

    record(1.0 if bnorm > 0 else 0.0, objective_offset)
    if bnorm == 0:
        report.wall_time = time.perf_counter() - t0
        return x, report

    p = r.copy()
    rr = np.vdot(r, r).real
    it = 0
    for it in range(1, max_iters + 1):
        Ap = apply_system(p)
        _check_finite(Ap, it, "operator output")
        pAp = np.vdot(p, Ap).real
        if pAp <= 0:
            # direction in the null space: nothing more to gain
            it -= 1
            break
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        _check_finite(x, it, "iterate")
        rr_new = np.vdot(r, r).real
        res = np.sqrt(rr_new) / bnorm
        # with r = b - Hx:  0.5<x,Hx> - Re<b,x> = -0.5 Re(<x,b> + <x,r>)
        obj = -0.5 * (np.vdot(x, rhs).real + np.vdot(x, r).real) + objective_offset
        record(res, obj)
        if res <= tol:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    report.iterations = it
    report.final_residual = report.residual_trace[-1]
    report.wall_time = time.perf_counter() - t0
    return x, report


def soft_threshold_complex(Z: np.ndarray, tau: float) -> np.ndarray:
    """Shrink magnitudes by ``tau`` keeping phase; entries with ``|z| <= tau`` go to 0."""
    if tau < 0:
        raise ValueError(f"threshold must be non-negative, got {tau}")
    Z = np.asarray(Z)
    mag = np.abs(Z)
    scale = np.zeros_like(mag)
    nz = mag > tau
    scale[nz] = (mag[nz] - tau) / mag[nz]
    return Z * scale


def _dims(data, V, S, M):
    if data.shape[:3] != S.shape:
        raise ValueError(f"k-space {data.shape[:3]} does not match sensitivities {S.shape}")
    if data.shape[3] != V.shape[1] or M.shape != (S.shape[2], V.shape[1]):
        raise ValueError("time or ky axis mismatch between data, V and mask")


def _ls_offset(data):
    return 0.5 * float(np.vdot(data, data).real)


def recon_lsqr(data, V, S, M, config: ReconConfig, phi: PhiOperator | None = None):
    """CG on ``A^H A U = A^H y`` with the merged-kernel normal operator."""
    return recon_tikhonov(data, V, S, M, config, phi=phi, lam=0.0)


def recon_tikhonov(data, V, S, M, config: ReconConfig, phi: PhiOperator | None = None, lam: float | None = None):
    """CG on ``(A^H A + lam * R) U = A^H y`` with ``R(U) = U @ Psi``.

    ``Psi`` is the ``L x L`` Gram matrix of the differenced temporal basis,
    so every iteration stays in the ``N x L`` coefficient space.
    """
    _dims(data, V, S, M)
    lam = config.lam if lam is None else lam
    if phi is None:
        phi = build_phi(V, M)
    rhs = adjoint_encode(data, V, S, M)
    if lam > 0:
        psi = build_psi(V)

        def system(u):
            return normal_reduced(u, phi, S) + lam * (u @ psi)

    else:

        def system(u):
            return normal_reduced(u, phi, S)

    return solve_cg(system, rhs, tol=config.tol, max_iters=config.max_iters, objective_offset=_ls_offset(data))


def _ft(X):
    return scipy.fft.fft(X, axis=1, norm="ortho", workers=fft_workers())


def _ift(X):
    return scipy.fft.ifft(X, axis=1, norm="ortho", workers=fft_workers())


def recon_xfl1_pocs(
    data, V, S, M, config: ReconConfig, phi: PhiOperator | None = None, track_objective: bool = True
):
    """POCS for the temporal-Fourier L1 model.

    Each iteration takes a gradient step on the data term with step
    ``0.99 / ||A^H A||``, soft-thresholds ``F_t(U V)`` by ``lam``, and
    projects back onto the subspace with ``V^H``. Stops after ``max_iters``
    or when the relative change of ``U`` drops to ``tol``.

    ``track_objective=False`` skips the L1 term of the recorded objective
    (it costs one extra full-length transform per iteration) and records NaN.
    """
    _dims(data, V, S, M)
    t0 = time.perf_counter()
    lam = config.lam
    if phi is None:
        phi = build_phi(V, M)
    rhs = adjoint_encode(data, V, S, M)
    N, L = rhs.shape[0], V.shape[0]
    offset = _ls_offset(data)
    report = SolveReport()

    def system(u):
        return normal_reduced(u, phi, S)

    norm = operator_norm_estimate(system, (N, L), iters=config.power_iters, seed=config.seed)
    U = np.zeros((N, L), dtype=np.complex128)
    report.residual_trace.append(1.0)
    report.objective_trace.append(offset)
    report.time_trace.append(time.perf_counter() - t0)
    if norm == 0 or not np.any(rhs):
        report.final_residual = 0.0 if not np.any(rhs) else 1.0
        report.wall_time = time.perf_counter() - t0
        return U, report
    gamma = 0.99 / norm
    Vh = V.conj().T
    bnorm = np.linalg.norm(rhs)
    AU = np.zeros_like(U)
    it = 0
    for it in range(1, config.max_iters + 1):
        grad = AU - rhs
        Z = U - gamma * grad
        if lam > 0:
            Xf = soft_threshold_complex(_ft(Z @ V), lam)
            Znew = _ift(Xf) @ Vh
        else:
            Znew = Z
        _check_finite(Znew, it, "iterate")
        change = np.linalg.norm(Znew - U) / max(np.linalg.norm(Znew), 1e-300)
        U = Znew
        AU = system(U)
        res = np.linalg.norm(AU - rhs) / bnorm
        obj = 0.5 * np.vdot(U, AU).real - np.vdot(rhs, U).real + offset
        if not track_objective:
            obj = float("nan")
        elif lam > 0:
            obj += lam * np.abs(_ft(U @ V)).sum()
        report.residual_trace.append(res)
        report.objective_trace.append(obj)
        report.time_trace.append(time.perf_counter() - t0)
        if change <= config.tol:
            break
    report.iterations = it
    report.final_residual = report.residual_trace[-1]
    report.wall_time = time.perf_counter() - t0
    return U, report


_DISPATCH = {"lsqr": recon_lsqr, "tikhonov": recon_tikhonov, "xfl1": recon_xfl1_pocs}


def reconstruct(data, V, S, M, config: ReconConfig, phi: PhiOperator | None = None):
    """Dispatch on ``config.algorithm``."""
    return _DISPATCH[config.algorithm](data, V, S, M, config, phi=phi)
