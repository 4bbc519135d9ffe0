"""Temporal subspace extraction and model-order selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fileio import write_csv

__all__ = [
    "NavigatorCasorati",
    "ModelOrderCurve",
    "extract_temporal_basis",
    "predicted_error",
    "model_order_curve",
    "select_model_order",
    "has_turning_point",
]


@dataclass(frozen=True)
class NavigatorCasorati:
    """Navigator readouts stacked as ``(P, T_nav)``.

    ``P`` runs over coil x kx samples of the centre ``ky`` line;
    ``frame_map[k]`` is the reconstruction frame of navigator column ``k``.
    """

    data: np.ndarray
    frame_map: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        fmap = np.asarray(self.frame_map, dtype=np.int64)
        if data.ndim != 2:
            raise ValueError(f"navigator data must be 2D (P, T_nav), got {data.shape}")
        if fmap.shape != (data.shape[1],):
            raise ValueError(
                f"frame_map has {fmap.size} entries for {data.shape[1]} navigator columns"
            )
        if fmap.size > 1 and np.any(np.diff(fmap) <= 0):
            raise ValueError("frame_map must be strictly increasing")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "frame_map", fmap)

    @property
    def n_nav(self) -> int:
        return self.data.shape[1]


def _fix_phase(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=1)
    peak = V[np.arange(V.shape[0]), idx]
    phase = np.ones_like(peak)
    nz = np.abs(peak) > 0
    phase[nz] = np.abs(peak[nz]) / peak[nz]
    return V * phase[:, None]


def _to_frame_grid(Vnav: np.ndarray, frame_map: np.ndarray, n_frames: int) -> np.ndarray:
    """Place navigator-time rows on the frame grid.

    Frames without a navigator take the value of the latest preceding
    navigator (the first navigator for leading frames); rows are then
    re-orthonormalised in order.
    """
    if frame_map.size == n_frames and np.array_equal(frame_map, np.arange(n_frames)):
        return Vnav
    if frame_map.size and (frame_map[0] < 0 or frame_map[-1] >= n_frames):
        raise ValueError(f"frame_map addresses frames outside [0, {n_frames})")
    owner = np.searchsorted(frame_map, np.arange(n_frames), side="right") - 1
    owner = np.clip(owner, 0, None)
    held = Vnav[:, owner]
    q, _ = np.linalg.qr(held.conj().T)
    return _fix_phase(q.conj().T)


def _right_singular_rows(data: np.ndarray) -> np.ndarray:
    _, _, vh = np.linalg.svd(data, full_matrices=False)
    return vh


def extract_temporal_basis(nav: NavigatorCasorati, L: int, n_frames: int | None = None) -> np.ndarray:
    """Leading ``L`` right singular vectors of the navigator Casorati matrix.

    Rows come in descending singular-value order, each with its
    largest-magnitude entry real and positive.

    Parameters
    ----------
    nav : NavigatorCasorati
    L : int
        Model order, ``1 <= L <= min(P, T_nav)``.
    n_frames : int, optional
        Length of the reconstruction frame grid. Defaults to
        ``frame_map[-1] + 1``.

    Returns
    -------
    ndarray, shape (L, n_frames)
    """
    P, T_nav = nav.data.shape
    if not 1 <= L <= min(P, T_nav):
        raise ValueError(f"model order L={L} exceeds rank bound min(P, T_nav) = {min(P, T_nav)}")
    if n_frames is None:
        n_frames = int(nav.frame_map[-1]) + 1
    vh = _right_singular_rows(nav.data)
    V = _fix_phase(vh[:L])
    return _to_frame_grid(V, nav.frame_map, n_frames)


def predicted_error(X: np.ndarray, V: np.ndarray, sigma2: float, L: int | None = None) -> float:
    """Expected per-location reconstruction error of the subspace projection.

    ``sqrt(||X V^H V - X||_F^2 / N + L * sigma2)`` for an ``N x T`` image and
    i.i.d. complex Gaussian noise of variance ``sigma2``. This is the mean
    over spatial locations of the squared error summed along time, for the
    estimator that projects noisy frames onto ``span(V)``.
    """
    if sigma2 < 0:
        raise ValueError(f"noise variance must be non-negative, got {sigma2}")
    if L is None:
        L = V.shape[0]
    if V.shape[0] != L:
        raise ValueError(f"V has {V.shape[0]} rows but L={L}")
    if V.shape[1] != X.shape[1]:
        raise ValueError(f"time axis mismatch: X has {X.shape[1]} frames, V has {V.shape[1]}")
    N = X.shape[0]
    bias = np.linalg.norm((X @ V.conj().T) @ V - X) ** 2
    return float(np.sqrt(bias / N + L * sigma2))


@dataclass
class ModelOrderCurve:
    """``(L, sigma2, e_pix)`` entries sorted by ``(sigma2, L)``."""

    entries: list = field(default_factory=list)

    def __post_init__(self):
        self.entries = sorted(
            ((int(L), float(s2), float(e)) for L, s2, e in self.entries),
            key=lambda r: (r[1], r[0]),
        )

    @property
    def sigma2_levels(self) -> list[float]:
        return sorted({s2 for _, s2, _ in self.entries})

    def values(self, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
        """``(L, e_pix)`` arrays for one noise level."""
        rows = [(L, e) for L, s2, e in self.entries if s2 == sigma2]
        if not rows:
            raise KeyError(f"no entries for sigma2={sigma2}")
        Ls, es = zip(*rows)
        return np.array(Ls), np.array(es)

    def to_csv(self, path):
        return write_csv(path, ["L", "sigma2", "e_pix"], [(L, repr(s), repr(e)) for L, s, e in self.entries])


def model_order_curve(X: np.ndarray, nav: NavigatorCasorati, sigma2_list, L_range) -> ModelOrderCurve:
    """Evaluate :func:`predicted_error` over noise levels and model orders."""
    L_range = [int(L) for L in L_range]
    sigma2_list = [float(s) for s in sigma2_list]
    if not L_range or not sigma2_list:
        raise ValueError("model_order_curve needs at least one L and one sigma2")
    entries = []
    for L in L_range:
        V = extract_temporal_basis(nav, L, n_frames=X.shape[1])
        for s2 in sigma2_list:
            entries.append((L, s2, predicted_error(X, V, s2, L)))
    return ModelOrderCurve(entries)


def select_model_order(curve: ModelOrderCurve, rtol: float = 1e-12) -> int:
    """Minimax model order: smallest worst-case ``e_pix`` over noise levels.

    Near-ties (within ``rtol``) resolve to the smaller ``L``.
    """
    if not curve.entries:
        raise ValueError("empty model-order curve")
    worst: dict[int, float] = {}
    for L, _, e in curve.entries:
        worst[L] = max(worst.get(L, -np.inf), e)
    best = min(worst.values())
    return min(L for L, w in worst.items() if w <= best * (1 + rtol) + 0.0)


def has_turning_point(values) -> bool:
    """True when a sequence strictly decreases to an interior minimum and then rises."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return False
    k = int(np.argmin(v))
    return 0 < k < v.size - 1 and v[0] > v[k] and v[-1] > v[k]
