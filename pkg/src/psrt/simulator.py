"""Synthetic dynamic phantoms and interleaved k-t acquisitions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .operators import fft2c
from .subspace import NavigatorCasorati

__all__ = [
    "PhantomSpec",
    "SamplingSpec",
    "SimulatedDataset",
    "generate_phantom",
    "generate_lowrank_phantom",
    "generate_sensitivities",
    "generate_sampling",
    "required_frames",
    "undersampling_factor",
    "sample_kspace",
    "simulate",
]

IMAGING, NAVIGATOR = 0, 1


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and motion of the dynamic phantom.

    ``T=None`` lets :func:`simulate` pick the shortest frame count that holds
    the imaging-line budget. ``resp_amplitude=0`` disables respiration and
    ``jitter=0`` makes every cardiac cycle last exactly ``heart_period``.
    """

    nx: int = 48
    ny: int = 48
    T: int | None = None
    heart_period: float = 24.0
    resp_period: float = 110.0
    n_objects: int = 6
    seed: int = 0
    rank_exact: int | None = None
    jitter: float = 0.1
    resp_amplitude: float = 1.5  # pixels
    heart_amplitude: float = 0.3  # fractional radius change at systole

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"phantom grid must be at least 8x8, got {self.nx}x{self.ny}")
        if self.heart_period < 2 or self.resp_period < 2:
            raise ValueError("heart_period and resp_period must be at least 2 frames")
        if self.T is not None and self.T < 1:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.n_objects < 0:
            raise ValueError("n_objects must be non-negative")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must lie in [0, 1)")


@dataclass(frozen=True)
class SamplingSpec:
    """Interleaved acquisition: imaging ky lines plus centre-line navigators."""

    nkspc: float = 9
    nav_interval: int = 3
    lines_per_frame: int = 3
    seed: int = 0

    def __post_init__(self):
        if not self.nkspc > 0:
            raise ValueError(f"nkspc must be positive, got {self.nkspc}")
        if self.nav_interval < 1 or self.lines_per_frame < 1:
            raise ValueError("nav_interval and lines_per_frame must be at least 1")


@dataclass
class SimulatedDataset:
    """Measured data plus, when simulated, the ground truth behind it."""

    kspace: np.ndarray  # (J, nx, ny, T)
    mask: np.ndarray  # (ny, T)
    nav: NavigatorCasorati
    sens: np.ndarray | None = None  # (J, nx, ny)
    truth: np.ndarray | None = None  # (N, T)
    sigma2: float = 0.0
    schedule: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.kspace.shape[1:3])


def _grid(nx, ny):
    x = np.linspace(-1, 1, nx)
    y = np.linspace(-1, 1, ny)
    return np.meshgrid(x, y, indexing="ij")


def _ellipse(xx, yy, cx, cy, a, b, edge):
    r = np.sqrt(((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2)
    return 0.5 * (1.0 + np.tanh((1.0 - r) / edge))


def _cardiac_phase(T, period, jitter, rng):
    """Phase in [0, 1) per frame, cycle lengths jittered by +-``jitter``."""
    starts = [0.0]
    lengths = []
    while starts[-1] < T:
        p = period * (1.0 + (rng.uniform(-jitter, jitter) if jitter > 0 else 0.0))
        lengths.append(p)
        starts.append(starts[-1] + p)
    t = np.arange(T, dtype=float)
    k = np.searchsorted(np.array(starts), t, side="right") - 1
    return (t - np.array(starts)[k]) / np.array(lengths)[k]


def generate_phantom(spec: PhantomSpec) -> np.ndarray:
    """Sum of smooth-edged ellipses with a beating ventricle and breathing shift.

    Object 0 is the ventricle, object 1 the body outline, object 2 the
    myocardial wall; further objects are random static structures. Returns
    the ``(nx*ny, T)`` Casorati matrix.
    """
    if spec.T is None:
        raise ValueError("PhantomSpec.T must be set to generate a phantom")
    nx, ny, T = spec.nx, spec.ny, spec.T
    rng = np.random.default_rng(spec.seed)
    xx, yy = _grid(nx, ny)
    edge = 1.5 / min(nx, ny)

    phase = _cardiac_phase(T, spec.heart_period, spec.jitter, rng)
    contraction = 1.0 - spec.heart_amplitude * 0.5 * (1.0 - np.cos(2 * np.pi * phase))
    shift = spec.resp_amplitude * (2.0 / nx) * np.sin(2 * np.pi * np.arange(T) / spec.resp_period)

    extras = []
    for _ in range(max(spec.n_objects - 3, 0)):
        extras.append(
            (
                rng.uniform(-0.5, 0.5),
                rng.uniform(-0.5, 0.5),
                rng.uniform(0.05, 0.2),
                rng.uniform(0.05, 0.2),
                rng.uniform(0.1, 0.4),
            )
        )

    X = np.zeros((nx, ny, T))
    for t in range(T):
        xs = xx - shift[t]
        img = np.zeros((nx, ny))
        if spec.n_objects >= 1:
            r = contraction[t]
            img += 0.6 * _ellipse(xs, yy, 0.1, -0.05, 0.22 * r, 0.18 * r, edge)
        if spec.n_objects >= 2:
            img += 0.3 * _ellipse(xs, yy, 0.0, 0.0, 0.85, 0.7, edge)
        if spec.n_objects >= 3:
            # wall thickens as the cavity shrinks
            r = 0.5 * (1.0 + contraction[t])
            img += 0.3 * _ellipse(xs, yy, 0.1, -0.05, 0.32 * r, 0.27 * r, edge)
        for cx, cy, a, b, amp in extras:
            img += amp * _ellipse(xs, yy, cx, cy, a, b, edge)
        X[:, :, t] = img
    return X.reshape(nx * ny, T).astype(np.complex128)


def generate_lowrank_phantom(spec: PhantomSpec, L_true: int):
    """Exactly rank-``L_true`` dynamic image ``X = U V`` with orthonormal ``V`` rows.

    Returns
    -------
    X : ndarray, shape (N, T)
    U : ndarray, shape (N, L_true)
    V : ndarray, shape (L_true, T)
    """
    if spec.T is None:
        raise ValueError("PhantomSpec.T must be set to generate a phantom")
    nx, ny, T = spec.nx, spec.ny, spec.T
    N = nx * ny
    if not 1 <= L_true <= min(N, T):
        raise ValueError(f"L_true={L_true} must lie in [1, min(N, T) = {min(N, T)}]")
    rng = np.random.default_rng(spec.seed)
    xx, yy = _grid(nx, ny)
    support = _ellipse(xx, yy, 0.0, 0.0, 0.85, 0.7, 1.5 / min(nx, ny))

    cols = []
    for l in range(L_true):
        re = gaussian_filter(rng.standard_normal((nx, ny)), 2.0)
        im = gaussian_filter(rng.standard_normal((nx, ny)), 2.0)
        m = (re + 0.3j * im) * support
        m /= np.max(np.abs(m))
        cols.append(m.ravel() / (l + 1))
    U = np.stack(cols, axis=1)
    # first column: static anatomy so the image looks like an image
    U[:, 0] = support.ravel()

    t = np.arange(T)
    raw = [np.ones(T)]
    for l in range(1, L_true):
        k = (l + 1) // 2
        f = np.cos if l % 2 else np.sin
        raw.append(f(2 * np.pi * k * t / spec.heart_period) + 0.2 * rng.standard_normal(T))
    Q, _ = np.linalg.qr(np.stack(raw, axis=1).astype(np.complex128))
    V = Q.T
    # QR may flip signs; keep the static row positive so the time-mean image is U[:, 0]
    V[0] *= np.sign(V[0, 0].real)
    return U @ V, U, V


def generate_sensitivities(J: int, nx: int, ny: int, seed: int = 0) -> np.ndarray:
    """Smooth Gaussian-lobe coil maps with mild linear phase, RSS-normalised to 1."""
    if J < 1:
        raise ValueError(f"coil count must be at least 1, got {J}")
    rng = np.random.default_rng(seed)
    xx, yy = _grid(nx, ny)
    maps = np.empty((J, nx, ny), dtype=np.complex128)
    offset = rng.uniform(0, 2 * np.pi)
    for j in range(J):
        ang = offset + 2 * np.pi * j / J
        cx, cy = 1.3 * np.cos(ang), 1.3 * np.sin(ang)
        mag = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * 0.9**2))
        gx, gy = rng.uniform(-0.5, 0.5, size=2)
        ph = rng.uniform(-np.pi, np.pi) + gx * xx + gy * yy
        maps[j] = mag * np.exp(1j * ph)
    return maps / np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))


def required_frames(spec: SamplingSpec, ny: int) -> int:
    """Shortest frame grid holding ``nkspc * ny`` imaging lines."""
    return math.ceil(_imaging_lines(spec, ny) / spec.lines_per_frame)


def _imaging_lines(spec: SamplingSpec, ny: int) -> int:
    return int(round(spec.nkspc * ny))


def generate_sampling(spec: SamplingSpec, ny: int, T: int):
    """Interleaved imaging / navigator readout schedule on a ``T``-frame grid.

    Imaging lines follow seeded random permutation sweeps of ``ky`` (each
    sweep visits all lines once) and are spread over the frames in order;
    with an exact budget every frame receives ``lines_per_frame`` lines. A
    navigator readout at ``ny // 2`` precedes every ``nav_interval``-th
    imaging readout and belongs to that readout's frame.

    Returns
    -------
    mask : ndarray of bool, shape (ny, T)
        Imaging lines only.
    frame_map : ndarray of int
        Frame index of each navigator readout.
    schedule : ndarray of int, shape (n_readouts, 3)
        ``(frame, kind, ky)`` per readout in acquisition order, where kind
        is 0 for imaging and 1 for navigator.
    """
    n_img = _imaging_lines(spec, ny)
    if n_img > spec.lines_per_frame * T:
        need = math.ceil(n_img / spec.lines_per_frame)
        raise ValueError(
            f"imaging budget of {n_img} lines does not fit {T} frames x "
            f"{spec.lines_per_frame} lines; requires T >= {need}"
        )
    if n_img < T:
        raise ValueError(f"{n_img} imaging lines cannot cover {T} frames; reduce T to at most {n_img}")
    rng = np.random.default_rng(spec.seed)
    frame_of = (np.arange(n_img) * T) // n_img

    lines = np.empty(n_img, dtype=np.int64)
    pos = 0
    in_frame: set[int] = set()
    while pos < n_img:
        sweep = [int(v) for v in rng.permutation(ny)]
        take = min(ny, n_img - pos)
        for k in range(take):
            s = pos + k
            if s and frame_of[s] != frame_of[s - 1]:
                in_frame = set()
            # sweep boundary may repeat a ky inside one frame; swap it forward
            if sweep[k] in in_frame:
                for q in range(k + 1, ny):
                    if sweep[q] not in in_frame:
                        sweep[k], sweep[q] = sweep[q], sweep[k]
                        break
            lines[s] = sweep[k]
            in_frame.add(sweep[k])
        pos += take

    mask = np.zeros((ny, T), dtype=bool)
    mask[lines, frame_of] = True

    centre = ny // 2
    schedule = []
    nav_frames = []
    for s in range(n_img):
        if s % spec.nav_interval == 0:
            schedule.append((frame_of[s], NAVIGATOR, centre))
            nav_frames.append(frame_of[s])
        schedule.append((frame_of[s], IMAGING, lines[s]))
    frame_map = np.array(nav_frames, dtype=np.int64)
    if np.any(np.diff(frame_map) <= 0):
        raise ValueError(
            f"nav_interval={spec.nav_interval} places several navigators in one frame; "
            f"use nav_interval >= lines_per_frame={spec.lines_per_frame}"
        )
    return mask, frame_map, np.array(schedule, dtype=np.int64)


def undersampling_factor(mask: np.ndarray, include_navigator: bool = True) -> float:
    """Mean per-frame ratio of ``ny`` to acquired lines."""
    ny = mask.shape[0]
    lines = mask.sum(axis=0) + (1 if include_navigator else 0)
    return float(np.mean(ny / lines))


def _complex_noise(rng, shape, sigma2):
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_kspace(
    X: np.ndarray,
    S: np.ndarray,
    mask: np.ndarray,
    sigma2: float,
    seed: int = 0,
    frame_map: np.ndarray | None = None,
):
    """Noisy undersampled multi-coil k-space and centre-line navigators.

    Noise is i.i.d. circular complex Gaussian with variance ``sigma2``
    (``sigma2 / 2`` per real component), drawn independently for imaging
    and navigator samples.

    Returns
    -------
    kspace : ndarray, shape (J, nx, ny, T)
    nav : NavigatorCasorati
        ``(J * nx, T_nav)`` rows stacked coil-major.
    """
    if sigma2 < 0:
        raise ValueError(f"noise variance must be non-negative, got {sigma2}")
    J, nx, ny = S.shape
    T = X.shape[1]
    if X.shape[0] != nx * ny:
        raise ValueError(f"image has {X.shape[0]} rows, maps imply {nx * ny}")
    if mask.shape != (ny, T):
        raise ValueError(f"mask shape {mask.shape} does not match (ny, T) = {(ny, T)}")
    if frame_map is None:
        frame_map = np.arange(T)
    frame_map = np.asarray(frame_map, dtype=np.int64)
    rng = np.random.default_rng(seed)

    Xi = X.reshape(nx, ny, T)
    full = np.empty((J, nx, ny, T), dtype=np.complex128)
    for j in range(J):
        full[j] = fft2c(S[j][..., None] * Xi)

    kspace = full * mask[None, None]
    sel = np.broadcast_to(mask[None, None], kspace.shape)
    n_sel = int(np.count_nonzero(sel))
    if sigma2 > 0:
        kspace[sel] += _complex_noise(rng, n_sel, sigma2)

    navdata = full[:, :, ny // 2, :][:, :, frame_map]
    if sigma2 > 0:
        navdata = navdata + _complex_noise(rng, navdata.shape, sigma2)
    nav = NavigatorCasorati(navdata.reshape(J * nx, frame_map.size), frame_map)
    return kspace, nav


def simulate(
    phantom: PhantomSpec,
    sampling: SamplingSpec,
    coils: int = 8,
    sigma2: float = 0.0,
    noise_seed: int = 0,
    sens_seed: int = 0,
) -> SimulatedDataset:
    """Phantom, maps, schedule and noisy measurements in one bundle.

    When ``phantom.rank_exact`` is set the image is the exact low-rank
    fixture from :func:`generate_lowrank_phantom`.
    """
    if phantom.T is None:
        phantom = replace(phantom, T=required_frames(sampling, phantom.ny))
    if phantom.rank_exact:
        X, _, _ = generate_lowrank_phantom(phantom, phantom.rank_exact)
    else:
        X = generate_phantom(phantom)
    S = generate_sensitivities(coils, phantom.nx, phantom.ny, seed=sens_seed)
    mask, frame_map, schedule = generate_sampling(sampling, phantom.ny, phantom.T)
    kspace, nav = sample_kspace(X, S, mask, sigma2, seed=noise_seed, frame_map=frame_map)
    return SimulatedDataset(
        kspace=kspace,
        mask=mask,
        nav=nav,
        sens=S,
        truth=X,
        sigma2=float(sigma2),
        schedule=schedule,
        meta={"nkspc": float(sampling.nkspc)},
    )
