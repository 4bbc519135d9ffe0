"""``key = value`` configuration files used by ``simulate`` and ``sweep``."""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path

from .pipeline import PipelineConfig
from .simulator import PhantomSpec, SamplingSpec, SimulatedDataset, simulate
from .solvers import ALGORITHMS, ReconConfig

__all__ = [
    "ConfigError",
    "parse_kv",
    "SimulationConfig",
    "GridConfig",
    "load_simulation_config",
    "load_grid_config",
    "float_list",
]


class ConfigError(ValueError):
    """Malformed or unknown configuration entry; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def _optional_int(s: str):
    return None if s.lower() in ("", "none") else int(s)


def float_list(s: str) -> list[float]:
    vals = [float(v) for v in s.split(",") if v.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _str_list(s: str) -> list[str]:
    vals = [v.strip() for v in s.split(",") if v.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def parse_kv(text: str, schema: Mapping[str, Callable[[str], object]]) -> dict:
    """Parse ``key = value`` lines against ``schema`` (key -> converter).

    Blank lines and ``#`` comments (whole-line or trailing) are ignored.
    Unknown or repeated keys and unconvertible values raise :class:`ConfigError`.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in out:
            raise ConfigError(f"key {key!r} given twice", lineno)
        try:
            out[key] = schema[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from exc
    return out


_PHANTOM_KEYS = {
    "nx": int,
    "ny": int,
    "T": _optional_int,
    "heart_period": float,
    "resp_period": float,
    "n_objects": int,
    "seed": int,
    "rank_exact": _optional_int,
    "jitter": float,
    "resp_amplitude": float,
    "heart_amplitude": float,
}
_SAMPLING_KEYS = {"nkspc": float, "nav_interval": int, "lines_per_frame": int, "sampling_seed": int}
_ACQ_KEYS = {"coils": int, "sigma2": float, "noise_seed": int, "sens_seed": int}
_RECON_KEYS = {
    "L": int,
    "iters": int,
    "tol": float,
    "coils_out": int,
    "power_iters": int,
    "sens_source": str,
}


@dataclass(frozen=True)
class SimulationConfig:
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    sampling: SamplingSpec = field(default_factory=SamplingSpec)
    coils: int = 8
    sigma2: float = 0.0
    noise_seed: int = 0
    sens_seed: int = 0

    def with_nkspc(self, nkspc: float) -> SimulationConfig:
        return replace(self, sampling=replace(self.sampling, nkspc=nkspc))

    def run(self) -> SimulatedDataset:
        return simulate(
            self.phantom,
            self.sampling,
            coils=self.coils,
            sigma2=self.sigma2,
            noise_seed=self.noise_seed,
            sens_seed=self.sens_seed,
        )


def _simulation_from(values: dict) -> SimulationConfig:
    try:
        phantom = PhantomSpec(**{k: values[k] for k in _PHANTOM_KEYS if k in values})
        s = {k: values[k] for k in ("nkspc", "nav_interval", "lines_per_frame") if k in values}
        if "sampling_seed" in values:
            s["seed"] = values["sampling_seed"]
        sampling = SamplingSpec(**s)
        acq = {k: values[k] for k in _ACQ_KEYS if k in values}
        return SimulationConfig(phantom=phantom, sampling=sampling, **acq)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_simulation_config(path_or_text, is_text: bool = False) -> SimulationConfig:
    text = path_or_text if is_text else Path(path_or_text).read_text(encoding="utf-8")
    return _simulation_from(parse_kv(text, {**_PHANTOM_KEYS, **_SAMPLING_KEYS, **_ACQ_KEYS}))


@dataclass(frozen=True)
class GridConfig:
    """Sweep grid: the Cartesian product of ``lambdas x nkspc x algorithms``."""

    simulation: SimulationConfig
    lambdas: tuple[float, ...]
    nkspc: tuple[float, ...]
    algorithms: tuple[str, ...]
    L: int = 20
    iters: int = 50
    tol: float = 1e-6
    coils_out: int = 6
    power_iters: int = 30
    sens_source: str = "estimate"

    def __post_init__(self):
        if not (self.lambdas and self.nkspc and self.algorithms):
            raise ConfigError("sweep grid must be non-empty in lambdas, nkspc and algorithms")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithm(s) {bad}; expected some of {ALGORITHMS}")
        if any(lam < 0 for lam in self.lambdas):
            raise ConfigError("lambdas must be non-negative")
        try:
            self.pipeline(self.algorithms[0], self.lambdas[0])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def pipeline(self, algorithm: str, lam: float) -> PipelineConfig:
        rc = ReconConfig(
            algorithm=algorithm,
            lam=lam,
            L=self.L,
            max_iters=self.iters,
            tol=self.tol,
            power_iters=self.power_iters,
        )
        return PipelineConfig(recon=rc, coils_out=self.coils_out, sens_source=self.sens_source)


_GRID_KEYS = {"lambdas": float_list, "nkspc_list": float_list, "algorithms": _str_list}


def load_grid_config(path_or_text, is_text: bool = False) -> GridConfig:
    text = path_or_text if is_text else Path(path_or_text).read_text(encoding="utf-8")
    schema = {**_PHANTOM_KEYS, **_SAMPLING_KEYS, **_ACQ_KEYS, **_RECON_KEYS, **_GRID_KEYS}
    values = parse_kv(text, schema)
    for key in _GRID_KEYS:
        if key not in values:
            raise ConfigError(f"sweep grid needs {key!r}")
    sim = _simulation_from({k: v for k, v in values.items() if k not in _GRID_KEYS and k not in _RECON_KEYS})
    recon = {k: values[k] for k in _RECON_KEYS if k in values}
    try:
        return GridConfig(
            simulation=sim,
            lambdas=tuple(values["lambdas"]),
            nkspc=tuple(values["nkspc_list"]),
            algorithms=tuple(values["algorithms"]),
            **recon,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
