"""Flat JSON run configuration shared by every CLI subcommand."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .edref import TorusSpec
from .lattice import LatticeSpec
from .nlce import PairCorrelator, Propagation, SiteMagnetization
from .quantum import InitialStateSpec, ModelSpec, TimeGrid


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Every knob of a run. Unknown keys are rejected; defaults are explicit."""

    lattice: str = "square"
    model: str = "ising"
    J: float = 1.0
    h: float = 1.0
    Jperp: float = 1.0
    Jz: float = 0.15
    theta: float = math.pi / 2
    phi: float = 0.0
    observable: str = "site"
    alpha: str = "x"
    beta: str = "x"
    r: list = field(default_factory=lambda: [1, 0])
    separations: list = field(default_factory=list)
    connected: bool = True
    pair_convention: str = "connected"
    n_max: int = 8
    tori: list = field(default_factory=lambda: ["2x2", "3x2", "3x3", "4x3"])
    double_wraps: bool = False
    t_max: float = 2.0
    n_points: int = 201
    method: str = "auto"
    dense_cap: int = 12
    site_cap: int = 20
    ed_dense_cap: int = 10
    torus_cap: int = 18
    krylov_dim: int = 40
    krylov_dt_max: float = 1.0
    krylov_tol: float = 1e-12
    mp_dps: int = 50
    epsilon: float = 0.01
    t_compare: float | None = None
    fit_window: list = field(default_factory=lambda: [0.01, 0.05])
    inputs: list = field(default_factory=list)
    workers: int | None = None
    cluster_set: str | None = None
    out: str | None = None

    # keys that change where or how fast a run goes, not what it computes
    RUNTIME_KEYS = ("workers", "cluster_set", "out")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        data = dict(data)
        for f in dataclasses.fields(cls):
            v = data.get(f.name)
            if f.type.startswith("float") and isinstance(v, int) and not isinstance(v, bool):
                data[f.name] = float(v)
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_dict({**self.to_dict(), **changes})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def physics_dict(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k not in self.RUNTIME_KEYS}

    def digest(self) -> str:
        blob = json.dumps(self.physics_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self) -> None:
        try:
            self.lattice_spec()
            self.model_spec()
            self.initial_state()
            self.time_grid()
            self.propagation()
            self.observable_spec()
            for text in self.tori:
                TorusSpec.parse(str(text), site_cap=self.torus_cap)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.observable not in ("site", "pair"):
            raise ConfigError("observable must be 'site' or 'pair'")
        if self.pair_convention not in ("connected", "subtract_after"):
            raise ConfigError("pair_convention must be 'connected' or 'subtract_after'")
        if not isinstance(self.n_max, int) or self.n_max < 1:
            raise ConfigError("n_max must be a positive integer")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if len(self.fit_window) != 2 or not 0 < self.fit_window[0] < self.fit_window[1]:
            raise ConfigError("fit_window must be [t_lo, t_hi] with 0 < t_lo < t_hi")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for sep in self.separations:
            if len(sep) != len(self.r):
                raise ConfigError(f"separation {sep} has the wrong dimension")

    # -- typed views -------------------------------------------------------

    def lattice_spec(self) -> LatticeSpec:
        return LatticeSpec.from_name(self.lattice)

    def model_spec(self) -> ModelSpec:
        if self.model == "ising":
            return ModelSpec.ising(self.J, self.h)
        if self.model == "xxz":
            return ModelSpec.xxz(self.Jperp, self.Jz)
        raise ConfigError(f"unknown model {self.model!r}")

    def initial_state(self) -> InitialStateSpec:
        return InitialStateSpec(self.theta, self.phi)

    def time_grid(self) -> TimeGrid:
        if self.t_max <= 0 or self.n_points < 2:
            raise ConfigError("time grid needs t_max > 0 and n_points >= 2")
        return TimeGrid.uniform(self.t_max, self.n_points)

    def propagation(self, dense_cap: int | None = None) -> Propagation:
        return Propagation(self.method, self.dense_cap if dense_cap is None else dense_cap,
                           max(self.site_cap, self.torus_cap), self.krylov_dim,
                           self.krylov_dt_max, self.krylov_tol, self.mp_dps)

    def observable_spec(self, r=None):
        if self.observable == "site":
            return SiteMagnetization(self.alpha)
        return PairCorrelator(self.alpha, self.beta, tuple(r if r is not None else self.r), self.connected)

    def all_separations(self) -> list[tuple[int, ...]]:
        seps = [tuple(self.r)] + [tuple(s) for s in self.separations]
        return list(dict.fromkeys(seps))

    def torus_specs(self) -> list[TorusSpec]:
        return [TorusSpec.parse(str(t), double_wraps=self.double_wraps, site_cap=self.torus_cap)
                for t in self.tori]
