"""Experiment configuration and its JSON form.

The JSON document has the sections ``bounds``, ``mpc``, ``trajectories``,
``solver`` and ``simulation``; every key is optional and defaults to the
benchmark setting (prior bounds 0.3/1/4/0.65, noise 0.1, limits 2/0.8/4,
``m=12``, ``N=15``, ``p=156``, ``s=36``).
"""

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from .core_model import SystemBounds
from .errors import ConfigurationError
from .mpc import MpcConfig


@dataclass(frozen=True)
class TrajectorySpec:
    amplitude: float = 1.5
    period: int = 40


def default_trajectories():
    return {
        "rampSaw": TrajectorySpec(1.5, 40),
        "rampStep": TrajectorySpec(1.5, 40),
        "sinusoid": TrajectorySpec(1.5, 40),
        "step": TrajectorySpec(0.75, 40),
    }


@dataclass(frozen=True)
class ExperimentConfig:
    bounds: SystemBounds = SystemBounds()
    mpc: MpcConfig = MpcConfig()
    p: int = 156
    s: int = 36
    facet_kind: str = "random"
    facet_seed: int = 0
    eta_m: Optional[float] = None  # None -> computed from the prior bounds
    M_true: int = 80
    T: int = 100
    trajectories: dict = field(default_factory=default_trajectories)

    def __post_init__(self):
        if self.p < 2 * self.mpc.m:
            raise ConfigurationError("p must be at least 2m")
        if self.s < 1 or self.T < 1:
            raise ConfigurationError("s and T must be positive")
        if self.M_true < self.mpc.m:
            raise ConfigurationError("M_true must be at least m")

    def with_fir_length(self, m: int, p: Optional[int] = None) -> "ExperimentConfig":
        """Same experiment with FIR length ``m`` (``p`` defaults to ``m(m+1)``)."""
        return replace(self, mpc=replace(self.mpc, m=m), p=p if p is not None else m * (m + 1))

    def to_json(self) -> dict:
        return {
            "bounds": self.bounds.to_json(),
            "mpc": {
                "N": self.mpc.N,
                "m": self.mpc.m,
                "p": self.p,
                "s": self.s,
                "input_weight": self.mpc.input_weight,
                "rate_weight": self.mpc.rate_weight,
                "facet_kind": self.facet_kind,
                "facet_seed": self.facet_seed,
                "eta_m": self.eta_m,
            },
            "trajectories": {k: asdict(v) for k, v in self.trajectories.items()},
            "solver": {"tol": self.mpc.tol, "gap_tol": self.mpc.gap_tol, "max_cut_rounds": self.mpc.max_cut_rounds},
            "simulation": {"T": self.T, "M_true": self.M_true},
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - {"bounds", "mpc", "trajectories", "solver", "simulation"}
        if unknown:
            raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
        bounds = SystemBounds.from_json(data.get("bounds", {}))
        mpc_sec = dict(data.get("mpc", {}))
        solver = dict(data.get("solver", {}))
        sim = dict(data.get("simulation", {}))
        top = {}
        for key in ("p", "s", "facet_kind", "facet_seed", "eta_m"):
            if key in mpc_sec:
                top[key] = mpc_sec.pop(key)
        try:
            mpc = MpcConfig(**mpc_sec, **solver)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc
        trajectories = default_trajectories()
        if "trajectories" in data:
            trajectories = {k: TrajectorySpec(**v) for k, v in data["trajectories"].items()}
        try:
            return cls(bounds=bounds, mpc=mpc, trajectories=trajectories, **top, **sim)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path) as fh:
        return ExperimentConfig.from_json(json.load(fh))
