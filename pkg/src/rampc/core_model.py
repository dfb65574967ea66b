"""System description: prior bounds, truncation error, sampled plants, noise."""

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

# JSON key -> field name
_JSON_KEYS = {
    "l_lower": "L_l",
    "l_upper": "L_u",
    "mu": "mu",
    "rho": "rho",
    "eps": "eps",
    "u_max": "u_max",
    "du_max": "du_max",
    "y_max": "y_max",
}


@dataclass(frozen=True)
class SystemBounds:
    """Prior impulse-response envelope, noise bound and constraint levels."""

    L_l: float = 0.3
    L_u: float = 1.0
    mu: int = 4
    rho: float = 0.65
    eps: float = 0.1
    u_max: float = 2.0
    du_max: float = 0.8
    y_max: float = 4.0

    def __post_init__(self):
        if not 0 <= self.L_l <= self.L_u:
            raise ConfigurationError("need 0 <= L_l <= L_u")
        if not 0 < self.rho < 1:
            raise ConfigurationError("rho must lie in (0, 1)")
        if int(self.mu) != self.mu or self.mu < 1:
            raise ConfigurationError("mu must be a positive integer")
        if self.eps < 0 or self.u_max < 0 or self.du_max <= 0 or self.y_max <= 0:
            raise ConfigurationError("noise and constraint levels must be positive")

    def envelope(self, length: int):
        """Lower/upper coefficient bounds for indices ``1..length``."""
        i = np.arange(1, length + 1)
        decay = np.where(i <= self.mu, 1.0, self.rho ** np.maximum(i - self.mu, 0))
        return self.L_l * decay, self.L_u * decay

    @classmethod
    def from_json(cls, data: dict) -> "SystemBounds":
        unknown = set(data) - set(_JSON_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown bounds keys: {sorted(unknown)}")
        return cls(**{_JSON_KEYS[k]: v for k, v in data.items()})

    def to_json(self) -> dict:
        inv = {v: k for k, v in _JSON_KEYS.items()}
        return {inv[k]: v for k, v in asdict(self).items()}


TABLE1 = SystemBounds()


def truncation_error(bounds: SystemBounds, m: int) -> float:
    """Worst-case output error from ignoring coefficients beyond ``m``.

    Uses the upper envelope ``L_u`` since it bounds ``|h(i)|`` for positive
    impulse responses.
    """
    if m < bounds.mu:
        raise ValueError(f"model length m={m} must be at least mu={bounds.mu}")
    rho = bounds.rho
    return bounds.u_max * bounds.L_u * rho ** (m - bounds.mu) * rho / (1.0 - rho)


@dataclass(frozen=True)
class Plant:
    """Finite stand-in for the true (infinite) impulse response."""

    coeffs: np.ndarray

    @property
    def M_true(self) -> int:
        return len(self.coeffs)

    def head(self, m: int) -> np.ndarray:
        """First ``m`` coefficients, i.e. the truncated model the FSS should contain."""
        return np.asarray(self.coeffs[:m], dtype=float)


def sample_plant(bounds: SystemBounds, M_true: int = 80, seed=None) -> Plant:
    """Draw every coefficient uniformly between its envelope bounds."""
    if M_true < bounds.mu:
        raise ValueError("M_true must be at least mu")
    rng = np.random.default_rng(seed)
    lo, hi = bounds.envelope(M_true)
    coeffs = rng.uniform(lo, hi)
    coeffs.setflags(write=False)
    return Plant(coeffs)


def plant_output(plant: Plant, past_inputs: Sequence[float]) -> float:
    """Strictly proper convolution ``sum_i h(i) u(t-i)``; ``past_inputs[0]`` is ``u(t-1)``.

    Missing history is treated as zero input.
    """
    u = np.asarray(past_inputs, dtype=float)[: plant.M_true]
    return float(plant.coeffs[: u.size] @ u)


@dataclass(frozen=True)
class Measurement:
    y_true: float
    y_meas: float
    v: float


def measure(plant: Plant, past_inputs, noise_rng: np.random.Generator, eps: float) -> Measurement:
    """Plant output plus noise drawn uniformly from ``(-eps, eps)``."""
    y = plant_output(plant, past_inputs)
    v = 0.0
    if eps > 0:
        v = float(noise_rng.uniform(-eps, eps))
        while v <= -eps:  # uniform() is half-open; the bound is strict
            v = float(noise_rng.uniform(-eps, eps))
    return Measurement(y_true=y, y_meas=y + v, v=v)
