"""Fidelity of delivered entangled pairs.

The delivered state is modeled as a Werner state: fidelity F and Werner
parameter w are linked by F = (3w + 1)/4, so F = 1 is a perfect Bell pair
and F = 0.25 (w = 0) a maximally mixed one. The chain applied per link is

    exp-decay channel fidelity -> Werner parameter -> memory decoherence
    over the storage time d/c + T_p -> delivered fidelity.

Everything here is deterministic in the link distance, so downstream
fidelity constraints reduce to a precomputable eligibility mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class FidelityConfig:
    """Degradation and decoherence constants.

    ``xi`` is the channel degradation coefficient per km. The default
    ``exp`` mode reads it as the rate of exp(-xi * d_km), which is the only
    reading consistent with an exponential model; ``db`` mode instead
    applies 10**(-xi * d_km / 10) for sensitivity runs against the
    attenuation-style reading.
    """

    xi: float
    coherence_time: float
    processing_delay: float
    light_speed: float = 3e8
    xi_mode: str = "exp"

    def __post_init__(self):
        for name in ("xi", "coherence_time", "light_speed"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        # Zero processing delay is the documented no-storage identity.
        if not (self.processing_delay >= 0 and math.isfinite(self.processing_delay)):
            raise ValueError(f"processing_delay must be non-negative, got {self.processing_delay!r}")
        if self.xi_mode not in ("exp", "db"):
            raise ValueError(f"unknown xi_mode {self.xi_mode!r}")


@dataclass(frozen=True)
class WernerState:
    """Werner parameter w in [0, 1]; fidelity is (3w + 1)/4."""

    w: float

    def __post_init__(self):
        if not (-1e-12 <= self.w <= 1.0 + 1e-12):
            raise ValueError(f"Werner parameter must lie in [0, 1], got {self.w!r}")
        object.__setattr__(self, "w", min(1.0, max(0.0, self.w)))

    @property
    def fidelity(self) -> float:
        return (3.0 * self.w + 1.0) / 4.0


def channel_output_fidelity(config: FidelityConfig, d: float) -> float:
    """Fidelity at the channel output, decaying exponentially with distance."""
    if d < 0:
        raise ValueError("distance must be non-negative")
    d_km = d / 1000.0
    if config.xi_mode == "exp":
        return math.exp(-config.xi * d_km)
    return 10.0 ** (-config.xi * d_km / 10.0)


def fidelity_to_werner(F: float) -> WernerState:
    """Convert a fidelity in [0.25, 1] to its Werner parameter (4F - 1)/3."""
    if F < 0.25 - 1e-12 or F > 1.0 + 1e-12:
        raise ValueError(f"fidelity must lie in [0.25, 1], got {F!r}")
    return WernerState(w=(4.0 * F - 1.0) / 3.0)


def decohere(state: WernerState, config: FidelityConfig, d: float) -> WernerState:
    """Exponential decay of the Werner parameter over the storage time d/c + T_p."""
    if d < 0:
        raise ValueError("distance must be non-negative")
    tau = d / config.light_speed + config.processing_delay
    return WernerState(w=state.w * math.exp(-tau / config.coherence_time))


def end_to_end_fidelity(config: FidelityConfig, d: float) -> float:
    """Delivered fidelity after channel degradation and memory decoherence.

    Beyond the distance where the channel output fidelity falls to 0.25
    the link delivers a maximally mixed state; the Werner parameter floors
    at zero there and the result saturates at 0.25.
    """
    if d <= 0:
        raise ValueError("distance must be strictly positive")
    F0 = channel_output_fidelity(config, d)
    if F0 < 0.25:
        return 0.25
    return decohere(fidelity_to_werner(F0), config, d).fidelity
