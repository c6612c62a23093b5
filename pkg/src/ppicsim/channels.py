"""Per-symbol channel realizations for the three simulated scenarios.

* balanced: unit amplitude for every user, fresh uniform phases per symbol;
* unbalanced: amplitudes drawn uniformly from (0, 0.3] (near-far conditions);
* rayleigh: a time-varying flat-per-symbol coefficient per user, produced by a
  sum-of-sinusoids generator with a Jakes Doppler spectrum.

The Rayleigh model evolves one complex process per (user, tap) and collapses
the taps into a single coefficient per user per symbol by power-weighted
summation. Tap delays are carried for bookkeeping (at the default 1 Mchip/s
they correspond to 2, 2.5 and 3 chips) but no chip-level convolution is done;
the detectors only ever see one amplitude and one phase per user per symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ChannelRealization",
    "FadingState",
    "DEFAULT_TAP_DELAYS_S",
    "DEFAULT_TAP_GAINS_DB",
    "DEFAULT_NUM_SINUSOIDS",
    "db_to_linear",
    "balanced_realization",
    "unbalanced_realization",
    "make_fading_state",
    "fading_step",
]

DEFAULT_TAP_DELAYS_S = (2.0e-6, 2.5e-6, 3.0e-6)
DEFAULT_TAP_GAINS_DB = (-5.0, -3.0, -10.0)
# 32 sinusoids per (user, tap) process keeps the amplitude distribution within
# Kolmogorov-Smirnov distance of a true Rayleigh even at 10^4-sample tests.
DEFAULT_NUM_SINUSOIDS = 32


def db_to_linear(gain_db):
    """Convert power gains in dB to linear scale."""
    return 10.0 ** (np.asarray(gain_db, dtype=np.float64) / 10.0)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Per-user amplitude gains and phases holding for one symbol period."""

    gains: np.ndarray
    phases: np.ndarray

    def __post_init__(self) -> None:
        gains = np.asarray(self.gains, dtype=np.float64)
        phases = np.asarray(self.phases, dtype=np.float64)
        if gains.ndim != 1 or gains.size == 0:
            raise ValueError("gains must be a non-empty 1-D sequence")
        if phases.shape != gains.shape:
            raise ValueError("gains and phases must have the same length")
        if np.any(gains < 0):
            raise ValueError("gains must be nonnegative")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "phases", phases)

    @property
    def num_users(self) -> int:
        return int(self.gains.size)


def balanced_realization(num_users: int, rng: np.random.Generator) -> ChannelRealization:
    """Unit gains for everyone; phases i.i.d. uniform on [0, 2*pi)."""
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    return ChannelRealization(
        gains=np.ones(num_users),
        phases=rng.uniform(0.0, 2.0 * np.pi, num_users),
    )


def unbalanced_realization(num_users: int, rng: np.random.Generator) -> ChannelRealization:
    """Gains i.i.d. uniform on (0, 0.3]; phases i.i.d. uniform on [0, 2*pi)."""
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    # 1 - random() lies in (0, 1], keeping the lower endpoint open as required.
    gains = 0.3 * (1.0 - rng.random(num_users))
    return ChannelRealization(
        gains=gains,
        phases=rng.uniform(0.0, 2.0 * np.pi, num_users),
    )


@dataclass(frozen=True, eq=False)
class FadingState:
    """Frozen sum-of-sinusoids processes for every (user, tap) pair.

    ``rates`` holds each sinusoid's angular rate 2*pi*doppler*cos(arrival
    angle) and ``offsets`` its initial phase, both of shape
    (num_users, num_taps, num_sinusoids). The state is a value: stepping it
    returns a new state with the clock advanced, so a realization sequence is
    fully reproducible from the creating rng and the symbol index.
    """

    tap_delays: np.ndarray
    tap_powers: np.ndarray
    doppler_hz: float
    chip_rate: float
    rates: np.ndarray
    offsets: np.ndarray
    time: float = 0.0
    normalize: bool = False

    @property
    def num_users(self) -> int:
        return int(self.rates.shape[0])


def make_fading_state(
    num_users: int,
    rng: np.random.Generator,
    doppler_hz: float = 40.0,
    chip_rate: float = 1.0e6,
    tap_delays=DEFAULT_TAP_DELAYS_S,
    tap_gains_db=DEFAULT_TAP_GAINS_DB,
    num_sinusoids: int = DEFAULT_NUM_SINUSOIDS,
    normalize: bool = False,
) -> FadingState:
    """Draw fresh sinusoid parameters for every user and tap.

    Each process is a sum of ``num_sinusoids`` unit phasors with arrival
    angles and phase offsets i.i.d. uniform on [0, 2*pi), scaled so the tap's
    mean power equals its configured linear gain. With ``normalize`` the
    collapsed per-user coefficient is rescaled to unit mean power; by default
    the profile's total (about 0.917 linear for the default taps) is kept.
    """
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    if num_sinusoids < 1:
        raise ValueError("num_sinusoids must be >= 1")
    if chip_rate <= 0:
        raise ValueError("chip_rate must be positive")
    if doppler_hz < 0:
        raise ValueError("doppler_hz must be nonnegative")
    tap_delays = np.asarray(tap_delays, dtype=np.float64)
    tap_powers = db_to_linear(tap_gains_db)
    if tap_delays.ndim != 1 or tap_delays.size == 0:
        raise ValueError("tap_delays must be a non-empty 1-D sequence")
    if tap_powers.shape != tap_delays.shape:
        raise ValueError("tap gains and delays must have the same length")
    shape = (num_users, tap_delays.size, num_sinusoids)
    arrival = rng.uniform(0.0, 2.0 * np.pi, shape)
    rates = 2.0 * np.pi * doppler_hz * np.cos(arrival)
    offsets = rng.uniform(0.0, 2.0 * np.pi, shape)
    return FadingState(
        tap_delays=tap_delays,
        tap_powers=tap_powers,
        doppler_hz=float(doppler_hz),
        chip_rate=float(chip_rate),
        rates=rates,
        offsets=offsets,
        time=0.0,
        normalize=normalize,
    )


def fading_step(state: FadingState, symbol_duration: float) -> tuple[FadingState, ChannelRealization]:
    """Evaluate every user's collapsed coefficient at the current time, then
    advance the clock by one symbol.

    The channel is constant within the symbol; successive calls walk the
    processes along their (quasi-periodic) trajectories, so zero Doppler
    freezes the realization entirely.
    """
    if symbol_duration < 0:
        raise ValueError("symbol_duration must be nonnegative")
    num_sinusoids = state.rates.shape[2]
    angles = state.rates * state.time + state.offsets
    per_tap = np.exp(1j * angles).sum(axis=2)
    amplitudes = np.sqrt(state.tap_powers / num_sinusoids)
    coeff = (per_tap * amplitudes[None, :]).sum(axis=1)
    if state.normalize:
        coeff = coeff / np.sqrt(state.tap_powers.sum())
    realization = ChannelRealization(gains=np.abs(coeff), phases=np.angle(coeff))
    return replace(state, time=state.time + symbol_duration), realization
