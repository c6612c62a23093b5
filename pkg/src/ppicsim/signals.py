"""Spreading codes, user signatures, and received-signal synthesis for a
chip-synchronous base-band CDMA uplink.

One symbol period spans N chips (the processing gain). Every user spreads a
single bipolar bit over its own random code, the receiver-side signature of a
user is its code rotated by the channel phase, and the received frame is the
gain-scaled superposition of all users plus circularly symmetric complex AWGN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PnCode",
    "UserSignature",
    "ReceivedFrame",
    "generate_pn_codes",
    "make_signature",
    "signature_matrix",
    "snr_to_noise_variance",
    "synthesize_received",
]


@dataclass(frozen=True, eq=False)
class PnCode:
    """One user's bipolar spreading sequence; its length is the processing gain."""

    chips: np.ndarray

    def __post_init__(self) -> None:
        chips = np.asarray(self.chips, dtype=np.int64)
        if chips.ndim != 1 or chips.size == 0:
            raise ValueError("chips must be a non-empty 1-D sequence")
        if not np.all((chips == 1) | (chips == -1)):
            raise ValueError("every chip must be exactly -1 or +1")
        object.__setattr__(self, "chips", chips)

    def __len__(self) -> int:
        return int(self.chips.size)


@dataclass(frozen=True, eq=False)
class UserSignature:
    """A spreading code rotated by the user's channel phase.

    Every sample has unit modulus: samples[n] = exp(1j * phase) * chip[n].
    """

    samples: np.ndarray
    phase: float

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "phase", float(self.phase))

    def __len__(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True, eq=False)
class ReceivedFrame:
    """Received chip samples of one symbol period plus the ground truth behind them."""

    samples: np.ndarray
    truth_bits: np.ndarray
    noise_variance: float

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.complex128)
        bits = np.asarray(self.truth_bits, dtype=np.int64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if bits.ndim != 1 or bits.size == 0:
            raise ValueError("truth_bits must be a non-empty 1-D sequence")
        if not np.all((bits == 1) | (bits == -1)):
            raise ValueError("every truth bit must be exactly -1 or +1")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "truth_bits", bits)
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def num_chips(self) -> int:
        return int(self.samples.size)

    @property
    def num_users(self) -> int:
        return int(self.truth_bits.size)


def generate_pn_codes(num_users: int, gain: int, rng: np.random.Generator) -> list[PnCode]:
    """Draw independent equiprobable +/-1 codes, one per user, each ``gain`` chips long."""
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    if gain < 1:
        raise ValueError("gain must be >= 1")
    chips = rng.integers(0, 2, size=(num_users, gain)) * 2 - 1
    return [PnCode(row) for row in chips]


def make_signature(code: PnCode, phase: float) -> UserSignature:
    """Rotate every chip of ``code`` by the channel phase."""
    samples = np.exp(1j * phase) * code.chips
    return UserSignature(samples=samples, phase=phase)


def signature_matrix(signatures) -> np.ndarray:
    """Stack signatures into an (M, N) complex matrix, one row per user.

    Accepts a ready-made 2-D array (passed through as complex128) or any
    sequence of :class:`UserSignature`.
    """
    if isinstance(signatures, np.ndarray):
        mat = np.asarray(signatures, dtype=np.complex128)
    else:
        mat = np.stack(
            [np.asarray(getattr(s, "samples", s), dtype=np.complex128) for s in signatures]
        )
    if mat.ndim != 2 or mat.size == 0:
        raise ValueError("signatures must form a non-empty (users x chips) matrix")
    return mat


def snr_to_noise_variance(snr_db: float) -> float:
    """Per-chip complex-noise variance for a per-user per-chip SNR in dB.

    Signal power per user per chip is normalized to one, so
    variance = 10**(-snr_db / 10).
    """
    return float(10.0 ** (-float(snr_db) / 10.0))


def synthesize_received(
    bits,
    signatures,
    gains,
    noise_variance: float,
    rng: np.random.Generator,
) -> ReceivedFrame:
    """Superpose all users' gain-scaled signatures and add complex AWGN.

    samples[n] = sum_m gains[m] * bits[m] * signatures[m][n] + v(n), where v(n)
    is circularly symmetric complex Gaussian with total variance
    ``noise_variance`` (split evenly between real and imaginary parts). The
    noise generator is consumed only when ``noise_variance > 0``, so noiseless
    frames leave the rng state untouched.
    """
    bits = np.asarray(bits, dtype=np.int64)
    mat = signature_matrix(signatures)
    gains = np.asarray(gains, dtype=np.float64)
    if noise_variance < 0:
        raise ValueError("noise_variance must be nonnegative")
    num_users, num_chips = mat.shape
    if bits.shape != (num_users,):
        raise ValueError(f"expected {num_users} bits, got shape {bits.shape}")
    if gains.shape != (num_users,):
        raise ValueError(f"expected {num_users} gains, got shape {gains.shape}")
    samples = (gains * bits).astype(np.complex128) @ mat
    if noise_variance > 0:
        scale = np.sqrt(noise_variance / 2.0)
        noise = rng.standard_normal(num_chips) + 1j * rng.standard_normal(num_chips)
        samples = samples + scale * noise
    return ReceivedFrame(samples=samples, truth_bits=bits, noise_variance=noise_variance)
