"""Monte-Carlo experiment driver: configuration, sweeps, BER aggregation, CSV.

An experiment sweeps system load M and processing gain N. Within one (M, N)
cell the spreading codes are fixed, and every requested detector consumes the
exact same frames (same bits, channel draws, and noise), so BER comparisons
across detectors are paired. Each trial draws its randomness from a seed
sequence derived from (experiment seed, M, N, trial index), which makes
results independent of how cells are scheduled across workers.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from itertools import repeat

import numpy as np

from .channels import (
    DEFAULT_NUM_SINUSOIDS,
    DEFAULT_TAP_DELAYS_S,
    DEFAULT_TAP_GAINS_DB,
    balanced_realization,
    fading_step,
    make_fading_state,
    unbalanced_realization,
)
from .detectors import (
    DEFAULT_STEP_FACTORS,
    conventional_detect,
    nlms_iteration,
    plms_iteration,
    run_detector,
    scaled_step_set,
    step_size_bound,
    uniform_step_grid,
    unit_deviation,
)
from .signals import generate_pn_codes, snr_to_noise_variance, synthesize_received

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "BerRecord",
    "CSV_HEADER",
    "example_preset",
    "parse_config_file",
    "run_experiment",
    "write_results_csv",
    "dump_weight_trajectories",
    "run_selftest",
]

VALID_DETECTOR_MODES = ("conventional", "lms_ppic", "plms_ppic")
VALID_CHANNEL_MODES = ("balanced", "unbalanced", "rayleigh")

# Sub-stream tags for per-cell seed derivation.
_STREAM_CODES = 0
_STREAM_TRIAL = 1
_STREAM_FADING = 2


class ConfigError(ValueError):
    """An experiment configuration field is missing, malformed, or out of range."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment sweep.

    ``users_sweep`` lists the system loads M, ``gains`` the processing gains N;
    every (M, N) pair becomes one simulated cell. ``step_factors`` scales the
    parallel bank and ``lms_step_factor`` the fixed-step detector, both as
    fractions of the per-load stable bound. ``trials`` is the number of
    independently drawn symbols per cell.
    """

    users_sweep: tuple = (5, 10, 15, 20, 25, 30)
    gains: tuple = (64, 256)
    stages: int = 2
    snr_db: float = 0.0
    detector_modes: tuple = VALID_DETECTOR_MODES
    step_factors: tuple = DEFAULT_STEP_FACTORS
    lms_step_factor: float = 0.1
    channel_mode: str = "balanced"
    chip_rate: float = 1.0e6
    doppler_hz: float = 40.0
    trials: int = 2000
    seed: int = 1234

    def validate(self) -> None:
        """Raise ConfigError naming the first offending field."""
        if not self.users_sweep:
            raise ConfigError("users_sweep must list at least one system load")
        if any(int(m) < 1 for m in self.users_sweep):
            raise ConfigError(f"users_sweep entries must be >= 1 (got {tuple(self.users_sweep)})")
        if not self.gains:
            raise ConfigError("gains must list at least one processing gain")
        if any(int(n) < 1 for n in self.gains):
            raise ConfigError(f"gains entries must be >= 1 (got {tuple(self.gains)})")
        if int(self.stages) < 1:
            raise ConfigError(f"stages must be >= 1 (got {self.stages})")
        if not self.detector_modes:
            raise ConfigError("detector_modes must name at least one detector")
        for mode in self.detector_modes:
            if mode not in VALID_DETECTOR_MODES:
                raise ConfigError(
                    f"detector_modes entry {mode!r} not in {VALID_DETECTOR_MODES}"
                )
        if not self.step_factors:
            raise ConfigError("step_factors must list at least one factor")
        if any(not 0.0 < float(f) <= 1.0 for f in self.step_factors):
            raise ConfigError(
                f"step_factors must lie in (0, 1] (got {tuple(self.step_factors)})"
            )
        if not 0.0 < float(self.lms_step_factor) <= 1.0:
            raise ConfigError(
                f"lms_step_factor must lie in (0, 1] (got {self.lms_step_factor})"
            )
        if self.channel_mode not in VALID_CHANNEL_MODES:
            raise ConfigError(
                f"channel_mode {self.channel_mode!r} not in {VALID_CHANNEL_MODES}"
            )
        if float(self.chip_rate) <= 0:
            raise ConfigError(f"chip_rate must be positive (got {self.chip_rate})")
        if float(self.doppler_hz) < 0:
            raise ConfigError(f"doppler_hz must be nonnegative (got {self.doppler_hz})")
        if int(self.trials) < 1:
            raise ConfigError(f"trials must be >= 1 (got {self.trials})")
        if int(self.seed) < 0:
            raise ConfigError(f"seed must be a nonnegative integer (got {self.seed})")
        if np.isnan(self.snr_db):
            raise ConfigError("snr_db must be a real number")


@dataclass(frozen=True)
class BerRecord:
    """Aggregated bit-error result of one (detector, stage, users, gain) point.

    Field order matches the CSV column order; ``ber`` always equals
    ``bit_errors / bits_total`` and ``bits_total`` equals trials * users.
    """

    detector: str
    stage: int
    users: int
    gain: int
    snr_db: float
    channel: str
    trials: int
    seed: int
    bit_errors: int
    bits_total: int
    ber: float


CSV_HEADER = [
    "detector",
    "stage",
    "users",
    "gain",
    "snr_db",
    "channel",
    "trials",
    "seed",
    "bit_errors",
    "bits_total",
    "ber",
]


def example_preset(example: int, *, trials: int | None = None, seed: int | None = None) -> ExperimentConfig:
    """Desk-scale sweep configuration for one of the three stock scenarios.

    1 = balanced channels, 2 = unbalanced near-far gains from (0, 0.3],
    3 = time-varying Rayleigh fading (three stages, loads up to 35).
    """
    if example == 1:
        config = ExperimentConfig()
    elif example == 2:
        config = ExperimentConfig(channel_mode="unbalanced")
    elif example == 3:
        config = ExperimentConfig(
            channel_mode="rayleigh",
            stages=3,
            users_sweep=(5, 10, 15, 20, 25, 30, 35),
        )
    else:
        raise ConfigError(f"example must be 1, 2 or 3 (got {example})")
    if trials is not None:
        config = replace(config, trials=trials)
    if seed is not None:
        config = replace(config, seed=seed)
    config.validate()
    return config


_INT_KEYS = {"stages", "trials", "seed"}
_FLOAT_KEYS = {"snr_db", "lms_step_factor", "chip_rate", "doppler_hz"}
_STR_KEYS = {"channel_mode"}
_INT_LIST_KEYS = {"users_sweep", "gains"}
_FLOAT_LIST_KEYS = {"step_factors"}
_STR_LIST_KEYS = {"detector_modes"}


def parse_config_file(path) -> ExperimentConfig:
    """Build a validated config from a flat ``key = value`` text file.

    Blank lines and lines starting with ``#`` are ignored; list values are
    comma-separated. Keys match the ExperimentConfig field names; unknown keys
    and unparsable values raise ConfigError naming the key.
    """
    overrides = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            try:
                if key in _INT_KEYS:
                    overrides[key] = int(value)
                elif key in _FLOAT_KEYS:
                    overrides[key] = float(value)
                elif key in _STR_KEYS:
                    overrides[key] = value
                elif key in _INT_LIST_KEYS:
                    overrides[key] = tuple(int(v.strip()) for v in value.split(",") if v.strip())
                elif key in _FLOAT_LIST_KEYS:
                    overrides[key] = tuple(float(v.strip()) for v in value.split(",") if v.strip())
                elif key in _STR_LIST_KEYS:
                    overrides[key] = tuple(v.strip() for v in value.split(",") if v.strip())
                else:
                    raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {value!r}") from exc
    config = ExperimentConfig(**overrides)
    config.validate()
    return config


def run_experiment(config: ExperimentConfig, workers: int = 1, progress=None) -> list:
    """Simulate every (users, gain) cell of the sweep and aggregate BER records.

    Returns one BerRecord per (detector, stage) per cell; the conventional
    detector reports only stage 0, the adaptive detectors report stages
    0..stages (stage 0 being their matched-filter front end). Results are
    bit-identical regardless of ``workers``. ``progress`` is called as
    ``progress(done, total, cell_records)`` after each finished cell.
    """
    config.validate()
    cells = [(int(m), int(n)) for m in config.users_sweep for n in config.gains]
    per_cell = []
    if workers <= 1 or len(cells) == 1:
        for idx, (m, n) in enumerate(cells):
            records = _run_cell(config, m, n)
            per_cell.append(records)
            if progress is not None:
                progress(idx + 1, len(cells), records)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, records in enumerate(
                pool.map(_run_cell, repeat(config), [c[0] for c in cells], [c[1] for c in cells])
            ):
                per_cell.append(records)
                if progress is not None:
                    progress(idx + 1, len(cells), records)
    return [record for records in per_cell for record in records]


def _trial_rng(seed: int, users: int, gain: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(seed), int(users), int(gain), _STREAM_TRIAL, int(trial)))
    )


def _cell_codes(config: ExperimentConfig, users: int, gain: int) -> np.ndarray:
    rng = np.random.default_rng(
        np.random.SeedSequence((int(config.seed), users, gain, _STREAM_CODES))
    )
    codes = generate_pn_codes(users, gain, rng)
    return np.stack([code.chips for code in codes])


def _cell_fading_state(config: ExperimentConfig, users: int, gain: int):
    rng = np.random.default_rng(
        np.random.SeedSequence((int(config.seed), users, gain, _STREAM_FADING))
    )
    return make_fading_state(
        users,
        rng,
        doppler_hz=config.doppler_hz,
        chip_rate=config.chip_rate,
    )


def _run_cell(config: ExperimentConfig, users: int, gain: int) -> list:
    """Simulate all trials of one (users, gain) cell for every detector."""
    chips = _cell_codes(config, users, gain)
    noise_variance = snr_to_noise_variance(config.snr_db)
    stages = int(config.stages)
    modes = tuple(config.detector_modes)

    steps_by_mode = {}
    if "lms_ppic" in modes:
        steps_by_mode["lms_ppic"] = scaled_step_set([config.lms_step_factor], users)
    if "plms_ppic" in modes:
        steps_by_mode["plms_ppic"] = scaled_step_set(config.step_factors, users)

    counts = {
        mode: [0] * (1 if mode == "conventional" else stages + 1) for mode in modes
    }

    fading = None
    symbol_duration = gain / config.chip_rate
    if config.channel_mode == "rayleigh":
        fading = _cell_fading_state(config, users, gain)

    for trial in range(int(config.trials)):
        rng = _trial_rng(config.seed, users, gain, trial)
        if config.channel_mode == "balanced":
            realization = balanced_realization(users, rng)
        elif config.channel_mode == "unbalanced":
            realization = unbalanced_realization(users, rng)
        else:
            fading, realization = fading_step(fading, symbol_duration)
        truth = rng.integers(0, 2, users) * 2 - 1
        signatures = np.exp(1j * realization.phases)[:, None] * chips
        frame = synthesize_received(truth, signatures, realization.gains, noise_variance, rng)

        for mode in modes:
            if mode == "conventional":
                decided = conventional_detect(frame, signatures)
                counts[mode][0] += int(np.count_nonzero(decided != truth))
            else:
                detector_mode = "lms" if mode == "lms_ppic" else "plms"
                result = run_detector(frame, signatures, stages, detector_mode, steps_by_mode[mode])
                for s, decided in enumerate(result.stage_bits):
                    counts[mode][s] += int(np.count_nonzero(decided != truth))

    bits_total = int(config.trials) * users
    records = []
    for mode in modes:
        for s, errors in enumerate(counts[mode]):
            records.append(
                BerRecord(
                    detector=mode,
                    stage=s,
                    users=users,
                    gain=gain,
                    snr_db=float(config.snr_db),
                    channel=config.channel_mode,
                    trials=int(config.trials),
                    seed=int(config.seed),
                    bit_errors=errors,
                    bits_total=bits_total,
                    ber=errors / bits_total,
                )
            )
    return records


def write_results_csv(records, path, config: ExperimentConfig | None = None) -> None:
    """Write one CSV row per record plus a JSON sidecar of modeling conventions.

    The sidecar lands next to the CSV as ``<path>.meta.json`` and records the
    SNR definition, noise model, code family, and fading collapse rule so any
    emitted number can be audited later.
    """
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for rec in records:
                writer.writerow(
                    [
                        rec.detector,
                        rec.stage,
                        rec.users,
                        rec.gain,
                        rec.snr_db,
                        rec.channel,
                        rec.trials,
                        rec.seed,
                        rec.bit_errors,
                        rec.bits_total,
                        rec.ber,
                    ]
                )
    except OSError as exc:
        raise OSError(f"cannot write results to {path!r}: {exc}") from exc
    metadata = {
        "snr_convention": "per-user per-chip SNR with unit signal power; "
        "noise_variance = 10**(-snr_db/10)",
        "noise_model": "circularly symmetric complex Gaussian, total variance "
        "noise_variance split evenly between quadratures",
        "code_family": "i.i.d. equiprobable +/-1 random spreading, fixed per "
        "(seed, users, gain) cell, regenerated per experiment seed",
        "phase_convention": "per-user channel phases uniform on [0, 2*pi), "
        "redrawn each symbol unless the fading model dictates them",
        "trial_structure": "bits, noise, and non-fading channel draws are "
        "independent per symbol; fading evolves continuously across symbols "
        "within a cell",
        "trial_seeding": "seed sequence (seed, users, gain, stream, trial)",
        "fading_model": {
            "type": "sum of sinusoids with Jakes Doppler spectrum",
            "num_sinusoids_per_process": DEFAULT_NUM_SINUSOIDS,
            "tap_delays_s": list(DEFAULT_TAP_DELAYS_S),
            "tap_gains_db": list(DEFAULT_TAP_GAINS_DB),
            "collapse_rule": "independent tap processes summed with "
            "power-weighted amplitudes into one complex gain per user per "
            "symbol; no chip-level convolution",
            "normalized_to_unit_power": False,
        },
        "num_records": len(records),
    }
    if config is not None:
        metadata["config"] = asdict(config)
    sidecar = f"{path}.meta.json"
    try:
        with open(sidecar, "w") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write metadata to {sidecar!r}: {exc}") from exc


def dump_weight_trajectories(config: ExperimentConfig, out_dir, *, mode: str | None = None) -> list:
    """Write the final-stage weight trajectory of each cell's first trial.

    One CSV per (users, gain) cell with columns ``n, m, re, im, winner_k``:
    chip index, user index, weight after that chip, and the bank winner at
    that chip (-1 where no selection happened, e.g. fixed-step mode). Returns
    the written paths. ``mode`` defaults to the parallel-bank detector when
    the config requests it, else the fixed-step one.
    """
    config.validate()
    if mode is None:
        adaptive = [m for m in config.detector_modes if m != "conventional"]
        if not adaptive:
            raise ConfigError("detector_modes has no adaptive detector to dump")
        mode = "plms_ppic" if "plms_ppic" in adaptive else adaptive[0]
    if mode not in ("lms_ppic", "plms_ppic"):
        raise ConfigError(f"mode must be 'lms_ppic' or 'plms_ppic' (got {mode!r})")
    os.makedirs(out_dir, exist_ok=True)
    noise_variance = snr_to_noise_variance(config.snr_db)
    written = []
    for users in config.users_sweep:
        for gain in config.gains:
            users = int(users)
            gain = int(gain)
            chips = _cell_codes(config, users, gain)
            rng = _trial_rng(config.seed, users, gain, 0)
            if config.channel_mode == "balanced":
                realization = balanced_realization(users, rng)
            elif config.channel_mode == "unbalanced":
                realization = unbalanced_realization(users, rng)
            else:
                fading = _cell_fading_state(config, users, gain)
                _, realization = fading_step(fading, gain / config.chip_rate)
            truth = rng.integers(0, 2, users) * 2 - 1
            signatures = np.exp(1j * realization.phases)[:, None] * chips
            frame = synthesize_received(
                truth, signatures, realization.gains, noise_variance, rng
            )
            if mode == "lms_ppic":
                steps = scaled_step_set([config.lms_step_factor], users)
                detector_mode = "lms"
            else:
                steps = scaled_step_set(config.step_factors, users)
                detector_mode = "plms"
            result = run_detector(
                frame, signatures, config.stages, detector_mode, steps, record_history=True
            )
            last = result.stage_outputs[-1]
            history = last.weight_history
            trace = last.selection_trace
            path = os.path.join(out_dir, f"weights_{mode}_M{users}_N{gain}.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["n", "m", "re", "im", "winner_k"])
                for n in range(1, history.shape[0]):
                    winner = int(trace[n - 1]) if trace.size else -1
                    for m in range(history.shape[1]):
                        w = history[n, m]
                        writer.writerow([n, m, w.real, w.imag, winner])
            written.append(path)
    return written


def run_selftest(verbose: bool = True) -> bool:
    """Quick built-in invariant checks; returns True when everything holds."""
    failures = []

    def check(name, ok):
        if verbose:
            print(f"selftest: {name}: {'ok' if ok else 'FAIL'}")
        if not ok:
            failures.append(name)

    # step-size bound and grids
    ok = abs(step_size_bound(1) - 1.0) < 1e-12
    ok = ok and abs(step_size_bound(2) - (1.0 - np.sqrt(0.5))) < 1e-12
    grid = uniform_step_grid(4, 2)
    ok = ok and grid.values[-1] == step_size_bound(2)
    check("step-size bound and grid", ok)

    # single-step exact convergence of the normalized update
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(20):
        w_true = rng.standard_normal() + 1j * rng.standard_normal()
        x = np.exp(1j * rng.uniform(0, 2 * np.pi))
        updated, _ = nlms_iteration(np.zeros(1, complex), np.array([x]), w_true * x, 1.0)
        ok = ok and abs(updated[0] - w_true) < 1e-12
    check("one-step exact convergence", ok)

    # winner optimality by exhaustive enumeration
    ok = True
    for _ in range(200):
        m = int(rng.integers(1, 4))
        steps = uniform_step_grid(int(rng.integers(1, 6)), m)
        w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        x = np.exp(1j * rng.uniform(0, 2 * np.pi, m)) * rng.choice([-1, 1], m)
        r = complex(rng.standard_normal() + 1j * rng.standard_normal())
        chosen, winner = plms_iteration(w, x, r, steps)
        err = r - np.dot(w, x)
        z = x.conj() * err / float(np.real(np.vdot(x, x)))
        devs = [unit_deviation(w + mu * z) for mu in steps.values]
        ok = ok and devs[winner] <= min(devs) + 1e-12
    check("bank winner optimality", ok)

    # bank degeneracy: one-element bank equals the fixed-step detector
    ok = True
    for _ in range(10):
        m, n = 3, 16
        chips = rng.integers(0, 2, (m, n)) * 2 - 1
        phases = rng.uniform(0, 2 * np.pi, m)
        signatures = np.exp(1j * phases)[:, None] * chips
        truth = rng.integers(0, 2, m) * 2 - 1
        frame = synthesize_received(truth, signatures, np.ones(m), 0.5, rng)
        steps = scaled_step_set([0.1], m)
        a = run_detector(frame, signatures, 2, "lms", steps)
        b = run_detector(frame, signatures, 2, "plms", steps)
        for sa, sb in zip(a.stage_outputs, b.stage_outputs):
            ok = ok and np.array_equal(sa.bits, sb.bits)
            ok = ok and np.array_equal(sa.final_weights.weights, sb.final_weights.weights)
    check("one-element bank degeneracy", ok)

    # orthogonal codes, no noise: zero errors at every stage
    ok = True
    hadamard = np.array([[1]])
    while hadamard.shape[0] < 8:
        hadamard = np.block([[hadamard, hadamard], [hadamard, -hadamard]])
    for _ in range(20):
        m = 4
        phases = rng.uniform(0, 2 * np.pi, m)
        signatures = np.exp(1j * phases)[:, None] * hadamard[:m]
        truth = rng.integers(0, 2, m) * 2 - 1
        frame = synthesize_received(truth, signatures, np.ones(m), 0.0, rng)
        for detector_mode, steps in (
            ("lms", scaled_step_set([0.1], m)),
            ("plms", scaled_step_set(DEFAULT_STEP_FACTORS, m)),
        ):
            result = run_detector(frame, signatures, 2, detector_mode, steps)
            for bits in result.stage_bits:
                ok = ok and np.array_equal(bits, truth)
    check("noise-free orthogonal fixed point", ok)

    # deterministic records, identical for repeated runs
    config = ExperimentConfig(
        users_sweep=(2,), gains=(16,), trials=20, seed=99, stages=2
    )
    first = run_experiment(config)
    second = run_experiment(config)
    check("experiment determinism", first == second)

    if verbose and failures:
        print(f"selftest: {len(failures)} check(s) failed")
    return not failures
