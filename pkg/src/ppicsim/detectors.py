"""Multiuser detectors for the synchronous CDMA uplink.

Three receivers share this module:

* the conventional detector: a per-user matched filter with a sign decision;
* the multistage NLMS canceller: each stage adapts a complex weight per user
  across the frame's chips with a normalized stochastic-gradient update, then
  subtracts every other user's weighted interference estimate and re-decides;
* the parallel-bank variant: a ladder of step sizes proposes one candidate
  update per chip, and the candidate whose weight magnitudes are jointly
  closest to unit modulus wins and is adopted by the whole bank.

The stable step-size range shrinks with the system load M: all steps must lie
in (0, 1 - sqrt((M-1)/M)]. Weight vectors restart at zero for every stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import ReceivedFrame, signature_matrix

__all__ = [
    "WeightVector",
    "RegressorFrame",
    "StepSizeSet",
    "StageOutput",
    "DetectorResult",
    "DEFAULT_STEP_FACTORS",
    "step_size_bound",
    "uniform_step_grid",
    "scaled_step_set",
    "build_regressor_frame",
    "conventional_detect",
    "unit_deviation",
    "nlms_iteration",
    "plms_iteration",
    "cancel_residual",
    "stage_decide",
    "run_stage",
    "run_detector",
]

# Twelve-rung experimental ladder spanning the stable range, as fractions of
# the step-size bound.
DEFAULT_STEP_FACTORS = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Cancelation weights of one stage, one complex value per user."""

    weights: np.ndarray
    stage: int

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.complex128)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a non-empty 1-D sequence")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "stage", int(self.stage))

    def __len__(self) -> int:
        return int(self.weights.size)


@dataclass(frozen=True, eq=False)
class RegressorFrame:
    """Per-chip regressor vectors of one stage.

    vectors[n][m] is the previous stage's bit estimate of user m times that
    user's signature chip n, shape (num_chips, num_users).
    """

    vectors: np.ndarray

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.complex128)
        if vectors.ndim != 2 or vectors.size == 0:
            raise ValueError("vectors must form a non-empty (chips x users) matrix")
        object.__setattr__(self, "vectors", vectors)


@dataclass(frozen=True, eq=False)
class StepSizeSet:
    """Ascending step sizes, all inside the stable range for ``num_users``."""

    values: np.ndarray
    num_users: int

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("values must be a non-empty 1-D sequence")
        if np.any(np.diff(values) < 0):
            raise ValueError("values must be sorted ascending")
        if np.any(values <= 0):
            raise ValueError("every step size must be positive")
        bound = step_size_bound(self.num_users)
        if np.any(values > bound):
            raise ValueError(
                f"step sizes must not exceed the stable bound {bound!r} for "
                f"{self.num_users} users"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "num_users", int(self.num_users))

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class StageOutput:
    """One cancelation stage's decisions and diagnostics.

    ``selection_trace`` holds the winning bank index per chip iteration and is
    empty for the single-step mode. ``weight_history`` is the full (N+1, M)
    weight trajectory including the zero initialization, kept only on request.
    """

    bits: np.ndarray
    final_weights: WeightVector
    selection_trace: np.ndarray
    weight_history: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class DetectorResult:
    """Bit estimates per stage; index 0 is the matched-filter front end."""

    stage_bits: list
    stage_outputs: list

    @property
    def final_bits(self) -> np.ndarray:
        return self.stage_bits[-1]


def step_size_bound(num_users: int) -> float:
    """Largest stable step size, 1 - sqrt((M-1)/M), for a system load of M users."""
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    m = float(num_users)
    return float(1.0 - np.sqrt((m - 1.0) / m))


def uniform_step_grid(num_algorithms: int, num_users: int) -> StepSizeSet:
    """Evenly spaced ladder over the stable range; the top rung is the bound itself."""
    if num_algorithms < 1:
        raise ValueError("num_algorithms must be >= 1")
    bound = step_size_bound(num_users)
    values = bound * (np.arange(1, num_algorithms + 1) / num_algorithms)
    return StepSizeSet(values=values, num_users=num_users)


def scaled_step_set(factors, num_users: int) -> StepSizeSet:
    """Step sizes as fractions of the stable bound; every factor must lie in (0, 1]."""
    factors = np.asarray(factors, dtype=np.float64)
    if factors.ndim != 1 or factors.size == 0:
        raise ValueError("factors must be a non-empty 1-D sequence")
    if np.any(factors <= 0) or np.any(factors > 1):
        raise ValueError("every factor must lie in (0, 1]")
    values = np.sort(factors) * step_size_bound(num_users)
    return StepSizeSet(values=values, num_users=num_users)


def build_regressor_frame(prev_bits, signatures) -> RegressorFrame:
    """Assemble the per-chip regressors from previous-stage bits and signatures."""
    mat = signature_matrix(signatures)
    bits = _check_bipolar(prev_bits, mat.shape[0])
    return RegressorFrame(np.ascontiguousarray((mat * bits[:, None]).T))


def conventional_detect(frame: ReceivedFrame, signatures) -> np.ndarray:
    """Per-user matched-filter sign decisions straight off the received frame."""
    mat = signature_matrix(signatures)
    if mat.shape[1] != frame.num_chips:
        raise ValueError("signature length does not match the frame")
    stats = (mat.conj() @ frame.samples).real
    return _sign_decisions(stats)


def unit_deviation(weights) -> float:
    """Total distance of the weight magnitudes from unit modulus.

    Invariant to any per-element phase rotation; zero exactly when every
    weight sits on the unit circle.
    """
    w = weights.weights if isinstance(weights, WeightVector) else np.asarray(weights)
    return float(np.abs(np.abs(w) - 1.0).sum())


def nlms_iteration(weights, regressor, sample, mu: float):
    """One normalized stochastic-gradient update over a single chip.

    Returns ``(updated weights, a-priori error)`` where the error uses the
    plain (unconjugated) inner product and the update direction is the
    conjugated regressor scaled by the error over the squared norm. A
    zero-norm regressor cannot occur with bipolar chips; the update is skipped
    in that case so the operation stays total.
    """
    w = np.asarray(weights, dtype=np.complex128)
    x = np.asarray(regressor, dtype=np.complex128)
    norm = float(np.real(np.vdot(x, x)))
    if norm == 0.0:
        return w, complex(sample)
    err = complex(sample) - complex(np.dot(w, x))
    z = x.conj() * (err / norm)
    return w + mu * z, err


def plms_iteration(weights, regressor, sample, steps: StepSizeSet):
    """One bank update: every step size proposes a candidate and the one whose
    magnitudes are jointly closest to unity wins; the whole bank adopts it.

    Returns ``(updated weights, winner index)``. Ties go to the smallest step
    size; a zero-norm regressor skips the update and reports winner -1.
    """
    w = np.asarray(weights, dtype=np.complex128)
    x = np.asarray(regressor, dtype=np.complex128)
    norm = float(np.real(np.vdot(x, x)))
    if norm == 0.0:
        return w, -1
    err = complex(sample) - complex(np.dot(w, x))
    z = x.conj() * (err / norm)
    candidates = w[None, :] + steps.values[:, None] * z[None, :]
    deviations = np.abs(np.abs(candidates) - 1.0).sum(axis=1)
    winner = int(np.argmin(deviations))
    return candidates[winner], winner


def cancel_residual(frame: ReceivedFrame, final_weights, prev_bits, signatures, user: int) -> np.ndarray:
    """Subtract every other user's weighted interference estimate from the frame.

    Returns the cleaned chip sequence for ``user`` built from the stage-final
    weights; with a single user the frame passes through unchanged.
    """
    mat = signature_matrix(signatures)
    num_users = mat.shape[0]
    w = final_weights.weights if isinstance(final_weights, WeightVector) else np.asarray(
        final_weights, dtype=np.complex128
    )
    bits = _check_bipolar(prev_bits, num_users)
    if not 0 <= user < num_users:
        raise IndexError(f"user index {user} out of range for {num_users} users")
    mask = np.arange(num_users) != user
    if not mask.any():
        return frame.samples.copy()
    return frame.samples - (w[mask] * bits[mask]) @ mat[mask]


def stage_decide(residuals, signatures) -> np.ndarray:
    """Matched-filter sign decision per user on that user's cleaned residual."""
    mat = signature_matrix(signatures)
    res = np.asarray(residuals, dtype=np.complex128)
    if res.shape != mat.shape:
        raise ValueError("expected one residual sequence per user")
    stats = np.sum(res * mat.conj(), axis=1).real
    return _sign_decisions(stats)


def run_stage(
    frame: ReceivedFrame,
    prev_bits,
    signatures,
    mode: str,
    steps: StepSizeSet,
    *,
    stage: int = 1,
    backend: str = "numba",
    on_select=None,
    record_history: bool = False,
) -> StageOutput:
    """Adapt a fresh weight vector across the frame's chips, then cancel and
    re-decide every user's bit with the final weights.

    Parameters
    ----------
    frame : ReceivedFrame
        Received samples of one symbol period.
    prev_bits : sequence of +/-1
        Bit estimates feeding this stage's regressors.
    signatures : sequence of UserSignature or (M, N) complex array
        Receiver-side signatures.
    mode : {"lms", "plms"}
        "lms" runs the single fixed step (``steps`` must then hold exactly one
        value); "plms" runs the parallel bank with per-chip winner selection.
    steps : StepSizeSet
        Step sizes; must be built for the same number of users.
    backend : {"numba", "python"}
        "numba" uses the compiled chip loop; "python" the plain loop over the
        per-chip operations (required when ``on_select`` is given).
    on_select : callable, optional
        Called as ``on_select(n, weights_before, regressor, sample, winner)``
        after every bank selection (python backend, "plms" mode only).
    record_history : bool
        Keep the full weight trajectory on the returned StageOutput.
    """
    if mode not in ("lms", "plms"):
        raise ValueError(f"mode must be 'lms' or 'plms', got {mode!r}")
    if mode == "lms" and len(steps) != 1:
        raise ValueError("mode 'lms' requires exactly one step size")
    if backend not in ("numba", "python"):
        raise ValueError(f"backend must be 'numba' or 'python', got {backend!r}")
    if on_select is not None and backend != "python":
        raise ValueError("on_select requires the python backend")
    mat = signature_matrix(signatures)
    num_users, num_chips = mat.shape
    if frame.num_chips != num_chips:
        raise ValueError("signature length does not match the frame")
    if steps.num_users != num_users:
        raise ValueError(
            f"step sizes were built for {steps.num_users} users, frame has {num_users}"
        )
    bits = _check_bipolar(prev_bits, num_users)
    regressors = np.ascontiguousarray((mat * bits[:, None]).T)
    samples = np.ascontiguousarray(frame.samples)

    if backend == "numba":
        from ._kernels import ppic_stage

        history, trace = ppic_stage(samples, regressors, steps.values)
    else:
        history = np.zeros((num_chips + 1, num_users), dtype=np.complex128)
        trace = np.full(num_chips, -1, dtype=np.int64)
        w = history[0]
        for n in range(num_chips):
            if mode == "plms":
                before = w
                w, winner = plms_iteration(w, regressors[n], samples[n], steps)
                trace[n] = winner
                if on_select is not None:
                    on_select(n, before, regressors[n], samples[n], winner)
            else:
                w, _ = nlms_iteration(w, regressors[n], samples[n], steps.values[0])
            history[n + 1] = w

    final = history[-1]
    decisions = _decide_all(samples, final, bits, mat)
    selection = trace if mode == "plms" else np.empty(0, dtype=np.int64)
    return StageOutput(
        bits=decisions,
        final_weights=WeightVector(weights=final, stage=stage),
        selection_trace=selection,
        weight_history=history if record_history else None,
    )


def run_detector(
    frame: ReceivedFrame,
    signatures,
    stages: int,
    mode: str,
    steps: StepSizeSet,
    *,
    backend: str = "numba",
    on_select=None,
    record_history: bool = False,
) -> DetectorResult:
    """Matched-filter front end followed by ``stages`` cancelation passes.

    Stage s consumes stage s-1's bit estimates; the last stage's bits are the
    final estimate.
    """
    if stages < 1:
        raise ValueError("stages must be >= 1")
    mat = signature_matrix(signatures)
    stage_bits = [conventional_detect(frame, mat)]
    stage_outputs = []
    for s in range(1, stages + 1):
        out = run_stage(
            frame,
            stage_bits[-1],
            mat,
            mode,
            steps,
            stage=s,
            backend=backend,
            on_select=on_select,
            record_history=record_history,
        )
        stage_outputs.append(out)
        stage_bits.append(out.bits)
    return DetectorResult(stage_bits=stage_bits, stage_outputs=stage_outputs)


def _sign_decisions(stats: np.ndarray) -> np.ndarray:
    # sign(0) resolves to +1 so decisions are always bipolar
    return np.where(stats >= 0.0, 1, -1).astype(np.int64)


def _check_bipolar(bits, num_users: int) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.int64)
    if arr.shape != (num_users,):
        raise ValueError(f"expected {num_users} bits, got shape {arr.shape}")
    if not np.all((arr == 1) | (arr == -1)):
        raise ValueError("bits must all be -1 or +1")
    return arr


def _decide_all(samples, weights, prev_bits, mat) -> np.ndarray:
    """Residual cancelation and sign decision for every user at once."""
    contrib = (weights * prev_bits)[:, None] * mat
    total = contrib.sum(axis=0)
    residuals = samples[None, :] - total[None, :] + contrib
    stats = np.sum(residuals * mat.conj(), axis=1).real
    return _sign_decisions(stats)
