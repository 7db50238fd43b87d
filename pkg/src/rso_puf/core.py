"""Arbiter-style PUF simulation on the additive linear delay model.

A device instance is an (n+1)-dimensional weight vector ``omega``. A
challenge of n bits maps to a parity feature vector of n+1 signed entries,
and the device's delay difference for that challenge is the inner product
of the two. The response bit is the sign of the delay difference, with an
optional additive Gaussian measurement-noise term whose scale is calibrated
against a target bit-flip rate rather than assumed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from . import backend
from .errors import CalibrationError, ContractViolationError

__all__ = [
    "PufInstance",
    "feature_transform",
    "delta",
    "evaluate",
    "eval_response_word",
    "calibrate_noise",
    "measured_flip_rate",
    "sample_instance",
    "random_challenges",
    "instance_to_text",
    "instance_from_text",
]


def as_rng(seed_or_rng) -> np.random.Generator:
    """Accept a Generator, an int seed, or None (fresh entropy)."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _as_challenge_matrix(challenges, n: int) -> tuple[np.ndarray, bool]:
    """Validate and normalize challenges to a (N, n) uint8 matrix.

    Returns the matrix and whether the input was a single challenge.
    """
    arr = np.asarray(challenges)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise ContractViolationError(
            f"challenge length {arr.shape[-1] if arr.ndim else '?'} != stage count {n}"
        )
    if arr.dtype != np.uint8:
        if not np.isin(arr, (0, 1)).all():
            raise ContractViolationError("challenge bits must be 0 or 1")
        arr = arr.astype(np.uint8)
    return np.ascontiguousarray(arr), single


@dataclass(frozen=True)
class PufInstance:
    """One simulated device: stage count, delay weights, and noise scale.

    The instance itself is immutable; the default noise stream is created
    lazily from ``seed`` and owned by whoever evaluates. Workers sharing an
    instance should pass their own ``rng`` to ``eval``.
    """

    n: int
    omega: np.ndarray
    noise_sigma: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=np.float64)
        if self.n < 1:
            raise ContractViolationError("stage count must be >= 1")
        if omega.shape != (self.n + 1,):
            raise ContractViolationError(
                f"omega must have length n+1={self.n + 1}, got {omega.shape}"
            )
        if not np.isfinite(omega).all():
            raise ContractViolationError("omega entries must be finite")
        if self.noise_sigma < 0:
            raise ContractViolationError("noise_sigma must be >= 0")
        object.__setattr__(self, "omega", omega)

    def noise_stream(self) -> np.random.Generator:
        """A fresh, deterministic noise stream for this instance's seed."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(1,)))

    def with_noise(self, noise_sigma: float) -> "PufInstance":
        return replace(self, noise_sigma=noise_sigma)

    def eval(self, challenges, noisy: bool = False, rng=None):
        return evaluate(self, challenges, noisy=noisy, rng=rng)


def feature_transform(challenges, n: int | None = None) -> np.ndarray:
    """Parity features of one challenge (n,) or a batch (N, n).

    Entry l (0-based) is the product of (1 - 2*c_i) for i = l..n-1; the
    trailing entry is fixed at 1. Output mirrors the input's batchiness.
    """
    arr = np.asarray(challenges)
    if n is None:
        n = arr.shape[-1]
    mat, single = _as_challenge_matrix(arr, n)
    phi = backend.features(mat)
    return phi[0] if single else phi


def delta(instance: PufInstance, challenges):
    """Noise-free delay difference(s) omega . phi(challenge)."""
    mat, single = _as_challenge_matrix(challenges, instance.n)
    d = backend.deltas(mat, instance.omega)
    return float(d[0]) if single else d


def evaluate(instance: PufInstance, challenges, noisy: bool = False, rng=None):
    """Response bit(s) in {0,1}; a zero delay difference resolves to 1.

    With ``noisy=True`` each evaluation adds an independent
    Normal(0, noise_sigma) term drawn from ``rng`` (default: a fresh stream
    derived from the instance seed, so repeat calls on a fresh instance
    reproduce the same sequence).
    """
    mat, single = _as_challenge_matrix(challenges, instance.n)
    d = backend.deltas(mat, instance.omega)
    if noisy and instance.noise_sigma > 0:
        gen = instance.noise_stream() if rng is None else as_rng(rng)
        d = d + gen.normal(0.0, instance.noise_sigma, size=d.shape)
    bits = (d >= 0).astype(np.uint8)
    return int(bits[0]) if single else bits


def eval_response_word(instance: PufInstance, challenges, noisy: bool = False, rng=None) -> np.ndarray:
    """n-bit response word from exactly n challenges of n bits each."""
    mat, _ = _as_challenge_matrix(challenges, instance.n)
    if mat.shape[0] != instance.n:
        raise ContractViolationError(
            f"response word needs {instance.n} challenges, got {mat.shape[0]}"
        )
    return evaluate(instance, mat, noisy=noisy, rng=rng)


def random_challenges(n: int, count: int, rng=None) -> np.ndarray:
    """(count, n) uniform random challenge bits."""
    return as_rng(rng).integers(0, 2, size=(count, n), dtype=np.uint8)


def measured_flip_rate(instance: PufInstance, sigma: float, challenges) -> float:
    """Mean probability that one noisy evaluation differs from the noise-free bit.

    Exact in the noise dimension: per challenge the flip probability is the
    Gaussian tail Q(|delta| / sigma), so only the challenge sample is Monte
    Carlo.
    """
    d = np.abs(delta(instance, challenges))
    if sigma == 0:
        return 0.0
    return float(np.mean(0.5 * special.erfc(d / (sigma * math.sqrt(2.0)))))


def calibrate_noise(
    instance: PufInstance,
    target_p_intra: float,
    sample_size: int = 20000,
    seed: int = 0,
    tolerance: float = 0.005,
) -> float:
    """Noise scale whose average per-bit flip rate hits ``target_p_intra``.

    Deterministic bisection on the analytic flip rate over a seeded
    challenge sample. Raises CalibrationError when the target cannot be
    reached within ``tolerance`` (e.g. a degenerate all-zero instance,
    whose flip rate jumps from 0 to 1/2 as soon as sigma > 0).
    """
    if not 0 <= target_p_intra < 0.5:
        raise ContractViolationError("target flip rate must be in [0, 0.5)")
    if target_p_intra == 0:
        return 0.0
    challenges = random_challenges(instance.n, sample_size, rng=seed)
    scale = float(np.linalg.norm(instance.omega))
    if scale == 0:
        raise CalibrationError("all-zero weight vector: flip rate is not tunable")
    lo, hi = 0.0, scale
    while measured_flip_rate(instance, hi, challenges) < target_p_intra:
        hi *= 2.0
        if hi > 1e9 * scale:
            raise CalibrationError(f"target {target_p_intra} unreachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if measured_flip_rate(instance, mid, challenges) < target_p_intra:
            lo = mid
        else:
            hi = mid
    sigma = 0.5 * (lo + hi)
    achieved = measured_flip_rate(instance, sigma, challenges)
    if abs(achieved - target_p_intra) > tolerance:
        raise CalibrationError(
            f"calibration stuck at flip rate {achieved:.4f} for target {target_p_intra}"
        )
    return sigma


def sample_instance(n: int, seed=None, noise_sigma: float = 0.0) -> PufInstance:
    """Instance with i.i.d. standard-normal weights, reproducible from seed."""
    if n < 1:
        raise ContractViolationError("stage count must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    omega = rng.normal(0.0, 1.0, size=n + 1)
    return PufInstance(n=n, omega=omega, noise_sigma=noise_sigma, seed=seed)


def instance_to_text(instance: PufInstance, extra: dict | None = None) -> str:
    """Self-describing key=value serialization; round-trips bit-exactly.

    Weights are written with repr (shortest decimal that reparses to the
    same float).
    """
    lines = [
        f"n={instance.n}",
        f"seed={instance.seed if instance.seed is not None else ''}",
        f"noise_sigma={instance.noise_sigma!r}",
        "omega=" + ",".join(repr(x) for x in instance.omega.tolist()),
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def instance_from_text(text: str) -> PufInstance:
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        n = int(fields["n"])
        seed = int(fields["seed"]) if fields.get("seed") else None
        noise_sigma = float(fields["noise_sigma"])
        omega = np.array([float(x) for x in fields["omega"].split(",")])
    except (KeyError, ValueError) as exc:
        raise ContractViolationError(f"malformed instance record: {exc}") from exc
    return PufInstance(n=n, omega=omega, noise_sigma=noise_sigma, seed=seed)
