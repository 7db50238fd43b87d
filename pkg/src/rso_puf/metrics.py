"""Hamming-distance statistics and analytic authentication-quality formulas.

Binomial tails are evaluated with exact rational arithmetic (the interesting
values span nine orders of magnitude, down to 1e-11 where naive floating
summation loses digits) and converted to float only at the reporting
boundary.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from fractions import Fraction
from math import comb

import numpy as np

from .errors import ContractViolationError

__all__ = [
    "hd",
    "fhd",
    "mean_pairwise_hd",
    "uniqueness",
    "HdStats",
    "hd_stats",
    "far",
    "frr",
    "p_suc",
    "AuthQuality",
    "eer_search",
    "auth_quality_csv_row",
    "auth_quality_json",
]

AUTHSTATS_COLUMNS = ["row", "p_inter", "p_intra", "n", "n_EER", "FAR", "FRR", "EER"]


def _as_bits(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.dtype.kind in "US":
        arr = np.array([int(ch) for ch in str(x)], dtype=np.uint8)
    return arr.astype(np.uint8)


def hd(x, y) -> int:
    """Number of differing positions between two equal-length bit words."""
    a, b = _as_bits(x), _as_bits(y)
    if a.shape != b.shape:
        raise ContractViolationError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def fhd(x, y) -> float:
    """Hamming distance normalized by word length."""
    a = _as_bits(x)
    if a.size == 0:
        raise ContractViolationError("fractional HD undefined for empty words")
    return hd(x, y) / a.size


def mean_pairwise_hd(words) -> float:
    """Mean fractional HD over all unordered pairs of distinct words."""
    mat = np.stack([_as_bits(w) for w in words])
    s = mat.shape[0]
    if s < 2:
        raise ContractViolationError("need at least two words")
    total = 0.0
    for u in range(s - 1):
        total += np.count_nonzero(mat[u + 1:] != mat[u], axis=1).sum() / mat.shape[1]
    return total / (s * (s - 1) / 2)


def uniqueness(instances, challenges, conventional: bool = False) -> float:
    """Average pairwise response distance across device instances.

    The default follows the published normalization 2/(s(s+1)) over the
    s(s-1)/2 unordered pairs, which is NOT a mean (it underestimates one by
    the factor (s-1)/(s+1)). Pass ``conventional=True`` for the plain
    pairwise mean 2/(s(s-1)); reports emit both, flagged.
    """
    if len(instances) < 2:
        raise ContractViolationError("need at least two instances")
    words = [inst.eval(challenges) for inst in instances]
    mean = mean_pairwise_hd(words)
    if conventional:
        return mean
    s = len(instances)
    return mean * (s - 1) / (s + 1)


@dataclass(frozen=True)
class HdStats:
    """Inter/intra response-distance estimators from a measurement campaign."""

    inter_mean: float
    intra_mean: float
    p_inter: float
    p_intra: float
    inter_samples: int
    intra_samples: int

    def __post_init__(self):
        for name in ("inter_mean", "intra_mean", "p_inter", "p_intra"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ContractViolationError(f"{name}={v} outside [0,1]")


def hd_stats(instances, challenges, repeats: int = 10, rng=None) -> HdStats:
    """Measure inter-HD across instances and intra-HD across noisy repeats.

    The per-bit binomial estimators equal the mean fractional distances;
    intra compares each noisy re-read against the noise-free reference.
    """
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    words = [inst.eval(challenges) for inst in instances]
    inter = mean_pairwise_hd(words) if len(words) >= 2 else 0.0
    inter_samples = len(words) * (len(words) - 1) // 2

    intra_total, intra_samples = 0.0, 0
    for inst, ref in zip(instances, words):
        for _ in range(repeats):
            noisy = inst.eval(challenges, noisy=True, rng=gen)
            intra_total += fhd(noisy, ref)
            intra_samples += 1
    intra = intra_total / intra_samples if intra_samples else 0.0
    return HdStats(
        inter_mean=inter,
        intra_mean=intra,
        p_inter=inter,
        p_intra=intra,
        inter_samples=inter_samples,
        intra_samples=intra_samples,
    )


def _exact_p(p: float) -> Fraction:
    """Snap a float probability to the simplest nearby rational.

    Reported probabilities are short decimals (0.048, 0.501, ...); the
    limit_denominator recovers them exactly from their float images.
    """
    if not 0 <= p <= 1:
        raise ContractViolationError(f"probability {p} outside [0,1]")
    return Fraction(p).limit_denominator(10**6)


def _binom_cdf(n: int, k: int, p: Fraction) -> Fraction:
    """Exact P[Bin(n, p) <= k]."""
    q = 1 - p
    return sum(comb(n, i) * p**i * q ** (n - i) for i in range(k + 1))


def _check_tolerance(n: int, n_tolerance: int):
    if not 0 <= n_tolerance <= n:
        raise ContractViolationError(f"n_tolerance {n_tolerance} outside [0, {n}]")


def far(n: int, n_tolerance: int, p_inter: float) -> float:
    """False-acceptance rate: an impostor response lands within tolerance."""
    _check_tolerance(n, n_tolerance)
    return float(_binom_cdf(n, n_tolerance, _exact_p(p_inter)))


def frr(n: int, n_tolerance: int, p_intra: float) -> float:
    """False-rejection rate: a genuine response flips more bits than allowed."""
    _check_tolerance(n, n_tolerance)
    return float(1 - _binom_cdf(n, n_tolerance, _exact_p(p_intra)))


def p_suc(n: int, n_tolerance: int, p_intra: float) -> float:
    """Probability a legitimate device authenticates (complement of frr)."""
    _check_tolerance(n, n_tolerance)
    return float(_binom_cdf(n, n_tolerance, _exact_p(p_intra)))


@dataclass(frozen=True)
class AuthQuality:
    """Operating points of the FAR/FRR trade-off for an n-bit response.

    ``n_eer`` minimizes max(FAR, FRR) over the tolerance scan (ties break
    toward the smaller tolerance). ``n_balanced`` minimizes |FAR - FRR|
    instead; the two coincide except when the discrete scan brackets the
    crossover asymmetrically. ``far``/``frr``/``eer`` belong to ``n_eer``;
    the ``*_balanced`` fields belong to ``n_balanced``.
    """

    n: int
    p_inter: float
    p_intra: float
    n_eer: int
    far: float
    frr: float
    eer: float
    n_balanced: int
    far_balanced: float
    frr_balanced: float
    eer_balanced: float

    @property
    def n_tolerance(self) -> int:
        return self.n_eer


def eer_search(n: int, p_inter: float, p_intra: float) -> AuthQuality:
    """Scan every tolerance 0..n and locate the equal-error operating points."""
    scan = [
        (tol, far(n, tol, p_inter), frr(n, tol, p_intra)) for tol in range(n + 1)
    ]
    tol_m, far_m, frr_m = min(scan, key=lambda r: (max(r[1], r[2]), r[0]))
    tol_b, far_b, frr_b = min(scan, key=lambda r: (abs(r[1] - r[2]), r[0]))
    return AuthQuality(
        n=n,
        p_inter=p_inter,
        p_intra=p_intra,
        n_eer=tol_m,
        far=far_m,
        frr=frr_m,
        eer=max(far_m, frr_m),
        n_balanced=tol_b,
        far_balanced=far_b,
        frr_balanced=frr_b,
        eer_balanced=max(far_b, frr_b),
    )


def auth_quality_csv_row(quality: AuthQuality, row: int = 1, balanced: bool = False) -> str:
    """One CSV row in published-table column order.

    ``balanced=True`` reports the |FAR-FRR|-balanced operating point.
    """
    if balanced:
        tol, fa, fr, eer = (
            quality.n_balanced,
            quality.far_balanced,
            quality.frr_balanced,
            quality.eer_balanced,
        )
    else:
        tol, fa, fr, eer = quality.n_eer, quality.far, quality.frr, quality.eer
    return (
        f"{row},{quality.p_inter},{quality.p_intra},{quality.n},"
        f"{tol},{fa:.6e},{fr:.6e},{eer:.6e}"
    )


def auth_quality_json(quality: AuthQuality, config: dict | None = None) -> str:
    doc = asdict(quality)
    if config:
        doc["config"] = config
    return json.dumps(doc, indent=2, sort_keys=True)
