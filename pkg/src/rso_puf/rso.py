"""Random set-based challenge/response obfuscation.

The device derives a small set of n-bit keys by replaying stable challenges
stored on-chip through its own PUF. Per exchange a TRNG draws two key
indices: the first key is XORed onto every challenge before evaluation, the
second onto the response word, and the masked word is split into two halves
for the mutual-matching protocol. Once enough masked pairs have been exposed
to train a model, the key set is rotated to a fresh pre-provisioned bank.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, comb, lgamma

import numpy as np

from .core import PufInstance, as_rng, delta, eval_response_word, random_challenges
from .errors import BankExhaustedError, ContractViolationError, StabilityError

__all__ = [
    "SimTrng",
    "ChallengeBank",
    "ObfuscationSet",
    "ObfuscatedExchange",
    "select_stable_challenges",
    "build_bank",
    "derive_set",
    "obfuscate",
    "update_set",
    "split_word",
    "word_to_hex",
    "hex_to_word",
    "n_min_arbiter",
    "n_min_rso",
    "extraction_probability",
    "brute_force_model_count",
    "write_exchange_log",
    "read_exchange_log",
]


class SimTrng:
    """Deterministic stand-in for the on-chip entropy source.

    Draws are uniform over [0, m) and logged so tests can replay a session.
    """

    def __init__(self, seed=None):
        self._rng = as_rng(seed)
        self.log: list[int] = []

    def draw(self, m: int) -> int:
        value = int(self._rng.integers(0, m))
        self.log.append(value)
        return value


def word_to_hex(bits: np.ndarray) -> str:
    """MSB-first hex encoding of a bit word (length recovered from context)."""
    bits = np.asarray(bits, dtype=np.uint8)
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return format(value, "0{}x".format((bits.size + 3) // 4))


def hex_to_word(text: str, n: int) -> np.ndarray:
    value = int(text, 16)
    return np.array([(value >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.uint8)


def split_word(word: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First ceil(n/2) bits and the remainder."""
    cut = (len(word) + 1) // 2
    return word[:cut], word[cut:]


def select_stable_challenges(
    instance: PufInstance,
    count: int,
    k_sigma: float = 4.0,
    rng=None,
    max_candidates: int = 2_000_000,
    batch: int = 4096,
) -> np.ndarray:
    """Challenges whose delay magnitude clears ``k_sigma`` noise deviations.

    With the default k=4 the per-bit flip probability of a selected
    challenge is the Gaussian tail Q(4) ~ 3.2e-5, so derived keys are
    reproducible in practice. A zero noise scale accepts everything.
    """
    gen = as_rng(rng)
    threshold = k_sigma * instance.noise_sigma
    picked: list[np.ndarray] = []
    seen = 0
    have = 0
    while have < count:
        if seen >= max_candidates:
            raise StabilityError(
                f"exhausted {max_candidates} candidates with {have}/{count} stable"
            )
        cand = random_challenges(instance.n, batch, rng=gen)
        seen += batch
        keep = np.abs(delta(instance, cand)) >= threshold
        sel = cand[keep]
        picked.append(sel)
        have += len(sel)
    return np.concatenate(picked)[:count]


@dataclass
class ChallengeBank:
    """Pre-provisioned stable challenges: bank_count groups of m keys of n challenges.

    Shape of ``challenges`` is (bank_count, m, n, n); ``active_bank`` names
    the group currently backing the key set. Storage cost per bank is
    m*n*n bits.
    """

    challenges: np.ndarray
    k_sigma: float = 4.0
    active_bank: int = 0

    def __post_init__(self):
        arr = np.asarray(self.challenges, dtype=np.uint8)
        if arr.ndim != 4 or arr.shape[2] != arr.shape[3]:
            raise ContractViolationError(
                "bank must have shape (bank_count, m, n, n), got {}".format(arr.shape)
            )
        if arr.shape[1] < 2:
            raise ContractViolationError("need m >= 2 keys per bank")
        self.challenges = arr

    @property
    def bank_count(self) -> int:
        return self.challenges.shape[0]

    @property
    def m(self) -> int:
        return self.challenges.shape[1]

    @property
    def n(self) -> int:
        return self.challenges.shape[2]

    @property
    def stored_bits_per_bank(self) -> int:
        return self.m * self.n * self.n

    def active_group(self) -> np.ndarray:
        if not 0 <= self.active_bank < self.bank_count:
            raise BankExhaustedError("no unused bank group: device retired")
        return self.challenges[self.active_bank]

    def to_text(self) -> str:
        header = (
            f"m={self.m} n={self.n} bank_count={self.bank_count} "
            f"k={self.k_sigma!r} active_bank={self.active_bank}"
        )
        lines = [header]
        for bank in self.challenges:
            for group in bank:
                for challenge in group:
                    lines.append("".join(str(int(b)) for b in challenge))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ChallengeBank":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        fields = dict(tok.split("=", 1) for tok in lines[0].split())
        try:
            m, n = int(fields["m"]), int(fields["n"])
            bank_count = int(fields["bank_count"])
            k_sigma = float(fields["k"])
            active = int(fields.get("active_bank", 0))
        except (KeyError, ValueError) as exc:
            raise ContractViolationError(f"malformed bank header: {exc}") from exc
        expect = bank_count * m * n
        body = lines[1:]
        if len(body) != expect:
            raise ContractViolationError(
                f"bank body has {len(body)} challenges, expected {expect}"
            )
        arr = np.array(
            [[int(ch) for ch in ln] for ln in body], dtype=np.uint8
        ).reshape(bank_count, m, n, n)
        return cls(challenges=arr, k_sigma=k_sigma, active_bank=active)


def build_bank(
    instance: PufInstance,
    m: int,
    bank_count: int = 1,
    k_sigma: float = 4.0,
    rng=None,
) -> ChallengeBank:
    """Provision a bank of stability-tested challenges at test time."""
    gen = as_rng(rng)
    total = bank_count * m * instance.n
    stable = select_stable_challenges(instance, total, k_sigma=k_sigma, rng=gen)
    shaped = stable.reshape(bank_count, m, instance.n, instance.n)
    return ChallengeBank(challenges=shaped, k_sigma=k_sigma)


@dataclass(frozen=True)
class ObfuscationSet:
    """The m derived n-bit keys currently loaded in the device registers."""

    keys: np.ndarray
    bank_index: int = 0

    def __post_init__(self):
        arr = np.asarray(self.keys, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ContractViolationError("key set must be (m >= 2, n)")
        object.__setattr__(self, "keys", arr)

    @property
    def m(self) -> int:
        return self.keys.shape[0]

    @property
    def n(self) -> int:
        return self.keys.shape[1]


def derive_set(instance: PufInstance, bank: ChallengeBank) -> ObfuscationSet:
    """Replay the active bank group noise-free; the responses are the keys."""
    if bank.n != instance.n:
        raise ContractViolationError("bank stage count differs from instance")
    group = bank.active_group()
    keys = np.stack([eval_response_word(instance, g, noisy=False) for g in group])
    return ObfuscationSet(keys=keys, bank_index=bank.active_bank)


def update_set(bank: ChallengeBank, instance: PufInstance) -> ObfuscationSet:
    """Advance to the next bank group and re-derive keys; old keys retire.

    Raises BankExhaustedError when no group is left.
    """
    if bank.active_bank + 1 >= bank.bank_count:
        raise BankExhaustedError("no unused bank group: device retired")
    bank.active_bank += 1
    return derive_set(instance, bank)


@dataclass(frozen=True)
class ObfuscatedExchange:
    """One masked evaluation: indices, masked challenges, and split response."""

    key_i_index: int
    key_j_index: int
    challenges: np.ndarray
    c_prime: np.ndarray
    r_prime: np.ndarray
    r_hat: np.ndarray
    r_hat_a: np.ndarray = field(repr=False, default=None)
    r_hat_b: np.ndarray = field(repr=False, default=None)


def obfuscate(
    oset: ObfuscationSet,
    trng: SimTrng,
    instance: PufInstance,
    challenges,
    noisy: bool = False,
    rng=None,
    indices: tuple[int, int] | None = None,
) -> ObfuscatedExchange:
    """Mask a challenge word set with key i, the response word with key j.

    Indices are drawn independently from the TRNG (i == j is permitted,
    keeping the draw uniform); pass ``indices`` to force them in tests or
    replays. The noisy flag propagates to the underlying evaluation.
    """
    mat = np.asarray(challenges, dtype=np.uint8)
    if mat.shape != (instance.n, instance.n):
        raise ContractViolationError(
            f"expected {instance.n} challenges of {instance.n} bits, got {mat.shape}"
        )
    if oset.n != instance.n:
        raise ContractViolationError("key width differs from instance stage count")
    if indices is None:
        i, j = trng.draw(oset.m), trng.draw(oset.m)
    else:
        i, j = indices
    c_prime = mat ^ oset.keys[i]
    r_prime = eval_response_word(instance, c_prime, noisy=noisy, rng=rng)
    r_hat = r_prime ^ oset.keys[j]
    r_hat_a, r_hat_b = split_word(r_hat)
    return ObfuscatedExchange(
        key_i_index=i,
        key_j_index=j,
        challenges=mat,
        c_prime=c_prime,
        r_prime=r_prime,
        r_hat=r_hat,
        r_hat_a=r_hat_a,
        r_hat_b=r_hat_b,
    )


def _exact_epsilon(epsilon: float) -> Fraction:
    if not 0 < epsilon < 1:
        raise ContractViolationError(f"error rate {epsilon} outside (0,1)")
    return Fraction(epsilon).limit_denominator(10**9)


def n_min_arbiter(n: int, epsilon: float) -> int:
    """Minimum CRPs to model an n-stage instance at error rate epsilon."""
    return ceil(Fraction(n + 1) / (2 * _exact_epsilon(epsilon)))


def n_min_rso(n: int, epsilon: float, m: int) -> int:
    """Same bound against the masked mapping: m^2 candidate pairings."""
    if m < 1:
        raise ContractViolationError("m must be >= 1")
    return m * m * n_min_arbiter(n, epsilon)


def extraction_probability(n: int, epsilon: float, m: int) -> float:
    """log10 probability of extracting one consistent training subset.

    Out of N_rso masked pairs, only the ~N_arbiter sharing one (i, j)
    pairing train a model; the chance of guessing such a subset is
    m^2 / C(N_rso, N_arbiter), evaluated in log space (the magnitudes
    underflow any float).
    """
    n_arb = n_min_arbiter(n, epsilon)
    n_rso = n_min_rso(n, epsilon, m)
    log10_choose = (
        lgamma(n_rso + 1) - lgamma(n_arb + 1) - lgamma(n_rso - n_arb + 1)
    ) / math.log(10)
    return 2 * math.log10(m) - log10_choose


def extraction_probability_exact(n: int, epsilon: float, m: int) -> Fraction:
    """Exact rational form of the extraction probability (small cases only)."""
    n_arb = n_min_arbiter(n, epsilon)
    n_rso = n_min_rso(n, epsilon, m)
    return Fraction(m * m, comb(n_rso, n_arb))


def brute_force_model_count(n: int, epsilon: float, m: int) -> float:
    """log10 of the model count m^(2 * N_arbiter) a brute-force attacker needs."""
    if m < 1:
        raise ContractViolationError("m must be >= 1")
    return 2 * n_min_arbiter(n, epsilon) * math.log10(m)


def exchange_to_record(exchange: ObfuscatedExchange, session: int) -> dict:
    n = exchange.r_hat.size
    return {
        "session": session,
        "i": exchange.key_i_index,
        "j": exchange.key_j_index,
        "n": n,
        "c": [word_to_hex(c) for c in exchange.challenges],
        "c_prime": [word_to_hex(c) for c in exchange.c_prime],
        "r_prime": word_to_hex(exchange.r_prime),
        "r_hat": word_to_hex(exchange.r_hat),
        "r_hat_a": word_to_hex(exchange.r_hat_a),
        "r_hat_b": word_to_hex(exchange.r_hat_b),
    }


def write_exchange_log(exchanges, path) -> None:
    with open(path, "w") as fh:
        for session, ex in enumerate(exchanges):
            fh.write(json.dumps(exchange_to_record(ex, session)) + "\n")


def read_exchange_log(path) -> list[dict]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
