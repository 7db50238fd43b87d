"""Challenge-response datasets for model-building attacks.

A dataset is a flat list of (challenge, response-bit) records plus
provenance: ``raw`` for direct oracle access to the PUF, ``rso`` for the
eavesdropper's view of masked protocol exchanges (issued challenge paired
with observed masked bit; key indices stripped). Splits are 70/20/10
train/validation/test, derived deterministically from the recorded shuffle
seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import PufInstance, as_rng, random_challenges
from ..errors import ContractViolationError
from ..rso import hex_to_word

__all__ = ["CrpDataset", "harvest_raw", "harvest_rso"]

DEFAULT_SPLIT = (0.7, 0.2, 0.1)


@dataclass
class CrpDataset:
    n: int
    challenges: np.ndarray
    responses: np.ndarray
    provenance: str = "raw"
    seed: int = 0
    split: tuple[float, float, float] = DEFAULT_SPLIT

    def __post_init__(self):
        self.challenges = np.asarray(self.challenges, dtype=np.uint8)
        self.responses = np.asarray(self.responses, dtype=np.uint8)
        if self.challenges.ndim != 2 or self.challenges.shape[1] != self.n:
            raise ContractViolationError("challenge matrix must be (N, n)")
        if self.responses.shape != (self.challenges.shape[0],):
            raise ContractViolationError("responses must align with challenges")
        if self.provenance not in ("raw", "rso"):
            raise ContractViolationError(f"unknown provenance {self.provenance!r}")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ContractViolationError("split fractions must sum to 1")

    def __len__(self) -> int:
        return self.challenges.shape[0]

    def _split_indices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        order = np.random.default_rng(self.seed).permutation(len(self))
        n_train = int(self.split[0] * len(self))
        n_val = int(self.split[1] * len(self))
        return (
            order[:n_train],
            order[n_train:n_train + n_val],
            order[n_train + n_val:],
        )

    def subset(self, indices) -> tuple[np.ndarray, np.ndarray]:
        return self.challenges[indices], self.responses[indices]

    @property
    def train(self):
        return self.subset(self._split_indices()[0])

    @property
    def validation(self):
        return self.subset(self._split_indices()[1])

    @property
    def test(self):
        return self.subset(self._split_indices()[2])

    def to_file(self, path) -> None:
        header = f"n={self.n} provenance={self.provenance} seed={self.seed}"
        with open(path, "w") as fh:
            fh.write(header + "\n")
            bits = self.challenges + ord("0")
            resp = self.responses + ord("0")
            rows = np.empty((len(self), self.n + 3), dtype=np.uint8)
            rows[:, :self.n] = bits
            rows[:, self.n] = ord(" ")
            rows[:, self.n + 1] = resp
            rows[:, self.n + 2] = ord("\n")
            fh.write(rows.tobytes().decode("ascii"))

    @classmethod
    def from_file(cls, path) -> "CrpDataset":
        with open(path) as fh:
            header = fh.readline().strip()
            body = fh.read()
        fields = dict(tok.split("=", 1) for tok in header.split())
        try:
            n = int(fields["n"])
            provenance = fields["provenance"]
            seed = int(fields["seed"])
        except (KeyError, ValueError) as exc:
            raise ContractViolationError(f"malformed dataset header: {exc}") from exc
        raw = np.frombuffer(body.encode("ascii"), dtype=np.uint8)
        width = n + 3
        if raw.size % width:
            raise ContractViolationError("dataset body has ragged records")
        rows = raw.reshape(-1, width)
        challenges = rows[:, :n] - ord("0")
        responses = rows[:, n + 1] - ord("0")
        return cls(
            n=n, challenges=challenges, responses=responses,
            provenance=provenance, seed=seed,
        )


def harvest_raw(
    instance: PufInstance,
    count: int,
    noisy: bool = False,
    rng=None,
    unique: bool = False,
    seed: int = 0,
) -> CrpDataset:
    """Uniform random challenges evaluated directly on the instance."""
    gen = as_rng(rng)
    challenges = random_challenges(instance.n, count, rng=gen)
    if unique and count:
        challenges = np.unique(challenges, axis=0)
        while len(challenges) < count:
            extra = random_challenges(instance.n, count - len(challenges), rng=gen)
            challenges = np.unique(np.concatenate([challenges, extra]), axis=0)
        challenges = challenges[:count]
    responses = (
        instance.eval(challenges, noisy=noisy, rng=gen)
        if count
        else np.zeros(0, dtype=np.uint8)
    )
    return CrpDataset(
        n=instance.n, challenges=challenges, responses=responses,
        provenance="raw", seed=seed,
    )


def _exchange_pairs(item, n: int):
    """(challenges, masked word) from an exchange, transcript, or log record."""
    if isinstance(item, dict):
        return (
            np.stack([hex_to_word(h, n) for h in item["c"]]),
            hex_to_word(item["r_hat"], n),
        )
    if hasattr(item, "exchange"):            # AuthTranscript
        item = item.exchange
    return item.challenges, item.r_hat


def harvest_rso(source, n: int | None = None, seed: int = 0) -> CrpDataset:
    """Adversary view of masked exchanges: (issued challenge, masked bit).

    ``source`` may hold ObfuscatedExchange objects, AuthTranscripts, or
    decoded JSON log records. Key indices and true responses never enter
    the dataset.
    """
    source = list(source)
    if not source:
        raise ContractViolationError("no exchanges to harvest")
    if n is None:
        first = source[0]
        n = first["n"] if isinstance(first, dict) else (
            first.exchange.r_hat.size if hasattr(first, "exchange") else first.r_hat.size
        )
    blocks, words = [], []
    for item in source:
        challenges, r_hat = _exchange_pairs(item, n)
        if challenges.shape != (n, n) or r_hat.shape != (n,):
            raise ContractViolationError("malformed exchange record")
        blocks.append(challenges)
        words.append(r_hat)
    return CrpDataset(
        n=n,
        challenges=np.concatenate(blocks),
        responses=np.concatenate(words),
        provenance="rso",
        seed=seed,
    )
