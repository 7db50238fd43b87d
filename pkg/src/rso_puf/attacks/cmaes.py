"""Covariance-matrix-adaptation evolution strategy over delay vectors.

Candidates are full (n+1)-weight vectors; fitness is the match rate against
a fixed reference batch of challenge-response pairs (one minus the mean
fractional distance between predicted and observed bits). Standard rank-mu
update with cumulative step-size control; stagnation triggers a restart
centered on the best candidate so far.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import backend
from ..core import as_rng
from ..errors import ContractViolationError
from .dataset import CrpDataset

__all__ = ["EsModel", "train_cmaes", "default_population"]

STAGNATION_RESTART = 50
FITNESS_BATCH = 20_000


def default_population(dim: int) -> int:
    return 4 + int(3 * np.log(dim))


@dataclass
class EsModel:
    omega_est: np.ndarray
    n: int
    best_fitness: float
    fitness_history: list[float] = field(default_factory=list)
    generations_run: int = 0
    restarts: int = 0

    def decision_values(self, challenges) -> np.ndarray:
        return backend.features(np.asarray(challenges, dtype=np.uint8)) @ self.omega_est

    def predict(self, challenges) -> np.ndarray:
        return (self.decision_values(challenges) >= 0).astype(np.uint8)


class _CmaState:
    """Strategy parameters and adaptation state for one (restartable) run."""

    def __init__(self, dim: int, population: int, sigma0: float):
        self.dim = dim
        self.lam = population
        self.mu = population // 2
        w = np.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights**2)
        d, mueff = dim, self.mueff
        self.cs = (mueff + 2) / (d + mueff + 5)
        self.ds = 1 + 2 * max(0.0, np.sqrt((mueff - 1) / (d + 1)) - 1) + self.cs
        self.cc = (4 + mueff / d) / (d + 4 + 2 * mueff / d)
        self.c1 = 2 / ((d + 1.3) ** 2 + mueff)
        self.cmu = min(1 - self.c1, 2 * (mueff - 2 + 1 / mueff) / ((d + 2) ** 2 + mueff))
        self.chi_n = np.sqrt(d) * (1 - 1 / (4 * d) + 1 / (21 * d * d))
        self.sigma0 = sigma0
        self.reset(np.zeros(dim))

    def reset(self, mean: np.ndarray) -> None:
        self.mean = mean.copy()
        self.sigma = self.sigma0
        self.pc = np.zeros(self.dim)
        self.ps = np.zeros(self.dim)
        self.cov = np.eye(self.dim)
        self.basis = np.eye(self.dim)
        self.scales = np.ones(self.dim)
        self.count = 0

    def ask(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((self.lam, self.dim))
        return self.mean + self.sigma * (z @ (self.basis * self.scales).T)

    def tell(self, candidates: np.ndarray, fitness: np.ndarray) -> None:
        self.count += 1
        order = np.argsort(-fitness)
        parents = candidates[order[: self.mu]]
        old_mean = self.mean
        self.mean = self.weights @ parents
        shift = (self.mean - old_mean) / self.sigma

        inv_sqrt = self.basis @ np.diag(1.0 / self.scales) @ self.basis.T
        self.ps = (1 - self.cs) * self.ps + np.sqrt(
            self.cs * (2 - self.cs) * self.mueff
        ) * (inv_sqrt @ shift)
        h_sig = (
            np.linalg.norm(self.ps)
            / np.sqrt(1 - (1 - self.cs) ** (2 * self.count))
            / self.chi_n
        ) < (1.4 + 2 / (self.dim + 1))
        self.pc = (1 - self.cc) * self.pc + h_sig * np.sqrt(
            self.cc * (2 - self.cc) * self.mueff
        ) * shift

        deviations = (parents - old_mean) / self.sigma
        self.cov = (
            (1 - self.c1 - self.cmu) * self.cov
            + self.c1
            * (np.outer(self.pc, self.pc) + (not h_sig) * self.cc * (2 - self.cc) * self.cov)
            + self.cmu * (deviations.T * self.weights) @ deviations
        )
        self.sigma *= np.exp(
            (self.cs / self.ds) * (np.linalg.norm(self.ps) / self.chi_n - 1)
        )
        self.cov = np.triu(self.cov) + np.triu(self.cov, 1).T
        eigvals, self.basis = np.linalg.eigh(self.cov)
        self.scales = np.sqrt(np.maximum(eigvals, 1e-20))


def train_cmaes(
    ds: CrpDataset,
    generations: int = 300,
    population: int | None = None,
    sigma0: float = 0.5,
    fitness_batch: int = FITNESS_BATCH,
    stagnation: int = STAGNATION_RESTART,
    rng=None,
) -> EsModel:
    """Evolve a weight-vector estimate against a fixed reference batch.

    The reference batch is the head of the training split (capped at
    ``fitness_batch``). Best-so-far fitness is recorded per generation and
    is non-decreasing by construction; a run that stalls for ``stagnation``
    generations restarts from the best candidate with fresh covariance.
    """
    gen_rng = as_rng(rng)
    ch_tr, y_tr = ds.train
    if len(y_tr) == 0:
        raise ContractViolationError("empty training split")
    take = min(len(y_tr), fitness_batch)
    phi = backend.features(ch_tr[:take])
    observed = y_tr[:take].astype(bool)

    def fitness_of(candidates: np.ndarray) -> np.ndarray:
        predictions = (candidates @ phi.T) >= 0
        return np.mean(predictions == observed, axis=1)

    dim = ds.n + 1
    state = _CmaState(dim, population or default_population(dim), sigma0)
    best_x = state.mean.copy()
    best_f = float(fitness_of(best_x[None, :])[0])
    history: list[float] = []
    stale = 0
    restarts = 0
    gen = 0
    for gen in range(1, generations + 1):
        candidates = state.ask(gen_rng)
        fitness = fitness_of(candidates)
        top = int(np.argmax(fitness))
        if fitness[top] > best_f:
            best_f = float(fitness[top])
            best_x = candidates[top].copy()
            stale = 0
        else:
            stale += 1
        history.append(best_f)
        if best_f >= 1.0:
            break
        if stale >= stagnation:
            state.reset(best_x)
            restarts += 1
            stale = 0
            continue
        state.tell(candidates, fitness)
    return EsModel(
        omega_est=best_x,
        n=ds.n,
        best_fitness=best_f,
        fitness_history=history,
        generations_run=gen,
        restarts=restarts,
    )
