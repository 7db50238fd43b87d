"""Device/server authentication protocol around the masked PUF.

Enrollment stores, per device: its identifier, a parametric response model
(ground-truth weights by default, or a model trained from raw pairs), and
the full challenge bank together with the device-measured noise-free
responses, so both sides derive bit-identical key sets at every rotation.

Per authentication round the server issues a fresh n-challenge set plus the
first halves of all m^2 candidate masked responses; the device answers with
the second half of its own masked response if some received half matches
within the tolerance fraction tau; the server accepts if any candidate's
second half matches the returned half. A per-device counter tracks exposed
response bits and forces a key-set rotation at the modeling threshold.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .core import PufInstance, as_rng, eval_response_word, random_challenges
from .errors import ContractViolationError, ProtocolError
from .metrics import fhd
from .rso import (
    ChallengeBank,
    ObfuscationSet,
    SimTrng,
    derive_set,
    n_min_rso,
    obfuscate,
    split_word,
    update_set,
    word_to_hex,
)

__all__ = [
    "GroundTruthModel",
    "DeviceState",
    "ServerState",
    "UpdateCommand",
    "IssuedSession",
    "AuthTranscript",
    "enroll",
    "server_issue",
    "device_respond",
    "server_verify",
    "run_campaign",
    "CampaignReport",
    "write_transcript_log",
]


class GroundTruthModel:
    """Parametric model that replays the enrolled delay weights exactly."""

    def __init__(self, omega: np.ndarray, n: int):
        self._puf = PufInstance(n=n, omega=np.array(omega, dtype=np.float64))

    def predict(self, challenges) -> np.ndarray:
        return self._puf.eval(challenges, noisy=False)


@dataclass
class DeviceState:
    """Everything living on the device: PUF, bank, key registers, TRNG."""

    device_id: str
    puf: PufInstance
    bank: ChallengeBank
    oset: ObfuscationSet
    trng: SimTrng
    noise_rng: np.random.Generator

    @classmethod
    def provision(cls, device_id: str, puf: PufInstance, bank: ChallengeBank, seed=None):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        trng_seed, noise_seed = ss.spawn(2)
        return cls(
            device_id=device_id,
            puf=puf,
            bank=bank,
            oset=derive_set(puf, bank),
            trng=SimTrng(np.random.default_rng(trng_seed)),
            noise_rng=np.random.default_rng(noise_seed),
        )

    def apply_update(self) -> None:
        self.oset = update_set(self.bank, self.puf)


@dataclass
class _DeviceRecord:
    model: object
    bank: ChallengeBank
    keys_per_bank: np.ndarray        # device-measured responses, all banks
    keys: ObfuscationSet
    counter: int = 0
    update_events: int = 0
    used_challenges: set = field(default_factory=set)


@dataclass
class UpdateCommand:
    device_id: str


@dataclass
class IssuedSession:
    device_id: str
    challenges: np.ndarray
    r_a_candidates: list[np.ndarray]


@dataclass
class AuthTranscript:
    session: int
    device_id: str
    challenges: np.ndarray
    r_a_candidates: list[np.ndarray]
    exchange: object                  # the device's ObfuscatedExchange
    r_hat_b: np.ndarray | None
    device_verdict: bool
    server_verdict: bool
    counter: int

    @property
    def outcome(self) -> str:
        return "accept" if (self.device_verdict and self.server_verdict) else "reject"


class ServerState:
    """Authentication server: per-device records plus session bookkeeping."""

    def __init__(self, epsilon: float = 0.05, tau: float | None = None,
                 n_tolerance: int | None = None, seed=None):
        self.epsilon = epsilon
        self._tau = tau
        self._n_tolerance = n_tolerance
        self.rng = as_rng(seed)
        self.devices: dict[str, _DeviceRecord] = {}
        self.open_sessions: dict[str, dict] = {}

    def tau_for(self, n: int) -> float:
        if self._tau is not None:
            return self._tau
        if self._n_tolerance is not None:
            return self._n_tolerance / n
        raise ContractViolationError("server needs tau or n_tolerance configured")

    def record(self, device_id: str) -> _DeviceRecord:
        try:
            return self.devices[device_id]
        except KeyError:
            raise ProtocolError(f"unknown device id {device_id!r}") from None


def _measure_bank_keys(device: DeviceState) -> np.ndarray:
    """Noise-free responses of every bank group, as measured at enrollment."""
    bank = device.bank
    keys = np.empty((bank.bank_count, bank.m, bank.n), dtype=np.uint8)
    for b in range(bank.bank_count):
        for g in range(bank.m):
            keys[b, g] = eval_response_word(device.puf, bank.challenges[b, g], noisy=False)
    return keys


def enroll(server: ServerState, device: DeviceState, mode: str = "ground-truth",
           training_crps: int = 10_000, rng=None) -> None:
    """Register a device: parametric model, bank mirror, measured key material.

    ``mode='ground-truth'`` copies the delay weights (the manufacturing-test
    fiction); ``mode='lr'`` instead trains a logistic model on raw noisy
    pairs harvested from the device, for the case where the weights are
    withheld.
    """
    if device.device_id in server.devices:
        raise ProtocolError(f"duplicate enrollment for {device.device_id!r}")
    if mode == "ground-truth":
        model = GroundTruthModel(device.puf.omega, device.puf.n)
    elif mode == "lr":
        from .attacks import harvest_raw, train_lr

        ds = harvest_raw(device.puf, training_crps, noisy=True, rng=as_rng(rng))
        model = train_lr(ds)
    else:
        raise ContractViolationError(f"unknown enrollment mode {mode!r}")
    keys_per_bank = _measure_bank_keys(device)
    mirrored = ObfuscationSet(
        keys=keys_per_bank[device.bank.active_bank],
        bank_index=device.bank.active_bank,
    )
    server.devices[device.device_id] = _DeviceRecord(
        model=model,
        bank=device.bank,
        keys_per_bank=keys_per_bank,
        keys=mirrored,
    )


def _challenge_fingerprint(challenges: np.ndarray) -> bytes:
    return hashlib.sha256(np.ascontiguousarray(challenges).tobytes()).digest()


def server_issue(server: ServerState, device_id: str, set_updating: bool = True):
    """Open a round: either a key-update command or (challenges, R_a halves).

    The counter accumulates the n response bits each round exposes; when it
    reaches the modeling threshold for the current key-set size, an update
    command is returned instead of a session and the counter restarts.
    """
    rec = server.record(device_id)
    n = rec.keys.n
    m = rec.keys.m
    if set_updating and rec.counter >= n_min_rso(n, server.epsilon, m):
        return UpdateCommand(device_id=device_id)

    while True:
        challenges = random_challenges(n, n, rng=server.rng)
        print_ = _challenge_fingerprint(challenges)
        if print_ not in rec.used_challenges:
            rec.used_challenges.add(print_)
            break

    candidates_a, candidates_b = [], []
    r_primes = [rec.model.predict(challenges ^ key) for key in rec.keys.keys]
    for r_prime in r_primes:
        for key in rec.keys.keys:
            r = r_prime ^ key
            r_a, r_b = split_word(r)
            candidates_a.append(r_a)
            candidates_b.append(r_b)
    rec.counter += n
    server.open_sessions[device_id] = {
        "challenges": challenges,
        "candidates_b": candidates_b,
    }
    return IssuedSession(
        device_id=device_id, challenges=challenges, r_a_candidates=candidates_a
    )


def apply_update(server: ServerState, device: DeviceState) -> None:
    """Rotate keys on both sides; they stay bit-identical by construction."""
    rec = server.record(device.device_id)
    device.apply_update()
    idx = device.bank.active_bank
    rec.keys = ObfuscationSet(keys=rec.keys_per_bank[idx], bank_index=idx)
    rec.counter = 0
    rec.update_events += 1


def device_respond(device: DeviceState, challenges, r_a_candidates, tau: float):
    """Run the masked evaluation; answer with the second half on a match.

    Returns (exchange, r_hat_b or None, matched flag). Matching stops at
    the first received half within tau (outcome-identical to checking all).
    """
    exchange = obfuscate(
        device.oset, device.trng, device.puf, challenges,
        noisy=True, rng=device.noise_rng,
    )
    for r_a in r_a_candidates:
        if fhd(exchange.r_hat_a, r_a) <= tau:
            return exchange, exchange.r_hat_b, True
    return exchange, None, False


def server_verify(server: ServerState, device_id: str, r_hat_b) -> bool:
    """Close the round: accept iff any candidate second half is within tau."""
    rec = server.record(device_id)
    session = server.open_sessions.pop(device_id, None)
    if session is None:
        raise ProtocolError(f"no open session for {device_id!r}")
    if r_hat_b is None:
        return False
    tau = server.tau_for(rec.keys.n)
    return any(fhd(cand, r_hat_b) <= tau for cand in session["candidates_b"])


@dataclass
class CampaignReport:
    sessions: int
    accepts: int
    rejects: int
    device_rejects: int
    update_events: int
    exposed_bits: int
    counter_trajectory: list[int]
    transcripts: list[AuthTranscript]

    def to_json(self, config: dict | None = None) -> str:
        doc = {
            "sessions": self.sessions,
            "accepts": self.accepts,
            "rejects": self.rejects,
            "device_rejects": self.device_rejects,
            "update_events": self.update_events,
            "exposed_bits": self.exposed_bits,
            "counter_trajectory": self.counter_trajectory,
        }
        if config:
            doc["config"] = config
        return json.dumps(doc, indent=2, sort_keys=True)


def run_campaign(
    server: ServerState,
    devices,
    sessions: int,
    adversary=None,
    set_updating: bool = True,
    channel=None,
    keep_transcripts: bool = True,
) -> CampaignReport:
    """Drive N authentication rounds round-robin across the device population.

    ``adversary`` is called with every transcript (eavesdropper view for
    attack harvesting); ``channel`` may transform messages in flight
    (lossy/adversarial transport); updates happen between rounds and do not
    consume a session.
    """
    if not devices:
        raise ContractViolationError("need at least one device")
    devices = list(devices)
    deliver = channel if channel is not None else (lambda message: message)
    accepts = rejects = device_rejects = updates = 0
    exposed = 0
    trajectory: list[int] = []
    transcripts: list[AuthTranscript] = []

    completed = 0
    while completed < sessions:
        device = devices[completed % len(devices)]
        issued = server_issue(server, device.device_id, set_updating=set_updating)
        if isinstance(issued, UpdateCommand):
            apply_update(server, device)
            updates += 1
            continue
        issued = deliver(issued)
        tau = server.tau_for(server.record(device.device_id).keys.n)
        exchange, r_hat_b, matched = device_respond(
            device, issued.challenges, issued.r_a_candidates, tau
        )
        r_hat_b = deliver(r_hat_b)
        ok = server_verify(server, device.device_id, r_hat_b)
        rec = server.record(device.device_id)
        transcript = AuthTranscript(
            session=completed,
            device_id=device.device_id,
            challenges=issued.challenges,
            r_a_candidates=issued.r_a_candidates,
            exchange=exchange,
            r_hat_b=r_hat_b,
            device_verdict=matched,
            server_verdict=ok,
            counter=rec.counter,
        )
        if adversary is not None:
            adversary(transcript)
        if keep_transcripts:
            transcripts.append(transcript)
        if matched and ok:
            accepts += 1
        else:
            rejects += 1
            if not matched:
                device_rejects += 1
        trajectory.append(rec.counter)
        exposed += issued.challenges.shape[0]
        completed += 1

    return CampaignReport(
        sessions=sessions,
        accepts=accepts,
        rejects=rejects,
        device_rejects=device_rejects,
        update_events=updates,
        exposed_bits=exposed,
        counter_trajectory=trajectory,
        transcripts=transcripts,
    )


def transcript_to_record(t: AuthTranscript) -> dict:
    return {
        "session": t.session,
        "device_id": t.device_id,
        "challenges": [word_to_hex(c) for c in t.challenges],
        "r_a_candidates": [word_to_hex(r) for r in t.r_a_candidates],
        "r_hat": word_to_hex(t.exchange.r_hat),
        "r_hat_b": word_to_hex(t.r_hat_b) if t.r_hat_b is not None else None,
        "device_verdict": bool(t.device_verdict),
        "server_verdict": bool(t.server_verdict),
        "outcome": t.outcome,
        "counter": t.counter,
    }


def write_transcript_log(transcripts, path) -> None:
    with open(path, "w") as fh:
        for t in transcripts:
            fh.write(json.dumps(transcript_to_record(t)) + "\n")
