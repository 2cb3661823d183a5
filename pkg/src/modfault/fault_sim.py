"""Faulty signatures from a modulus swap during the left-to-right loop.

The fault lands ``j`` iterations before the end: iterations ``n-1 .. j`` run
under ``N``; from the square of iteration ``j-1`` on, every reduction uses
``N_hat``. The register carried across the swap is reduced modulo ``N``
only, exactly as a device would hold it.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, replace
from typing import Sequence

from .arith import l2r_run, mod_exp
from .fault_model import FaultModel, PrimeDictionary, build_prime_dict
from .rsa import PaddedMessage, RsaKeyPair, sign


class CampaignError(RuntimeError):
    pass


@dataclass(frozen=True)
class GroundTruth:
    n_hat: int
    word_index: int | None = None
    mask: int | None = None
    a_exceeds_nhat: bool = False

    def to_json(self) -> dict:
        return {"n_hat": str(self.n_hat), "word_index": self.word_index,
                "mask": self.mask, "a_exceeds_nhat": self.a_exceeds_nhat}

    @classmethod
    def from_json(cls, r: dict) -> "GroundTruth":
        return cls(int(r["n_hat"]), r.get("word_index"), r.get("mask"), bool(r.get("a_exceeds_nhat")))


@dataclass(frozen=True)
class FaultySignature:
    s_hat: int
    step_j: int
    message: PaddedMessage
    ground_truth: GroundTruth | None = None

    def redacted(self) -> "FaultySignature":
        return replace(self, ground_truth=None)


def register_before_fault(m_dot: int, d: int, N: int, j: int) -> int:
    """The register entering the faulted phase: ``m_dot^(d >> j) mod N``."""
    return mod_exp(m_dot, d >> j, N)


def sign_with_fault(
    msg: PaddedMessage,
    key: RsaKeyPair,
    n_hat: int,
    j: int,
    word_index: int | None = None,
    mask: int | None = None,
) -> FaultySignature:
    if not 0 <= j <= key.n_bits:
        raise ValueError(f"j must be in [0, {key.n_bits}], got {j}")
    if n_hat < 2:
        raise ValueError("n_hat must be >= 2")
    m, d = msg.m_dot, key.d
    a = l2r_run(1, m % key.N, d, key.n_bits, j, key.N)
    s_hat = l2r_run(a, m, d, j, 0, n_hat)
    truth = GroundTruth(n_hat, word_index, mask, a_exceeds_nhat=j > 0 and a >= n_hat)
    return FaultySignature(s_hat, j, msg, truth)


@dataclass
class CampaignLog:
    """Correct signature plus faulty signatures grouped by injection step."""

    key_id: str
    N: int
    e: int
    n_bits: int
    word_width: int
    message: PaddedMessage
    signature: int
    groups: dict[int, list[FaultySignature]]
    seed: int
    force_prime: bool = False

    @property
    def steps(self) -> list[int]:
        return sorted(self.groups)

    def check(self) -> None:
        steps = list(self.groups)
        if steps != sorted(set(steps)):
            raise ValueError("steps must be strictly increasing")
        for j, sigs in self.groups.items():
            if not sigs:
                raise ValueError(f"empty group at step {j}")
            if any(s.step_j != j for s in sigs):
                raise ValueError(f"group {j} holds signatures of another step")

    def redacted(self) -> "CampaignLog":
        return replace(self, groups={j: [s.redacted() for s in sigs] for j, sigs in self.groups.items()})

    @property
    def has_ground_truth(self) -> bool:
        return any(s.ground_truth is not None for sigs in self.groups.values() for s in sigs)

    def to_json(self) -> dict:
        out = {
            "key_id": self.key_id,
            "N": str(self.N),
            "e": str(self.e),
            "n_bits": self.n_bits,
            "word_width": self.word_width,
            "message": self.message.to_json(),
            "signature": str(self.signature),
            "seed": self.seed,
            "force_prime": self.force_prime,
            "steps": [
                {"j": j, "faulty": [str(s.s_hat) for s in self.groups[j]]}
                for j in self.steps
            ],
        }
        if self.has_ground_truth:
            # kept apart so a redacting tool only has to drop one key
            out["ground_truth"] = {
                str(j): [s.ground_truth.to_json() if s.ground_truth else None for s in self.groups[j]]
                for j in self.steps
            }
        return out

    @classmethod
    def from_json(cls, r: dict) -> "CampaignLog":
        message = PaddedMessage.from_json(r["message"])
        truth = r.get("ground_truth", {})
        groups = {}
        for step in r["steps"]:
            j = step["j"]
            gts = truth.get(str(j), [None] * len(step["faulty"]))
            groups[j] = [
                FaultySignature(int(s), j, message, GroundTruth.from_json(g) if g else None)
                for s, g in zip(step["faulty"], gts)
            ]
        return cls(
            key_id=r["key_id"], N=int(r["N"]), e=int(r["e"]), n_bits=r["n_bits"],
            word_width=r["word_width"], message=message, signature=int(r["signature"]),
            groups=groups, seed=r["seed"], force_prime=r.get("force_prime", False),
        )


def key_id(key: RsaKeyPair) -> str:
    return hashlib.sha256(str(key.N).encode()).hexdigest()[:16]


def window_schedule(n_bits: int, l: int) -> list[int]:
    """Steps ``l, 2l, ...`` strictly below ``n_bits``."""
    return list(range(l, n_bits, l))


def run_campaign(
    key: RsaKeyPair,
    msg: PaddedMessage,
    steps: Sequence[int],
    faults_per_step: int,
    model: FaultModel,
    seed: int = 0,
    force_prime: bool = False,
    dictionary: PrimeDictionary | None = None,
) -> CampaignLog:
    """Inject ``faults_per_step`` faults at every step.

    Random mode draws ``(word_index, mask)`` uniformly with a nonzero mask.
    ``force_prime`` draws uniformly from the prime dictionary instead, which
    models an attacker who keeps faulting until the modulus is prime.
    """
    steps = list(steps)
    if steps != sorted(set(steps)):
        raise ValueError("steps must be strictly increasing")
    if faults_per_step < 1:
        raise ValueError("faults_per_step must be >= 1")
    rng = random.Random(seed)
    if force_prime:
        if dictionary is None:
            dictionary = build_prime_dict(key.N, model)
        if not dictionary.entries:
            raise CampaignError("force_prime requested but the prime dictionary is empty")
    groups: dict[int, list[FaultySignature]] = {}
    for j in steps:
        sigs = []
        for _ in range(faults_per_step):
            if force_prime:
                entry = rng.choice(dictionary.entries)
                word_index, mask, n_hat = entry.word_index, entry.mask, entry.n_hat
            else:
                word_index = rng.randrange(model.n_words)
                mask = rng.randrange(1, model.masks_per_word + 1)
                n_hat = model.apply(key.N, word_index, mask)
            sigs.append(sign_with_fault(msg, key, n_hat, j, word_index, mask))
        groups[j] = sigs
    log = CampaignLog(
        key_id=key_id(key), N=key.N, e=key.e, n_bits=key.n_bits, word_width=model.word_width,
        message=msg, signature=sign(msg, key), groups=groups, seed=seed, force_prime=force_prime,
    )
    log.check()
    return log
