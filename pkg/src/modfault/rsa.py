"""Textbook RSA: key generation, signing with the left-to-right loop, verification."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass

from .arith import ScanOrder, mod_exp, mod_inv, random_prime


class KeyGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RsaKeyPair:
    n_bits: int
    N: int
    p: int
    q: int
    e: int
    d: int

    @property
    def phi(self) -> int:
        return (self.p - 1) * (self.q - 1)

    def check(self) -> None:
        """Raise ``ValueError`` if any key invariant is violated."""
        if self.N != self.p * self.q:
            raise ValueError("N != p*q")
        if self.p == self.q:
            raise ValueError("p == q")
        if self.N.bit_length() != self.n_bits:
            raise ValueError(f"N has {self.N.bit_length()} bits, expected {self.n_bits}")
        if math.gcd(self.e, self.phi) != 1:
            raise ValueError("e is not coprime to phi(N)")
        if self.e * self.d % self.phi != 1:
            raise ValueError("e*d != 1 mod phi(N)")

    def to_json(self) -> dict:
        return {k: str(getattr(self, k)) if k != "n_bits" else self.n_bits
                for k in ("n_bits", "N", "p", "q", "e", "d")}

    @classmethod
    def from_json(cls, record: dict) -> "RsaKeyPair":
        return cls(
            n_bits=int(record["n_bits"]),
            **{k: int(record[k]) for k in ("N", "p", "q", "e", "d")},
        )


@dataclass(frozen=True)
class PaddedMessage:
    """A message already mapped to ``0 < m_dot < N``."""

    m_dot: int
    raw: bytes = b""

    def to_json(self) -> dict:
        return {"m_dot": str(self.m_dot), "raw": self.raw.hex()}

    @classmethod
    def from_json(cls, record: dict) -> "PaddedMessage":
        return cls(int(record["m_dot"]), bytes.fromhex(record.get("raw", "")))


def key_from_primes(p: int, q: int, e: int) -> RsaKeyPair:
    N = p * q
    d = mod_inv(e, (p - 1) * (q - 1))
    return RsaKeyPair(n_bits=N.bit_length(), N=N, p=p, q=q, e=e, d=d)


def generate_key(n_bits: int, e: int = 65537, seed: int = 0, max_tries: int = 1000) -> RsaKeyPair:
    """Deterministic RSA key with an exactly ``n_bits``-bit modulus.

    Both primes have ``n_bits/2`` bits with the two top bits set, so their
    product always has exactly ``n_bits`` bits.
    """
    if n_bits < 16 or n_bits % 2:
        raise ValueError(f"n_bits must be even and >= 16, got {n_bits}")
    if e < 3 or e % 2 == 0:
        raise ValueError(f"e must be odd and >= 3, got {e}")
    rng = random.Random(seed)
    half = n_bits // 2
    for _ in range(max_tries):
        p = random_prime(half, rng)
        q = random_prime(half, rng)
        if p == q or math.gcd(e, (p - 1) * (q - 1)) != 1:
            continue
        key = key_from_primes(p, q, e)
        key.check()
        return key
    raise KeyGenerationError(f"no suitable primes for e={e} after {max_tries} tries")


def encode_message(raw: bytes, N: int, hashed: bool = False) -> PaddedMessage:
    """Map ``raw`` to ``m_dot``: the integer value itself, or a SHA-256 expansion reduced mod N."""
    if hashed:
        width = (N.bit_length() + 7) // 8 + 16
        stream = b"".join(hashlib.sha256(raw + i.to_bytes(4, "big")).digest()
                          for i in range(width // 32 + 1))
        m = int.from_bytes(stream[:width], "big") % N
    else:
        m = int.from_bytes(raw, "big")
    if not 0 < m < N:
        raise ValueError("encoded message must satisfy 0 < m_dot < N")
    return PaddedMessage(m, raw)


def random_message(N: int, rng: random.Random) -> PaddedMessage:
    """Uniform ``m_dot`` in ``[2, N)`` coprime to ``N`` (redrawn otherwise)."""
    while True:
        m = rng.randrange(2, N)
        if math.gcd(m, N) == 1:
            return PaddedMessage(m, m.to_bytes((m.bit_length() + 7) // 8, "big"))


def sign(msg: PaddedMessage, key: RsaKeyPair) -> int:
    return mod_exp(msg.m_dot, key.d, key.N, ScanOrder.L2R)


def verify(S: int, msg: PaddedMessage, N: int, e: int) -> bool:
    return mod_exp(S, e, N) == msg.m_dot % N
