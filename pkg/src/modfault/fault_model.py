"""Faulty-modulus neighbourhoods, prime censuses and prime-density estimates.

A w-bit transient fault XORs a nonzero mask into one aligned w-bit word of
the modulus. The neighbourhood of ``N`` therefore has ``(n/w)(2^w - 1)``
members, indexed here by a flat position ``idx = word_index*(2^w-1) + mask-1``.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

from .arith import ArithmeticDomainError, is_probable_prime

LN2 = math.log(2)


@dataclass(frozen=True)
class FaultModel:
    word_width: int
    n_bits: int

    def __post_init__(self):
        if not 1 <= self.word_width <= 32:
            raise ValueError(f"unsupported word width {self.word_width}")
        if self.n_bits <= 0 or self.n_bits % self.word_width:
            raise ValueError(f"word width {self.word_width} must divide n_bits={self.n_bits}")

    @property
    def n_words(self) -> int:
        return self.n_bits // self.word_width

    @property
    def masks_per_word(self) -> int:
        return (1 << self.word_width) - 1

    @property
    def size(self) -> int:
        """Number of faulty moduli (zero mask excluded)."""
        return self.n_words * self.masks_per_word

    @property
    def nominal_size(self) -> int:
        """Neighbourhood size counting the zero mask, ``(n/w) * 2^w``."""
        return self.n_words << self.word_width

    def locate(self, idx: int) -> tuple[int, int]:
        """Flat index -> ``(word_index, mask)``."""
        word_index, rem = divmod(idx, self.masks_per_word)
        return word_index, rem + 1

    def apply(self, N: int, word_index: int, mask: int) -> int:
        return N ^ (mask << (self.word_width * word_index))


def _check_modulus(N: int, model: FaultModel) -> None:
    if N.bit_length() != model.n_bits:
        raise ValueError(f"N has {N.bit_length()} bits, model expects {model.n_bits}")


def enumerate_faulty_moduli(N: int, model: FaultModel) -> Iterator[tuple[int, int, int]]:
    """Yield ``(n_hat, word_index, mask)`` in (index, mask) order."""
    _check_modulus(N, model)
    for word_index in range(model.n_words):
        shift = model.word_width * word_index
        for mask in range(1, model.masks_per_word + 1):
            yield N ^ (mask << shift), word_index, mask


# --------------------------------------------------------------------------
# census


def is_prime_trial(x: int) -> bool:
    """Primality by trial division. Only sensible for small ``x``."""
    if x < 2:
        return False
    if x % 2 == 0:
        return x == 2
    return all(x % f for f in range(3, math.isqrt(x) + 1, 2))


def _candidate_seed(seed: int, idx: int) -> int:
    return (seed << 48) + idx


def _scan(task: tuple) -> list[int]:
    """Worker: flat indices (a range or list) -> those whose modulus is prime."""
    N, word_width, n_bits, indices, rounds, seed, oracle = task
    model = FaultModel(word_width, n_bits)
    hits = []
    for idx in indices:
        word_index, mask = model.locate(idx)
        n_hat = model.apply(N, word_index, mask)
        if oracle:
            ok = is_prime_trial(n_hat)
        else:
            ok = is_probable_prime(n_hat, rounds, _candidate_seed(seed, idx))
        if ok:
            hits.append(idx)
    return hits


def _chunks(indices: Sequence[int], parts: int) -> list[Sequence[int]]:
    step = max(1, -(-len(indices) // parts))
    return [indices[i : i + step] for i in range(0, len(indices), step)]


def scan_primes(
    N: int,
    model: FaultModel,
    indices: Sequence[int] | None = None,
    rounds: int = 64,
    seed: int = 0,
    workers: int = 1,
    oracle: bool = False,
) -> list[int]:
    """Sorted flat indices of prime faulty moduli among ``indices`` (default: all).

    Each candidate's Miller-Rabin bases depend only on ``seed`` and its flat
    index, so the result does not depend on ``workers``.
    """
    _check_modulus(N, model)
    if indices is None:
        indices = range(model.size)
    if workers <= 1 or len(indices) < 2 * workers:
        return sorted(_scan((N, model.word_width, model.n_bits, indices, rounds, seed, oracle)))
    tasks = [(N, model.word_width, model.n_bits, chunk, rounds, seed, oracle)
             for chunk in _chunks(indices, 4 * workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        hits = [i for part in pool.map(_scan, tasks) for i in part]
    return sorted(hits)


@dataclass
class CensusReport:
    modulus: int
    model: FaultModel
    total_candidates: int
    prime_count: int
    per_word_index: list[int]
    per_word_candidates: list[int]
    sampled: bool = False
    sample_size: int = 0

    @property
    def tested(self) -> int:
        return sum(self.per_word_candidates)

    @property
    def density(self) -> float:
        return self.prime_count / self.tested if self.tested else 0.0


def census_primes(
    N: int,
    model: FaultModel,
    rounds: int = 64,
    sample: int | None = None,
    seed: int = 0,
    workers: int = 1,
    oracle: bool = False,
) -> CensusReport:
    """Count primes among the faulty moduli of ``N``.

    With ``sample`` set, a uniform sample without replacement is tested and
    the raw counts are reported (no rescaling).
    """
    _check_modulus(N, model)
    total = model.size
    if sample is None:
        indices: Sequence[int] = range(total)
    else:
        if not 0 < sample <= total:
            raise ValueError(f"sample must be in [1, {total}], got {sample}")
        indices = sorted(random.Random(seed).sample(range(total), sample))
    hits = scan_primes(N, model, indices, rounds, seed, workers, oracle)

    per_word = [0] * model.n_words
    for idx in hits:
        per_word[idx // model.masks_per_word] += 1
    if sample is None:
        per_word_candidates = [model.masks_per_word] * model.n_words
    else:
        per_word_candidates = [0] * model.n_words
        for idx in indices:
            per_word_candidates[idx // model.masks_per_word] += 1
    return CensusReport(
        modulus=N,
        model=model,
        total_candidates=total,
        prime_count=len(hits),
        per_word_index=per_word,
        per_word_candidates=per_word_candidates,
        sampled=sample is not None,
        sample_size=len(indices),
    )


# --------------------------------------------------------------------------
# analytic estimates


@dataclass(frozen=True)
class DensityBounds:
    t: int
    inf: float
    sup: float

    @property
    def midpoint(self) -> float:
        return (self.inf + self.sup) / 2


def _bound_coefficients(c: float, low: bool) -> tuple[float, ...]:
    # Numerators of 2*pi(2^t)/2^t - pi(2^(t-1))/2^(t-1) with the Dusart-type
    # bounds (1.8 / 2.51) expanded over t^3 (t-1)^3 c^3, c = ln 2.
    if low:
        return (c * c, -c * (4 * c - 1), (500 * c * c - 500 * c + 109) / 100,
                -2 * (5 * c * c - 15 * c + 27) / 5, -2 * (5 * c - 27) / 5, -18 / 5)
    return (c * c, -c * (4 * c - 1), (250 * c * c - 250 * c + 161) / 50,
            -(100 * c * c - 300 * c + 753) / 50, -(100 * c - 753) / 50, -251 / 50)


# The same coefficients rounded to three or four digits.
ROUNDED_INF = (0.480, -1.229, 0.0265, -7.602, 9.414, -3.600)
ROUNDED_SUP = (0.480, -1.229, 2.157, -11.862, 13.674, -5.02)


def _horner(coeffs: Sequence[float], t: float) -> float:
    acc = 0.0
    for a in coeffs:
        acc = acc * t + a
    return acc


def density_bounds(t: int, rounded: bool = False) -> DensityBounds:
    """Bounds on the probability that a random ``t``-bit integer is prime.

    Degree-5 numerator over ``t^3 (t-1)^3 ln^3 2``. By default the exact
    coefficients (functions of ln 2) are used; ``rounded=True`` uses the
    three-digit coefficients, whose leading 0.480 ~ ln^2 2 shifts the
    result by about 0.1% at t = 1024.
    """
    if t < 19:
        raise ArithmeticDomainError(f"bounds valid for t >= 19, got {t}")
    if rounded:
        lo, hi = ROUNDED_INF, ROUNDED_SUP
    else:
        lo, hi = _bound_coefficients(LN2, True), _bound_coefficients(LN2, False)
    den = t**3 * (t - 1) ** 3 * LN2**3
    return DensityBounds(t, _horner(lo, t) / den, _horner(hi, t) / den)


def prime_probability(t: int) -> float:
    """Midpoint of the density bounds, used for all means and intervals."""
    return density_bounds(t).midpoint


def _log_binom_pmf(i: int, k: int, logp: float, logq: float) -> float:
    return math.lgamma(k + 1) - math.lgamma(i + 1) - math.lgamma(k - i + 1) + i * logp + (k - i) * logq


def binomial_tails(k: int, p: float, a: int, b: int) -> tuple[float, float]:
    """``(P[X < a], P[X > b])`` for ``X ~ B(k, p)`` by summing terms away from the mode.

    Terms are accumulated in log space from the interval edge outwards and
    stop once they no longer change the sum.
    """
    logp, logq = math.log(p), math.log1p(-p)

    def tail(start: int, stop: int, step: int) -> float:
        total = 0.0
        for i in range(start, stop, step):
            term = math.exp(_log_binom_pmf(i, k, logp, logq))
            total += term
            if term < total * 1e-18:
                break
        return total

    lower = tail(a - 1, -1, -1) if a > 0 else 0.0
    upper = tail(b + 1, k + 1, 1) if b < k else 0.0
    return lower, upper


def prime_count_interval(k: int, t: int, confidence: float) -> tuple[int, int, float]:
    """Equal-tailed interval ``[a, b]`` for the number of primes among ``k`` random t-bit values.

    ``a`` is the largest value with ``P[X < a] <= (1-c)/2`` and ``b`` the
    smallest with ``P[X > b] <= (1-c)/2``, so ``P[a <= X <= b] >= c``.
    Returns ``(a, b, k * pr_t)``.
    """
    if not 0 < confidence < 1:
        raise ValueError("confidence must be in (0, 1)")
    if k == 0:
        return 0, 0, 0.0
    p = prime_probability(t)
    half_alpha = (1 - confidence) / 2
    logp, logq = math.log(p), math.log1p(-p)
    mode = min(k, int((k + 1) * p))
    # tails beyond 60 sd underflow to exactly 0.0 in double precision
    reach = int(60 * math.sqrt(max(k * p * (1 - p), 1.0))) + 1

    a, total = mode, 0.0
    for i in range(max(0, mode - reach), mode + 1):
        total += math.exp(_log_binom_pmf(i, k, logp, logq))
        if total > half_alpha:
            a = i
            break
    b, total = mode, 0.0
    for i in range(min(k, mode + reach), mode - 1, -1):
        total += math.exp(_log_binom_pmf(i, k, logp, logq))
        if total > half_alpha:
            b = i
            break
    return a, b, k * p


def expected_fault_count(t: int) -> tuple[float, float, float]:
    """Mean number of random faults until a prime modulus (geometric law).

    Returns ``(1/Sup(t), 1/Inf(t), t ln^3 2 / 0.480)``.
    """
    bounds = density_bounds(t)
    return 1 / bounds.sup, 1 / bounds.inf, t * LN2**3 / 0.480


def parity_adjusted_expectation(N: int, model: FaultModel) -> float:
    """Expected prime count in the neighbourhood of an odd ``N``.

    Only masks with bit 0 set in word 0 make the faulty modulus even; every
    other candidate is odd and prime with probability about ``2 pr_t``.
    """
    if N % 2 == 0:
        raise ValueError("N must be odd")
    odd = model.size - (1 << (model.word_width - 1))
    return odd * 2 * prime_probability(model.n_bits)


# --------------------------------------------------------------------------
# prime dictionary


@dataclass(frozen=True)
class DictEntry:
    n_hat: int
    word_index: int
    mask: int


@dataclass
class PrimeDictionary:
    source_modulus: int
    model: FaultModel
    entries: list[DictEntry]
    capacity_cap: int | None = None
    truncated: bool = False
    rounds: int = 64

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def moduli(self) -> list[int]:
        return [e.n_hat for e in self.entries]

    def to_json(self) -> dict:
        return {
            "source_modulus": str(self.source_modulus),
            "word_width": self.model.word_width,
            "n_bits": self.model.n_bits,
            "capacity_cap": self.capacity_cap,
            "truncated": self.truncated,
            "rounds": self.rounds,
            "entries": [{"n_hat": str(e.n_hat), "word_index": e.word_index, "mask": e.mask}
                        for e in self.entries],
        }

    @classmethod
    def from_json(cls, record: dict) -> "PrimeDictionary":
        return cls(
            source_modulus=int(record["source_modulus"]),
            model=FaultModel(record["word_width"], record["n_bits"]),
            entries=[DictEntry(int(e["n_hat"]), e["word_index"], e["mask"]) for e in record["entries"]],
            capacity_cap=record.get("capacity_cap"),
            truncated=record.get("truncated", False),
            rounds=record.get("rounds", 64),
        )


def build_prime_dict(
    N: int,
    model: FaultModel,
    cap: int | None = None,
    rounds: int = 64,
    seed: int = 0,
    workers: int = 1,
) -> PrimeDictionary:
    """All probable-prime faulty moduli of ``N`` in enumeration order, truncated at ``cap``."""
    hits = scan_primes(N, model, None, rounds, seed, workers)
    truncated = cap is not None and len(hits) > cap
    if truncated:
        hits = hits[:cap]
    entries = []
    for idx in hits:
        word_index, mask = model.locate(idx)
        entries.append(DictEntry(model.apply(N, word_index, mask), word_index, mask))
    return PrimeDictionary(N, model, entries, cap, truncated, rounds)
