"""Arbitrary-precision modular arithmetic.

Exponentiation in both scan orders, Miller-Rabin, Euler's criterion,
Tonelli-Shanks square roots and square roots modulo smooth composites.
All functions are pure: randomness is drawn only from an explicit seed.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from itertools import product as cartesian

try:
    import gmpy2
except ImportError:  # pragma: no cover
    gmpy2 = None


def powmod(base: int, exponent: int, modulus: int) -> int:
    """Fast ``pow(base, exponent, modulus)`` for non-instrumented call sites."""
    if gmpy2 is not None:
        return int(gmpy2.powmod(base, exponent, modulus))
    return pow(base, exponent, modulus)


class ArithmeticDomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class NotInvertible(ArithmeticError):
    def __init__(self, a: int, modulus: int, gcd: int):
        super().__init__(f"{a} is not invertible modulo {modulus} (gcd={gcd})")
        self.a = a
        self.modulus = modulus
        self.gcd = gcd


class NotAResidue(ArithmeticError):
    """Raised when a square root is requested for a quadratic non-residue."""


class UnsupportedModulus(ArithmeticDomainError):
    pass


class ScanOrder(enum.Enum):
    L2R = "L2R"
    R2L = "R2L"


class Residuosity(enum.Enum):
    RESIDUE = "Residue"
    NON_RESIDUE = "NonResidue"
    ZERO_DIVISOR = "ZeroDivisor"


# --------------------------------------------------------------------------
# exponentiation


def l2r_run(register: int, base: int, exponent: int, hi: int, lo: int, modulus: int) -> int:
    """Run iterations ``i = hi-1 .. lo`` of the left-to-right loop.

    Each iteration squares the register and multiplies by ``base`` when bit
    ``i`` of ``exponent`` is set. The register is used as-is (it is not
    reduced before the first square), so callers can carry a value reduced
    under one modulus into a run under another.
    """
    a = register
    for i in range(hi - 1, lo - 1, -1):
        a = (a * a) % modulus
        if (exponent >> i) & 1:
            a = (a * base) % modulus
    return a


def _r2l(base: int, exponent: int, modulus: int) -> int:
    a = 1
    b = base % modulus
    for i in range(exponent.bit_length()):
        if (exponent >> i) & 1:
            a = (a * b) % modulus
        b = (b * b) % modulus
    return a


def mod_exp(base: int, exponent: int, modulus: int, order: ScanOrder = ScanOrder.L2R) -> int:
    """``base**exponent % modulus`` by binary exponentiation."""
    if modulus < 2:
        raise ArithmeticDomainError(f"modulus must be >= 2, got {modulus}")
    if exponent < 0 or base < 0:
        raise ArithmeticDomainError("base and exponent must be non-negative")
    if order is ScanOrder.R2L:
        return _r2l(base, exponent, modulus)
    return l2r_run(1, base % modulus, exponent, exponent.bit_length(), 0, modulus) % modulus


def egcd(a: int, b: int) -> tuple[int, int, int]:
    """Return ``(g, x, y)`` with ``a*x + b*y == g == gcd(a, b)``."""
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def mod_inv(a: int, modulus: int) -> int:
    if modulus < 2:
        raise ArithmeticDomainError(f"modulus must be >= 2, got {modulus}")
    if gmpy2 is not None and modulus.bit_length() > 64:
        try:
            return int(gmpy2.invert(a, modulus))
        except ZeroDivisionError:
            raise NotInvertible(a, modulus, math.gcd(a, modulus)) from None
    g, x, _ = egcd(a % modulus, modulus)
    if g != 1:
        raise NotInvertible(a, modulus, g)
    return x % modulus


# --------------------------------------------------------------------------
# primality


def small_primes(bound: int) -> list[int]:
    """Primes ``<= bound`` by the sieve of Eratosthenes."""
    if bound < 2:
        return []
    sieve = bytearray([1]) * (bound + 1)
    sieve[0] = sieve[1] = 0
    for i in range(2, math.isqrt(bound) + 1):
        if sieve[i]:
            sieve[i * i :: i] = bytearray(len(range(i * i, bound + 1, i)))
    return [i for i, flag in enumerate(sieve) if flag]


_SMALL_PRIMES = small_primes(2000)
_PRIMORIAL = math.prod(_SMALL_PRIMES)
# Deterministic Miller-Rabin witness set, exact for n < 3.3e24.
_DETERMINISTIC_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def _mr_round(n: int, d: int, s: int, a: int) -> bool:
    x = powmod(a, d, n)
    if x == 1 or x == n - 1:
        return True
    for _ in range(s - 1):
        x = x * x % n
        if x == n - 1:
            return True
    return False


def is_probable_prime(x: int, rounds: int = 64, seed: int = 0) -> bool:
    """Miller-Rabin test.

    Below 2**64 the fixed witness set makes the answer exact. Above that,
    ``rounds`` bases are drawn from ``random.Random(seed)``.
    """
    if rounds < 1:
        raise ArithmeticDomainError("rounds must be >= 1")
    if x < 2:
        return False
    if x in (2, 3):
        return True
    if x % 2 == 0:
        return False
    if x <= _SMALL_PRIMES[-1]:
        return x in _SMALL_PRIME_SET
    if math.gcd(x, _PRIMORIAL) != 1:
        return False
    d, s = x - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    if x < 1 << 64:
        return all(_mr_round(x, d, s, a) for a in _DETERMINISTIC_BASES)
    rng = random.Random(seed)
    return all(_mr_round(x, d, s, rng.randrange(2, x - 1)) for _ in range(rounds))


_SMALL_PRIME_SET = frozenset(_SMALL_PRIMES)


def random_prime(bits: int, rng: random.Random, top_bits: int = 2, rounds: int = 64) -> int:
    """Random prime of exactly ``bits`` bits with the ``top_bits`` leading bits set."""
    if bits < top_bits + 1:
        raise ArithmeticDomainError(f"cannot draw a {bits}-bit prime")
    mask = ((1 << top_bits) - 1) << (bits - top_bits)
    while True:
        c = rng.getrandbits(bits) | mask | 1
        if is_probable_prime(c, rounds, seed=rng.getrandbits(32)):
            return c


# --------------------------------------------------------------------------
# quadratic residues and square roots


def euler_qr_test(a: int, p: int) -> Residuosity:
    """Classify ``a`` modulo the odd prime ``p`` by Euler's criterion."""
    if p < 3 or p % 2 == 0:
        raise ArithmeticDomainError(f"p must be an odd prime, got {p}")
    a %= p
    if a == 0:
        return Residuosity.ZERO_DIVISOR
    if powmod(a, (p - 1) >> 1, p) == 1:
        return Residuosity.RESIDUE
    return Residuosity.NON_RESIDUE


def tonelli_shanks_sqrt(a: int, p: int, seed: int = 0) -> int:
    """Square root of ``a`` modulo the odd prime ``p``.

    Returns the root the algorithm produces; the other one is ``p - r``.
    The quadratic non-residue used as generator is found by random draws
    from ``random.Random(seed)``.
    """
    a %= p
    status = euler_qr_test(a, p)
    if status is Residuosity.ZERO_DIVISOR:
        return 0
    if status is Residuosity.NON_RESIDUE:
        raise NotAResidue(f"{a} is not a quadratic residue modulo {p}")
    if p % 4 == 3:
        return powmod(a, (p + 1) >> 2, p)

    # p - 1 = 2**e * r with r odd
    r, e = p - 1, 0
    while r % 2 == 0:
        r //= 2
        e += 1

    rng = random.Random(seed)
    while True:
        n = rng.randrange(2, p)
        if powmod(n, (p - 1) >> 1, p) == p - 1:
            break

    z = powmod(n, r, p)  # generator of the 2-Sylow subgroup
    x = powmod(a, (r + 1) >> 1, p)
    b = powmod(a, r, p)
    m = e
    while b != 1:
        # least i with b**(2**i) == 1
        i, t = 0, b
        while t != 1:
            t = t * t % p
            i += 1
        g = powmod(z, 1 << (m - i - 1), p)
        x = x * g % p
        z = g * g % p
        b = b * z % p
        m = i
    return x


@dataclass(frozen=True)
class Factorization:
    """Prime-power factorization ``prod(p**k)``.

    ``probable_cofactor`` names a factor above the trial-division bound
    that was only shown to be a probable prime.
    """

    factors: tuple[tuple[int, int], ...]
    probable_cofactor: int | None = field(default=None)

    def __post_init__(self):
        primes = [p for p, _ in self.factors]
        if len(set(primes)) != len(primes):
            raise ArithmeticDomainError("factor primes must be distinct")
        if any(k < 1 for _, k in self.factors):
            raise ArithmeticDomainError("exponents must be positive")

    @property
    def product(self) -> int:
        return math.prod(p**k for p, k in self.factors)

    @classmethod
    def of(cls, mapping: dict[int, int]) -> "Factorization":
        return cls(tuple(sorted(mapping.items())))


def _sqrt_mod_prime_power(a: int, p: int, k: int) -> set[int]:
    if euler_qr_test(a, p) is not Residuosity.RESIDUE:
        return set()
    x = tonelli_shanks_sqrt(a, p)
    pk = p
    for _ in range(1, k):
        # Hensel step: x <- x - (x^2 - a) / (2x) modulo the next power
        pk *= p
        x = (x - (x * x - a) * mod_inv(2 * x, pk)) % pk
    return {x, (pk - x) % pk}


def crt(residues: list[int], moduli: list[int]) -> int:
    """Combine ``x = r_i mod m_i`` for pairwise coprime ``m_i``."""
    total = math.prod(moduli)
    x = 0
    for r, m in zip(residues, moduli):
        c = total // m
        x += r * c * mod_inv(c, m)
    return x % total


def sqrt_mod_smooth(a: int, f: Factorization) -> set[int]:
    """All square roots of ``a`` modulo ``f.product``.

    Per-prime Tonelli-Shanks, Hensel lifting to each prime power, then CRT
    over every sign combination. Empty when ``a`` is a non-residue modulo
    some prime factor.
    """
    modulus = f.product
    if any(p == 2 for p, _ in f.factors):
        raise UnsupportedModulus("moduli with a factor of 2 are not supported")
    if math.gcd(a, modulus) != 1:
        raise UnsupportedModulus(f"{a} shares a factor with {modulus}")
    if modulus == 1:
        return {0}
    per_factor = []
    moduli = []
    for p, k in f.factors:
        roots = _sqrt_mod_prime_power(a % p**k, p, k)
        if not roots:
            return set()
        per_factor.append(sorted(roots))
        moduli.append(p**k)
    return {crt(list(combo), moduli) for combo in cartesian(*per_factor)}


def trial_factor_smooth(x: int, bound: int, rounds: int = 64) -> Factorization | None:
    """Factor ``x`` by trial division up to ``bound``.

    A probable-prime cofactor above the bound is kept and flagged; a
    composite cofactor means ``x`` is not smooth enough and ``None`` is
    returned.
    """
    if x < 2 or bound < 2:
        raise ArithmeticDomainError("x and bound must be >= 2")
    if is_probable_prime(x, rounds):
        if x <= bound:
            return Factorization(((x, 1),))
        return Factorization(((x, 1),), probable_cofactor=x)
    found: dict[int, int] = {}
    rest = x
    for p in small_primes(bound):
        if p * p > rest:
            break
        while rest % p == 0:
            found[p] = found.get(p, 0) + 1
            rest //= p
    cofactor = None
    if rest > 1:
        if rest <= bound or is_probable_prime(rest, rounds):
            if rest > bound:
                cofactor = rest
            found[rest] = found.get(rest, 0) + 1
        else:
            return None
    return Factorization(tuple(sorted(found.items())), probable_cofactor=cofactor)
