"""Private-exponent recovery from (correct, faulty) signature pairs.

For a fault ``j`` iterations before the end of the left-to-right loop,

    S_hat = A^(2^j) * m^(d mod 2^j)  (mod N_hat)

with ``A`` the register held under ``N``. Guessing the next window of ``d``
and the faulty modulus from a dictionary of primes, the attacker strips
``m^d'``, takes ``j`` successive square roots modulo the prime, squares
back modulo ``N`` and compares against the correct signature.
"""

from __future__ import annotations

import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from .arith import (
    NotInvertible,
    Residuosity,
    euler_qr_test,
    mod_inv,
    powmod,
    tonelli_shanks_sqrt,
)
from .fault_model import PrimeDictionary
from .fault_sim import CampaignLog, FaultySignature


class BranchOverflow(RuntimeError):
    def __init__(self, n_hat: int, live: int, cap: int):
        super().__init__(f"{live} live root branches modulo {n_hat} exceed cap {cap}")
        self.n_hat = n_hat
        self.live = live
        self.cap = cap


class WindowFailure(RuntimeError):
    def __init__(self, report: "WindowReport"):
        super().__init__(f"no candidate accepted at step {report.j}")
        self.report = report


@dataclass
class AttackParams:
    window_l: int = 4
    dictionary: PrimeDictionary | None = None
    branch_cap: int = 1 << 12
    mr_rounds: int = 64
    root_method: str = "sylow"

    def __post_init__(self):
        if self.window_l < 1:
            raise ValueError("window_l must be >= 1")
        if self.branch_cap < 1:
            raise ValueError("branch_cap must be >= 1")
        if self.root_method not in ("sylow", "levels"):
            raise ValueError(f"unknown root method {self.root_method!r}")


@dataclass(frozen=True)
class Acceptance:
    step_j: int
    n_hat: int
    window_value: int


@dataclass(frozen=True)
class RecoveryState:
    d_low: int = 0
    bits_known: int = 0
    accepted: tuple[Acceptance, ...] = ()
    collisions: int = 0

    def __post_init__(self):
        if self.d_low >= 1 << self.bits_known:
            raise ValueError("d_low must fit in bits_known bits")


@dataclass
class RootStats:
    tests: int = 0
    prunes: int = 0
    overflows: int = 0


@dataclass
class WindowReport:
    j: int
    width: int
    signatures_tried: int = 0
    candidates: int = 0
    skipped_not_invertible: int = 0
    residuosity_tests: int = 0
    residuosity_prunes: int = 0
    roots_checked: int = 0
    branch_overflows: int = 0
    collisions: int = 0
    accepted_value: int | None = None
    accepted_n_hat: int | None = None
    accepted_signature: int | None = None
    seconds: float = 0.0

    def to_json(self) -> dict:
        out = asdict(self)
        if self.accepted_n_hat is not None:
            out["accepted_n_hat"] = str(self.accepted_n_hat)
        return out


# --------------------------------------------------------------------------
# building blocks


def residual(s_hat: int, m_dot: int, d_prime: int, n_hat: int) -> int:
    """``S_hat * m_dot^(-d') mod N_hat``. Raises ``NotInvertible`` if ``m_dot = 0 mod N_hat``."""
    return s_hat * mod_inv(powmod(m_dot, d_prime, n_hat), n_hat) % n_hat


def _two_adic(n: int) -> tuple[int, int]:
    """``n = 2^e * r`` with ``r`` odd; returns ``(r, e)``."""
    e = (n & -n).bit_length() - 1
    return n >> e, e


@lru_cache(maxsize=4096)
def _nonresidue(p: int, seed: int = 0) -> int:
    rng = random.Random(seed)
    while True:
        c = rng.randrange(2, p)
        if euler_qr_test(c, p) is Residuosity.NON_RESIDUE:
            return c


def _roots_by_levels(R: int, j: int, p: int, cap: int, stats: RootStats) -> set[int]:
    frontier = {R}
    for _ in range(j):
        nxt: set[int] = set()
        for y in sorted(frontier):
            stats.tests += 1
            status = euler_qr_test(y, p)
            if status is Residuosity.ZERO_DIVISOR:
                nxt.add(0)
            elif status is Residuosity.NON_RESIDUE:
                stats.prunes += 1
            else:
                r = tonelli_shanks_sqrt(y, p)
                nxt.update((r, p - r))
        if len(nxt) > cap:
            stats.overflows += 1
            raise BranchOverflow(p, len(nxt), cap)
        frontier = nxt
        if not frontier:
            break
    return frontier


def _roots_by_sylow(R: int, j: int, p: int, cap: int, stats: RootStats) -> set[int]:
    # With p - 1 = 2^e r and s = min(j, e), x^(2^j) = R is solvable iff
    # R^((p-1)/2^s) = 1, and then has exactly 2^s solutions x0 * zeta with
    # zeta running over the 2^s-th roots of unity.
    if R == 0:
        return {0}
    r, e = _two_adic(p - 1)
    s = min(j, e)
    stats.tests += 1
    if powmod(R, (p - 1) >> s, p) != 1:
        stats.prunes += 1
        return set()
    if 1 << s > cap:
        stats.overflows += 1
        raise BranchOverflow(p, 1 << s, cap)
    if j > e:
        # R lies in the odd-order subgroup where squaring is invertible
        x0 = powmod(R, mod_inv(pow(2, j, r), r), p) if r > 1 else 1
    else:
        x0 = R
        for level in range(j):
            y = tonelli_shanks_sqrt(x0, p)
            remaining = j - level - 1
            # keep the sign that still has 2^remaining-th roots
            if remaining and powmod(y, (p - 1) >> remaining, p) != 1:
                y = p - y
            x0 = y
    if s == 0:
        return {x0}
    z = powmod(_nonresidue(p), r, p)
    w = powmod(z, 1 << (e - s), p)
    roots, x = set(), x0
    for _ in range(1 << s):
        roots.add(x)
        x = x * w % p
    return roots


def iterated_sqrt_candidates(
    R: int,
    j: int,
    n_hat: int,
    branch_cap: int = 1 << 12,
    stats: RootStats | None = None,
    method: str = "levels",
) -> set[int]:
    """All ``x`` with ``x^(2^j) = R (mod n_hat)`` for an odd prime ``n_hat``.

    ``method="levels"`` walks the j square-root levels, testing every live
    value with Euler's criterion, pruning non-residues and keeping both
    roots of each residue. ``method="sylow"`` returns the same set using
    the 2-adic structure of ``n_hat - 1`` directly, at a cost independent
    of ``j``. An empty set rejects the candidate; more than ``branch_cap``
    live values raises ``BranchOverflow``.
    """
    if j < 0:
        raise ValueError("j must be >= 0")
    stats = stats if stats is not None else RootStats()
    R %= n_hat
    if j == 0:
        return {R}
    if method == "levels":
        return _roots_by_levels(R, j, n_hat, branch_cap, stats)
    if method == "sylow":
        return _roots_by_sylow(R, j, n_hat, branch_cap, stats)
    raise ValueError(f"unknown method {method!r}")


def final_check(root: int, j: int, d_prime: int, m_dot: int, N: int, S: int) -> bool:
    """Finish the computation without the fault: ``root^(2^j) * m^d' == S (mod N)``."""
    return powmod(root, 1 << j, N) * powmod(m_dot, d_prime, N) % N == S % N


# --------------------------------------------------------------------------
# window search


def _scan_signature(task: tuple) -> dict:
    """Worker: evaluate candidate pairs ``(w, entry)`` for one faulty signature.

    Pairs must come grouped by ascending ``w``. Returns every success in
    scan order, with counters.
    """
    s_hat, m_dot, N, S, j, d_low, bits_known, moduli, pairs, cap, method = task
    stats = RootStats()
    out = {"successes": [], "candidates": 0, "skipped": 0, "roots": 0}
    # per entry: m^-d_low and m^-(2^bits_known), so m^-d' for consecutive w
    # costs one multiplication instead of an exponentiation and an inverse
    inv_base: dict[int, int | None] = {}
    inv_step: dict[int, int] = {}
    current: dict[int, tuple[int, int]] = {}
    tail_w, tail = None, 0
    for w, k in pairs:
        n_hat = moduli[k]
        out["candidates"] += 1
        if k not in inv_base:
            try:
                m_inv = mod_inv(m_dot, n_hat)
            except NotInvertible:
                inv_base[k] = None
            else:
                inv_base[k] = powmod(m_inv, d_low, n_hat)
                inv_step[k] = powmod(m_inv, 1 << bits_known, n_hat)
        if inv_base[k] is None:
            out["skipped"] += 1
            continue
        last_w, value = current.get(k, (0, inv_base[k]))
        if w != last_w:
            value = value * powmod(inv_step[k], w - last_w, n_hat) % n_hat
        current[k] = (w, value)
        R = s_hat * value % n_hat
        try:
            roots = iterated_sqrt_candidates(R, j, n_hat, cap, stats, method)
        except BranchOverflow:
            continue
        if not roots:
            continue
        d_prime = (w << bits_known) | d_low
        if tail_w != w:
            tail_w, tail = w, powmod(m_dot, d_prime, N)
        for root in sorted(roots):
            out["roots"] += 1
            if powmod(root, 1 << j, N) * tail % N == S % N:
                out["successes"].append((w, k))
                break
    out["tests"], out["prunes"], out["overflows"] = stats.tests, stats.prunes, stats.overflows
    return out


def _pairs(width: int, n_entries: int) -> list[tuple[int, int]]:
    return [(w, k) for w in range(1 << width) for k in range(n_entries)]


def recover_window(
    S: int,
    faults: Sequence[FaultySignature],
    state: RecoveryState,
    params: AttackParams,
    m_dot: int,
    N: int,
    workers: int = 1,
) -> tuple[RecoveryState, WindowReport]:
    """Recover bits ``[bits_known, j)`` of ``d`` from faulty signatures at step ``j``.

    Signatures are tried in order; within one, window values ascend and the
    dictionary is scanned in order for each. The first success is accepted;
    later successes for the same signature are counted as collisions. Raises
    ``WindowFailure`` when no signature yields an accepted pair.
    """
    if not faults:
        raise ValueError("no faulty signatures for this step")
    j = faults[0].step_j
    if any(f.step_j != j for f in faults):
        raise ValueError("all faulty signatures must share one step")
    width = j - state.bits_known
    if width < 1:
        raise ValueError(f"step {j} does not extend the {state.bits_known} known bits")
    if width > params.window_l:
        raise ValueError(f"window of {width} bits exceeds window_l={params.window_l}")
    if params.dictionary is None:
        raise ValueError("AttackParams.dictionary is required")

    moduli = params.dictionary.moduli()
    pairs = _pairs(width, len(moduli))
    report = WindowReport(j=j, width=width)
    start = time.perf_counter()
    for index, fault in enumerate(faults):
        report.signatures_tried += 1
        base = (fault.s_hat, m_dot, N, S, j, state.d_low, state.bits_known, moduli)
        if workers > 1 and len(pairs) >= 2 * workers:
            step = -(-len(pairs) // workers)
            tasks = [base + (pairs[i:i + step], params.branch_cap, params.root_method)
                     for i in range(0, len(pairs), step)]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_scan_signature, tasks))
        else:
            parts = [_scan_signature(base + (pairs, params.branch_cap, params.root_method))]
        successes = [s for part in parts for s in part["successes"]]
        for part in parts:
            report.candidates += part["candidates"]
            report.skipped_not_invertible += part["skipped"]
            report.roots_checked += part["roots"]
            report.residuosity_tests += part["tests"]
            report.residuosity_prunes += part["prunes"]
            report.branch_overflows += part["overflows"]
        if successes:
            w, k = successes[0]
            report.collisions += len(successes) - 1
            report.accepted_value = w
            report.accepted_n_hat = moduli[k]
            report.accepted_signature = index
            report.seconds = time.perf_counter() - start
            new_state = RecoveryState(
                d_low=(w << state.bits_known) | state.d_low,
                bits_known=j,
                accepted=state.accepted + (Acceptance(j, moduli[k], w),),
                collisions=state.collisions + len(successes) - 1,
            )
            return new_state, report
    report.seconds = time.perf_counter() - start
    raise WindowFailure(report)


@dataclass
class AttackResult:
    """Outcome of a full run: ``d`` is ``None`` for a partial recovery."""

    d: int | None
    state: RecoveryState
    windows: list[WindowReport] = field(default_factory=list)
    failed_step: int | None = None
    reason: str = ""

    @property
    def complete(self) -> bool:
        return self.d is not None

    def to_json(self) -> dict:
        return {
            "complete": self.complete,
            "d": None if self.d is None else str(self.d),
            "d_low": str(self.state.d_low),
            "bits_known": self.state.bits_known,
            "collisions": self.state.collisions,
            "failed_step": self.failed_step,
            "reason": self.reason,
            "windows": [w.to_json() for w in self.windows],
        }


def complete_top_bits(d_low: int, bits_known: int, n_bits: int, m_dot: int, N: int, S: int,
                      max_bits: int) -> int | None:
    """Exhaust the top ``n_bits - bits_known`` bits, accepting the first ``d`` with ``m^d = S``."""
    top = n_bits - bits_known
    if top < 0 or top > max_bits:
        return None
    for v in range(1 << top):
        d = (v << bits_known) | d_low
        if powmod(m_dot, d, N) == S % N:
            return d
    return None


def recover_exponent(
    S: int,
    campaign: CampaignLog,
    params: AttackParams,
    m_dot: int,
    N: int,
    e: int | None = None,
    workers: int = 1,
) -> AttackResult:
    """Run the window search over all steps, latest-injected (smallest j) first."""
    campaign = campaign.redacted()
    n_bits = campaign.n_bits
    state = RecoveryState()
    windows: list[WindowReport] = []
    for j in campaign.steps:
        try:
            state, report = recover_window(S, campaign.groups[j], state, params, m_dot, N, workers)
        except WindowFailure as exc:
            windows.append(exc.report)
            return AttackResult(None, state, windows, failed_step=j, reason="window failure")
        except ValueError as exc:
            return AttackResult(None, state, windows, failed_step=j, reason=str(exc))
        windows.append(report)
    d = complete_top_bits(state.d_low, state.bits_known, n_bits, m_dot, N, S, params.window_l)
    if d is None:
        return AttackResult(None, state, windows, reason="top bits not found")
    if e is not None and powmod(powmod(m_dot, d, N), e, N) != m_dot % N:
        return AttackResult(None, state, windows, reason="round trip with e failed")
    final = replace(state, d_low=d, bits_known=max(state.bits_known, d.bit_length()))
    return AttackResult(d, final, windows)


# --------------------------------------------------------------------------
# estimators


def false_acceptance_bound(l: int, d_length: int, N: int, j: int) -> Fraction:
    """Upper bound on accepting a wrong (window, modulus) pair, exactly."""
    pairs = (1 << l) * d_length
    if pairs < 2 or N < 1 or j < 0:
        raise ValueError("need 2^l * d_length >= 2, N >= 1, j >= 0")
    return min(
        Fraction(1, 1 << j),
        Fraction((N - 1) * pairs, N * (pairs - 1)),
        Fraction(pairs, N),
    )


@dataclass(frozen=True)
class CostEstimate:
    expected_faults: float
    candidate_pairs: int
    exponentiation_bound: float


def attack_cost_estimate(n: int, l: int, d_length: int) -> CostEstimate:
    """Fault count ``n^2/(1.441 l)``, pair count ``2^l D`` and the ``2^(8+l) n^3 (n+l) / (16 l)`` bound."""
    if n < 1 or l < 1 or d_length < 1:
        raise ValueError("inputs must be positive")
    return CostEstimate(
        expected_faults=n * n / (1.441 * l),
        candidate_pairs=(1 << l) * d_length,
        exponentiation_bound=2.0 ** (8 + l) * n**3 * (n + l) / (16 * l),
    )
