import random
from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from modfault.arith import NotInvertible, is_probable_prime, small_primes
from modfault.attack import (
    AttackParams,
    BranchOverflow,
    RecoveryState,
    RootStats,
    WindowFailure,
    attack_cost_estimate,
    false_acceptance_bound,
    final_check,
    iterated_sqrt_candidates,
    recover_exponent,
    recover_window,
    residual,
)
from modfault.fault_model import FaultModel, build_prime_dict
from modfault.fault_sim import CampaignLog, register_before_fault, run_campaign, sign_with_fault, window_schedule
from modfault.rsa import generate_key, random_message, sign

ODD_PRIMES_BELOW_10K = small_primes(10**4)[1:]


def brute_roots(R, j, p):
    return {x for x in range(p) if pow(x, 2**j, p) == R % p}


# --- residual ---------------------------------------------------------------

def test_residual_examples():
    assert residual(63, 2, 7, 149) == 63 * 78 % 149 == 146  # 78 = 128^-1 mod 149
    assert residual(1234, 5, 0, 149) == 1234 % 149
    with pytest.raises(NotInvertible):
        residual(5, 149 * 3, 2, 149)


def test_residual_of_correct_pair_is_a_power():
    key = generate_key(64, seed=1)
    msg = random_message(key.N, random.Random(1))
    entry = build_prime_dict(key.N, FaultModel(8, 64)).entries[0]
    for j in (1, 5, 17, 40):
        sig = sign_with_fault(msg, key, entry.n_hat, j)
        A = register_before_fault(msg.m_dot, key.d, key.N, j)
        R = residual(sig.s_hat, msg.m_dot, key.d % 2**j, entry.n_hat)
        assert R == pow(A, 2**j, entry.n_hat)


# --- iterated square roots ----------------------------------------------------

@pytest.mark.parametrize("method", ["levels", "sylow"])
def test_sqrt_candidates_examples(method):
    assert iterated_sqrt_candidates(37, 2, 41, method=method) == {8, 10, 31, 33} == brute_roots(37, 2, 41)
    assert iterated_sqrt_candidates(123, 0, 149, method=method) == {123}
    assert iterated_sqrt_candidates(3, 1, 7, method=method) == set()  # 3 is a non-residue mod 7
    assert iterated_sqrt_candidates(3, 5, 7, method=method) == set()


def sampled_primes():
    rng = random.Random(8)
    return sorted(rng.sample(ODD_PRIMES_BELOW_10K, 60)) + [3, 5, 17, 257, 7681, 12289]


@pytest.mark.parametrize("p", sampled_primes())
def test_sqrt_methods_match_brute_force(p):
    rng = random.Random(p)
    # table of x -> x^(2^j) for j = 0..6, one pass per level
    level = list(range(p))
    tables = [level]
    for _ in range(6):
        level = [y * y % p for y in level]
        tables.append(level)
    for _ in range(12):
        R = rng.randrange(p)
        for j in range(7):
            expected = {x for x, v in enumerate(tables[j]) if v == R}
            for method in ("levels", "sylow"):
                assert iterated_sqrt_candidates(R, j, p, method=method) == expected, (R, j, method)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**30), st.integers(0, 40), st.sampled_from([2**61 - 1, 2**127 - 1, 12289, 40961, 65537]))
def test_sqrt_candidates_square_back(x, j, p):
    R = pow(x, 2**j, p)
    two_adic = ((p - 1) & -(p - 1)).bit_length() - 1
    # the level walk keeps up to 2^min(j, v2(p-1)) live values per level
    methods = ("levels", "sylow") if min(j, two_adic) <= 8 else ("sylow",)
    for method in methods:
        roots = iterated_sqrt_candidates(R, j, p, branch_cap=1 << 17, method=method)
        assert x % p in roots
        assert all(pow(r, 2**j, p) == R for r in roots)


def test_levels_and_sylow_agree_on_large_prime():
    rng = random.Random(3)
    p = 65537 * 2**20 + 1
    while not is_probable_prime(p):
        p += 2**20
    for _ in range(50):
        j = rng.randrange(1, 12)
        R = pow(rng.randrange(1, p), 2**rng.randrange(0, 12), p)
        a = iterated_sqrt_candidates(R, j, p, 1 << 12, method="levels")
        b = iterated_sqrt_candidates(R, j, p, 1 << 12, method="sylow")
        assert a == b


def test_branch_overflow():
    # 65537 - 1 = 2^16: x^(2^10) = 1 has 1024 roots
    for method in ("levels", "sylow"):
        stats = RootStats()
        with pytest.raises(BranchOverflow) as info:
            iterated_sqrt_candidates(1, 10, 65537, branch_cap=100, stats=stats, method=method)
        assert info.value.cap == 100 and stats.overflows == 1
        assert len(iterated_sqrt_candidates(1, 10, 65537, branch_cap=1024, method=method)) == 1024


def test_three_mod_four_prime_prunes_once():
    # for p = 3 mod 4 squaring permutes the residues, so only the first test can reject
    p = 2**127 - 1
    rng = random.Random(4)
    survivors = 0
    for _ in range(400):
        stats = RootStats()
        if iterated_sqrt_candidates(rng.randrange(1, p), 10, p, stats=stats, method="levels"):
            survivors += 1
    assert 150 < survivors < 250


def test_sqrt_rejects_negative_j():
    with pytest.raises(ValueError):
        iterated_sqrt_candidates(1, -1, 7)


# --- final check ---------------------------------------------------------------

def test_final_check_with_register():
    key = generate_key(64, seed=2)
    msg = random_message(key.N, random.Random(2))
    S = sign(msg, key)
    for j in (0, 4, 30, 63):
        A = register_before_fault(msg.m_dot, key.d, key.N, j)
        assert final_check(A, j, key.d % 2**j, msg.m_dot, key.N, S)
        assert not final_check(A + 1, j, key.d % 2**j, msg.m_dot, key.N, S)


# --- windows and full recovery ----------------------------------------------------

@pytest.fixture(scope="module")
def setup64():
    key = generate_key(64, seed=21)
    model = FaultModel(8, 64)
    dictionary = build_prime_dict(key.N, model)
    msg = random_message(key.N, random.Random(21))
    return key, model, dictionary, msg


def test_window_trace(setup64):
    key, model, dictionary, msg = setup64
    # the attack never uses e, so a low nibble of 0110 can be planted directly
    fake = replace(key, d=(key.d >> 4 << 4) | 0b0110)
    S = sign(msg, fake)
    faults = [sign_with_fault(msg, fake, e.n_hat, 4) for e in dictionary.entries[:3]]
    params = AttackParams(window_l=4, dictionary=dictionary)
    state, report = recover_window(S, faults, RecoveryState(), params, msg.m_dot, key.N)
    assert state.d_low == 6 and state.bits_known == 4
    assert report.accepted_value == 6 and report.accepted_signature == 0
    assert state.accepted[0].n_hat == dictionary.entries[0].n_hat


def test_window_fails_on_composite_moduli(setup64):
    key, model, dictionary, msg = setup64
    S = sign(msg, key)
    primes = set(dictionary.moduli())
    rng = random.Random(5)
    faults = []
    while len(faults) < 3:
        n_hat = model.apply(key.N, rng.randrange(model.n_words), rng.randrange(1, 256))
        if n_hat not in primes:
            faults.append(sign_with_fault(msg, key, n_hat, 4))
    with pytest.raises(WindowFailure) as info:
        recover_window(S, faults, RecoveryState(), AttackParams(dictionary=dictionary), msg.m_dot, key.N)
    assert info.value.report.candidates == 3 * 16 * len(dictionary)


def test_window_preconditions(setup64):
    key, model, dictionary, msg = setup64
    S = sign(msg, key)
    sig = sign_with_fault(msg, key, dictionary.entries[0].n_hat, 8)
    with pytest.raises(ValueError):
        recover_window(S, [sig], RecoveryState(), AttackParams(window_l=4, dictionary=dictionary), msg.m_dot, key.N)
    with pytest.raises(ValueError):
        recover_window(S, [], RecoveryState(), AttackParams(dictionary=dictionary), msg.m_dot, key.N)
    with pytest.raises(ValueError):
        recover_window(S, [sig], RecoveryState(), AttackParams(window_l=8), msg.m_dot, key.N)


def test_recovery_state_invariant():
    with pytest.raises(ValueError):
        RecoveryState(d_low=16, bits_known=4)
    with pytest.raises(ValueError):
        AttackParams(window_l=0)
    with pytest.raises(ValueError):
        AttackParams(root_method="magic")


@pytest.mark.parametrize("method", ["sylow", "levels"])
def test_full_pipeline_64(setup64, method):
    key, model, dictionary, msg = setup64
    campaign = run_campaign(key, msg, window_schedule(64, 4), 3, model, seed=8,
                            force_prime=True, dictionary=dictionary)
    params = AttackParams(window_l=4, dictionary=dictionary, root_method=method)
    result = recover_exponent(campaign.signature, campaign, params, msg.m_dot, key.N, key.e)
    assert result.complete and result.d == key.d
    assert key.e * result.d % key.phi == 1
    assert [a.step_j for a in result.state.accepted] == window_schedule(64, 4)
    record = result.to_json()
    assert record["d"] == str(key.d) and len(record["windows"]) == 15


def test_pipeline_is_deterministic(setup64):
    key, model, dictionary, msg = setup64
    campaign = run_campaign(key, msg, window_schedule(64, 4), 2, model, seed=3,
                            force_prime=True, dictionary=dictionary)
    params = AttackParams(dictionary=dictionary)
    a = recover_exponent(campaign.signature, campaign, params, msg.m_dot, key.N)
    b = recover_exponent(campaign.signature, campaign, params, msg.m_dot, key.N)
    assert a.state == b.state


def test_parallel_window_matches_serial(setup64):
    key, model, dictionary, msg = setup64
    campaign = run_campaign(key, msg, [4, 8], 3, model, seed=4, force_prime=True, dictionary=dictionary)
    params = AttackParams(dictionary=dictionary)
    serial = recover_window(campaign.signature, campaign.groups[4], RecoveryState(), params, msg.m_dot, key.N)
    parallel = recover_window(campaign.signature, campaign.groups[4], RecoveryState(), params, msg.m_dot, key.N,
                              workers=2)
    assert serial[0] == parallel[0]


def test_empty_campaign_is_partial(setup64):
    key, model, dictionary, msg = setup64
    empty = CampaignLog("k", key.N, key.e, 64, 8, msg, sign(msg, key), {}, seed=0)
    result = recover_exponent(empty.signature, empty, AttackParams(dictionary=dictionary), msg.m_dot, key.N)
    assert not result.complete and result.state.bits_known == 0


def test_partial_result_on_failed_window(setup64):
    key, model, dictionary, msg = setup64
    campaign = run_campaign(key, msg, [4, 8], 2, model, seed=3, force_prime=True, dictionary=dictionary)
    # replace the step-8 group with signatures under composite moduli
    primes = set(dictionary.moduli())
    bad = [n for n, _, _ in ((model.apply(key.N, w, k), w, k) for w in range(8) for k in (1, 2, 3))
           if n not in primes][:2]
    campaign.groups[8] = [sign_with_fault(msg, key, n, 8) for n in bad]
    result = recover_exponent(campaign.signature, campaign, AttackParams(dictionary=dictionary), msg.m_dot, key.N)
    assert not result.complete
    assert result.state.bits_known == 4 and result.state.d_low == key.d % 16
    assert result.failed_step == 8


# --- estimators ------------------------------------------------------------------

def test_false_acceptance_bound():
    N = 2**1024 - 12345
    assert false_acceptance_bound(4, 46, N, 10) == Fraction(736, N)
    small = false_acceptance_bound(4, 46, 10**6, 0)
    assert small == Fraction(736, 10**6)
    assert false_acceptance_bound(4, 46, 100, 0) == Fraction(99 * 736, 100 * 735)
    values = [false_acceptance_bound(4, 46, 10**9, j) for j in range(40)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert false_acceptance_bound(4, 46, 2000, 5) == Fraction(1, 32)  # 736/2000 > 1/32
    with pytest.raises(ValueError):
        false_acceptance_bound(0, 1, 10, 1)


def test_cost_estimate():
    c = attack_cost_estimate(1024, 4, 46)
    assert c.candidate_pairs == 736
    assert c.expected_faults == pytest.approx(1024**2 / (1.441 * 4))
    assert c.expected_faults == pytest.approx(181_930, rel=1e-4)
    assert c.exponentiation_bound == 2**12 * 1024**3 * 1028 / 64
    with pytest.raises(ValueError):
        attack_cost_estimate(0, 4, 46)
