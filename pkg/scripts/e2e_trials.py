"""End-to-end key recovery trials with prime-forced fault campaigns.

    python scripts/e2e_trials.py --bits 64 --trials 20
    python scripts/e2e_trials.py --bits 512 --trials 5 --out e2e_512.json
"""

import argparse
import json
import random
import time

from modfault.attack import AttackParams, recover_exponent
from modfault.fault_model import FaultModel, build_prime_dict
from modfault.fault_sim import run_campaign, window_schedule
from modfault.rsa import generate_key, random_message
from modfault.seeding import derive_seed


def trial(bits, l, per_step, word, seed, workers):
    key = generate_key(bits, seed=derive_seed(seed, "key"))
    model = FaultModel(word, bits)
    dictionary = build_prime_dict(key.N, model, seed=derive_seed(seed, "dict"), workers=workers)
    msg = random_message(key.N, random.Random(derive_seed(seed, "msg")))
    campaign = run_campaign(key, msg, window_schedule(bits, l), per_step, model,
                            seed=derive_seed(seed, "campaign"), force_prime=True, dictionary=dictionary)
    start = time.perf_counter()
    result = recover_exponent(campaign.signature, campaign, AttackParams(l, dictionary), msg.m_dot,
                              key.N, key.e, workers)
    flagged = sum(s.ground_truth.a_exceeds_nhat for sigs in campaign.groups.values() for s in sigs)
    return {
        "seed": seed,
        "dictionary": len(dictionary),
        "recovered": result.complete and result.d == key.d,
        "bits_known": result.state.bits_known,
        "failed_step": result.failed_step,
        "collisions": result.state.collisions,
        "a_exceeds_nhat_signatures": flagged,
        "candidates": sum(w.candidates for w in result.windows),
        "seconds": round(time.perf_counter() - start, 2),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bits", type=int, default=64)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--l", type=int, default=4)
    ap.add_argument("--per-step", type=int, default=3)
    ap.add_argument("--word", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()

    results = []
    for t in range(args.trials):
        r = trial(args.bits, args.l, args.per_step, args.word, derive_seed(args.seed, "trial", t), args.workers)
        results.append(r)
        print(json.dumps(r), flush=True)
    ok = sum(r["recovered"] for r in results)
    print(f"recovered {ok}/{len(results)}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(results, fh, indent=1)


if __name__ == "__main__":
    main()
