"""Survival rate of wrong candidates through j residuosity levels.

A random residual survives all j levels iff it is a 2^j-th power, which
happens with probability 2^-min(j, v) where 2^v exactly divides N_hat - 1.
The sweep shows the measured rate next to that prediction.

    python scripts/pruning_stats.py --j 10 --trials 100000
"""

import argparse
import random

from modfault.arith import is_probable_prime
from modfault.attack import iterated_sqrt_candidates


def prime_with_two_adicity(v, bits, rng):
    while True:
        p = ((rng.getrandbits(bits - v - 1) | 1 | (1 << (bits - v - 2))) << v) + 1
        if ((p - 1) & -(p - 1)).bit_length() - 1 == v and is_probable_prime(p):
            return p


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--j", type=int, default=10)
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--bits", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    for v in (1, 2, 4, 8, 10, 12):
        p = prime_with_two_adicity(v, args.bits, rng)
        survivors = sum(
            bool(iterated_sqrt_candidates(rng.randrange(1, p), args.j, p, branch_cap=1 << 14, method="levels"))
            for _ in range(args.trials)
        )
        predicted = 2.0 ** -min(args.j, v)
        print(f"v2(p-1)={v:2d} p={p} survival={survivors / args.trials:.3e} predicted={predicted:.3e}")


if __name__ == "__main__":
    main()
