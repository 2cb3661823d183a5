"""Prime counts in faulty-modulus neighbourhoods over several random keys.

Prints one row per key and a min/avg/max summary next to the binomial
model (nominal neighbourhood) and the odd-neighbourhood model.

    python scripts/census_table.py --bits 1024 --word 8 --keys 20 --out census.csv
"""

import argparse
import csv
import statistics
import time

from modfault.fault_model import (
    FaultModel,
    census_primes,
    parity_adjusted_expectation,
    prime_count_interval,
)
from modfault.rsa import generate_key
from modfault.seeding import derive_seed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bits", type=int, default=1024)
    ap.add_argument("--word", type=int, default=8)
    ap.add_argument("--keys", type=int, default=20)
    ap.add_argument("--sample", type=int, help="test a uniform sample of this size per key")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="CSV with one row per key")
    args = ap.parse_args()

    model = FaultModel(args.word, args.bits)
    rows = []
    for i in range(args.keys):
        start = time.perf_counter()
        key = generate_key(args.bits, seed=derive_seed(args.seed, "key", i))
        report = census_primes(key.N, model, sample=args.sample, seed=derive_seed(args.seed, "census", i),
                               workers=args.workers)
        expected = parity_adjusted_expectation(key.N, model) * report.tested / model.size
        rows.append((i, report.tested, report.prime_count, round(expected, 3)))
        print(f"key {i:3d} tested={report.tested} primes={report.prime_count} "
              f"odd_model={expected:.1f} {time.perf_counter() - start:.1f}s", flush=True)

    counts = [r[2] for r in rows]
    k = model.nominal_size if args.sample is None else args.sample
    a, b, mean = prime_count_interval(k, args.bits, 0.99999)
    print(f"min={min(counts)} avg={statistics.fmean(counts):.2f} max={max(counts)}")
    print(f"binomial model: mean={mean:.3f} interval99.999=[{a},{b}]")
    print(f"odd-neighbourhood model: mean={statistics.fmean(r[3] for r in rows):.2f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["key", "tested", "primes", "odd_model_expected"])
            writer.writerows(rows)


if __name__ == "__main__":
    main()
