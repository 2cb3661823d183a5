"""Command line front-end.

    modfault keygen   --bits 64 --seed 1 --out key.json
    modfault census   --bits 1024 --word 8 --keys 5 --seed 7 --out census/
    modfault campaign --gen --bits 64 --l 4 --per-step 3 --force-prime --seed 1 --out log.json --redact
    modfault attack   --campaign log.attacker.json --l 4 --out report.json
    modfault estimate --bits 1024 --l 4 --dict 46

Exit codes: 0 success, 1 I/O, 2 invalid configuration, 3 partial recovery.
All randomness derives from ``--seed`` through ``seeding.derive_seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from dataclasses import dataclass
from pathlib import Path

from . import storage
from .attack import AttackParams, attack_cost_estimate, false_acceptance_bound, recover_exponent
from .fault_model import (
    FaultModel,
    PrimeDictionary,
    build_prime_dict,
    census_primes,
    density_bounds,
    expected_fault_count,
    parity_adjusted_expectation,
    prime_count_interval,
)
from .fault_sim import CampaignLog, run_campaign, window_schedule
from .rsa import PaddedMessage, RsaKeyPair, generate_key, random_message
from .seeding import derive_seed

log = logging.getLogger("modfault")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2, 3
ORACLE_MAX_BITS = 32
FULL_ENUMERATION_MAX_WORD = 16


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    bits: int | None = None
    word: int = 8
    e: int = 65537
    l: int = 4
    steps: list[int] | None = None
    per_step: int = 1
    keys: int = 1
    force_prime: bool = False
    sample: int | None = None
    seed: int = 0
    workers: int = 1
    out: Path | None = None
    redact: bool = False
    oracle: bool = False
    dict_cap: int | None = None
    dict_size: int = 46
    mr_rounds: int = 64
    branch_cap: int = 1 << 12
    confidence: float = 0.99999
    key: Path | None = None
    gen: bool = False
    campaign: Path | None = None
    verify_key: Path | None = None
    message: int | None = None

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigError(msg)

        need(self.workers >= 1, "--workers must be >= 1")
        need(self.mr_rounds >= 1, "--mr-rounds must be >= 1")
        need(self.l >= 1, "--l must be >= 1")
        need(self.dict_cap is None or self.dict_cap >= 1, "--dict-cap must be >= 1")
        need(self.word in (8, 16, 32), "--word must be 8, 16 or 32")
        if self.bits is not None:
            need(self.bits >= 16 and self.bits % 2 == 0, "--bits must be even and >= 16")
            need(self.bits % self.word == 0, "--word must divide --bits")
        if self.command == "keygen":
            need(self.bits is not None, "keygen needs --bits")
            need(self.e >= 3 and self.e % 2 == 1, "--e must be odd and >= 3")
        elif self.command == "census":
            need(self.bits is not None or self.key is not None, "census needs --bits or --key")
            need(self.keys >= 1, "--keys must be >= 1")
            need(0 < self.confidence < 1, "--confidence must lie in (0, 1)")
            need(self.sample is None or self.sample >= 1, "--sample must be >= 1")
            if self.sample is None and self.word > FULL_ENUMERATION_MAX_WORD:
                raise ConfigError(
                    f"--word {self.word} has (n/{self.word})*(2^{self.word}-1) candidates; "
                    "full enumeration is out of reach, pass --sample K to test a uniform sample"
                )
            if self.oracle:
                bits = self.bits if self.bits is not None else 0
                need(bits <= ORACLE_MAX_BITS,
                     f"--oracle uses trial division; keep --bits <= {ORACLE_MAX_BITS}")
        elif self.command == "campaign":
            need(self.gen or self.key is not None, "campaign needs --key FILE or --gen")
            need(not self.gen or self.bits is not None, "--gen needs --bits")
            need(self.per_step >= 1, "--per-step must be >= 1")
            need(self.out is not None, "campaign needs --out")
            if self.steps is not None:
                need(self.steps == sorted(set(self.steps)) and self.steps[0] >= 1,
                     "--steps must be strictly increasing and positive")
        elif self.command == "attack":
            need(self.campaign is not None, "attack needs --campaign")
            need(self.branch_cap >= 1, "--branch-cap must be >= 1")
        elif self.command == "estimate":
            need(self.bits is not None, "estimate needs --bits")
            need(self.dict_size >= 1, "--dict must be >= 1")


def _steps(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad step list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modfault", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *names):
        if "bits" in names:
            p.add_argument("--bits", type=int)
        if "word" in names:
            p.add_argument("--word", type=int, default=8)
        if "seed" in names:
            p.add_argument("--seed", type=int, default=0)
        if "workers" in names:
            p.add_argument("--workers", type=int, default=1)
        if "mr" in names:
            p.add_argument("--mr-rounds", type=int, default=64)
        if "out" in names:
            p.add_argument("--out", type=Path)
        if "cap" in names:
            p.add_argument("--dict-cap", type=int)

    p = sub.add_parser("keygen", help="generate an RSA key pair")
    common(p, "bits", "seed", "out")
    p.add_argument("--e", type=int, default=65537)

    p = sub.add_parser("census", help="count primes among faulty moduli")
    common(p, "bits", "word", "seed", "workers", "mr", "out")
    p.add_argument("--keys", type=int, default=1)
    p.add_argument("--key", type=Path, help="census this key's modulus instead of fresh keys")
    p.add_argument("--sample", type=int)
    p.add_argument("--oracle", action="store_true", help="trial division instead of Miller-Rabin")
    p.add_argument("--confidence", type=float, default=0.99999)

    p = sub.add_parser("campaign", help="simulate faulty signatures")
    common(p, "bits", "word", "seed", "workers", "mr", "out", "cap")
    p.add_argument("--key", type=Path)
    p.add_argument("--gen", action="store_true", help="generate the key (written to --key if given)")
    p.add_argument("--e", type=int, default=65537)
    p.add_argument("--l", type=int, default=4)
    p.add_argument("--steps", type=_steps)
    p.add_argument("--per-step", type=int, default=1)
    p.add_argument("--force-prime", action="store_true")
    p.add_argument("--redact", action="store_true", help="also write <out>.attacker.json")
    p.add_argument("--message", type=int)

    p = sub.add_parser("attack", help="recover d from a campaign")
    common(p, "workers", "mr", "out", "cap")
    p.add_argument("--campaign", type=Path)
    p.add_argument("--l", type=int, default=4)
    p.add_argument("--branch-cap", type=int, default=1 << 12)
    p.add_argument("--verify-key", type=Path)

    p = sub.add_parser("estimate", help="analytic fault and cost estimates")
    common(p, "bits")
    p.add_argument("--l", type=int, default=4)
    p.add_argument("--dict", dest="dict_size", type=int, default=46)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__}
    return RunConfig(**values)


# --------------------------------------------------------------------------
# commands


def get_dictionary(N: int, model: FaultModel, cfg: RunConfig, seed: int) -> PrimeDictionary:
    """Full dictionary from the cache when present, truncated to ``--dict-cap``."""
    dictionary = storage.load_cached_dictionary(N, model)
    if dictionary is None or dictionary.rounds < cfg.mr_rounds:
        dictionary = build_prime_dict(N, model, None, cfg.mr_rounds, seed, cfg.workers)
        storage.store_dictionary(dictionary)
    if cfg.dict_cap is not None and len(dictionary) > cfg.dict_cap:
        dictionary = PrimeDictionary(N, model, dictionary.entries[: cfg.dict_cap],
                                     cfg.dict_cap, True, dictionary.rounds)
    return dictionary


def cmd_keygen(cfg: RunConfig) -> int:
    key = generate_key(cfg.bits, cfg.e, derive_seed(cfg.seed, "keygen"))
    if cfg.out:
        storage.write_json(cfg.out, key.to_json(), storage.KEY_SCHEMA, RsaKeyPair.from_json)
    print(json.dumps(key.to_json()))
    return EXIT_OK


def cmd_census(cfg: RunConfig) -> int:
    if cfg.key is not None:
        keys = [RsaKeyPair.from_json(storage.read_json(cfg.key, storage.KEY_SCHEMA))]
    else:
        keys = [generate_key(cfg.bits, 65537, derive_seed(cfg.seed, "census-key", i))
                for i in range(cfg.keys)]
    out_dir = cfg.out or Path(".")
    for i, key in enumerate(keys):
        model = FaultModel(cfg.word, key.n_bits)
        report = census_primes(key.N, model, cfg.mr_rounds, cfg.sample,
                               derive_seed(cfg.seed, "census", i), cfg.workers, cfg.oracle)
        path = out_dir / f"census_{i}.csv"
        storage.write_census_csv(path, report)
        k = model.nominal_size if cfg.sample is None else report.tested
        a, b, mean = prime_count_interval(k, key.n_bits, cfg.confidence)
        print(f"primes={report.prime_count} expected={mean:.3f} interval=[{a},{b}] "
              f"parity_expected={parity_adjusted_expectation(key.N, model) * report.tested / model.size:.3f} "
              f"csv={path}")
    return EXIT_OK


def cmd_campaign(cfg: RunConfig) -> int:
    if cfg.key is not None and not cfg.gen:
        key = RsaKeyPair.from_json(storage.read_json(cfg.key, storage.KEY_SCHEMA))
    else:
        key = generate_key(cfg.bits, cfg.e, derive_seed(cfg.seed, "keygen"))
        if cfg.key is not None:
            storage.write_json(cfg.key, key.to_json(), storage.KEY_SCHEMA, RsaKeyPair.from_json)
    if key.n_bits % cfg.word:
        raise ConfigError("--word must divide the key size")
    model = FaultModel(cfg.word, key.n_bits)
    if cfg.message is not None:
        if not 0 < cfg.message < key.N:
            raise ConfigError("--message must lie in (0, N)")
        msg = PaddedMessage(cfg.message)
    else:
        msg = random_message(key.N, random.Random(derive_seed(cfg.seed, "message")))
    steps = cfg.steps if cfg.steps is not None else window_schedule(key.n_bits, cfg.l)
    if steps and steps[-1] > key.n_bits:
        raise ConfigError("--steps may not exceed the key size")
    dictionary = get_dictionary(key.N, model, cfg, derive_seed(cfg.seed, "dictionary")) \
        if cfg.force_prime else None
    campaign = run_campaign(key, msg, steps, cfg.per_step, model, derive_seed(cfg.seed, "campaign"),
                            cfg.force_prime, dictionary)
    storage.write_json(cfg.out, campaign.to_json(), storage.CAMPAIGN_SCHEMA, CampaignLog.from_json)
    print(f"campaign={cfg.out} steps={len(steps)} signatures={len(steps) * cfg.per_step}")
    if cfg.redact:
        attacker = cfg.out.with_suffix(".attacker.json")
        storage.write_json(attacker, campaign.redacted().to_json(), storage.CAMPAIGN_SCHEMA,
                           CampaignLog.from_json)
        print(f"attacker_view={attacker}")
    return EXIT_OK


def cmd_attack(cfg: RunConfig) -> int:
    campaign = CampaignLog.from_json(storage.read_json(cfg.campaign, storage.CAMPAIGN_SCHEMA))
    model = FaultModel(campaign.word_width, campaign.n_bits)
    dictionary = get_dictionary(campaign.N, model, cfg, derive_seed(campaign.seed, "attack-dictionary"))
    params = AttackParams(cfg.l, dictionary, cfg.branch_cap, cfg.mr_rounds)
    result = recover_exponent(campaign.signature, campaign, params, campaign.message.m_dot,
                              campaign.N, campaign.e, cfg.workers)
    if cfg.out:
        storage.write_json(cfg.out, result.to_json(), storage.REPORT_SCHEMA)
    status = EXIT_OK
    if result.complete:
        print(f"d={result.d}")
    else:
        print(f"partial bits_known={result.state.bits_known} d_low={result.state.d_low} "
              f"failed_step={result.failed_step} reason={result.reason}")
        status = EXIT_PARTIAL
    if cfg.verify_key is not None:
        key = RsaKeyPair.from_json(storage.read_json(cfg.verify_key, storage.KEY_SCHEMA))
        ok = result.complete and result.d == key.d
        print(f"verified={str(ok).lower()}")
        if not ok:
            status = EXIT_PARTIAL
    return status


def cmd_estimate(cfg: RunConfig) -> int:
    n = cfg.bits
    bounds = density_bounds(n)
    lower, upper, asym = expected_fault_count(n)
    cost = attack_cost_estimate(n, cfg.l, cfg.dict_size)
    model = FaultModel(8, n)
    a, b, mean = prime_count_interval(model.nominal_size, n, 0.99999)
    fa = false_acceptance_bound(cfg.l, cfg.dict_size, 1 << (n - 1), cfg.l)
    print(f"density_inf=1/{1 / bounds.inf:.3f} density_sup=1/{1 / bounds.sup:.3f}")
    print(f"faults_per_prime=[{lower:.3f},{upper:.3f}] asymptotic={asym:.3f}")
    print(f"byte_neighbourhood_primes mean={mean:.3f} interval=[{a},{b}]")
    print(f"expected_faults={cost.expected_faults:.1f} candidate_pairs={cost.candidate_pairs} "
          f"exponentiation_bound={cost.exponentiation_bound:.6e}")
    print(f"false_acceptance_bound(j={cfg.l})={float(fa):.3e}")
    return EXIT_OK


COMMANDS = {
    "keygen": cmd_keygen,
    "census": cmd_census,
    "campaign": cmd_campaign,
    "attack": cmd_attack,
    "estimate": cmd_estimate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = config_from_args(args)
    try:
        cfg.validate()
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, storage.SchemaError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
