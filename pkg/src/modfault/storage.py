"""File formats: JSON records (validated on write and re-read) and census CSV.

Integers that can exceed 53 bits are stored as decimal strings.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Callable

import jsonschema

from .fault_model import CensusReport, FaultModel, PrimeDictionary

CACHE_ENV = "MODFAULT_CACHE_DIR"

_DEC = {"type": "string", "pattern": "^[0-9]+$"}

KEY_SCHEMA = {
    "type": "object",
    "required": ["n_bits", "N", "p", "q", "e", "d"],
    "properties": {"n_bits": {"type": "integer", "minimum": 1},
                   "N": _DEC, "p": _DEC, "q": _DEC, "e": _DEC, "d": _DEC},
}

_MESSAGE = {"type": "object", "required": ["m_dot"],
            "properties": {"m_dot": _DEC, "raw": {"type": "string"}}}

_TRUTH = {
    "anyOf": [
        {"type": "null"},
        {"type": "object", "required": ["n_hat", "a_exceeds_nhat"],
         "properties": {"n_hat": _DEC, "a_exceeds_nhat": {"type": "boolean"},
                        "word_index": {"type": ["integer", "null"]},
                        "mask": {"type": ["integer", "null"]}}},
    ]
}

CAMPAIGN_SCHEMA = {
    "type": "object",
    "required": ["key_id", "N", "e", "n_bits", "word_width", "message", "signature", "seed", "steps"],
    "properties": {
        "key_id": {"type": "string"},
        "N": _DEC, "e": _DEC, "signature": _DEC,
        "n_bits": {"type": "integer"}, "word_width": {"type": "integer"},
        "seed": {"type": "integer"}, "force_prime": {"type": "boolean"},
        "message": _MESSAGE,
        "steps": {"type": "array", "items": {
            "type": "object", "required": ["j", "faulty"],
            "properties": {"j": {"type": "integer", "minimum": 0},
                           "faulty": {"type": "array", "minItems": 1, "items": _DEC}}}},
        "ground_truth": {"type": "object", "additionalProperties": {"type": "array", "items": _TRUTH}},
    },
}

DICTIONARY_SCHEMA = {
    "type": "object",
    "required": ["source_modulus", "word_width", "n_bits", "entries"],
    "properties": {
        "source_modulus": _DEC,
        "word_width": {"type": "integer"}, "n_bits": {"type": "integer"},
        "capacity_cap": {"type": ["integer", "null"]}, "truncated": {"type": "boolean"},
        "rounds": {"type": "integer"},
        "entries": {"type": "array", "items": {
            "type": "object", "required": ["n_hat", "word_index", "mask"],
            "properties": {"n_hat": _DEC, "word_index": {"type": "integer"},
                           "mask": {"type": "integer", "minimum": 1}}}},
    },
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["complete", "d", "d_low", "bits_known", "windows"],
    "properties": {
        "complete": {"type": "boolean"},
        "d": {"anyOf": [_DEC, {"type": "null"}]},
        "d_low": _DEC,
        "bits_known": {"type": "integer"},
        "collisions": {"type": "integer"},
        "windows": {"type": "array", "items": {
            "type": "object",
            "required": ["j", "width", "candidates", "residuosity_prunes", "collisions", "seconds"]}},
    },
}


class SchemaError(ValueError):
    pass


def write_json(path: str | Path, record: dict, schema: dict,
               parse: Callable[[dict], Any] | None = None) -> None:
    """Validate, write, re-read and check round-trip equality.

    With ``parse`` given, also checks ``parse(reread).to_json() == record``.
    """
    try:
        jsonschema.validate(record, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"refusing to write invalid record: {exc.message}") from exc
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")
    back = json.loads(path.read_text())
    if back != record or (parse is not None and parse(back).to_json() != record):
        raise SchemaError(f"round trip through {path} changed the record")


def read_json(path: str | Path, schema: dict) -> dict:
    record = json.loads(Path(path).read_text())
    try:
        jsonschema.validate(record, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{path}: {exc.message}") from exc
    return record


# --------------------------------------------------------------------------
# census CSV


CSV_HEADER = ["word_index", "candidates", "primes"]


def census_rows(report: CensusReport) -> list[list]:
    rows = [[i, c, p] for i, (c, p) in
            enumerate(zip(report.per_word_candidates, report.per_word_index))]
    rows.append(["total", report.tested, report.prime_count])
    return rows


def write_census_csv(path: str | Path, report: CensusReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = census_rows(report)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)
    if read_census_csv(path) != [[str(x) for x in row] for row in rows]:
        raise SchemaError(f"round trip through {path} changed the census")


def read_census_csv(path: str | Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise SchemaError(f"{path}: unexpected header {header}")
        rows = list(reader)
    if not rows or rows[-1][0] != "total":
        raise SchemaError(f"{path}: missing summary row")
    body = rows[:-1]
    if sum(int(r[2]) for r in body) != int(rows[-1][2]):
        raise SchemaError(f"{path}: summary row does not match per-word primes")
    return rows


# --------------------------------------------------------------------------
# dictionary cache


def cache_path(N: int, model: FaultModel, cache_dir: str | Path | None = None) -> Path | None:
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    if not cache_dir:
        return None
    digest = hashlib.sha256(f"{N}:{model.word_width}:{model.n_bits}".encode()).hexdigest()[:24]
    return Path(cache_dir) / f"dict_w{model.word_width}_{digest}.json"


def load_cached_dictionary(N: int, model: FaultModel, cache_dir=None) -> PrimeDictionary | None:
    path = cache_path(N, model, cache_dir)
    if path is None or not path.exists():
        return None
    dictionary = PrimeDictionary.from_json(read_json(path, DICTIONARY_SCHEMA))
    if dictionary.source_modulus != N or dictionary.model != model:
        return None
    return dictionary


def store_dictionary(dictionary: PrimeDictionary, cache_dir=None) -> Path | None:
    path = cache_path(dictionary.source_modulus, dictionary.model, cache_dir)
    if path is not None:
        write_json(path, dictionary.to_json(), DICTIONARY_SCHEMA, PrimeDictionary.from_json)
    return path
