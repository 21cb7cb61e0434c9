"""Rule-based normalization of raw entity values into natural answer strings.

A profile maps entity types to ordered rule lists. Besides exact type names,
map keys may be ``format:<class>`` (matching the type's declared format class)
or the ``*`` wildcard; resolution order is exact name, then format class, then
wildcard. Five builtin profiles cover common source-dataset conventions.
"""

from __future__ import annotations

import string
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .model import Document, Entity, EntityTypeDef, KIEDataset
from .records import RecordError, read_records, require, write_records

RULE_KINDS = (
    "replace_newlines",
    "strip_brackets",
    "strip_prefix",
    "title_case_allcaps",
    "numeric_token_filter",
    "strip_edge_punct",
)

WILDCARD = "*"

_BRACKET_PAIRS = {"(": ")", "[": "]", "{": "}"}
_EDGE_CHARS = string.punctuation + string.whitespace


class EmptyResultWarning(UserWarning):
    """A value was filtered down to the empty string."""


@dataclass(frozen=True, slots=True)
class CleaningRule:
    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown cleaning rule kind '{self.kind}'")
        if self.kind == "strip_prefix" and not self.params.get("prefix"):
            raise ValueError("strip_prefix requires a non-empty 'prefix' param")
        if self.kind == "numeric_token_filter":
            mode = self.params.get("mode", "drop_tokens")
            if mode not in ("drop_tokens", "keep_numeric_chars"):
                raise ValueError(f"unknown numeric_token_filter mode '{mode}'")


@dataclass(frozen=True, slots=True)
class CleaningProfile:
    name: str
    rules_by_entity_type: Mapping[str, tuple[CleaningRule, ...]]

    def rules_for(self, type_name: str, format_class: str) -> tuple[CleaningRule, ...]:
        rules = self.rules_by_entity_type.get(type_name)
        if rules is None:
            rules = self.rules_by_entity_type.get(f"format:{format_class}")
        if rules is None:
            rules = self.rules_by_entity_type.get(WILDCARD, ())
        return rules


# ---------------------------------------------------------------------------
# Rule application
# ---------------------------------------------------------------------------


def clean_value(value: str, rules: Sequence[CleaningRule]) -> str:
    """Apply rules left to right; warns when the result is empty but the input was not."""
    out = value
    for rule in rules:
        out = _apply_rule(out, rule)
    if value and not out:
        warnings.warn(f"value {value!r} cleaned to empty string", EmptyResultWarning, stacklevel=2)
    return out


def _apply_rule(value: str, rule: CleaningRule) -> str:
    if rule.kind == "replace_newlines":
        replacement = str(rule.params.get("replacement", " "))
        out = value
        for nl in ("\r\n", "\n", "\r"):
            out = out.replace(nl, replacement)
        return _collapse_spaces(out).strip()
    if rule.kind == "strip_brackets":
        out = value.strip()
        while _is_enclosed(out):
            out = out[1:-1].strip()
        return out
    if rule.kind == "strip_prefix":
        prefix = str(rule.params["prefix"])
        out = value
        while prefix in out:
            out = out.replace(prefix, "")
        return _collapse_spaces(out).strip()
    if rule.kind == "title_case_allcaps":
        return _title_case_allcaps(
            value,
            preserve_short_len=int(rule.params.get("preserve_short_len", 0)),
            acronyms=frozenset(rule.params.get("acronyms", ())),
        )
    if rule.kind == "numeric_token_filter":
        if rule.params.get("mode", "drop_tokens") == "keep_numeric_chars":
            kept = "".join(
                c for c in value if c.isdigit() or c in string.punctuation or c.isspace()
            )
            return _collapse_spaces(kept).strip()
        tokens = [t for t in value.split() if _mostly_numeric(t)]
        return " ".join(tokens)
    if rule.kind == "strip_edge_punct":
        return value.strip(_EDGE_CHARS)
    raise AssertionError(f"unhandled rule kind {rule.kind}")


def _collapse_spaces(value: str) -> str:
    # collapse runs of spaces/tabs introduced by removals; keep other chars intact
    out = []
    prev_space = False
    for c in value:
        if c in " \t":
            if not prev_space:
                out.append(" ")
            prev_space = True
        else:
            out.append(c)
            prev_space = False
    return "".join(out)


def _is_enclosed(value: str) -> bool:
    if len(value) < 2:
        return False
    closer = _BRACKET_PAIRS.get(value[0])
    if closer is None or value[-1] != closer:
        return False
    depth = 0
    for i, c in enumerate(value):
        if c == value[0]:
            depth += 1
        elif c == closer:
            depth -= 1
            if depth == 0:
                return i == len(value) - 1
    return False


def _mostly_numeric(token: str) -> bool:
    digits = sum(c.isdigit() for c in token)
    return digits * 2 > len(token)


def _title_case_allcaps(value: str, preserve_short_len: int, acronyms: frozenset) -> str:
    words = value.split()
    if len(words) < 2:
        return value
    if value != value.upper() or not any(c.isalpha() for c in value):
        return value
    out = []
    for w in words:
        if len(w) <= preserve_short_len or w in acronyms:
            out.append(w)
        else:
            out.append(w.capitalize())
    return _collapse_spaces(" ".join(out))


# ---------------------------------------------------------------------------
# Builtin profiles
# ---------------------------------------------------------------------------

BUILTIN_PROFILES = ("adbuy", "cord", "docile", "klc", "regform")

# Ad-Buy and Reg. Form values carry occasional remittance prefixes
_REMIT_PREFIX = "REMIT TO"


def default_acronyms() -> tuple[str, ...]:
    """Editable all-caps whitelist shipped with the package."""
    text = resources.files("kie2qa").joinpath("fixtures/acronyms.txt").read_text("utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip())


def builtin_profile(name: str) -> CleaningProfile:
    if name not in BUILTIN_PROFILES:
        raise ValueError(f"unknown builtin profile '{name}' (choose from {BUILTIN_PROFILES})")

    if name == "adbuy":
        base = (
            CleaningRule("replace_newlines", {"replacement": " "}),
            CleaningRule("strip_prefix", {"prefix": _REMIT_PREFIX}),
            CleaningRule("strip_brackets"),
        )
        title = (CleaningRule("title_case_allcaps"),)
        address = (
            CleaningRule("replace_newlines", {"replacement": ", "}),
            CleaningRule("strip_prefix", {"prefix": _REMIT_PREFIX}),
            CleaningRule("strip_brackets"),
            # two-letter words are left alone: they are most likely US states
            CleaningRule("title_case_allcaps", {"preserve_short_len": 2}),
        )
        return CleaningProfile(
            "adbuy",
            {
                WILDCARD: base,
                "advertiser": base + title,
                "agency": base + title,
                "product": base + title,
                "program_desc": base + title,
                "tv_address": address,
            },
        )

    if name == "cord":
        numeric = (
            CleaningRule("numeric_token_filter", {"mode": "drop_tokens"}),
            CleaningRule("strip_edge_punct"),
        )
        return CleaningProfile(
            "cord",
            {
                "format:integer": numeric,
                "format:decimal": numeric,
                WILDCARD: (CleaningRule("strip_edge_punct"),),
            },
        )

    if name == "docile":
        return CleaningProfile(
            "docile",
            {
                "format:integer": (CleaningRule("numeric_token_filter", {"mode": "keep_numeric_chars"}),),
                "format:decimal": (CleaningRule("numeric_token_filter", {"mode": "keep_numeric_chars"}),),
                WILDCARD: (
                    CleaningRule("replace_newlines", {"replacement": ", "}),
                    CleaningRule("title_case_allcaps"),
                ),
            },
        )

    if name == "klc":
        title = (CleaningRule("title_case_allcaps"),)
        return CleaningProfile(
            "klc",
            {
                "address_post_town": title,
                "address_street_line": title,
                "charity_name": title,
                WILDCARD: (),
            },
        )

    # regform: the Ad-Buy treatment plus an acronym whitelist for title casing
    acronyms = default_acronyms()
    return CleaningProfile(
        "regform",
        {
            WILDCARD: (
                CleaningRule("replace_newlines", {"replacement": " "}),
                CleaningRule("strip_prefix", {"prefix": _REMIT_PREFIX}),
                CleaningRule("strip_brackets"),
                CleaningRule("title_case_allcaps", {"acronyms": acronyms}),
            )
        },
    )


# ---------------------------------------------------------------------------
# Dataset application and profile files
# ---------------------------------------------------------------------------


def clean_dataset(ds: KIEDataset, profile: CleaningProfile) -> KIEDataset:
    """Set cleaned_value on every entity; raw values are never touched."""
    types = ds.ontology_by_name
    emptied: list[str] = []
    new_docs = []
    for doc in ds.documents:
        new_entities = []
        for e in doc.entities:
            fmt = types[e.type_name].format_class if e.type_name in types else "other"
            rules = profile.rules_for(e.type_name, fmt)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", EmptyResultWarning)
                cleaned = clean_value(e.raw_value, rules)
            if e.raw_value and not cleaned:
                emptied.append(e.entity_id)
            new_entities.append(replace(e, cleaned_value=cleaned))
        new_docs.append(replace(doc, entities=tuple(new_entities)))
    if emptied:
        warnings.warn(
            f"{len(emptied)} value(s) cleaned to empty string: {emptied[:10]}",
            EmptyResultWarning,
            stacklevel=2,
        )
    return replace(ds, documents=tuple(new_docs))


def load_profile(path: str | Path) -> CleaningProfile:
    """Profile file: a header record {"name": ...}, then {"entity_type", "rules"} records."""
    name = None
    mapping: dict[str, tuple[CleaningRule, ...]] = {}
    for lineno, rec in read_records(path):
        loc = f"{path}:{lineno}"
        if name is None:
            name = require(rec, "name", str, loc)
            continue
        entity_type = require(rec, "entity_type", str, loc)
        rules = []
        for i, r in enumerate(require(rec, "rules", list, loc)):
            kind = require(r, "kind", str, f"{loc}: rules[{i}]")
            params = r.get("params", {})
            if not isinstance(params, dict):
                raise RecordError("field 'params' must be an object", f"{loc}: rules[{i}]")
            try:
                rules.append(CleaningRule(kind, params))
            except ValueError as exc:
                raise RecordError(str(exc), f"{loc}: rules[{i}]") from exc
        if entity_type in mapping:
            raise RecordError(f"duplicate entity_type '{entity_type}'", loc)
        mapping[entity_type] = tuple(rules)
    if name is None:
        raise RecordError("profile file is empty", str(path))
    return CleaningProfile(name, mapping)


def save_profile(profile: CleaningProfile, path: str | Path) -> None:
    records: list[dict] = [{"name": profile.name}]
    for entity_type, rules in profile.rules_by_entity_type.items():
        records.append(
            {
                "entity_type": entity_type,
                "rules": [{"kind": r.kind, "params": _jsonable_params(r.params)} for r in rules],
            }
        )
    write_records(path, records)


def _jsonable_params(params: Mapping[str, object]) -> dict:
    return {k: list(v) if isinstance(v, (tuple, frozenset)) else v for k, v in params.items()}
