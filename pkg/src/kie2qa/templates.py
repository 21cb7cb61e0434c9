"""Question template DSL: typed slots inside ``{role}`` placeholder patterns.

Slot kinds:

* ``key_phrase``      - a natural-language phrasing of an entity type
* ``entity_value``    - the value of an entity used to anchor the question
* ``ordinal_position``- a line item ordinal, rendered as "1st", "2nd", ...
* ``candidate_value`` - the value tested by a boolean question
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .model import EntityTypeDef, Issue
from .records import RecordError, read_records, require, write_records

SLOT_KINDS = ("key_phrase", "entity_value", "ordinal_position", "candidate_value")
QUESTION_TYPES = ("extractive", "boolean")
SCOPES = ("document", "line_item")


class TemplateError(ValueError):
    """A template is malformed or inconsistent with its declared slots."""


@dataclass(frozen=True, slots=True)
class Slot:
    role: str
    kind: str
    type_name: str | None = None  # entity type for key_phrase / entity_value


@dataclass(frozen=True, slots=True)
class Template:
    template_id: str
    question_type: str
    target_type: str
    scope: str
    pattern: str
    slots: tuple[Slot, ...]

    def slot(self, role: str) -> Slot:
        for s in self.slots:
            if s.role == role:
                return s
        raise KeyError(role)

    def slots_of_kind(self, kind: str) -> tuple[Slot, ...]:
        return tuple(s for s in self.slots if s.kind == kind)


@dataclass(frozen=True, slots=True)
class TemplateSuite:
    dataset_name: str
    templates: tuple[Template, ...]

    def by_id(self, template_id: str) -> Template:
        for t in self.templates:
            if t.template_id == template_id:
                return t
        raise KeyError(template_id)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def extract_placeholders(pattern: str) -> list[str]:
    """Placeholder roles in order of appearance; raises on unbalanced braces."""
    roles = []
    i = 0
    while i < len(pattern):
        c = pattern[i]
        if c == "{":
            end = pattern.find("}", i + 1)
            nested = pattern.find("{", i + 1)
            if end == -1 or (nested != -1 and nested < end):
                raise TemplateError(f"unbalanced braces in pattern: {pattern!r}")
            role = pattern[i + 1 : end]
            if not role:
                raise TemplateError(f"empty placeholder in pattern: {pattern!r}")
            roles.append(role)
            i = end + 1
        elif c == "}":
            raise TemplateError(f"unbalanced braces in pattern: {pattern!r}")
        else:
            i += 1
    return roles


def parse_template(record: Mapping) -> Template:
    """Build a Template from a metadata record, enforcing slot/pattern consistency."""
    loc = str(record.get("template_id", "<template>"))
    template_id = require(dict(record), "template_id", str, loc)
    question_type = require(dict(record), "question_type", str, loc)
    target_type = require(dict(record), "target_type", str, loc)
    scope = require(dict(record), "scope", str, loc)
    pattern = require(dict(record), "pattern", str, loc)
    if question_type not in QUESTION_TYPES:
        raise TemplateError(f"{loc}: unknown question_type '{question_type}'")
    if scope not in SCOPES:
        raise TemplateError(f"{loc}: unknown scope '{scope}'")

    slots = []
    for i, s in enumerate(record.get("slots", [])):
        kind = require(dict(s), "kind", str, f"{loc}: slots[{i}]")
        role = require(dict(s), "role", str, f"{loc}: slots[{i}]")
        if kind not in SLOT_KINDS:
            raise TemplateError(f"{loc}: unknown slot kind '{kind}'")
        type_name = s.get("type_name")
        if kind in ("key_phrase", "entity_value") and not type_name:
            raise TemplateError(f"{loc}: slot '{role}' of kind {kind} requires a type_name")
        slots.append(Slot(role=role, kind=kind, type_name=type_name))

    template = Template(template_id, question_type, target_type, scope, pattern, tuple(slots))
    problems = check_template(template)
    if problems:
        raise TemplateError(f"{loc}: " + "; ".join(problems))
    return template


def check_template(t: Template) -> list[str]:
    """Structural problems independent of any ontology; empty list when sound."""
    problems = []
    try:
        used = extract_placeholders(t.pattern)
    except TemplateError as exc:
        return [str(exc)]

    declared = [s.role for s in t.slots]
    if len(set(declared)) != len(declared):
        problems.append("duplicate slot roles")
    for role in used:
        if role not in declared:
            problems.append(f"placeholder '{{{role}}}' has no declared slot")
    for role in declared:
        if role not in used:
            problems.append(f"declared slot '{role}' unused in pattern")

    candidates = t.slots_of_kind("candidate_value")
    if t.question_type == "boolean" and len(candidates) != 1:
        problems.append("boolean template must declare exactly one candidate_value slot")
    if t.question_type == "extractive" and candidates:
        problems.append("candidate_value slots appear only in boolean templates")
    if t.scope == "document" and t.slots_of_kind("ordinal_position"):
        problems.append("ordinal_position slots appear only in line_item-scoped templates")
    if t.question_type == "extractive":
        for s in t.slots_of_kind("entity_value"):
            if s.type_name == t.target_type:
                problems.append(
                    f"extractive template embeds its own target value (slot '{s.role}')"
                )
    return problems


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def ordinal(n: int) -> str:
    """English ordinal: 1st, 2nd, 3rd, 4th, ... with 11th/12th/13th exceptions."""
    if n < 1:
        raise ValueError(f"ordinal positions are 1-based, got {n}")
    if n % 100 in (11, 12, 13):
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def render(template: Template, bindings: Mapping[str, str | int]) -> str:
    """Substitute every placeholder; ordinal slots take positive integers."""
    values: dict[str, str] = {}
    for slot in template.slots:
        if slot.role not in bindings:
            raise TemplateError(f"missing binding for slot '{slot.role}'")
        bound = bindings[slot.role]
        if slot.kind == "ordinal_position":
            if not isinstance(bound, int) or isinstance(bound, bool) or bound < 1:
                raise TemplateError(f"ordinal slot '{slot.role}' needs a positive integer")
            values[slot.role] = ordinal(bound)
        else:
            if not isinstance(bound, str):
                raise TemplateError(f"slot '{slot.role}' needs a string binding")
            values[slot.role] = bound

    out = []
    i = 0
    pattern = template.pattern
    while i < len(pattern):
        if pattern[i] == "{":
            end = pattern.find("}", i + 1)
            if end == -1:
                raise TemplateError(f"unbalanced braces in pattern: {pattern!r}")
            out.append(values[pattern[i + 1 : end]])
            i = end + 1
        else:
            out.append(pattern[i])
            i += 1
    rendered = "".join(out)
    if "{" in rendered or "}" in rendered:
        raise TemplateError(f"rendered question still contains braces: {rendered!r}")
    return rendered


# ---------------------------------------------------------------------------
# Suite validation and files
# ---------------------------------------------------------------------------


def validate_suite(suite: TemplateSuite, ontology: Sequence[EntityTypeDef]) -> list[Issue]:
    issues = []
    known = {t.name for t in ontology}
    seen_ids: set[str] = set()
    for t in suite.templates:
        loc = f"template {t.template_id}"
        if t.template_id in seen_ids:
            issues.append(Issue("error", loc, "duplicate template_id"))
        seen_ids.add(t.template_id)
        for problem in check_template(t):
            issues.append(Issue("error", loc, problem))
        if t.target_type not in known:
            issues.append(Issue("error", loc, f"unknown entity type '{t.target_type}'"))
        for s in t.slots:
            if s.kind in ("key_phrase", "entity_value") and s.type_name not in known:
                issues.append(
                    Issue("error", loc, f"slot '{s.role}' references unknown entity type '{s.type_name}'")
                )
    return issues


def template_record(t: Template) -> dict:
    return {
        "template_id": t.template_id,
        "question_type": t.question_type,
        "target_type": t.target_type,
        "scope": t.scope,
        "pattern": t.pattern,
        "slots": [
            {"role": s.role, "kind": s.kind, "type_name": s.type_name} for s in t.slots
        ],
    }


def load_template_suite(path: str | Path) -> TemplateSuite:
    """Suite file: a header record {"dataset_name": ...}, then one template per line."""
    dataset_name = None
    templates = []
    for lineno, rec in read_records(path):
        if dataset_name is None:
            dataset_name = require(rec, "dataset_name", str, f"{path}:{lineno}")
            continue
        try:
            templates.append(parse_template(rec))
        except (TemplateError, RecordError) as exc:
            raise RecordError(str(exc), f"{path}:{lineno}") from exc
    if dataset_name is None:
        raise RecordError("suite file is empty", str(path))
    return TemplateSuite(dataset_name, tuple(templates))


def save_template_suite(suite: TemplateSuite, path: str | Path) -> None:
    records: list[dict] = [{"dataset_name": suite.dataset_name}]
    records.extend(template_record(t) for t in suite.templates)
    write_records(path, records)


def suite_digest(suite: TemplateSuite) -> str:
    from .records import digest

    return digest(
        {"dataset_name": suite.dataset_name, "templates": [template_record(t) for t in suite.templates]}
    )
