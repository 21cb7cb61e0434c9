"""Data model and ingestion for KIE-annotated document corpora.

A dataset lives in two files: ``<name>.jsonl`` with one document record per
line, and a companion ``<name>.meta.json`` holding the dataset name and the
entity-type ontology. :func:`load_kie_dataset` reads both and refuses
structurally invalid input; :func:`validate_dataset` returns the full issue
list instead of raising, which is what the ``ingest`` command reports.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .records import RecordError, canonical_json, digest, read_records, require, write_records

SPLITS = ("train", "dev", "test")
FORMAT_CLASSES = ("string", "integer", "decimal", "date", "other")


@dataclass(frozen=True, slots=True)
class Issue:
    severity: str  # "error" or "warning"
    location: str
    message: str


class DatasetValidationError(ValueError):
    """Raised by load_kie_dataset when error-severity issues are present."""

    def __init__(self, issues: list[Issue]):
        self.issues = issues
        errors = [i for i in issues if i.severity == "error"]
        head = "; ".join(f"{i.location}: {i.message}" for i in errors[:3])
        more = f" (+{len(errors) - 3} more)" if len(errors) > 3 else ""
        super().__init__(f"{len(errors)} validation error(s): {head}{more}")


@dataclass(frozen=True, slots=True)
class OCRToken:
    token_id: str
    page_index: int
    text: str
    bbox: tuple[float, float, float, float]  # left, top, right, bottom in [0, 1]


@dataclass(frozen=True, slots=True)
class EntityTypeDef:
    name: str
    parent: str | None
    display_phrases: tuple[str, ...]
    format_class: str


@dataclass(frozen=True, slots=True)
class Entity:
    entity_id: str
    type_name: str
    raw_value: str
    cleaned_value: str | None
    token_span: tuple[str, ...]
    line_item_id: str | None
    page_indices: tuple[int, ...]

    @property
    def value(self) -> str:
        """Cleaned value when set, raw value otherwise."""
        return self.cleaned_value if self.cleaned_value is not None else self.raw_value


@dataclass(frozen=True, slots=True)
class LineItem:
    line_item_id: str
    position: int  # 1-based ordinal within the document
    entity_ids: tuple[str, ...]


@dataclass(frozen=True)
class Document:
    doc_id: str
    page_count: int
    split: str
    tokens: tuple[OCRToken, ...]
    entities: tuple[Entity, ...]
    line_items: tuple[LineItem, ...]

    @cached_property
    def tokens_by_id(self) -> Mapping[str, OCRToken]:
        return {t.token_id: t for t in self.tokens}

    @cached_property
    def entities_by_id(self) -> Mapping[str, Entity]:
        return {e.entity_id: e for e in self.entities}

    @cached_property
    def line_items_by_id(self) -> Mapping[str, LineItem]:
        return {li.line_item_id: li for li in self.line_items}

    @cached_property
    def entities_by_type(self) -> Mapping[str, tuple[Entity, ...]]:
        grouped: dict[str, list[Entity]] = {}
        for e in self.entities:
            grouped.setdefault(e.type_name, []).append(e)
        return {k: tuple(v) for k, v in grouped.items()}

    def ocr_text(self) -> str:
        """Whole-document OCR stream: token texts joined by single spaces."""
        return " ".join(" ".join(t.text.split()) for t in self.tokens if t.text.split())


@dataclass(frozen=True)
class KIEDataset:
    name: str
    ontology: tuple[EntityTypeDef, ...]
    documents: tuple[Document, ...]

    @cached_property
    def ontology_by_name(self) -> Mapping[str, EntityTypeDef]:
        return {t.name: t for t in self.ontology}

    @cached_property
    def documents_by_id(self) -> Mapping[str, Document]:
        return {d.doc_id: d for d in self.documents}


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def dataset_paths(path: str | Path) -> tuple[Path, Path]:
    """Resolve (documents, meta) paths from either half of a dataset pair."""
    path = Path(path)
    if path.name.endswith(".meta.json"):
        docs = path.with_name(path.name[: -len(".meta.json")] + ".jsonl")
        return docs, path
    return path, path.with_suffix(".meta.json")


def read_kie_dataset(path: str | Path) -> KIEDataset:
    """Parse a dataset pair without validating cross-reference invariants."""
    docs_path, meta_path = dataset_paths(path)
    try:
        meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RecordError(f"malformed meta file: {exc}", str(meta_path)) from exc
    if not isinstance(meta, dict):
        raise RecordError("meta file must hold a single object", str(meta_path))

    name = require(meta, "name", str, str(meta_path))
    ontology = tuple(
        _parse_type_def(rec, f"{meta_path}: ontology[{i}]")
        for i, rec in enumerate(require(meta, "ontology", list, str(meta_path)))
    )
    documents = tuple(
        _parse_document(rec, f"{docs_path}:{lineno}") for lineno, rec in read_records(docs_path)
    )
    return KIEDataset(name=name, ontology=ontology, documents=documents)


def load_kie_dataset(path: str | Path) -> KIEDataset:
    """Read and validate; raises DatasetValidationError on any error-severity issue."""
    ds = read_kie_dataset(path)
    issues = validate_dataset(ds)
    if any(i.severity == "error" for i in issues):
        raise DatasetValidationError(issues)
    return ds


def save_kie_dataset(ds: KIEDataset, path: str | Path) -> tuple[Path, Path]:
    docs_path, meta_path = dataset_paths(path)
    meta = {"name": ds.name, "ontology": [_type_def_record(t) for t in ds.ontology]}
    meta_path.write_text(canonical_json(meta) + "\n", encoding="utf-8")
    write_records(docs_path, (_document_record(d) for d in ds.documents))
    return docs_path, meta_path


def dataset_digest(ds: KIEDataset) -> str:
    """Content digest, independent of on-disk formatting."""
    return digest(
        {
            "name": ds.name,
            "ontology": [_type_def_record(t) for t in ds.ontology],
            "documents": [_document_record(d) for d in ds.documents],
        }
    )


def _parse_type_def(rec: dict, loc: str) -> EntityTypeDef:
    if not isinstance(rec, dict):
        raise RecordError("ontology entry must be an object", loc)
    name = require(rec, "name", str, loc)
    parent = rec.get("parent")
    if parent is not None and not isinstance(parent, str):
        raise RecordError("field 'parent' must be a string or null", loc)
    phrases = require(rec, "display_phrases", list, loc)
    if not phrases or not all(isinstance(p, str) and p for p in phrases):
        raise RecordError("display_phrases must be a non-empty list of non-empty strings", loc)
    format_class = require(rec, "format_class", str, loc)
    if format_class not in FORMAT_CLASSES:
        raise RecordError(f"unknown format_class '{format_class}'", loc)
    return EntityTypeDef(name, parent, tuple(phrases), format_class)


def _parse_document(rec: dict, loc: str) -> Document:
    doc_id = require(rec, "doc_id", str, loc)
    loc = f"doc {doc_id}"
    page_count = require(rec, "page_count", int, loc)
    split = require(rec, "split", str, loc)
    if split not in SPLITS:
        raise RecordError(f"field 'split' must be one of {SPLITS}, got '{split}'", loc)

    tokens = []
    for i, t in enumerate(require(rec, "tokens", list, loc)):
        tloc = f"{loc}: tokens[{i}]"
        bbox = require(t, "bbox", list, tloc)
        if len(bbox) != 4 or not all(isinstance(v, (int, float)) for v in bbox):
            raise RecordError("bbox must hold four numbers", tloc)
        tokens.append(
            OCRToken(
                token_id=require(t, "token_id", str, tloc),
                page_index=require(t, "page_index", int, tloc),
                text=require(t, "text", str, tloc),
                bbox=tuple(float(v) for v in bbox),
            )
        )

    entities = []
    for i, e in enumerate(require(rec, "entities", list, loc)):
        eloc = f"{loc}: entities[{i}]"
        cleaned = e.get("cleaned_value")
        if cleaned is not None and not isinstance(cleaned, str):
            raise RecordError("field 'cleaned_value' must be a string or null", eloc)
        line_item_id = e.get("line_item_id")
        if line_item_id is not None and not isinstance(line_item_id, str):
            raise RecordError("field 'line_item_id' must be a string or null", eloc)
        span = require(e, "token_span", list, eloc)
        pages = require(e, "page_indices", list, eloc)
        if not all(isinstance(p, int) for p in pages):
            raise RecordError("page_indices must hold integers", eloc)
        entities.append(
            Entity(
                entity_id=require(e, "entity_id", str, eloc),
                type_name=require(e, "type_name", str, eloc),
                raw_value=require(e, "raw_value", str, eloc),
                cleaned_value=cleaned,
                token_span=tuple(str(t) for t in span),
                line_item_id=line_item_id,
                page_indices=tuple(sorted(set(pages))),
            )
        )

    line_items = []
    for i, li in enumerate(rec.get("line_items", [])):
        lloc = f"{loc}: line_items[{i}]"
        line_items.append(
            LineItem(
                line_item_id=require(li, "line_item_id", str, lloc),
                position=require(li, "position", int, lloc),
                entity_ids=tuple(require(li, "entity_ids", list, lloc)),
            )
        )

    return Document(
        doc_id=doc_id,
        page_count=page_count,
        split=split,
        tokens=tuple(tokens),
        entities=tuple(entities),
        line_items=tuple(line_items),
    )


def _type_def_record(t: EntityTypeDef) -> dict:
    return {
        "name": t.name,
        "parent": t.parent,
        "display_phrases": list(t.display_phrases),
        "format_class": t.format_class,
    }


def _document_record(d: Document) -> dict:
    return {
        "doc_id": d.doc_id,
        "page_count": d.page_count,
        "split": d.split,
        "tokens": [
            {"token_id": t.token_id, "page_index": t.page_index, "text": t.text, "bbox": list(t.bbox)}
            for t in d.tokens
        ],
        "entities": [
            {
                "entity_id": e.entity_id,
                "type_name": e.type_name,
                "raw_value": e.raw_value,
                "cleaned_value": e.cleaned_value,
                "token_span": list(e.token_span),
                "line_item_id": e.line_item_id,
                "page_indices": list(e.page_indices),
            }
            for e in d.entities
        ],
        "line_items": [
            {"line_item_id": li.line_item_id, "position": li.position, "entity_ids": list(li.entity_ids)}
            for li in d.line_items
        ],
    }


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_dataset(ds: KIEDataset) -> list[Issue]:
    """Check every structural invariant; empty result means the dataset is sound."""
    issues: list[Issue] = []
    err = lambda loc, msg: issues.append(Issue("error", loc, msg))
    warn = lambda loc, msg: issues.append(Issue("warning", loc, msg))

    issues.extend(_validate_ontology(ds.ontology))
    type_names = {t.name for t in ds.ontology}

    seen_docs: set[str] = set()
    for doc in ds.documents:
        loc = f"doc {doc.doc_id}"
        if doc.doc_id in seen_docs:
            err(loc, "duplicate doc_id")
            continue
        seen_docs.add(doc.doc_id)

        if doc.page_count < 1:
            err(loc, f"page_count must be positive, got {doc.page_count}")
        if doc.split not in SPLITS:
            err(loc, f"unknown split '{doc.split}'")

        token_ids: set[str] = set()
        for i, t in enumerate(doc.tokens):
            tloc = f"{loc}: tokens[{i}] ({t.token_id})"
            if t.token_id in token_ids:
                err(tloc, "duplicate token_id")
            token_ids.add(t.token_id)
            if not t.text:
                err(tloc, "token text is empty")
            left, top, right, bottom = t.bbox
            if not (0.0 <= left < right <= 1.0 and 0.0 <= top < bottom <= 1.0):
                err(tloc, f"bbox out of order or out of [0,1]: {t.bbox}")
            if not (0 <= t.page_index < doc.page_count):
                err(tloc, f"page_index {t.page_index} outside 0..{doc.page_count - 1}")

        line_items = {li.line_item_id: li for li in doc.line_items}
        if len(line_items) != len(doc.line_items):
            err(loc, "duplicate line_item_id")
        positions = sorted(li.position for li in doc.line_items)
        if positions != list(range(1, len(positions) + 1)):
            err(loc, f"non-consecutive line item positions: {positions}")

        entity_ids: set[str] = set()
        for i, e in enumerate(doc.entities):
            eloc = f"{loc}: entities[{i}] ({e.entity_id})"
            if e.entity_id in entity_ids:
                err(eloc, "duplicate entity_id")
            entity_ids.add(e.entity_id)
            if e.type_name not in type_names:
                err(eloc, f"dangling reference: unknown entity type '{e.type_name}'")
            if not e.page_indices:
                err(eloc, "page_indices is empty")
            for p in e.page_indices:
                if not (0 <= p < doc.page_count):
                    err(eloc, f"page index {p} outside 0..{doc.page_count - 1}")
            missing = [t for t in e.token_span if t not in token_ids]
            if missing:
                err(eloc, f"dangling reference: unknown token id(s) {missing}")
            elif e.token_span:
                span_pages = {doc.tokens_by_id[t].page_index for t in e.token_span}
                if span_pages != set(e.page_indices):
                    err(
                        eloc,
                        f"page_indices {sorted(e.page_indices)} do not match token span pages {sorted(span_pages)}",
                    )
            else:
                warn(eloc, "entity is not linked to OCR tokens")
            if e.line_item_id is not None:
                li = line_items.get(e.line_item_id)
                if li is None:
                    err(eloc, f"dangling reference: unknown line_item_id '{e.line_item_id}'")
                elif e.entity_id not in li.entity_ids:
                    err(eloc, f"line item '{e.line_item_id}' does not list this entity")

        for li in doc.line_items:
            lloc = f"{loc}: line item {li.line_item_id}"
            if not li.entity_ids:
                err(lloc, "entity_ids is empty")
            for eid in li.entity_ids:
                e = doc.entities_by_id.get(eid)
                if e is None:
                    err(lloc, f"dangling reference: unknown entity '{eid}'")
                elif e.line_item_id != li.line_item_id:
                    err(lloc, f"entity '{eid}' does not back-reference this line item")

        if not doc.entities:
            warn(loc, "document has no entities")

    return issues


def _validate_ontology(ontology: tuple[EntityTypeDef, ...]) -> list[Issue]:
    issues: list[Issue] = []
    by_name: dict[str, EntityTypeDef] = {}
    for t in ontology:
        loc = f"ontology type '{t.name}'"
        if t.name in by_name:
            issues.append(Issue("error", loc, "duplicate type name"))
            continue
        by_name[t.name] = t
        if not t.display_phrases:
            issues.append(Issue("error", loc, "display_phrases is empty"))
        if t.format_class not in FORMAT_CLASSES:
            issues.append(Issue("error", loc, f"unknown format_class '{t.format_class}'"))
    for t in ontology:
        loc = f"ontology type '{t.name}'"
        if t.parent is not None and t.parent not in by_name:
            issues.append(Issue("error", loc, f"dangling reference: unknown parent '{t.parent}'"))
    # cycle check over the parent chain
    for t in ontology:
        seen = {t.name}
        cur = t
        while cur.parent is not None and cur.parent in by_name:
            if cur.parent in seen:
                issues.append(
                    Issue("error", f"ontology type '{t.name}'", "cyclic parent hierarchy")
                )
                break
            seen.add(cur.parent)
            cur = by_name[cur.parent]
    return issues


# ---------------------------------------------------------------------------
# Format classification
# ---------------------------------------------------------------------------

_MONTH = r"(?:jan|feb|mar|apr|may|jun|jul|aug|sep|oct|nov|dec)[a-z]*\.?"
_DATE_PATTERNS = [
    re.compile(r"^\d{1,2}[/.\-]\d{1,2}[/.\-]\d{2}(?:\d{2})?$"),  # 01/30/20, 30-01-2020
    re.compile(r"^\d{4}[/.\-]\d{1,2}[/.\-]\d{1,2}$"),  # 2020-01-30
    re.compile(rf"^{_MONTH}\s+\d{{1,2}}(?:st|nd|rd|th)?,?\s+\d{{2,4}}$", re.IGNORECASE),
    re.compile(rf"^\d{{1,2}}(?:st|nd|rd|th)?\s+{_MONTH},?\s+\d{{2,4}}$", re.IGNORECASE),
]
_INTEGER_PATTERN = re.compile(r"^[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)$")
_DECIMAL_PATTERN = re.compile(r"^[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)[.,]\d+$")


def infer_format_class(value: str) -> str:
    """Classify a value string for negative sampling: date, then integer, then decimal."""
    value = value.strip()
    if any(p.match(value) for p in _DATE_PATTERNS):
        return "date"
    if _INTEGER_PATTERN.match(value):
        return "integer"
    if _DECIMAL_PATTERN.match(value):
        return "decimal"
    return "string"


# ---------------------------------------------------------------------------
# OCR linking
# ---------------------------------------------------------------------------

LINK_DISTANCE_THRESHOLD = 0.3


def link_entity_to_ocr(entity: Entity, doc: Document) -> tuple[str, ...]:
    """Best contiguous token window for an unlinked entity's raw value.

    Minimizes the case-insensitive normalized edit distance between the
    window's space-joined text and the raw value; ties keep the earliest,
    shortest window. Returns () when the best distance exceeds 0.3.
    """
    from .metrics import levenshtein

    target = entity.raw_value.casefold()
    n = len(doc.tokens)
    if n == 0:
        return ()
    texts = [t.text.casefold() for t in doc.tokens]

    best_dist = None
    best_span: tuple[str, ...] = ()
    for start in range(n):
        window = ""
        for end in range(start, n):
            window = texts[end] if end == start else f"{window} {texts[end]}"
            denom = max(len(window), len(target))
            if denom == 0:
                dist = 0.0
            else:
                # length difference lower-bounds the edit distance
                if best_dist is not None and abs(len(window) - len(target)) / denom > best_dist:
                    if len(window) > len(target):
                        break  # window only grows from here
                    continue
                dist = levenshtein(window, target) / denom
            if best_dist is None or dist < best_dist:
                best_dist = dist
                best_span = tuple(t.token_id for t in doc.tokens[start : end + 1])

    if best_dist is None or best_dist > LINK_DISTANCE_THRESHOLD:
        return ()
    return best_span


def relink_entities(doc: Document) -> Document:
    """Fill token spans for entities that lack them; page_indices follow the span."""
    new_entities = []
    for e in doc.entities:
        if e.token_span:
            new_entities.append(e)
            continue
        span = link_entity_to_ocr(e, doc)
        if not span:
            new_entities.append(e)
            continue
        pages = tuple(sorted({doc.tokens_by_id[t].page_index for t in span}))
        new_entities.append(replace(e, token_span=span, page_indices=pages))
    return replace(doc, entities=tuple(new_entities))
