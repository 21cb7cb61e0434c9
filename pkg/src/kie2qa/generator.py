"""Enumerate, filter, and sample question-answer instances.

Ambiguity handling follows two rules: document-scoped extractive questions
over repeated non-line-item entities accept every value as an answer, while
line-item questions whose anchor values match more than one row are dropped
entirely. Half of the boolean questions emitted for a document are false by
construction, with candidates drawn from three pools: same-type values across
the dataset, same-document values under a shared parent type, and
same-document values of the same format class.

Generation is deterministic: each document draws from its own RNG stream
derived from (seed, doc_id), and the final instance order is a stable sort,
so results do not depend on worker count or scheduling.
"""

from __future__ import annotations

import hashlib
import json
import random
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .model import Document, Entity, EntityTypeDef, KIEDataset, dataset_digest, infer_format_class
from .records import RecordError, canonical_json, digest, read_records, require, write_records
from .templates import Template, TemplateSuite, render, suite_digest

STRATEGIES = ("per_entity", "generate_all_then_sample")


class NoNegativeCandidateError(ValueError):
    """All three negative-candidate pools are empty after excluding true answers."""


class GenerationSkipWarning(UserWarning):
    """Carries counts of skipped questions, keyed by reason."""

    def __init__(self, counts: Mapping[str, int]):
        self.counts = dict(counts)
        super().__init__(f"skipped questions: {self.counts}")


@dataclass(frozen=True, slots=True)
class GenerationConfig:
    seed: int
    strategy: str = "per_entity"
    boolean_count_per_doc: int = 0
    extractive_quota: int | None = None
    boolean_quota: int | None = None
    false_fraction: float = 0.5  # fixed by design; no off switch
    single_page_only: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy '{self.strategy}'")
        if self.false_fraction != 0.5:
            raise ValueError("false_fraction is fixed at 0.5")
        if self.boolean_count_per_doc < 0:
            raise ValueError("boolean_count_per_doc must be non-negative")

    def record(self) -> dict:
        return {
            "seed": self.seed,
            "strategy": self.strategy,
            "boolean_count_per_doc": self.boolean_count_per_doc,
            "extractive_quota": self.extractive_quota,
            "boolean_quota": self.boolean_quota,
            "false_fraction": self.false_fraction,
            "single_page_only": self.single_page_only,
        }

    def digest(self) -> str:
        return digest(self.record())


def load_generation_config(path: str | Path) -> GenerationConfig:
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(rec, dict):
        raise RecordError("config file must hold a single object", str(path))
    known = {
        "seed",
        "strategy",
        "boolean_count_per_doc",
        "extractive_quota",
        "boolean_quota",
        "false_fraction",
        "single_page_only",
    }
    unknown = set(rec) - known
    if unknown:
        raise RecordError(f"unknown config field(s): {sorted(unknown)}", str(path))
    if "seed" not in rec:
        raise RecordError("config file must carry an explicit seed", str(path))
    return GenerationConfig(**rec)


@dataclass(frozen=True, slots=True)
class QAInstance:
    qa_id: str
    doc_id: str
    split: str
    page_scope: tuple[int, ...]
    question: str
    question_type: str
    answers: tuple[str, ...]
    entity_ids_used: tuple[str, ...]
    answer_entity_ids: tuple[str, ...]
    answer_token_spans: tuple[tuple[str, ...], ...]
    template_id: str
    num_question_entities: int
    candidate_value: str | None = None
    slot_bindings: tuple[tuple[str, str | int], ...] = ()

    def bindings(self) -> dict[str, str | int]:
        return dict(self.slot_bindings)


@dataclass(frozen=True, slots=True)
class QADataset:
    name: str
    instances: tuple[QAInstance, ...]
    provenance: Mapping[str, str]

    def questions(self) -> list[str]:
        return [i.question for i in self.instances]


# ---------------------------------------------------------------------------
# Candidate enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Candidate:
    """A template with its anchor slots bound; key phrases and boolean
    candidates are filled in at sampling time."""

    template: Template
    binding: tuple[tuple[str, str | int], ...]  # entity_value and ordinal roles
    used_entity_ids: tuple[str, ...]
    answer_entity_ids: tuple[str, ...]
    answers: tuple[str, ...]  # extractive answers, or the boolean true-value pool
    page_scope: tuple[int, ...]
    line_item_id: str | None

    @property
    def stem_key(self) -> str:
        return f"{self.template.template_id}\x1f{canonical_json(dict(self.binding))}"


def multi_answer_resolution(target_type: str, doc: Document) -> list[str]:
    """Acceptable answers for a document-scoped extractive question.

    Repeated non-line-item entities of the target type are all accepted;
    values are deduplicated in document order.
    """
    entities = doc.entities_by_type.get(target_type, ())
    pool = [e for e in entities if e.line_item_id is None] or list(entities)
    return _dedup(e.value for e in pool)


def enumerate_candidates(
    doc: Document, suite: TemplateSuite, single_page_only: bool = False
) -> list[Candidate]:
    """Every valid (template, binding) pair for a document.

    A binding is valid when all slot entities exist, line-item anchor values
    identify exactly one row, and, under single_page_only, all question and
    answer entities sit on one page.
    """
    out: list[Candidate] = []
    for template in suite.templates:
        if template.scope == "document":
            out.extend(_document_candidates(doc, template))
        else:
            out.extend(_line_item_candidates(doc, template))
    if single_page_only:
        out = [c for c in out if len(c.page_scope) == 1]
    return out


def _document_candidates(doc: Document, template: Template) -> Iterable[Candidate]:
    targets = doc.entities_by_type.get(template.target_type, ())
    if not targets:
        return
    if template.question_type == "extractive":
        # a repeated line-item type has no well-defined document-level answer
        if len(targets) > 1 and any(e.line_item_id is not None for e in targets):
            return
        answers = tuple(v for v in multi_answer_resolution(template.target_type, doc) if v)
        answer_ids = tuple(
            e.entity_id for e in ([e for e in targets if e.line_item_id is None] or list(targets))
        )
    else:
        answers = tuple(_dedup(e.value for e in targets if e.value))
        answer_ids = tuple(e.entity_id for e in targets)
    if not answers:
        return

    value_slots = template.slots_of_kind("entity_value")
    combos: list[tuple[tuple[tuple[str, str | int], ...], tuple[str, ...]]] = [((), ())]
    for slot in value_slots:
        anchors = doc.entities_by_type.get(slot.type_name, ())
        next_combos = []
        for value in _dedup(e.value for e in anchors if e.value):
            source = next(e for e in anchors if e.value == value)
            for binding, used in combos:
                next_combos.append((binding + ((slot.role, value),), used + (source.entity_id,)))
        combos = next_combos
    if not combos:
        return

    for binding, used in combos:
        pages = _page_union(doc, used + answer_ids)
        yield Candidate(
            template=template,
            binding=binding,
            used_entity_ids=used,
            answer_entity_ids=answer_ids,
            answers=answers,
            page_scope=pages,
            line_item_id=None,
        )


def _line_item_candidates(doc: Document, template: Template) -> Iterable[Candidate]:
    value_slots = template.slots_of_kind("entity_value")
    ordinal_slots = template.slots_of_kind("ordinal_position")
    rows = sorted(doc.line_items, key=lambda li: li.position)
    row_entities = {
        li.line_item_id: [e for e in doc.entities if e.line_item_id == li.line_item_id]
        for li in rows
    }

    def row_values(li_id: str, type_name: str) -> list[str]:
        return _dedup(e.value for e in row_entities[li_id] if e.type_name == type_name and e.value)

    for li in rows:
        targets = [e for e in row_entities[li.line_item_id] if e.type_name == template.target_type]
        answers = tuple(_dedup(e.value for e in targets if e.value))
        if not answers:
            continue

        binding: list[tuple[str, str | int]] = []
        used: list[str] = []
        ok = True
        for slot in ordinal_slots:
            binding.append((slot.role, li.position))
        for slot in value_slots:
            values = row_values(li.line_item_id, slot.type_name)
            if not values:
                ok = False
                break
            value = values[0]
            # the anchor value must pick out exactly one row in the document
            matching = [
                r for r in rows if value in row_values(r.line_item_id, slot.type_name)
            ]
            if len(matching) != 1:
                ok = False
                break
            source = next(
                e
                for e in row_entities[li.line_item_id]
                if e.type_name == slot.type_name and e.value == value
            )
            binding.append((slot.role, value))
            used.append(source.entity_id)
        if not ok:
            continue

        answer_ids = tuple(e.entity_id for e in targets)
        pages = _page_union(doc, tuple(used) + answer_ids)
        yield Candidate(
            template=template,
            binding=tuple(binding),
            used_entity_ids=tuple(used),
            answer_entity_ids=answer_ids,
            answers=answers,
            page_scope=pages,
            line_item_id=li.line_item_id,
        )


def _page_union(doc: Document, entity_ids: tuple[str, ...]) -> tuple[int, ...]:
    pages: set[int] = set()
    for eid in entity_ids:
        pages.update(doc.entities_by_id[eid].page_indices)
    return tuple(sorted(pages))


def _dedup(values: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for v in values:
        if v not in seen:
            seen.add(v)
            out.append(v)
    return out


# ---------------------------------------------------------------------------
# Negative sampling
# ---------------------------------------------------------------------------


def build_value_pools(ds: KIEDataset) -> dict[str, tuple[str, ...]]:
    """Unique non-empty values per entity type across the whole dataset."""
    pools: dict[str, set[str]] = {}
    for doc in ds.documents:
        for e in doc.entities:
            if e.value:
                pools.setdefault(e.type_name, set()).add(e.value)
    return {k: tuple(sorted(v)) for k, v in pools.items()}


def sample_negative(
    target: Entity,
    ds: KIEDataset,
    doc: Document,
    rng: random.Random,
    true_answers: Iterable[str] | None = None,
) -> str:
    """A false candidate value for a boolean question about `target`."""
    return _sample_negative(
        target,
        build_value_pools(ds),
        {t.name: t for t in ds.ontology},
        doc,
        rng,
        true_answers,
    )


def _sample_negative(
    target: Entity,
    pools: Mapping[str, tuple[str, ...]],
    ontology: Mapping[str, EntityTypeDef],
    doc: Document,
    rng: random.Random,
    true_answers: Iterable[str] | None = None,
) -> str:
    if true_answers is None:
        exclude = {e.value for e in doc.entities_by_type.get(target.type_name, ()) if e.value}
    else:
        exclude = {v for v in true_answers}

    same_type = [v for v in pools.get(target.type_name, ()) if v not in exclude]

    parent = ontology[target.type_name].parent if target.type_name in ontology else None
    shared_parent: list[str] = []
    if parent is not None:
        shared_parent = sorted(
            {
                e.value
                for e in doc.entities
                if e.entity_id != target.entity_id
                and e.value
                and e.value not in exclude
                and ontology.get(e.type_name) is not None
                and ontology[e.type_name].parent == parent
            }
        )

    fmt = infer_format_class(target.value) if target.value else "string"
    same_format = sorted(
        {
            e.value
            for e in doc.entities
            if e.entity_id != target.entity_id
            and e.value
            and e.value not in exclude
            and infer_format_class(e.value) == fmt
        }
    )

    nonempty = [s for s in (same_type, shared_parent, same_format) if s]
    if not nonempty:
        raise NoNegativeCandidateError(
            f"no false candidate available for entity {target.entity_id} ({target.type_name})"
        )
    chosen_set = nonempty[rng.randrange(len(nonempty))]
    return chosen_set[rng.randrange(len(chosen_set))]


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _stream(*parts) -> random.Random:
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return random.Random(int.from_bytes(hashlib.sha256(key).digest()[:16], "big"))


def generate(
    ds: KIEDataset,
    suite: TemplateSuite,
    config: GenerationConfig,
    jobs: int = 1,
) -> QADataset:
    """Produce a QADataset; identical inputs and seed give identical output."""
    uncleaned = [
        e.entity_id for doc in ds.documents for e in doc.entities if e.cleaned_value is None
    ]
    if uncleaned:
        raise ValueError(
            f"dataset is not cleaned: {len(uncleaned)} entities lack cleaned_value "
            f"(first: {uncleaned[:5]}); run cleaning first"
        )

    pools = build_value_pools(ds)
    ontology = {t.name: t for t in ds.ontology}
    skips: dict[str, int] = {}

    worker_args = [(doc, suite, config, pools, ontology) for doc in ds.documents]
    if jobs > 1 and len(ds.documents) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_doc_worker, worker_args, chunksize=8))
    else:
        results = [_doc_worker(args) for args in worker_args]

    instances: list[QAInstance] = []
    boolean_stems: list[tuple[Document, Candidate]] = []
    for doc, (doc_instances, stems, doc_skips) in zip(ds.documents, results):
        instances.extend(doc_instances)
        boolean_stems.extend((doc, stem) for stem in stems)
        for reason, count in doc_skips.items():
            skips[reason] = skips.get(reason, 0) + count

    if config.strategy == "generate_all_then_sample":
        instances = _apply_quota(
            instances, config.extractive_quota, _stream(config.seed, "sample", "extractive"), skips
        )
        boolean_stems = _apply_quota(
            sorted(boolean_stems, key=lambda pair: (pair[0].doc_id, pair[1].stem_key)),
            config.boolean_quota,
            _stream(config.seed, "sample", "boolean"),
            skips,
            reason="boolean_quota_unmet",
        )
        per_doc: dict[str, list[Candidate]] = {}
        doc_index = {doc.doc_id: doc for doc, _ in boolean_stems}
        for doc, stem in boolean_stems:
            per_doc.setdefault(doc.doc_id, []).append(stem)
        for doc_id in sorted(per_doc):
            doc = doc_index[doc_id]
            stems = per_doc[doc_id]
            emitted = _emit_booleans(
                doc, stems, len(stems), _stream(config.seed, doc_id, "boolean"),
                pools, ontology, skips,
            )
            instances.extend(emitted)

    instances.sort(key=lambda i: (i.doc_id, i.template_id, i.qa_id))
    _check_unique_ids(instances)

    if skips:
        warnings.warn(GenerationSkipWarning(skips), stacklevel=2)

    return QADataset(
        name=f"{ds.name}+{suite.dataset_name}",
        instances=tuple(instances),
        provenance={
            "config_digest": config.digest(),
            "suite_digest": suite_digest(suite),
            "source_digest": dataset_digest(ds),
        },
    )


def _apply_quota(items: list, quota: int | None, rng: random.Random, skips: dict,
                 reason: str = "extractive_quota_unmet") -> list:
    if quota is None:
        return items
    if quota >= len(items):
        if quota > len(items):
            skips[reason] = skips.get(reason, 0) + (quota - len(items))
        return items
    return rng.sample(items, quota)


def _doc_worker(args) -> tuple[list[QAInstance], list[Candidate], dict[str, int]]:
    doc, suite, config, pools, ontology = args
    skips: dict[str, int] = {}
    candidates = enumerate_candidates(doc, suite, config.single_page_only)
    extractive = [c for c in candidates if c.template.question_type == "extractive"]
    boolean = [c for c in candidates if c.template.question_type == "boolean"]
    rng_x = _stream(config.seed, doc.doc_id, "extractive")

    instances: list[QAInstance] = []
    if config.strategy == "per_entity":
        emitted: set[str] = set()
        for entity in doc.entities:
            applicable = [c for c in extractive if entity.entity_id in c.answer_entity_ids]
            if not applicable:
                skips["entities_without_templates"] = skips.get("entities_without_templates", 0) + 1
                continue
            chosen = applicable[rng_x.randrange(len(applicable))]
            if chosen.stem_key in emitted:
                continue
            emitted.add(chosen.stem_key)
            instances.append(_make_extractive(doc, chosen, ontology, rng_x))
        rng_b = _stream(config.seed, doc.doc_id, "boolean")
        instances.extend(
            _emit_booleans(doc, boolean, config.boolean_count_per_doc, rng_b, pools, ontology, skips)
        )
        return instances, [], skips

    # generate_all_then_sample: emit every extractive instance, defer booleans
    for c in extractive:
        instances.append(_make_extractive(doc, c, ontology, rng_x))
    return instances, boolean, skips


def _emit_booleans(
    doc: Document,
    stems: list[Candidate],
    count: int,
    rng: random.Random,
    pools: Mapping[str, tuple[str, ...]],
    ontology: Mapping[str, EntityTypeDef],
    skips: dict[str, int],
) -> list[QAInstance]:
    """Emit up to `count` booleans with exactly floor(n/2) false among the n emitted."""
    if count <= 0 or not stems:
        if count > 0:
            skips["boolean_shortfall"] = skips.get("boolean_shortfall", 0) + count
        return []
    order = sorted(stems, key=lambda c: c.stem_key)
    rng.shuffle(order)

    false_target = min(count, len(order)) // 2
    false_made: list[tuple[Candidate, str]] = []
    true_pool: list[Candidate] = []
    for stem in order:
        if len(false_made) < false_target:
            target_entity = doc.entities_by_id[stem.answer_entity_ids[0]]
            try:
                negative = _sample_negative(
                    target_entity, pools, ontology, doc, rng, true_answers=stem.answers
                )
                false_made.append((stem, negative))
                continue
            except NoNegativeCandidateError:
                skips["no_negative_candidate"] = skips.get("no_negative_candidate", 0) + 1
        true_pool.append(stem)

    n = min(count, len(order))
    false_used = min(len(false_made), n // 2)
    if false_used < n // 2:
        n = min(n, 2 * false_used + 1)
        false_used = min(len(false_made), n // 2)
    true_needed = n - false_used
    if n < count:
        skips["boolean_shortfall"] = skips.get("boolean_shortfall", 0) + (count - n)

    out = []
    for stem, negative in false_made[:false_used]:
        out.append(_make_boolean(doc, stem, negative, False, ontology, rng))
    true_stems = true_pool + [stem for stem, _ in false_made[false_used:]]
    for stem in true_stems[:true_needed]:
        out.append(_make_boolean(doc, stem, stem.answers[0], True, ontology, rng))
    return out


def _make_extractive(
    doc: Document, c: Candidate, ontology: Mapping[str, EntityTypeDef], rng: random.Random
) -> QAInstance:
    binding = _complete_binding(c, None, ontology, rng)
    question = render(c.template, dict(binding))
    return _instance(doc, c, question, binding, answers=c.answers, candidate=None)


def _make_boolean(
    doc: Document,
    c: Candidate,
    candidate_value: str,
    truth: bool,
    ontology: Mapping[str, EntityTypeDef],
    rng: random.Random,
) -> QAInstance:
    binding = _complete_binding(c, candidate_value, ontology, rng)
    question = render(c.template, dict(binding))
    used = c.used_entity_ids
    if truth:
        matching = tuple(
            e.entity_id
            for e in doc.entities
            if e.entity_id in c.answer_entity_ids and e.value == candidate_value
        )
        used = used + tuple(eid for eid in matching if eid not in used)
    return _instance(
        doc,
        c,
        question,
        binding,
        answers=("Yes",) if truth else ("No",),
        candidate=candidate_value,
        used_override=used,
    )


def _complete_binding(
    c: Candidate,
    candidate_value: str | None,
    ontology: Mapping[str, EntityTypeDef],
    rng: random.Random,
) -> tuple[tuple[str, str | int], ...]:
    binding = dict(c.binding)
    for slot in c.template.slots:
        if slot.kind == "key_phrase":
            phrases = ontology[slot.type_name].display_phrases
            binding[slot.role] = phrases[rng.randrange(len(phrases))]
        elif slot.kind == "candidate_value":
            if candidate_value is None:
                raise ValueError("boolean candidate value missing")
            binding[slot.role] = candidate_value
    return tuple(sorted(binding.items(), key=lambda kv: kv[0]))


def _instance(
    doc: Document,
    c: Candidate,
    question: str,
    binding: tuple[tuple[str, str | int], ...],
    answers: tuple[str, ...],
    candidate: str | None,
    used_override: tuple[str, ...] | None = None,
) -> QAInstance:
    used = used_override if used_override is not None else c.used_entity_ids
    n_entities = len(c.template.slots_of_kind("entity_value")) + len(
        c.template.slots_of_kind("candidate_value")
    )
    qa_id = hashlib.sha256(
        canonical_json(
            {
                "doc_id": doc.doc_id,
                "template_id": c.template.template_id,
                "binding": [[k, v] for k, v in binding],
                "question_type": c.template.question_type,
            }
        ).encode("utf-8")
    ).hexdigest()[:16]
    return QAInstance(
        qa_id=qa_id,
        doc_id=doc.doc_id,
        split=doc.split,
        page_scope=c.page_scope,
        question=question,
        question_type=c.template.question_type,
        answers=answers,
        entity_ids_used=used,
        answer_entity_ids=c.answer_entity_ids,
        answer_token_spans=tuple(
            doc.entities_by_id[eid].token_span for eid in c.answer_entity_ids
        ),
        template_id=c.template.template_id,
        num_question_entities=n_entities,
        candidate_value=candidate,
        slot_bindings=binding,
    )


def _check_unique_ids(instances: list[QAInstance]) -> None:
    seen: set[str] = set()
    for i in instances:
        if i.qa_id in seen:
            raise AssertionError(f"duplicate qa_id {i.qa_id} for doc {i.doc_id}")
        seen.add(i.qa_id)


# ---------------------------------------------------------------------------
# QA dataset files
# ---------------------------------------------------------------------------


def instance_record(i: QAInstance) -> dict:
    return {
        "qa_id": i.qa_id,
        "doc_id": i.doc_id,
        "split": i.split,
        "page_scope": list(i.page_scope),
        "question": i.question,
        "question_type": i.question_type,
        "answers": list(i.answers),
        "entity_ids_used": list(i.entity_ids_used),
        "answer_entity_ids": list(i.answer_entity_ids),
        "answer_token_spans": [list(span) for span in i.answer_token_spans],
        "template_id": i.template_id,
        "num_question_entities": i.num_question_entities,
        "candidate_value": i.candidate_value,
        "slot_bindings": {k: v for k, v in i.slot_bindings},
    }


def save_qa_dataset(qa: QADataset, path: str | Path) -> None:
    header = {"name": qa.name, "provenance": dict(qa.provenance)}
    write_records(path, [header] + [instance_record(i) for i in qa.instances])


def load_qa_dataset(path: str | Path) -> QADataset:
    header = None
    instances = []
    for lineno, rec in read_records(path):
        loc = f"{path}:{lineno}"
        if header is None:
            header = rec
            require(rec, "name", str, loc)
            require(rec, "provenance", dict, loc)
            continue
        bindings = require(rec, "slot_bindings", dict, loc)
        instances.append(
            QAInstance(
                qa_id=require(rec, "qa_id", str, loc),
                doc_id=require(rec, "doc_id", str, loc),
                split=require(rec, "split", str, loc),
                page_scope=tuple(require(rec, "page_scope", list, loc)),
                question=require(rec, "question", str, loc),
                question_type=require(rec, "question_type", str, loc),
                answers=tuple(require(rec, "answers", list, loc)),
                entity_ids_used=tuple(require(rec, "entity_ids_used", list, loc)),
                answer_entity_ids=tuple(require(rec, "answer_entity_ids", list, loc)),
                answer_token_spans=tuple(
                    tuple(span) for span in require(rec, "answer_token_spans", list, loc)
                ),
                template_id=require(rec, "template_id", str, loc),
                num_question_entities=require(rec, "num_question_entities", int, loc),
                candidate_value=rec.get("candidate_value"),
                slot_bindings=tuple(sorted(bindings.items(), key=lambda kv: kv[0])),
            )
        )
    if header is None:
        raise RecordError("QA file is empty", str(path))
    return QADataset(
        name=header["name"], instances=tuple(instances), provenance=dict(header["provenance"])
    )
