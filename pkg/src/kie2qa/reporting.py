"""Dataset statistics, diversity summaries, and validation-report assembly."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .generator import QADataset
from .metrics import fleiss_kappa, self_bleu

ERROR_CATEGORIES = ("template_error", "cleaning_error", "annotation_error", "other_error")
NO_ERROR = "no_error"
VALIDATION_CATEGORIES = ERROR_CATEGORIES + (NO_ERROR,)

DIVERSITY_SAMPLE_SEED = 0


@dataclass(frozen=True, slots=True)
class StatsReport:
    num_templates_used: int
    num_questions: int
    pct_extractive: float
    pct_single_page: float
    avg_question_tokens: float
    avg_answer_tokens: float
    avg_entities_per_question: float
    avg_questions_per_doc: float

    def record(self) -> dict:
        return {
            "num_templates_used": self.num_templates_used,
            "num_questions": self.num_questions,
            "pct_extractive": self.pct_extractive,
            "pct_single_page": self.pct_single_page,
            "avg_question_tokens": self.avg_question_tokens,
            "avg_answer_tokens": self.avg_answer_tokens,
            "avg_entities_per_question": self.avg_entities_per_question,
            "avg_questions_per_doc": self.avg_questions_per_doc,
        }


def dataset_stats(qads: QADataset) -> StatsReport:
    """Table-style summary; tokens are maximal whitespace-separated chunks."""
    instances = qads.instances
    if not instances:
        raise ValueError("cannot summarize an empty QA dataset")
    n = len(instances)
    extractive = sum(1 for i in instances if i.question_type == "extractive")
    single_page = sum(1 for i in instances if len(i.page_scope) == 1)
    question_tokens = sum(len(i.question.split()) for i in instances)
    answer_tokens = sum(len(i.answers[0].split()) for i in instances)
    entities = sum(i.num_question_entities for i in instances)
    docs = {i.doc_id for i in instances}
    return StatsReport(
        num_templates_used=len({i.template_id for i in instances}),
        num_questions=n,
        pct_extractive=100.0 * extractive / n,
        pct_single_page=100.0 * single_page / n,
        avg_question_tokens=question_tokens / n,
        avg_answer_tokens=answer_tokens / n,
        avg_entities_per_question=entities / n,
        avg_questions_per_doc=n / len(docs),
    )


def diversity_report(qads: QADataset, ngrams: Sequence[int]) -> dict[int, float]:
    """Self-BLEU of the test-split questions at each requested n-gram order."""
    questions = [i.question for i in qads.instances if i.split == "test"]
    if len(questions) < 2:
        raise ValueError("diversity report needs at least 2 test-split questions")
    return {n: self_bleu(questions, n, rng=DIVERSITY_SAMPLE_SEED) for n in ngrams}


@dataclass(frozen=True, slots=True)
class ValidationReport:
    num_questions: int
    num_raters: int
    error_rates: Mapping[str, float]  # category -> percent of questions flagged
    total_error_rate: float
    kappa_by_category: Mapping[str, float]
    overall_kappa: float

    def record(self) -> dict:
        return {
            "num_questions": self.num_questions,
            "num_raters": self.num_raters,
            "error_rates": dict(self.error_rates),
            "total_error_rate": self.total_error_rate,
            "kappa_by_category": dict(self.kappa_by_category),
            "overall_kappa": self.overall_kappa,
        }


def validation_report(annotations: Sequence[Sequence[str]]) -> ValidationReport:
    """Aggregate per-question rater labels into error rates and agreement.

    Each row holds one label per rater, drawn from the four error categories
    plus "no_error". An error is counted when at least two raters flag it.
    """
    if not annotations:
        raise ValueError("no annotations")
    num_raters = len(annotations[0])
    if num_raters < 2:
        raise ValueError("need at least 2 raters per question")
    for row in annotations:
        if len(row) != num_raters:
            raise ValueError("ragged rater counts")
        for label in row:
            if label not in VALIDATION_CATEGORIES:
                raise ValueError(f"unknown category '{label}'")

    n = len(annotations)
    error_rates = {}
    kappa_by_category = {}
    for category in ERROR_CATEGORIES:
        flags = [sum(1 for label in row if label == category) for row in annotations]
        error_rates[category] = 100.0 * sum(1 for f in flags if f >= 2) / n
        kappa_by_category[category] = fleiss_kappa(
            [[f, num_raters - f] for f in flags]
        )

    full_matrix = [
        [sum(1 for label in row if label == category) for category in VALIDATION_CATEGORIES]
        for row in annotations
    ]
    return ValidationReport(
        num_questions=n,
        num_raters=num_raters,
        error_rates=error_rates,
        total_error_rate=sum(error_rates.values()),
        kappa_by_category=kappa_by_category,
        overall_kappa=fleiss_kappa(full_matrix),
    )


def stats_table(report: StatsReport) -> str:
    """Aligned two-column plain-text rendering of a stats report."""
    rows = [
        ("Templates used", f"{report.num_templates_used}"),
        ("Questions", f"{report.num_questions}"),
        ("Extractive %", f"{report.pct_extractive:.4f}"),
        ("Single-page %", f"{report.pct_single_page:.4f}"),
        ("Question tokens (avg)", f"{report.avg_question_tokens:.4f}"),
        ("Answer tokens (avg)", f"{report.avg_answer_tokens:.4f}"),
        ("Entities per question (avg)", f"{report.avg_entities_per_question:.4f}"),
        ("Questions per doc (avg)", f"{report.avg_questions_per_doc:.4f}"),
    ]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)
