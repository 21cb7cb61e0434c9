"""Evaluation stack: edit distance, ANLS, BLEU and self-BLEU, perplexity,
an add-k n-gram language model, groundedness labeling, robustness delta,
and Fleiss kappa.

ANLS normalizes the edit distance by the longer string, zeroes scores whose
similarity falls below 1 - tau, and takes the best gold answer. Groundedness
splits incorrect predictions into mis-extractions (found in the document OCR),
misprints (ungrounded but ANLS >= 0.8), and other.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

from .records import read_records, require

GROUNDEDNESS_LABELS = ("correct_grounded", "mis_extraction", "misprint", "other")

ANLS_TAU = 0.5
MISPRINT_ANLS_THRESHOLD = 0.8
_CORRECT_EPS = 1e-12


@dataclass(frozen=True, slots=True)
class EvalRecord:
    qa_id: str
    prediction: str
    gold_answers: tuple[str, ...]
    ocr_text_stream: str
    question_type: str

    def __post_init__(self):
        if not self.gold_answers:
            raise ValueError(f"record {self.qa_id}: gold_answers must be non-empty")


class LanguageModelInterface(Protocol):
    """Scoring contract: per-token conditional log-probabilities, each <= 0."""

    def token_logprobs(self, tokens: Sequence[str]) -> list[float]: ...


# ---------------------------------------------------------------------------
# Edit distance and ANLS
# ---------------------------------------------------------------------------


def levenshtein(s: str, t: str) -> int:
    """Minimum number of single-character inserts, deletes, and substitutions."""
    if s == t:
        return 0
    if not s:
        return len(t)
    if not t:
        return len(s)
    if len(s) < len(t):
        s, t = t, s
    previous = list(range(len(t) + 1))
    for i, cs in enumerate(s, start=1):
        current = [i]
        for j, ct in enumerate(t, start=1):
            current.append(
                min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (cs != ct))
            )
        previous = current
    return previous[-1]


def anls(prediction: str, golds: Sequence[str], tau: float = ANLS_TAU) -> float:
    """Best thresholded similarity against any gold answer, in {0} | (1-tau, 1]."""
    if not golds:
        raise ValueError("golds must be non-empty")
    best = 0.0
    for gold in golds:
        denom = max(len(prediction), len(gold))
        nl = levenshtein(prediction, gold) / denom if denom else 0.0
        score = 1.0 - nl if nl < tau else 0.0
        best = max(best, score)
    return best


def anls_corpus(records: Sequence[EvalRecord], tau: float = ANLS_TAU) -> float:
    """Arithmetic mean of per-record ANLS."""
    if not records:
        raise ValueError("no records to score")
    return sum(anls(r.prediction, r.gold_answers, tau) for r in records) / len(records)


# ---------------------------------------------------------------------------
# BLEU and self-BLEU
# ---------------------------------------------------------------------------


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    hypothesis: Sequence[str],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
) -> float:
    """Modified n-gram precision with brevity penalty.

    Orders longer than the hypothesis are skipped; zero precisions at n >= 2
    are smoothed add-one, while a zero unigram precision makes the score 0.
    """
    if not hypothesis:
        raise ValueError("hypothesis must be non-empty")
    if not references:
        raise ValueError("references must be non-empty")

    effective = min(max_n, len(hypothesis))
    log_sum = 0.0
    for n in range(1, effective + 1):
        hyp_counts = _ngram_counts(hypothesis, n)
        clipped = {}
        for ref in references:
            for gram, count in _ngram_counts(ref, n).items():
                if gram in hyp_counts and count > clipped.get(gram, 0):
                    clipped[gram] = count
        matches = sum(min(count, clipped.get(gram, 0)) for gram, count in hyp_counts.items())
        guesses = sum(hyp_counts.values())
        if matches == 0:
            if n == 1:
                return 0.0
            matches, guesses = 1, guesses + 1
        log_sum += math.log(matches / guesses)

    c = len(hypothesis)
    r = min((abs(len(ref) - c), len(ref)) for ref in references)[1]
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_sum / effective)


def self_bleu(
    corpus: Sequence[str],
    n: int,
    sample_size: int = 5000,
    rng: random.Random | int | None = None,
) -> float:
    """Mean BLEU of each sampled sentence against the rest of the corpus.

    Sentences are whitespace-tokenized. The corpus is canonically sorted
    before sampling so the result is invariant under input shuffling.
    """
    sentences = [s.split() for s in sorted(corpus) if s.split()]
    if len(sentences) < 2:
        raise ValueError("self_bleu needs at least 2 non-empty sentences")
    if rng is None or isinstance(rng, int):
        rng = random.Random(0 if rng is None else rng)

    k = min(sample_size, len(sentences))
    indices = rng.sample(range(len(sentences)), k)

    counts = [[_ngram_counts(s, order) for order in range(1, n + 1)] for s in sentences]
    tables = [_clip_table(counts, order_idx) for order_idx in range(n)]
    length_counts = Counter(len(s) for s in sentences)

    total = 0.0
    for i in indices:
        total += _self_bleu_one(sentences[i], counts[i], tables, length_counts, n)
    return total / k


def _clip_table(counts, order_idx) -> dict:
    """Per n-gram: (highest per-sentence count, how many sentences attain it,
    second-highest count). Lets us clip against "all sentences but one"."""
    table: dict[tuple, tuple[int, int, int]] = {}
    for sentence_counts in counts:
        for gram, count in sentence_counts[order_idx].items():
            top, attainers, second = table.get(gram, (0, 0, 0))
            if count > top:
                table[gram] = (count, 1, top)
            elif count == top:
                table[gram] = (top, attainers + 1, second)
            elif count > second:
                table[gram] = (top, attainers, count)
    return table


def _self_bleu_one(hypothesis, hyp_counts, tables, length_counts, max_n) -> float:
    effective = min(max_n, len(hypothesis))
    log_sum = 0.0
    for order_idx in range(effective):
        matches = 0
        guesses = 0
        table = tables[order_idx]
        for gram, count in hyp_counts[order_idx].items():
            top, attainers, second = table.get(gram, (0, 0, 0))
            clip = top if (count < top or attainers > 1) else second
            matches += min(count, clip)
            guesses += count
        if matches == 0:
            if order_idx == 0:
                return 0.0
            matches, guesses = 1, guesses + 1
        log_sum += math.log(matches / guesses)

    c = len(hypothesis)
    best = None
    for length, count in length_counts.items():
        if length == c and count <= 1:
            continue
        key = (abs(length - c), length)
        if best is None or key < best:
            best = key
    r = best[1]
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_sum / effective)


# ---------------------------------------------------------------------------
# Perplexity and the n-gram stand-in language model
# ---------------------------------------------------------------------------


def perplexity(token_logprobs: Sequence[float]) -> float:
    """Exponentiated mean negative log-likelihood; >= 1, and 1 only for certainty."""
    if not token_logprobs:
        raise ValueError("token_logprobs must be non-empty")
    if any(lp > 0 for lp in token_logprobs):
        raise ValueError("log-probabilities must be <= 0")
    return math.exp(-sum(token_logprobs) / len(token_logprobs))


BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


class NgramLanguageModel:
    """Add-k smoothed n-gram model over whitespace tokens.

    Unseen tokens map to an unknown class, so every conditional distribution
    sums to one over the vocabulary and every log-probability is finite.
    """

    def __init__(self, sentences: Iterable[Sequence[str]], n: int, k: float = 0.01):
        if n < 1:
            raise ValueError("n must be >= 1")
        if k <= 0:
            raise ValueError("add-k smoothing needs k > 0")
        self.n = n
        self.k = k
        self.ngram_counts: Counter = Counter()
        self.context_counts: Counter = Counter()
        vocab = {EOS, UNK}
        trained = False
        for sentence in sentences:
            trained = True
            vocab.update(sentence)
            padded = [BOS] * (n - 1) + list(sentence) + [EOS]
            for i in range(n - 1, len(padded)):
                gram = tuple(padded[i - n + 1 : i + 1])
                self.ngram_counts[gram] += 1
                self.context_counts[gram[:-1]] += 1
        if not trained:
            raise ValueError("training corpus must be non-empty")
        self.vocab = frozenset(vocab)

    def prob(self, token: str, context: Sequence[str]) -> float:
        token = token if token in self.vocab else UNK
        context = tuple(t if t in self.vocab or t == BOS else UNK for t in context)
        gram_count = self.ngram_counts[context + (token,)]
        context_count = self.context_counts[context]
        return (gram_count + self.k) / (context_count + self.k * len(self.vocab))

    def token_logprobs(self, tokens: Sequence[str]) -> list[float]:
        padded = [BOS] * (self.n - 1) + list(tokens)
        out = []
        for i in range(self.n - 1, len(padded)):
            out.append(math.log(self.prob(padded[i], padded[i - self.n + 1 : i])))
        return out

    def sentence_perplexity(self, tokens: Sequence[str]) -> float:
        return perplexity(self.token_logprobs(tokens))


def ngram_lm(train_corpus: Sequence[str], n: int, k: float = 0.01) -> NgramLanguageModel:
    """Train the stand-in model on whitespace-tokenized question strings."""
    return NgramLanguageModel((q.split() for q in train_corpus), n=n, k=k)


# ---------------------------------------------------------------------------
# Groundedness taxonomy
# ---------------------------------------------------------------------------


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def is_grounded(prediction: str, ocr_text_stream: str) -> bool:
    """Case-insensitive, whitespace-normalized search, also ignoring all spacing
    so matches may fall inside one OCR token or run across several."""
    needle = _normalize_ws(prediction).casefold()
    if not needle:
        return False
    hay = _normalize_ws(ocr_text_stream).casefold()
    return needle in hay or needle.replace(" ", "") in hay.replace(" ", "")


def groundedness(record: EvalRecord) -> str:
    """One of correct_grounded, mis_extraction, misprint, other."""
    score = anls(record.prediction, record.gold_answers)
    correct = score >= 1.0 - _CORRECT_EPS
    if not correct and record.question_type == "boolean":
        pred = record.prediction.strip().casefold()
        correct = any(pred == g.strip().casefold() for g in record.gold_answers)
    if correct:
        return "correct_grounded"
    if is_grounded(record.prediction, record.ocr_text_stream):
        return "mis_extraction"
    if score >= MISPRINT_ANLS_THRESHOLD:
        return "misprint"
    return "other"


# ---------------------------------------------------------------------------
# Robustness delta and Fleiss kappa
# ---------------------------------------------------------------------------


def delta(anls_d1_on_d1: float, anls_d2_on_d1: float) -> float:
    """Relative ANLS drop when swapping the training distribution."""
    if anls_d1_on_d1 <= 0:
        raise ValueError("anls_d1_on_d1 must be positive")
    return (anls_d1_on_d1 - anls_d2_on_d1) / anls_d1_on_d1


def fleiss_kappa(ratings: Sequence[Sequence[int]]) -> float:
    """Fleiss kappa over a subjects x categories count matrix.

    Every subject needs the same number of ratings (>= 2). When expected
    agreement is 1 (a single category used throughout), returns 1.0.
    """
    if not ratings:
        raise ValueError("ratings matrix is empty")
    width = len(ratings[0])
    if any(len(row) != width for row in ratings):
        raise ValueError("ragged ratings matrix")
    if any((not isinstance(v, int)) or isinstance(v, bool) or v < 0 for row in ratings for v in row):
        raise ValueError("ratings must be non-negative integers")
    totals = {sum(row) for row in ratings}
    if len(totals) != 1:
        raise ValueError(f"every subject needs the same rater count, got sums {sorted(totals)}")
    raters = totals.pop()
    if raters < 2:
        raise ValueError("need at least 2 raters per subject")

    subjects = len(ratings)
    p_observed = sum(
        (sum(v * v for v in row) - raters) / (raters * (raters - 1)) for row in ratings
    ) / subjects
    category_shares = [
        sum(row[j] for row in ratings) / (subjects * raters) for j in range(width)
    ]
    p_expected = sum(p * p for p in category_shares)
    if abs(1.0 - p_expected) < 1e-15:
        return 1.0
    return (p_observed - p_expected) / (1.0 - p_expected)


# ---------------------------------------------------------------------------
# Prediction files and evaluation reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    num_records: int
    num_unscored: int
    anls: float
    anls_by_question_type: Mapping[str, float]
    groundedness_counts: Mapping[str, Mapping[str, int]]  # question_type -> label -> count
    examples: Mapping[str, list]  # label -> up to 20 example records

    def record(self) -> dict:
        return {
            "num_records": self.num_records,
            "num_unscored": self.num_unscored,
            "anls": self.anls,
            "anls_by_question_type": dict(self.anls_by_question_type),
            "groundedness_counts": {k: dict(v) for k, v in self.groundedness_counts.items()},
            "examples": dict(self.examples),
        }


def load_predictions(path: str | Path) -> dict[str, str]:
    predictions: dict[str, str] = {}
    for lineno, rec in read_records(path):
        loc = f"{path}:{lineno}"
        qa_id = require(rec, "qa_id", str, loc)
        if qa_id in predictions:
            raise ValueError(f"{loc}: duplicate prediction for qa_id '{qa_id}'")
        predictions[qa_id] = require(rec, "prediction", str, loc)
    return predictions


def evaluate_predictions(
    qa_instances: Sequence,
    predictions: Mapping[str, str],
    ocr_streams: Mapping[str, str],
    max_examples: int = 20,
) -> EvalReport:
    """Score predictions against QA instances, by qa_id.

    Every prediction must match an instance; instances without predictions are
    counted as unscored. Groundedness is tallied separately per question type.
    """
    if not predictions:
        raise ValueError("no predictions")
    by_id = {i.qa_id: i for i in qa_instances}
    unmatched = sorted(set(predictions) - set(by_id))
    if unmatched:
        raise ValueError(
            f"{len(unmatched)} prediction(s) with unknown qa_id: {unmatched[:10]}"
        )

    records = []
    for inst in qa_instances:
        if inst.qa_id not in predictions:
            continue
        records.append(
            EvalRecord(
                qa_id=inst.qa_id,
                prediction=predictions[inst.qa_id],
                gold_answers=tuple(inst.answers),
                ocr_text_stream=ocr_streams.get(inst.doc_id, ""),
                question_type=inst.question_type,
            )
        )

    by_type: dict[str, list[EvalRecord]] = {}
    for r in records:
        by_type.setdefault(r.question_type, []).append(r)

    counts: dict[str, dict[str, int]] = {}
    examples: dict[str, list] = {label: [] for label in GROUNDEDNESS_LABELS}
    for qtype, rows in sorted(by_type.items()):
        tally = {label: 0 for label in GROUNDEDNESS_LABELS}
        for r in rows:
            label = groundedness(r)
            tally[label] += 1
            if len(examples[label]) < max_examples:
                examples[label].append(
                    {
                        "qa_id": r.qa_id,
                        "prediction": r.prediction,
                        "gold_answers": list(r.gold_answers),
                        "question_type": r.question_type,
                    }
                )
        counts[qtype] = tally

    return EvalReport(
        num_records=len(records),
        num_unscored=len(by_id) - len(records),
        anls=anls_corpus(records),
        anls_by_question_type={
            qtype: anls_corpus(rows) for qtype, rows in sorted(by_type.items())
        },
        groundedness_counts=counts,
        examples=examples,
    )
