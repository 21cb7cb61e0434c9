#!/usr/bin/env python3
"""Independent recomputation of the QA-fixture statistics (the committed golden).

Uses raw JSON parsing and its own arithmetic, nothing from the kie2qa package,
so the golden report stays an independent oracle for reporting.dataset_stats.
"""

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
QA = ROOT / "tests" / "data" / "demo_qa.jsonl"
OUT = ROOT / "tests" / "data" / "golden_stats.json"


def main() -> None:
    rows = []
    for i, line in enumerate(QA.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        rec = json.loads(line)
        if i == 0:  # header record
            continue
        rows.append(rec)

    n = len(rows)
    extractive = sum(1 for r in rows if r["question_type"] == "extractive")
    single_page = sum(1 for r in rows if len(r["page_scope"]) == 1)
    question_tokens = sum(len(r["question"].split()) for r in rows)
    answer_tokens = sum(len(r["answers"][0].split()) for r in rows)
    entities = sum(r["num_question_entities"] for r in rows)
    docs = len({r["doc_id"] for r in rows})
    templates = len({r["template_id"] for r in rows})

    golden = {
        "num_templates_used": templates,
        "num_questions": n,
        "pct_extractive": 100.0 * extractive / n,
        "pct_single_page": 100.0 * single_page / n,
        "avg_question_tokens": question_tokens / n,
        "avg_answer_tokens": answer_tokens / n,
        "avg_entities_per_question": entities / n,
        "avg_questions_per_doc": n / docs,
    }
    OUT.write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"golden -> {OUT}")
    print(json.dumps(golden, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
