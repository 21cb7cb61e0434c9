#!/usr/bin/env python3
"""Independent tally of the packaged corpus, written as the committed manifest.

Deliberately uses nothing from the kie2qa package: plain JSON parsing and
counting only, so the manifest stays an independent oracle for ingestion.
"""

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DOCS = ROOT / "src" / "kie2qa" / "fixtures" / "receipts.jsonl"
META = ROOT / "src" / "kie2qa" / "fixtures" / "receipts.meta.json"
OUT = ROOT / "tests" / "data" / "corpus_manifest.json"


def main() -> None:
    meta = json.loads(META.read_text(encoding="utf-8"))
    splits = {"train": 0, "dev": 0, "test": 0}
    docs = entities = line_items = tokens = 0
    entities_per_type: dict[str, int] = {}
    for line in DOCS.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        docs += 1
        splits[rec["split"]] += 1
        tokens += len(rec["tokens"])
        line_items += len(rec["line_items"])
        for e in rec["entities"]:
            entities += 1
            entities_per_type[e["type_name"]] = entities_per_type.get(e["type_name"], 0) + 1

    manifest = {
        "dataset_name": meta["name"],
        "ontology_types": len(meta["ontology"]),
        "documents": docs,
        "documents_per_split": splits,
        "entities": entities,
        "entities_per_type": dict(sorted(entities_per_type.items())),
        "line_items": line_items,
        "tokens": tokens,
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"manifest -> {OUT}")
    print(json.dumps(manifest, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
