#!/usr/bin/env python3
"""Build the packaged synthetic receipt corpus and demo template suites.

Deterministic: rerunning produces byte-identical fixture files. Run from the
repository root after an editable install (or with PYTHONPATH=src):

    python scripts/build_fixtures.py
"""

from __future__ import annotations

import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from kie2qa.records import canonical_json, write_records  # noqa: E402

FIXTURES = ROOT / "src" / "kie2qa" / "fixtures"

VENDORS = [
    "Juniper Deli", "MAPLE STREET BAKERY", "Cedar Cafe", "HARBOR NOODLE HOUSE",
    "Violet Groceries", "OAKLAND COFFEE WORKS", "Brine & Barley", "SUNRISE MART",
    "Pepper Tree Kitchen", "NORTH PIER SEAFOOD", "Gilded Spoon", "COPPER KETTLE DINER",
    "Lantern Books & Tea", "EASTSIDE BAGELS", "Quartz Convenience", "MERIDIAN PIZZA CO",
    "Saffron Corner", "BLUEBELL CREAMERY", "Tidewater Grill", "GARNET JUICE BAR",
    "Moss & Fern Salads", "WESTGATE BUTCHER SHOP", "Pinecone Provisions", "DELTA DUMPLING BAR",
    "Harvest Moon Pantry", "IRONWOOD ESPRESSO", "Citrus Alley", "FALLOW FIELD FARMSTAND",
    "Marble Arch Sweets", "KITE HILL KITCHEN", "Opal Diner", "RIVERBEND ROASTERY",
    "Thistle & Thyme", "GRANITE CITY GRILL", "Nimbus Creamworks", "BAYSIDE TAQUERIA",
    "Clove Street Curry", "AMBER LANE PASTRY", "Driftwood Cantina", "SILVER BIRCH BISTRO",
]

_BASE_PRODUCTS = [
    "CHOC BANANA", "ICED LATTE", "GARDEN SALAD", "SOURDOUGH LOAF", "MISO RAMEN",
    "LEMON TART", "COLD BREW", "VEGGIE WRAP", "SESAME BAGEL", "TOMATO SOUP",
    "BERRY SMOOTHIE", "PULLED PORK BUN", "GREEN TEA", "CINNAMON ROLL", "FISH TACO",
    "CAPRESE PANINI", "MANGO LASSI", "PEANUT COOKIE", "CHICKEN SKEWER", "ONION RINGS",
    "MAPLE GRANOLA", "SPARKLING WATER", "BEET HUMMUS", "CORN CHOWDER", "PLUM CAKE",
    "HERB FOCACCIA", "CHAI LATTE", "KALE CHIPS", "EGG SANDWICH", "RICE PUDDING",
]
_MODIFIERS = ["SMALL", "LARGE", "DOUBLE", "MINI", "FAMILY", "CLASSIC"]
PRODUCTS = _BASE_PRODUCTS + [
    f"{_MODIFIERS[(i + i // len(_BASE_PRODUCTS)) % len(_MODIFIERS)]} {p}"
    for i, p in enumerate(_BASE_PRODUCTS * 3)
]

STREETS = ["Alder", "Birch", "Castle", "Dover", "Elm", "Foster", "Grove", "Hazel"]


def money(cents: int) -> str:
    return f"{cents // 100}.{cents % 100:02d}"


def ontology() -> list[dict]:
    def t(name, parent, phrases, fmt):
        return {"name": name, "parent": parent, "display_phrases": phrases, "format_class": fmt}

    return [
        t("merchant", None, ["merchant details"], "other"),
        t("totals", None, ["totals section"], "other"),
        t("payment", None, ["payment details"], "other"),
        t("line_item_field", None, ["line item details"], "other"),
        t("vendor_name", "merchant", ["vendor name", "store name", "merchant name"], "string"),
        t("vendor_phone", "merchant", ["vendor phone number", "store phone number"], "string"),
        t("receipt_date", None, ["receipt date", "date of purchase", "purchase date"], "date"),
        t("receipt_number", None, ["receipt number", "receipt id"], "integer"),
        t("subtotal_amount", "totals", ["subtotal", "pre-tax subtotal"], "decimal"),
        t("tax_amount", "totals", ["sales tax", "tax amount", "tax charged"], "decimal"),
        t("total_amount", "totals", ["total amount", "grand total", "amount due"], "decimal"),
        t("cash_paid", "payment", ["cash paid", "cash amount given", "amount tendered"], "decimal"),
        t("change_due", "payment", ["change due", "amount of change returned"], "decimal"),
        t("item_name", "line_item_field", ["item name", "menu item", "product name"], "string"),
        t("item_qty", "line_item_field", ["quantity", "number of units", "unit count"], "integer"),
        t("item_price", "line_item_field", ["line total", "item price", "price charged"], "decimal"),
    ]


class DocBuilder:
    def __init__(self, doc_id: str, page_count: int, split: str):
        self.doc_id = doc_id
        self.page_count = page_count
        self.split = split
        self.tokens: list[dict] = []
        self.entities: list[dict] = []
        self.line_items: list[dict] = []
        self.line = 0

    def add_line(self, words: list[str], page: int) -> list[str]:
        ids = []
        y = round(0.04 + 0.030 * (self.line % 30), 4)
        self.line += 1
        for col, word in enumerate(words[:7]):
            x = round(0.04 + 0.13 * col, 4)
            tid = f"t{len(self.tokens)}"
            self.tokens.append(
                {
                    "token_id": tid,
                    "page_index": page,
                    "text": word,
                    "bbox": [x, y, round(x + 0.12, 4), round(y + 0.022, 4)],
                }
            )
            ids.append(tid)
        return ids

    def add_entity(self, type_name: str, raw: str, span: list[str], page: int,
                   line_item_id: str | None = None) -> str:
        eid = f"e{len(self.entities)}"
        self.entities.append(
            {
                "entity_id": eid,
                "type_name": type_name,
                "raw_value": raw,
                "cleaned_value": None,
                "token_span": span,
                "line_item_id": line_item_id,
                "page_indices": [page],
            }
        )
        return eid

    def record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "page_count": self.page_count,
            "split": self.split,
            "tokens": self.tokens,
            "entities": self.entities,
            "line_items": self.line_items,
        }


def build_document(idx: int, rng: random.Random) -> dict:
    split = "train" if idx < 140 else ("dev" if idx < 170 else "test")
    two_pages = idx % 8 == 5
    b = DocBuilder(f"receipt-{idx:04d}", 2 if two_pages else 1, split)

    vendor = VENDORS[idx % len(VENDORS)]
    vendor_words = vendor.split()
    span = b.add_line(vendor_words, page=0)
    vendor_raw = vendor if idx % 17 else "\n".join([" ".join(vendor_words[:1]), " ".join(vendor_words[1:])])
    b.add_entity("vendor_name", vendor_raw, span, page=0)

    # a second vendor mention exercises document-level multi-answer handling
    if idx % 11 == 3:
        alt = vendor.upper() if vendor != vendor.upper() else vendor.title()
        span = b.add_line(alt.split(), page=0)
        b.add_entity("vendor_name", alt, span, page=0)
    if idx % 11 == 7:
        alt = f"{vendor.split()[0].upper()} TRADING"
        span = b.add_line(alt.split(), page=0)
        b.add_entity("vendor_name", alt, span, page=0)

    if idx % 10 < 7:
        phone = f"({rng.randint(200, 989)}) {rng.randint(100, 989):03d}-{rng.randint(0, 9999):04d}"
        span = b.add_line(["Tel:"] + phone.split(), page=0)
        b.add_entity("vendor_phone", phone, span[1:], page=0)

    street = f"{rng.randint(10, 999)} {STREETS[idx % len(STREETS)]} Street"
    b.add_line(street.split(), page=0)

    date = f"{rng.randint(1, 12):02d}/{rng.randint(1, 28):02d}/{rng.randint(19, 22):02d}"
    span = b.add_line(["Date:", date], page=0)
    b.add_entity("receipt_date", date, span[1:], page=0)

    number = str(100000 + idx * 37 + rng.randint(0, 20))
    number_raw = number if idx % 15 else f"({number})"
    span = b.add_line(["Receipt", "#", number_raw], page=0)
    b.add_entity("receipt_number", number_raw, span[2:], page=0)

    n_items = 1 + (idx * 7 + 3) % 6
    names = rng.sample(PRODUCTS, n_items)
    if idx % 13 == 4 and n_items >= 2:
        names[1] = names[0]  # duplicated item name: name-anchored questions must vanish
    prices: list[int] = []
    item_rows = []
    for pos in range(1, n_items + 1):
        qty = rng.randint(1, 50)
        unit = rng.randint(150, 2500)
        cents = qty * unit
        if idx % 9 == 0 and pos == 2:
            cents = prices[0]  # duplicated price: price-anchored questions must vanish
        prices.append(cents)
        item_rows.append((pos, names[pos - 1], qty, cents))

    for pos, name, qty, cents in item_rows:
        li_id = f"li{pos}"
        words = name.split() + ["x", str(qty), money(cents)]
        span = b.add_line(words, page=0)
        name_span = span[: len(name.split())]
        qty_span = [span[len(name.split()) + 1]]
        price_span = [span[len(name.split()) + 2]]
        e_name = b.add_entity("item_name", name, name_span, page=0, line_item_id=li_id)
        e_qty = b.add_entity("item_qty", str(qty), qty_span, page=0, line_item_id=li_id)
        e_price = b.add_entity("item_price", money(cents), price_span, page=0, line_item_id=li_id)
        b.line_items.append({"line_item_id": li_id, "position": pos, "entity_ids": [e_name, e_qty, e_price]})

    totals_page = 1 if two_pages else 0
    subtotal = sum(prices)
    tax = round(subtotal * 0.08)
    total = subtotal + tax
    for label, type_name, cents in (
        ("Subtotal", "subtotal_amount", subtotal),
        ("Tax", "tax_amount", tax),
        ("TOTAL", "total_amount", total),
    ):
        span = b.add_line([label, money(cents)], page=totals_page)
        b.add_entity(type_name, money(cents), span[1:], page=totals_page)

    if idx % 10 < 6:
        cash = ((total + 499) // 500) * 500
        change = cash - total
        span = b.add_line(["CASH", money(cash)], page=totals_page)
        b.add_entity("cash_paid", money(cash), span[1:], page=totals_page)
        span = b.add_line(["CHANGE", money(change)], page=totals_page)
        b.add_entity("change_due", money(change), span[1:], page=totals_page)

    return b.record()


def demo_suite() -> list[dict]:
    def slot(role, kind, type_name=None):
        return {"role": role, "kind": kind, "type_name": type_name}

    def t(tid, qtype, target, scope, pattern, slots):
        return {
            "template_id": tid,
            "question_type": qtype,
            "target_type": target,
            "scope": scope,
            "pattern": pattern,
            "slots": slots,
        }

    key = lambda type_name: slot("key", "key_phrase", type_name)
    return [
        {"dataset_name": "receipt-demo"},
        t("ext_vendor_key", "extractive", "vendor_name", "document",
          "What is the {key} shown on this receipt?", [key("vendor_name")]),
        t("ext_vendor_plain", "extractive", "vendor_name", "document",
          "Who issued this receipt?", []),
        t("ext_vendor_bynum", "extractive", "vendor_name", "document",
          "Which store issued receipt number {num}?",
          [slot("num", "entity_value", "receipt_number")]),
        t("ext_vendor_bynumdate", "extractive", "vendor_name", "document",
          "Which merchant printed slip {num} on {date}?",
          [slot("num", "entity_value", "receipt_number"),
           slot("date", "entity_value", "receipt_date")]),
        t("ext_date_plain", "extractive", "receipt_date", "document",
          "When was this purchase made?", []),
        t("ext_date_key", "extractive", "receipt_date", "document",
          "What is the {key} of this receipt?", [key("receipt_date")]),
        t("ext_date_bynum", "extractive", "receipt_date", "document",
          "On what date was receipt {num} printed?",
          [slot("num", "entity_value", "receipt_number")]),
        t("ext_number", "extractive", "receipt_number", "document",
          "Which {key} identifies this receipt?", [key("receipt_number")]),
        t("ext_number_bydate", "extractive", "receipt_number", "document",
          "What {key} was assigned to the purchase made on {date}?",
          [key("receipt_number"), slot("date", "entity_value", "receipt_date")]),
        t("ext_total_key", "extractive", "total_amount", "document",
          "How much is the {key} on this receipt?", [key("total_amount")]),
        t("ext_total_bydate", "extractive", "total_amount", "document",
          "How much did the visit on {date} cost overall?",
          [slot("date", "entity_value", "receipt_date")]),
        t("ext_total_coref", "extractive", "total_amount", "document",
          "What is the {key} for receipt number {num}?",
          [key("total_amount"), slot("num", "entity_value", "receipt_number")]),
        t("ext_tax", "extractive", "tax_amount", "document",
          "How much {key} was charged on this bill?", [key("tax_amount")]),
        t("ext_tax_bynum", "extractive", "tax_amount", "document",
          "What {key} did {vendor} collect on receipt {num}?",
          [key("tax_amount"), slot("vendor", "entity_value", "vendor_name"),
           slot("num", "entity_value", "receipt_number")]),
        t("ext_subtotal", "extractive", "subtotal_amount", "document",
          "What was the {key} before tax?", [key("subtotal_amount")]),
        t("ext_subtotal_bynum", "extractive", "subtotal_amount", "document",
          "Before tax was added, what did receipt {num} come to?",
          [slot("num", "entity_value", "receipt_number")]),
        t("ext_change_coref", "extractive", "change_due", "document",
          "How much change did the customer of {vendor} receive?",
          [slot("vendor", "entity_value", "vendor_name")]),
        t("ext_change_bydate", "extractive", "change_due", "document",
          "What {key} went back to the customer on {date}?",
          [key("change_due"), slot("date", "entity_value", "receipt_date")]),
        t("ext_cash", "extractive", "cash_paid", "document",
          "How much cash did the customer hand over?", []),
        t("ext_cash_tendered", "extractive", "cash_paid", "document",
          "What {key} settled receipt number {num}?",
          [key("cash_paid"), slot("num", "entity_value", "receipt_number")]),
        t("ext_phone", "extractive", "vendor_phone", "document",
          "What is the {key} printed on this receipt?", [key("vendor_phone")]),
        t("ext_phone_call", "extractive", "vendor_phone", "document",
          "Which number should a customer call to reach {vendor}?",
          [slot("vendor", "entity_value", "vendor_name")]),
        t("ext_phone_bynum", "extractive", "vendor_phone", "document",
          "What phone contact appears on receipt {num}?",
          [slot("num", "entity_value", "receipt_number")]),
        t("ext_item_price_ordinal", "extractive", "item_price", "line_item",
          "How much is the {key} of the {pos} item?",
          [key("item_price"), slot("pos", "ordinal_position")]),
        t("ext_item_name_ordinal", "extractive", "item_name", "line_item",
          "Which product appears {pos} on this receipt?", [slot("pos", "ordinal_position")]),
        t("ext_qty_by_name", "extractive", "item_qty", "line_item",
          "How many units of {item} were purchased?",
          [slot("item", "entity_value", "item_name")]),
        t("ext_qty_by_price", "extractive", "item_qty", "line_item",
          "How many units were rung up on the line totalling {price}?",
          [slot("price", "entity_value", "item_price")]),
        t("ext_price_by_name", "extractive", "item_price", "line_item",
          "How much did the order(s) of {item} cost in total?",
          [slot("item", "entity_value", "item_name")]),
        t("ext_price_by_name_key", "extractive", "item_price", "line_item",
          "What {key} was recorded against {item}?",
          [key("item_price"), slot("item", "entity_value", "item_name")]),
        t("ext_name_by_price", "extractive", "item_name", "line_item",
          "Which item cost {price} in this bill?",
          [slot("price", "entity_value", "item_price")]),
        t("ext_name_by_price_key", "extractive", "item_name", "line_item",
          "Which {key} was sold for {price}?",
          [key("item_name"), slot("price", "entity_value", "item_price")]),
        t("ext_price_by_qty_name", "extractive", "item_price", "line_item",
          "How much did {qty} units of {item} cost altogether?",
          [slot("qty", "entity_value", "item_qty"),
           slot("item", "entity_value", "item_name")]),
        t("bool_total", "boolean", "total_amount", "document",
          "Is {cand} the {key} of this receipt?",
          [slot("cand", "candidate_value"), key("total_amount")]),
        t("bool_total_pay", "boolean", "total_amount", "document",
          "Did the customer owe {cand} in total for this purchase?",
          [slot("cand", "candidate_value")]),
        t("bool_vendor", "boolean", "vendor_name", "document",
          "Did {cand} issue this receipt?", [slot("cand", "candidate_value")]),
        t("bool_date", "boolean", "receipt_date", "document",
          "Was this receipt issued on {cand}?", [slot("cand", "candidate_value")]),
        t("bool_number", "boolean", "receipt_number", "document",
          "Does {cand} match the {key} on this slip?",
          [slot("cand", "candidate_value"), key("receipt_number")]),
        t("bool_subtotal", "boolean", "subtotal_amount", "document",
          "Before tax, did the purchases come to {cand}?",
          [slot("cand", "candidate_value")]),
        t("bool_change", "boolean", "change_due", "document",
          "Did the customer get {cand} back as change?",
          [slot("cand", "candidate_value")]),
        t("bool_qty_any", "boolean", "item_qty", "document",
          "Is '{cand}' the {key} of a line item in this receipt?",
          [slot("cand", "candidate_value"), key("item_qty")]),
        t("bool_item_price", "boolean", "item_price", "line_item",
          "Did the purchase of {item} cost {cand}?",
          [slot("item", "entity_value", "item_name"), slot("cand", "candidate_value")]),
        t("bool_item_price_ordinal", "boolean", "item_price", "line_item",
          "Is {cand} the {key} of the {pos} item?",
          [slot("cand", "candidate_value"), key("item_price"), slot("pos", "ordinal_position")]),
        t("bool_item_qty", "boolean", "item_qty", "line_item",
          "Were {cand} units of {item} rung up?",
          [slot("cand", "candidate_value"), slot("item", "entity_value", "item_name")]),
    ]


def simple_suite() -> list[dict]:
    # the one-pattern baseline: every non-line-item type asked the same way
    records = [{"dataset_name": "receipt-simple"}]
    for type_name in (
        "vendor_name", "vendor_phone", "receipt_date", "receipt_number",
        "subtotal_amount", "tax_amount", "total_amount", "cash_paid", "change_due",
    ):
        records.append(
            {
                "template_id": f"simple_{type_name}",
                "question_type": "extractive",
                "target_type": type_name,
                "scope": "document",
                "pattern": "What is the value for the {key}?",
                "slots": [{"role": "key", "kind": "key_phrase", "type_name": type_name}],
            }
        )
    return records


def cleaning_profile() -> list[dict]:
    return [
        {"name": "synthetic-receipts"},
        {
            "entity_type": "vendor_name",
            "rules": [
                {"kind": "replace_newlines", "params": {"replacement": " "}},
                {"kind": "title_case_allcaps", "params": {}},
            ],
        },
        {
            "entity_type": "format:integer",
            "rules": [
                {"kind": "numeric_token_filter", "params": {"mode": "drop_tokens"}},
                {"kind": "strip_edge_punct", "params": {}},
            ],
        },
        {
            "entity_type": "format:decimal",
            "rules": [
                {"kind": "numeric_token_filter", "params": {"mode": "drop_tokens"}},
                {"kind": "strip_edge_punct", "params": {}},
            ],
        },
        {
            "entity_type": "*",
            "rules": [
                {"kind": "replace_newlines", "params": {"replacement": " "}},
                {"kind": "strip_brackets", "params": {}},
            ],
        },
    ]


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)

    rng = random.Random(20240506)
    documents = [build_document(i, rng) for i in range(200)]

    meta = {"name": "synthetic-receipts", "ontology": ontology()}
    (FIXTURES / "receipts.meta.json").write_text(canonical_json(meta) + "\n", encoding="utf-8")
    write_records(FIXTURES / "receipts.jsonl", documents)

    write_records(FIXTURES / "demo_suite.jsonl", demo_suite())
    write_records(FIXTURES / "simple_suite.jsonl", simple_suite())
    write_records(FIXTURES / "receipts_profile.jsonl", cleaning_profile())

    config = {
        "seed": 7,
        "strategy": "per_entity",
        "boolean_count_per_doc": 14,
        "false_fraction": 0.5,
        "single_page_only": False,
    }
    (FIXTURES / "generate_config.json").write_text(canonical_json(config) + "\n", encoding="utf-8")

    (FIXTURES / "acronyms.txt").write_text("USA\nLLC\nLLP\nINC\nCO\nDC\n", encoding="utf-8")

    print(f"fixtures written to {FIXTURES}")
    print(f"  documents: {len(documents)}")
    print(f"  entities: {sum(len(d['entities']) for d in documents)}")

    _build_qa_fixture()


def _build_qa_fixture() -> None:
    """Run the pipeline end to end and commit the generated QA dataset."""
    import warnings

    from kie2qa.cleaning import clean_dataset, load_profile
    from kie2qa.generator import generate, load_generation_config, save_qa_dataset
    from kie2qa.model import load_kie_dataset
    from kie2qa.templates import load_template_suite

    ds = clean_dataset(
        load_kie_dataset(FIXTURES / "receipts.jsonl"),
        load_profile(FIXTURES / "receipts_profile.jsonl"),
    )
    suite = load_template_suite(FIXTURES / "demo_suite.jsonl")
    config = load_generation_config(FIXTURES / "generate_config.json")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        qa = generate(ds, suite, config)

    out = ROOT / "tests" / "data"
    out.mkdir(parents=True, exist_ok=True)
    save_qa_dataset(qa, out / "demo_qa.jsonl")
    print(f"  QA fixture: {len(qa.instances)} instances -> {out / 'demo_qa.jsonl'}")


if __name__ == "__main__":
    main()
