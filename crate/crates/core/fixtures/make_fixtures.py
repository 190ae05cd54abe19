#!/usr/bin/env python3
"""Regenerates the test fixtures: SQLite databases, dataset files, mock
backend fixtures and hand-derived expected metrics.

Golden report files (`*/report.json`, `sweep/report.csv`) are produced by the
harness itself and checked in; see README.md for the refresh commands.
"""

import json
import math
import random
import re
import sqlite3
from pathlib import Path

ROOT = Path(__file__).resolve().parent
DATA = ROOT / "data"

# --------------------------------------------------------------- databases

DATABASES = {
    "concert_singer": {
        "tables": [
            ("Singer", ["Singer_ID", "Name", "Country", "Age"]),
            ("Concert", ["Concert_ID", "Concert_Name", "Singer_ID", "Year"]),
        ],
        "ddl": [
            "CREATE TABLE Singer (Singer_ID INTEGER PRIMARY KEY, Name TEXT, Country TEXT, Age INTEGER)",
            "CREATE TABLE Concert (Concert_ID INTEGER PRIMARY KEY, Concert_Name TEXT,"
            " Singer_ID INTEGER REFERENCES Singer(Singer_ID), Year INTEGER)",
        ],
        "rows": {
            "Singer": [
                (1, "Joe Sharp", "Netherlands", 52),
                (2, "Timbaland", "United States", 32),
                (3, "Justin Brown", "France", 29),
                (4, "Rose White", "France", 41),
                (5, "John Nizinik", "France", 43),
                (6, "Tribal King", "France", 25),
            ],
            "Concert": [
                (1, "Auditions", 1, 2014),
                (2, "Super bootcamp", 2, 2014),
                (3, "Home Visits", 2, 2015),
                (4, "Week 1", 3, 2014),
                (5, "Week 2", 2, 2015),
                (6, "Auditions", 5, 2014),
                (7, "Week 3", 6, 2016),
            ],
        },
    },
    "pets": {
        "tables": [
            ("Student", ["Stu_ID", "Fname", "Age", "Major"]),
            ("Pet", ["Pet_ID", "Stu_ID", "Pet_Type", "Weight"]),
        ],
        "ddl": [
            "CREATE TABLE Student (Stu_ID INTEGER PRIMARY KEY, Fname TEXT, Age INTEGER, Major TEXT)",
            "CREATE TABLE Pet (Pet_ID INTEGER PRIMARY KEY, Stu_ID INTEGER REFERENCES Student(Stu_ID),"
            " Pet_Type TEXT, Weight REAL)",
        ],
        "rows": {
            "Student": [
                (1001, "Linda", 18, "CS"),
                (1002, "Tracy", 19, "Math"),
                (1003, "Shiela", 21, "CS"),
                (1004, "Eric", 20, "Bio"),
                (1005, "Lisa", 18, "Math"),
            ],
            "Pet": [
                (2001, 1001, "cat", 12.0),
                (2002, 1002, "dog", 13.4),
                (2003, 1002, "dog", 9.3),
                (2004, 1004, "cat", 8.1),
            ],
        },
    },
}


def build_databases():
    tables = []
    for db_id, spec in DATABASES.items():
        path = DATA / "database" / db_id / f"{db_id}.sqlite"
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.exists():
            path.unlink()
        con = sqlite3.connect(path)
        for stmt in spec["ddl"]:
            con.execute(stmt)
        for table, rows in spec["rows"].items():
            marks = ",".join("?" * len(rows[0]))
            con.executemany(f"INSERT INTO {table} VALUES ({marks})", rows)
        con.commit()
        con.close()
        columns = [[-1, "*"]]
        for t, (_, cols) in enumerate(spec["tables"]):
            columns += [[t, c] for c in cols]
        tables.append(
            {
                "db_id": db_id,
                "table_names_original": [t for t, _ in spec["tables"]],
                "column_names_original": columns,
            }
        )
    write_json(DATA / "tables.json", tables)


# ---------------------------------------------------------------- examples

# Each candidate: (generator output, oracle label, discriminator reply).
# Replies: ("true"|"false", lp_true, lp_false) or "missing".
MISSING = "missing"

GOLDEN = [
    {
        "db_id": "concert_singer",
        "hardness": "easy",
        "question": "How many singers do we have?",
        "query": "SELECT count(*) FROM singer",
        "candidates": [
            ("SELECT count(*) FROM singer;", True, ("true", -0.05, -3.0)),
            ("SELECT count(DISTINCT country) FROM singer;", False, ("false", -2.0, -0.2)),
            ("SELECT count(*) FROM singers;", False, ("true", -0.3, -1.5)),
        ],
    },
    {
        "db_id": "pets",
        "hardness": "easy",
        "question": "List the first names of all students.",
        "query": "SELECT fname FROM student",
        "candidates": [
            ("SELECT fname FROM student;", True, ("true", -0.4, -1.2)),
            ("SELECT fname FROM student WHERE age > 18;", False, ("true", -0.1, -2.5)),
            ("SELECT fname, age FROM student;", False, MISSING),
        ],
    },
    {
        "db_id": "concert_singer",
        "hardness": "medium",
        "question": "What is the average age of singers from France?",
        "query": "SELECT avg(age) FROM singer WHERE country = 'France'",
        "candidates": [
            ("SELECT avg(age) FROM singer WHERE country = 'France';", True, ("true", -0.2, -1.7)),
            ("SELECT avg(age) FROM singer;", False, ("false", -1.9, -0.3)),
            ('SELECT AVG(age) FROM singer WHERE country = "France";', True, ("true", -0.1, -2.4)),
        ],
    },
    {
        "db_id": "pets",
        "hardness": "medium",
        "question": "How many pets does each student own? Show the student id and the count.",
        "query": "SELECT stu_id, count(*) FROM pet GROUP BY stu_id",
        "candidates": [
            ("SELECT stu_id, count(*) FROM pet GROUP BY stu_id;", True, ("true", -0.3, -1.4)),
            ("SELECT stu_id, count(*) FROM pet;", False, ("false", -1.0, -0.5)),
            ("SELECT stu_id, count(*) FROM pets GROUP BY stu_id;", False, ("true", -0.05, -3.5)),
        ],
    },
    {
        "db_id": "concert_singer",
        "hardness": "hard",
        "question": "What are the names of singers who performed in a concert in 2014?",
        "query": "SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id"
        " WHERE T2.year = 2014",
        "candidates": [
            (
                "SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id"
                " WHERE T2.year = 2014;",
                True,
                MISSING,
            ),
            (
                "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM concert WHERE year = 2014);",
                True,
                ("true", -0.6, -0.8),
            ),
            ("SELECT name FROM singer;", False, ("false", -3.0, -0.05)),
        ],
    },
    {
        "db_id": "pets",
        "hardness": "hard",
        "question": "What are the first names of students who do not have any pet?",
        "query": "SELECT fname FROM student WHERE stu_id NOT IN (SELECT stu_id FROM pet)",
        "candidates": [
            (
                "SELECT fname FROM student WHERE stu_id NOT IN (SELECT stu_id FROM pet);",
                True,
                ("false", -1.2, -0.4),
            ),
            (
                "SELECT fname FROM student WHERE stu_id IN (SELECT stu_id FROM pet);",
                False,
                ("true", -0.25, -1.6),
            ),
            (
                "SELECT fname FROM student EXCEPT SELECT T1.fname FROM student AS T1"
                " JOIN pet AS T2 ON T1.stu_id = T2.stu_id;",
                True,
                ("false", -0.9, -0.6),
            ),
        ],
    },
    {
        "db_id": "concert_singer",
        "hardness": "extra",
        "question": "What is the name of the singer who has performed in the most concerts?",
        "query": "SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id"
        " GROUP BY T1.singer_id ORDER BY count(*) DESC LIMIT 1",
        "candidates": [
            (
                "SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id"
                " GROUP BY T1.singer_id ORDER BY count(*) DESC LIMIT 1;",
                True,
                ("true", -0.02, -4.0),
            ),
            ("SELECT name FROM singer ORDER BY age DESC LIMIT 1;", False, ("false", -2.2, -0.12)),
            (
                "SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id"
                " GROUP BY T1.singer_id ORDER BY count(*) LIMIT 1;",
                False,
                ("true", -0.5, -1.0),
            ),
        ],
    },
    {
        "db_id": "pets",
        "hardness": "extra",
        "question": "Which pet type has the largest total weight, and what is that total?",
        "query": "SELECT pet_type, sum(weight) FROM pet GROUP BY pet_type ORDER BY sum(weight) DESC LIMIT 1",
        "candidates": [
            ("I am not able to answer that.", False, None),
            (
                "SELECT pet_type, sum(weight) FROM pet GROUP BY pet_type ORDER BY sum(weight) DESC LIMIT 1;",
                True,
                MISSING,
            ),
            (
                "SELECT pet_type, max(weight) FROM pet GROUP BY pet_type ORDER BY max(weight) DESC LIMIT 1;",
                False,
                MISSING,
            ),
        ],
    },
]

# Non-reasoning discriminator: (generator output, executable, correct, P(Yes)).
DOMINANCE = [
    ("concert_singer", "easy", "How many concerts are there?", "SELECT count(*) FROM concert", [
        ("SELECT count(*) FROM concerts;", False, False, 0.95),
        ("SELECT count(*) FROM concert;", True, True, 0.80),
        ("SELECT count(*) FROM singer;", True, False, 0.30),
    ]),
    ("concert_singer", "easy", "List all singer names.", "SELECT name FROM singer", [
        ("SELECT nme FROM singer;", False, False, 0.90),
        ("SELECT name FROM singer;", True, True, 0.85),
        ("SELECT country FROM singer;", True, False, 0.10),
    ]),
    ("concert_singer", "medium", "How many singers are from France?",
     "SELECT count(*) FROM singer WHERE country = 'France'", [
        ("SELECT count(*) FROM singer WHERE nation = 'France';", False, False, 0.92),
        ("SELECT count(*) FROM singer WHERE country = 'France';", True, True, 0.75),
        ("SELECT count(*) FROM singer WHERE country = 'france';", True, False, 0.40),
    ]),
    ("concert_singer", "medium", "What is the maximum age of all singers?", "SELECT max(age) FROM singer", [
        ("SELECT max(age) FROM singer GROUP;", False, False, 0.88),
        ("SELECT max(age) FROM singer;", True, True, 0.86),
        ("SELECT min(age) FROM singer;", True, False, 0.20),
    ]),
    ("pets", "hard", "What are the names of students who own a dog?",
     "SELECT DISTINCT T1.fname FROM student AS T1 JOIN pet AS T2 ON T1.stu_id = T2.stu_id"
     " WHERE T2.pet_type = 'dog'", [
        ("SELECT fname FROM student JOIN pet WHERE pet_type = 'dog' AND;", False, False, 0.97),
        ("SELECT fname FROM student WHERE stu_id IN (SELECT stu_id FROM pet WHERE pet_type = 'dog');",
         True, True, 0.70),
        ("SELECT fname FROM student;", True, False, 0.15),
    ]),
    ("pets", "extra", "What is the major of the oldest student?",
     "SELECT major FROM student ORDER BY age DESC LIMIT 1", [
        ("SELECT major FROM students ORDER BY age DESC LIMIT 1;", False, False, 0.93),
        ("SELECT major FROM student ORDER BY age DESC LIMIT 1;", True, True, 0.91),
        ("SELECT fname FROM student ORDER BY age DESC LIMIT 1;", True, False, 0.35),
    ]),
    ("pets", "easy", "How many students are there?", "SELECT count(*) FROM student", [
        ("SELECT count(*) FROM student;", True, True, 0.94),
        ("SELECT count(*) FROM pet;", True, False, 0.45),
        ("SELECT count(*) FROM studnt;", False, False, 0.25),
    ]),
    ("pets", "medium", "What is the average weight of cats?",
     "SELECT avg(weight) FROM pet WHERE pet_type = 'cat'", [
        ("SELECT avg(weight) FROM pet WHERE pet_type = 'cat';", True, True, 0.89),
        ("SELECT avg(weight) FROM pet;", True, False, 0.55),
        ("SELECT avg(weight) FROM pet WHERE type = 'cat';", False, False, 0.60),
    ]),
    ("concert_singer", "hard", "Which countries have more than one singer?",
     "SELECT country FROM singer GROUP BY country HAVING count(*) > 1", [
        ("SELECT country FROM singer;", True, False, 0.90),
        ("SELECT country FROM singer GROUP BY country HAVING count(*) > 1;", True, True, 0.70),
        ("SELECT country FROM singer GROUP BY country HAVING;", False, False, 0.20),
    ]),
    ("concert_singer", "extra", "In which year were the most concerts held?",
     "SELECT year FROM concert GROUP BY year ORDER BY count(*) DESC LIMIT 1", [
        ("SELECT year FROM concert GROUP BY year ORDER BY count(*) DESC LIMIT 1;", True, True, 0.87),
        ("SELECT year FROM concert ORDER BY year DESC LIMIT 1;", True, False, 0.52),
        ("SELECT year FROM concerts GROUP BY year;", False, False, 0.40),
    ]),
]

# Discriminator reply lengths (response tokens) for the budget sweep, one
# per called candidate in golden order.
SWEEP_LENGTHS = [
    180, 240, 300, 330, 380, 420, 460, 500, 560, 640, 690, 760,
    820, 900, 980, 1010, 1150, 1300, 1450, 1600, 1800, 1950, 2040,
]
SWEEP_BUDGETS = [256, 400, 512, 700, 1024, 1536, 2048]

# ------------------------------------------------------------------ helpers

TOKEN = re.compile(r"\s*(?:\w+|[^\w\s])|\s+")
META = set("\\.+*?()|[]{}^$#&-~")


def rx_escape(s):
    return "".join("\\" + c if c in META else c for c in s)


def n_tokens(text):
    return len(TOKEN.findall(text))


def write_json(path, value):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(value, indent=2, ensure_ascii=False) + "\n")


def write_jsonl(path, values):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "".join(json.dumps(v, separators=(",", ":"), ensure_ascii=False, sort_keys=True) + "\n" for v in values)
    )


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def generation_rule(question, output):
    return {"match": {"regex": "-- Question: " + rx_escape(question) + "\n"}, "response_text": output}


def discrimination_pattern(question, sql):
    return "### Question:\n" + rx_escape(question) + "\n### SQL query:\n" + rx_escape(sql) + "\n"


SENTENCES = [
    "The query reads from the {t} table.",
    "It selects the requested column and nothing else.",
    "The filter restricts rows to the condition stated in the question.",
    "Grouping is applied before the aggregate is computed.",
    "I should check whether the join keys line up.",
    "The ordering clause decides which row comes first.",
    "Let me re-read the question to be sure about the intent.",
    "Counting rows here gives the number the question asks for.",
    "The column names match the schema of the {t} table.",
    "Wait, the limit clause keeps only a single row.",
    "A subquery collects the matching identifiers.",
    "Hmm, the aggregate might double count duplicate rows.",
    "So far the structure of the query looks consistent.",
]


def trace(rng, table, min_tokens):
    parts = []
    while n_tokens(" ".join(parts)) < min_tokens:
        parts.append(rng.choice(SENTENCES).format(t=table))
    return " ".join(parts)


def reply_text(body, verdict):
    tail = '{"correct": %s}' % verdict if verdict else "I cannot decide."
    return body + "\n</think>\n\n" + tail


def reply_record(pattern, reply, body):
    if reply == MISSING:
        return {"match": {"regex": pattern}, "response_text": reply_text(body, None)}
    verdict, lp_true, lp_false = reply
    return {
        "match": {"regex": pattern},
        "response_text": reply_text(body, verdict),
        "verdict_logprobs": {"true": lp_true, "false": lp_false},
    }


def main_table(db_id):
    return DATABASES[db_id]["tables"][0][0].lower()


# ------------------------------------------------------------------ golden

def sql_of(output):
    return output if output.startswith("SELECT") else None


def score_of(reply):
    if reply == MISSING:
        return (-0.5, True)
    _, lp_true, lp_false = reply
    return (sigmoid(lp_true - lp_false), False)


def intrinsic_oracle():
    """Brute-force intrinsic metrics for naive re-ranking of the golden set."""
    pairs = wins = 0
    tp = fp = fn = tn = 0
    hits = 0
    rr = []
    called = failed = 0
    for ex in GOLDEN:
        entries = []
        for i, (output, correct, reply) in enumerate(ex["candidates"]):
            eligible = sql_of(output) is not None
            if eligible:
                value, is_failed = score_of(reply)
                called += 1
                failed += is_failed
            else:
                value, is_failed = -0.5, True
            entries.append((value, is_failed, correct, eligible, i))
        ranked = sorted(entries, key=lambda e: (-e[0], e[4]))
        for c in (e for e in entries if e[2]):
            for w in (e for e in entries if not e[2]):
                pairs += 1
                wins += c[0] > w[0]
        for value, is_failed, correct, _, _ in entries:
            predicted = (not is_failed) and value >= 0.5
            tp += predicted and correct
            fp += predicted and not correct
            fn += (not predicted) and correct
            tn += (not predicted) and not correct
        chosen = next(e for e in ranked if e[3])
        hits += chosen[2]
        first = next((k for k, e in enumerate(ranked) if e[2]), None)
        rr.append(0.0 if first is None else 1.0 / (first + 1))

    def f1(a, b, c):
        return 0.0 if 2 * a + b + c == 0 else 2 * a / (2 * a + b + c)

    return {
        "pw_acc": 100.0 * wins / pairs,
        "macro_f1": 100.0 * (f1(tp, fp, fn) + f1(tn, fn, fp)) / 2,
        "hit_at_1": 100.0 * hits / len(GOLDEN),
        "mrr": 100.0 * sum(rr) / len(rr),
        "fail_rate": 100.0 * failed / called,
    }


def e2e_oracle():
    """Per-tier execution accuracy of exec-check re-ranking; the chosen
    candidate is the best-scoring executable one (ties keep sample order)."""
    tiers = {}
    for ex in GOLDEN:
        best = None
        for i, (output, correct, reply) in enumerate(ex["candidates"]):
            sql = sql_of(output)
            if sql is None or not executes(ex["db_id"], sql):
                continue
            value = score_of(reply)[0]
            if best is None or value > best[0]:
                best = (value, correct)
        tiers.setdefault(ex["hardness"], []).append(best is not None and best[1])
    out = {t: 100.0 * sum(v) / len(v) for t, v in tiers.items()}
    flat = [x for v in tiers.values() for x in v]
    out["all"] = 100.0 * sum(flat) / len(flat)
    return out


def executes(db_id, sql):
    con = sqlite3.connect(DATA / "database" / db_id / f"{db_id}.sqlite")
    try:
        con.execute(sql).fetchall()
        return True
    except sqlite3.Error:
        return False
    finally:
        con.close()


def build_golden():
    write_json(
        DATA / "dev.json",
        [{k: ex[k] for k in ("db_id", "hardness", "question", "query")} for ex in GOLDEN],
    )
    records = []
    batches = []
    for idx, ex in enumerate(GOLDEN):
        for output, _, _ in ex["candidates"]:
            records.append(generation_rule(ex["question"], output))
        for i, (output, _, reply) in enumerate(ex["candidates"]):
            sql = sql_of(output)
            if sql is None:
                continue
            body = "The query is " + sql + " and I compare it with the question. " + (
                "I am not certain whether the filter is right." if reply == MISSING else
                "It answers the question." if reply[0] == "true" else "It does not answer the question."
            )
            records.append(reply_record(discrimination_pattern(ex["question"], sql), reply, body))
        batches.append(
            {
                "example_id": str(idx),
                "candidates": [
                    {"raw_output": o, "extracted_sql": sql_of(o), "extraction_ok": sql_of(o) is not None}
                    for o, _, _ in ex["candidates"]
                ],
            }
        )
    write_json(ROOT / "e2e_golden" / "mock.json", records)
    write_jsonl(ROOT / "intrinsic_golden" / "candidates.jsonl", batches)

    write_json(
        ROOT / "intrinsic_golden" / "expected.json",
        {
            "oracle_labels": {str(i): [c[1] for c in ex["candidates"]] for i, ex in enumerate(GOLDEN)},
            "intrinsic": intrinsic_oracle(),
            "e2e_execution": e2e_oracle(),
        },
    )


def build_sweep():
    rng = random.Random(20240611)
    records = []
    lengths = iter(SWEEP_LENGTHS)
    for ex in GOLDEN:
        for output, correct, _ in ex["candidates"]:
            sql = sql_of(output)
            if sql is None:
                continue
            target = next(lengths)
            verdict = "true" if correct else "false"
            reply = (verdict, -0.2, -1.8) if correct else (verdict, -1.8, -0.2)
            tail = n_tokens(reply_text("", verdict)) + 2
            body = trace(rng, main_table(ex["db_id"]), target - tail)
            rec = reply_record(discrimination_pattern(ex["question"], sql), reply, body)
            records.append(rec)
    assert next(lengths, None) is None
    write_json(ROOT / "sweep" / "mock.json", records)
    totals = [n_tokens(r["response_text"]) for r in records]
    fail = [100.0 * sum(t > b for t in totals) / len(totals) for b in SWEEP_BUDGETS]
    write_json(
        ROOT / "sweep" / "expected.json",
        {"budgets": SWEEP_BUDGETS, "response_tokens": totals, "fail_rate": fail},
    )


def build_dominance():
    write_json(
        DATA / "dominance_dev.json",
        [{"db_id": d, "question": q, "query": g} for d, _, q, g, _ in DOMINANCE],
    )
    (DATA / "dominance_difficulty.tsv").write_text(
        "".join(f"{i}\t{t}\n" for i, (_, t, _, _, _) in enumerate(DOMINANCE))
    )
    records = []
    for db_id, _, question, _, cands in DOMINANCE:
        for output, executable, _, _ in cands:
            assert executes(db_id, output) == executable, output
            records.append(generation_rule(question, output))
        for output, _, _, p_yes in cands:
            records.append(
                {
                    "match": {"regex": "-- Utterance: " + rx_escape(question) + "\n-- SQL:\n" + rx_escape(output) + "\n"},
                    "response_text": "",
                    "next_token_logprobs": {"Yes": math.log(p_yes), "No": math.log(1.0 - p_yes)},
                }
            )
    write_json(ROOT / "dominance" / "mock.json", records)

    def accuracy(enhanced):
        hits = 0
        for _, _, _, _, cands in DOMINANCE:
            pool = [c for c in cands if c[1] or not enhanced]
            hits += max(pool, key=lambda c: c[3])[2]
        return 100.0 * hits / len(DOMINANCE)

    naive_top_invalid = sum(not max(c, key=lambda x: x[3])[1] for *_, c in DOMINANCE)
    write_json(
        ROOT / "dominance" / "expected.json",
        {
            "naive_top_non_executable": naive_top_invalid,
            "naive_exec_acc": accuracy(False),
            "enhanced_exec_acc": accuracy(True),
        },
    )


if __name__ == "__main__":
    build_databases()
    build_golden()
    build_sweep()
    build_dominance()
