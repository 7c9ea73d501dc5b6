"""Shared helpers for the test suite: synthetic probe reports plus
independently written oracles the library code is checked against."""

from __future__ import annotations

import random
from pathlib import Path

from tddgen.probe_report import FrameRef, ProbeReport, TestCaseRecord

FIXTURES = Path(__file__).parent / "fixtures"

APPENDIX_TEST_IDS = [
    "sklearn/neural_network/tests/test_base.py::test_log_loss_1_prob_finite",
    "sklearn/neural_network/tests/test_mlp.py::test_partial_fit_classification",
    "sklearn/neural_network/tests/test_mlp.py::test_partial_fit_unseen_classes",
]


def make_record(
    node_id: str,
    outcome: str = "stub_failure",
    caller: str | None = None,
    depth: int = 1,
    assertion_bearing: bool = True,
    cc: int = 1,
) -> TestCaseRecord:
    chain = ()
    if outcome == "stub_failure":
        caller = caller or node_id.split("::")[-1]
        names = [node_id.split("::")[-1]] + [f"mid_{i}" for i in range(depth - 1)] + ["target"]
        if depth >= 2:
            names[-2] = caller
        chain = tuple(FrameRef("pkg/mod.py", n, i + 1) for i, n in enumerate(names))
    return TestCaseRecord(
        node_id=node_id,
        outcome=outcome,
        call_chain=chain,
        direct_caller=caller if outcome == "stub_failure" else None,
        chain_depth=depth if outcome == "stub_failure" else 0,
        assertion_bearing=assertion_bearing,
        cyclomatic_complexity=cc,
    )


def make_report(records) -> ProbeReport:
    return ProbeReport(target={"file_path": "pkg/mod.py"}, records=tuple(records))


def random_probe_report(rng: random.Random) -> ProbeReport:
    """5-200 records, up to 20 caller clusters, depths 1-10."""
    caller_pool = [f"caller_{i:02d}" for i in range(rng.randint(1, 20))]
    records = []
    for i in range(rng.randint(5, 200)):
        node_id = f"tests/test_mod.py::test_{i:03d}"
        outcome = rng.choice(
            ["stub_failure", "stub_failure", "stub_failure", "passed", "other_failure", "skipped", "error"]
        )
        if outcome == "stub_failure":
            records.append(
                make_record(
                    node_id,
                    caller=rng.choice(caller_pool),
                    depth=rng.randint(1, 10),
                    assertion_bearing=rng.random() < 0.5,
                    cc=rng.randint(1, 8),
                )
            )
        else:
            records.append(make_record(node_id, outcome=outcome))
    return make_report(records)


def thm_oracle(report: ProbeReport, t: int | None):
    """Brute-force restatement of the harness selection rules, written
    independently of the library: group failing tests by direct caller,
    order clusters by (min depth, caller), pick one shallowest member per
    cluster up to T, then fill by globally shortest chains."""
    fails = [r for r in report.records if r.outcome == "stub_failure"]
    if t is None:
        return [r.node_id for r in sorted(fails, key=lambda r: (r.chain_depth, r.node_id))]
    groups: dict[str, list[TestCaseRecord]] = {}
    for rec in fails:
        groups.setdefault(rec.direct_caller or "", []).append(rec)
    ordered = sorted(
        groups.items(), key=lambda kv: (min(m.chain_depth for m in kv[1]), kv[0])
    )
    heads = [min(members, key=lambda m: (m.chain_depth, m.node_id)) for _, members in ordered]
    chosen = heads[:t]
    if len(chosen) < t:
        taken = {r.node_id for r in chosen}
        rest = sorted(
            (r for r in fails if r.node_id not in taken),
            key=lambda r: (r.chain_depth, r.node_id),
        )
        chosen = chosen + rest[: t - len(chosen)]
    return [r.node_id for r in chosen]


def bm25_oracle_scores(docs: list[tuple[str, list[str]]], query_tokens: list[str], k1: float = 1.2, b: float = 0.75):
    """Direct transcription of the BM25 formula with floor-at-zero IDF,
    over pre-tokenized documents. Returns {doc_id: score}."""
    import math

    n = len(docs)
    lengths = {doc_id: len(tokens) for doc_id, tokens in docs}
    avgdl = sum(lengths.values()) / n if n else 0.0
    scores = {}
    for doc_id, tokens in docs:
        score = 0.0
        for term in query_tokens:
            f = tokens.count(term)
            if f == 0:
                continue
            df = sum(1 for _, other in docs if term in other)
            idf = max(0.0, math.log((n - df + 0.5) / (df + 0.5)))
            norm = k1 * (1 - b + b * lengths[doc_id] / avgdl) if avgdl else k1
            score += idf * f * (k1 + 1) / (f + norm)
        scores[doc_id] = score
    return scores
