"""Test selection strategies over a probe report.

The harness strategy clusters failing tests by the function that directly
invokes the target and picks at most T representatives balancing caller
diversity with call-chain proximity. Baseline strategies: random (RS),
simplicity by cyclomatic complexity (SS), failure-revealing constructs (FRS),
and invocation proximity (IPS).
"""

from __future__ import annotations

import ast
import random
from dataclasses import dataclass, field

from tddgen.errors import TddgenError
from tddgen.probe_report import ProbeReport, TestCaseRecord

STRATEGY_KINDS = ("THM", "RS", "SS", "FRS", "IPS")

#: Sentinel budget meaning "bypass selection, return every stub failure".
ALL = None


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str
    budget_t: int | None = 3  # None means ALL
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind: {self.kind}")
        if self.budget_t is not None and self.budget_t < 1:
            raise ValueError("budget_t must be >= 1 or ALL")


@dataclass(frozen=True)
class CallerCluster:
    direct_caller: str
    members: tuple[TestCaseRecord, ...]  # ordered (chain_depth asc, node_id asc)

    @property
    def min_depth(self) -> int:
        return self.members[0].chain_depth


@dataclass(frozen=True)
class SelectionPlan:
    strategy: SelectionStrategy
    chosen: tuple[TestCaseRecord, ...]
    clusters: tuple[CallerCluster, ...] = ()
    rationale: dict[str, str] = field(default_factory=dict)  # node_id -> annotation
    no_failing_tests: bool = False

    @property
    def node_ids(self) -> list[str]:
        return [r.node_id for r in self.chosen]

    def to_doc(self) -> dict:
        return {
            "strategy": {
                "kind": self.strategy.kind,
                "budget_t": self.strategy.budget_t if self.strategy.budget_t is not None else "All",
                "rng_seed": self.strategy.rng_seed,
            },
            "chosen": self.node_ids,
            "clusters": [
                {"direct_caller": c.direct_caller, "members": [m.node_id for m in c.members]}
                for c in self.clusters
            ],
            "rationale": dict(self.rationale),
            "no_failing_tests": self.no_failing_tests,
        }


def _pool(report: ProbeReport) -> list[TestCaseRecord]:
    return report.stub_failures()


def cluster_by_caller(report: ProbeReport) -> list[CallerCluster]:
    """One cluster per distinct direct caller among stub failures.

    Members are ordered by (chain_depth asc, node_id asc); clusters by
    (min_depth asc, direct_caller asc).
    """
    groups: dict[str, list[TestCaseRecord]] = {}
    for rec in _pool(report):
        groups.setdefault(rec.direct_caller or "", []).append(rec)
    clusters = []
    for caller, members in groups.items():
        members.sort(key=lambda r: (r.chain_depth, r.node_id))
        clusters.append(CallerCluster(direct_caller=caller, members=tuple(members)))
    clusters.sort(key=lambda c: (c.min_depth, c.direct_caller))
    return clusters


def _all_plan(strategy: SelectionStrategy, report: ProbeReport, source: str) -> SelectionPlan:
    pool = sorted(_pool(report), key=lambda r: (r.chain_depth, r.node_id))
    return SelectionPlan(
        strategy=strategy,
        chosen=tuple(pool),
        rationale={r.node_id: source for r in pool},
        no_failing_tests=not pool,
    )


def select_thm(report: ProbeReport, t: int | None = 3) -> SelectionPlan:
    strategy = SelectionStrategy("THM", t)
    if t is ALL:
        return _all_plan(strategy, report, "all-stub-failures")
    clusters = cluster_by_caller(report)
    if not clusters:
        return SelectionPlan(strategy=strategy, chosen=(), no_failing_tests=True)
    chosen: list[TestCaseRecord] = []
    rationale: dict[str, str] = {}
    for i, cluster in enumerate(clusters[:t]):
        head = cluster.members[0]
        chosen.append(head)
        rationale[head.node_id] = f"cluster[{i}]:{cluster.direct_caller}"
    if len(chosen) < t:
        taken = {r.node_id for r in chosen}
        rest = sorted(
            (r for r in _pool(report) if r.node_id not in taken),
            key=lambda r: (r.chain_depth, r.node_id),
        )
        for rec in rest[: t - len(chosen)]:
            chosen.append(rec)
            rationale[rec.node_id] = "shortest-chain-fill"
    return SelectionPlan(
        strategy=strategy, chosen=tuple(chosen), clusters=tuple(clusters), rationale=rationale
    )


def select_rs(report: ProbeReport, t: int | None, seed: int = 0) -> SelectionPlan:
    strategy = SelectionStrategy("RS", t, seed)
    if t is ALL:
        return _all_plan(strategy, report, "all-stub-failures")
    pool = sorted(_pool(report), key=lambda r: r.node_id)
    if not pool:
        return SelectionPlan(strategy=strategy, chosen=(), no_failing_tests=True)
    rng = random.Random(seed)
    sample = rng.sample(pool, min(t, len(pool)))
    return SelectionPlan(
        strategy=strategy,
        chosen=tuple(sample),
        rationale={r.node_id: f"random(seed={seed})" for r in sample},
    )


def select_ss(report: ProbeReport, t: int | None) -> SelectionPlan:
    strategy = SelectionStrategy("SS", t)
    if t is ALL:
        return _all_plan(strategy, report, "all-stub-failures")
    pool = sorted(_pool(report), key=lambda r: (r.cyclomatic_complexity, r.node_id))
    chosen = pool[:t]
    return SelectionPlan(
        strategy=strategy,
        chosen=tuple(chosen),
        rationale={r.node_id: f"complexity={r.cyclomatic_complexity}" for r in chosen},
        no_failing_tests=not pool,
    )


def is_failure_revealing(record: TestCaseRecord) -> bool:
    """True iff the probe marked the test as assertion-bearing."""
    return record.assertion_bearing


def select_frs(report: ProbeReport, t: int | None, seed: int = 0) -> SelectionPlan:
    strategy = SelectionStrategy("FRS", t, seed)
    qualifying = sorted(
        (r for r in _pool(report) if is_failure_revealing(r)), key=lambda r: r.node_id
    )
    if t is ALL:
        plan = _all_plan(strategy, report, "all-stub-failures")
        return plan
    if not qualifying:
        return SelectionPlan(strategy=strategy, chosen=(), no_failing_tests=not _pool(report))
    rng = random.Random(seed)
    # shortfall: return every qualifying test rather than backfilling
    sample = rng.sample(qualifying, min(t, len(qualifying)))
    return SelectionPlan(
        strategy=strategy,
        chosen=tuple(sample),
        rationale={r.node_id: f"failure-revealing random(seed={seed})" for r in sample},
    )


def select_ips(report: ProbeReport, t: int | None) -> SelectionPlan:
    strategy = SelectionStrategy("IPS", t)
    if t is ALL:
        return _all_plan(strategy, report, "all-stub-failures")
    pool = sorted(_pool(report), key=lambda r: (r.chain_depth, r.node_id))
    chosen = pool[:t]
    return SelectionPlan(
        strategy=strategy,
        chosen=tuple(chosen),
        rationale={r.node_id: f"depth={r.chain_depth}" for r in chosen},
        no_failing_tests=not pool,
    )


_SELECTORS = {
    "THM": lambda report, t, seed: select_thm(report, t),
    "RS": select_rs,
    "SS": lambda report, t, seed: select_ss(report, t),
    "FRS": select_frs,
    "IPS": lambda report, t, seed: select_ips(report, t),
}


def select(report: ProbeReport, kind: str, t: int | None = 3, seed: int = 0) -> SelectionPlan:
    if kind not in _SELECTORS:
        raise ValueError(f"unknown strategy kind: {kind}")
    return _SELECTORS[kind](report, t, seed)


# ---------------------------------------------------------------------------
# Static features of test functions (also computed by the probe plugin).
# ---------------------------------------------------------------------------


class AnalysisError(TddgenError):
    code = "analysis-error"


def _function_node(source: str) -> ast.AST:
    try:
        tree = ast.parse(source)
    except SyntaxError as exc:
        raise AnalysisError(f"unparsable source: {exc.msg} (line {exc.lineno})") from exc
    return tree


def cyclomatic_complexity(test_source: str) -> int:
    """1 + decision points.

    Counted: each if/elif, each loop, each exception handler, each boolean
    short-circuit operator, each conditional expression, each comprehension
    filter clause.
    """
    tree = _function_node(test_source)
    count = 1
    for node in ast.walk(tree):
        if isinstance(node, (ast.If, ast.IfExp, ast.For, ast.AsyncFor, ast.While, ast.ExceptHandler)):
            count += 1
        elif isinstance(node, ast.BoolOp):
            count += len(node.values) - 1
        elif isinstance(node, ast.comprehension):
            count += len(node.ifs)
    return count


def detect_failure_revealing(test_source: str) -> bool:
    """Whether a test body contains assertion or exception-check constructs.

    Recognized: native assert/raise statements, ``with pytest.raises(...)``
    style context managers, and unittest-style ``self.assert*`` /
    ``self.fail`` calls.
    """
    tree = _function_node(test_source)
    for node in ast.walk(tree):
        if isinstance(node, (ast.Assert, ast.Raise)):
            return True
        if isinstance(node, (ast.With, ast.AsyncWith)):
            for item in node.items:
                expr = item.context_expr
                if isinstance(expr, ast.Call):
                    name = _call_tail(expr.func)
                    if name == "raises":
                        return True
        if isinstance(node, ast.Call):
            func = node.func
            if (
                isinstance(func, ast.Attribute)
                and isinstance(func.value, ast.Name)
                and func.value.id == "self"
                and (func.attr.startswith("assert") or func.attr == "fail")
            ):
                return True
    return False


def _call_tail(func: ast.expr) -> str | None:
    if isinstance(func, ast.Attribute):
        return func.attr
    if isinstance(func, ast.Name):
        return func.id
    return None
