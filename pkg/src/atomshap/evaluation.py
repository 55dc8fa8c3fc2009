"""Atom-selection methods and the necessary/sufficient evaluation scenarios.

Necessary: for hard answers ranked 1 by the full-neural run, demote the
selected atom to symbolic execution and record the MRR/Hits@1 drop.
Sufficient: for hard answers not ranked 1 by the all-symbolic run, promote the
selected atom to neural execution and record the gain over that baseline.
Averaging is answer -> query -> shape; n counts queries with >=1 usable pair.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .executor import (
    AnswerSets,
    CoalitionAssignment,
    CoalitionRunner,
    argmax_path,
    filtered_candidates,
)
from .kg import TripleGraph
from .queries import TABLE_SHAPE_ORDER, QueryInstance
from .scoring import DEFAULT_EPSILON
from .shapley import explain

METHOD_KINDS = ("first_level", "last_level", "random", "score_based", "cqd_shap")
_RANDOMIZED = ("first_level", "last_level", "random")


def mrr(ranks: Sequence[int]) -> float:
    """Mean reciprocal rank of the given filtered ranks."""
    if len(ranks) == 0:
        raise ValueError("mrr of an empty rank list is undefined")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks must be >= 1")
    return float(sum(1.0 / r for r in ranks) / len(ranks))


def hits_at_k(ranks: Sequence[int], k: int) -> float:
    """Fraction of ranks within the top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(ranks) == 0:
        raise ValueError("hits@k of an empty rank list is undefined")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks must be >= 1")
    return float(sum(1 for r in ranks if r <= k) / len(ranks))


@dataclass(frozen=True)
class SelectionMethod:
    kind: str
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown selection method {self.kind!r}")
        if (self.kind in _RANDOMIZED) != (self.seed is not None):
            raise ValueError(f"method {self.kind!r} requires a seed iff it is randomized")


def _stable_query_hash(q: QueryInstance) -> int:
    digest = hashlib.blake2b(repr(q.canonical_key()).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def select_atom(
    q: QueryInstance,
    method: SelectionMethod,
    target: int,
    scorer,
    observed: TripleGraph,
    k: int = 10,
    runner: Optional[CoalitionRunner] = None,
    answer_sets: Optional[AnswerSets] = None,
    epsilon: float = DEFAULT_EPSILON,
) -> int:
    """Pick the atom whose execution mode the scenario will flip."""
    if runner is None:
        runner = CoalitionRunner(q, scorer, observed, k, epsilon)

    if method.kind in _RANDOMIZED:
        if method.kind == "first_level":
            pool = sorted(q.first_level_atoms())
        elif method.kind == "last_level":
            pool = sorted(q.last_level_atoms())
        else:
            pool = list(range(q.num_atoms))
        rng = np.random.default_rng(
            np.random.SeedSequence([method.seed, _stable_query_hash(q), target])
        )
        return int(pool[rng.integers(len(pool))])

    if method.kind == "score_based":
        ans = runner.ranked(CoalitionAssignment.full(q), keep_trace=True)
        return score_based_pick(argmax_path(ans, target))

    report = explain(q, target, scorer, observed, k, runner=runner, answer_sets=answer_sets)
    return shapley_pick(report)


def score_based_pick(path) -> int:
    """Lowest atom score along the maximizing path, unions entering via their
    strongest branch."""
    union = [p for p in path if p.combiner == "or"]
    plain = [p for p in path if p.combiner != "or"]
    candidates = [(p.score, p.atom_id) for p in plain]
    if union:
        best = max(union, key=lambda p: (p.score, -p.atom_id))
        candidates.append((best.score, best.atom_id))
    _, atom_id = min(candidates, key=lambda c: (c[0], c[1]))
    return atom_id


def shapley_pick(report) -> int:
    """Highest-phi atom; ties resolve to the lowest atom id."""
    best_phi = max(report.phi.values())
    return min(a for a, v in report.phi.items() if v == best_phi)


@dataclass
class ScenarioResult:
    """Per-(shape, method, scenario) aggregate over one query collection."""

    scenario: str  # "necessary" | "sufficient"
    method: str
    shape: str
    n: int  # queries with >=1 qualifying (query, answer) pair
    n_pairs: int
    delta_mrr: float
    delta_hits1: float
    per_query_delta_mrr: list[float] = field(default_factory=list)
    per_query_delta_hits1: list[float] = field(default_factory=list)
    skipped_queries: int = 0
    seed: Optional[int] = None
    dataset: str = ""


def _qualifying_targets(
    runner: CoalitionRunner, sets: AnswerSets, scenario: str
) -> list[tuple[int, np.ndarray, int]]:
    """(target, candidate mask, baseline rank) for pairs passing the precondition."""
    if scenario == "necessary":
        baseline = runner.ranked(CoalitionAssignment.full(runner.q))
    else:
        baseline = runner.ranked(CoalitionAssignment.empty())
    out = []
    for target in sorted(sets.hard):
        candidates = filtered_candidates(baseline, sets, target)
        r = runner.rank(baseline.coalition, candidates, target)
        if scenario == "necessary" and r == 1:
            out.append((target, candidates, r))
        elif scenario == "sufficient" and r > 1:
            out.append((target, candidates, r))
    return out


def _eval_query(
    q: QueryInstance,
    scorer,
    observed: TripleGraph,
    methods: Sequence[SelectionMethod],
    scenario: str,
    k: int,
    epsilon: float,
) -> dict[str, Optional[tuple[float, float, int]]]:
    """Per-method (mean dMRR, mean dHits1, pair count) for one query."""
    runner = CoalitionRunner(q, scorer, observed, k, epsilon)
    sets = AnswerSets.from_query(q)
    pairs = _qualifying_targets(runner, sets, scenario)
    if not pairs:
        return {m.kind: None for m in methods}
    all_atoms = set(range(q.num_atoms))
    out: dict[str, Optional[tuple[float, float, int]]] = {}
    for method in methods:
        d_mrr, d_h1 = [], []
        for target, candidates, base_rank in pairs:
            a_star = select_atom(
                q, method, target, scorer, observed, k,
                runner=runner, answer_sets=sets, epsilon=epsilon,
            )
            if scenario == "necessary":
                coalition = CoalitionAssignment.of(all_atoms - {a_star})
                r_new = runner.rank(coalition, candidates, target)
                dm = 1.0 / r_new - 1.0
                dh = (1 if r_new == 1 else 0) - 1
                assert dm <= 0 and dh <= 0
            else:
                coalition = CoalitionAssignment.of({a_star})
                r_new = runner.rank(coalition, candidates, target)
                dm = 1.0 / r_new - 1.0 / base_rank
                dh = 1 if r_new == 1 else 0
                assert dh >= 0
            d_mrr.append(dm)
            d_h1.append(float(dh))
        out[method.kind] = (
            float(np.mean(d_mrr)),
            float(np.mean(d_h1)),
            len(pairs),
        )
    return out


_CTX: Optional[tuple] = None


def _init_worker(ctx):
    global _CTX
    _CTX = ctx


def _eval_query_by_index(idx: int):
    queries, scorer, observed, methods, scenario, k, epsilon = _CTX
    return _eval_query(queries[idx], scorer, observed, methods, scenario, k, epsilon)


def run_scenario(
    queries: Sequence[QueryInstance],
    scorer,
    observed: TripleGraph,
    methods: Sequence[SelectionMethod],
    scenario: str,
    k: int = 10,
    epsilon: float = DEFAULT_EPSILON,
    workers: int = 1,
    dataset: str = "",
) -> list[ScenarioResult]:
    """Evaluate every method on one query collection, sharing per-query caches."""
    if scenario not in ("necessary", "sufficient"):
        raise ValueError(f"unknown scenario {scenario!r}")
    shapes = sorted({q.shape for q in queries}, key=_shape_sort_key)
    if workers > 1:
        ctx = (list(queries), scorer, observed, list(methods), scenario, k, epsilon)
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(ctx,)
        ) as pool:
            per_query = list(pool.map(_eval_query_by_index, range(len(queries))))
    else:
        per_query = [
            _eval_query(q, scorer, observed, methods, scenario, k, epsilon) for q in queries
        ]

    results = []
    for method in methods:
        for shape in shapes:
            rows = [
                res[method.kind]
                for q, res in zip(queries, per_query)
                if q.shape == shape
            ]
            used = [r for r in rows if r is not None]
            results.append(
                ScenarioResult(
                    scenario=scenario,
                    method=method.kind,
                    shape=shape,
                    n=len(used),
                    n_pairs=sum(r[2] for r in used),
                    delta_mrr=float(np.mean([r[0] for r in used])) if used else 0.0,
                    delta_hits1=float(np.mean([r[1] for r in used])) if used else 0.0,
                    per_query_delta_mrr=[r[0] for r in used],
                    per_query_delta_hits1=[r[1] for r in used],
                    skipped_queries=len(rows) - len(used),
                    seed=method.seed,
                    dataset=dataset,
                )
            )
    return results


def necessary_eval(
    queries: Sequence[QueryInstance],
    scorer,
    observed: TripleGraph,
    method: SelectionMethod,
    k: int = 10,
    epsilon: float = DEFAULT_EPSILON,
    workers: int = 1,
) -> ScenarioResult:
    results = run_scenario(queries, scorer, observed, [method], "necessary", k, epsilon, workers)
    return _merge_shapes(results, "necessary", method)


def sufficient_eval(
    queries: Sequence[QueryInstance],
    scorer,
    observed: TripleGraph,
    method: SelectionMethod,
    k: int = 10,
    epsilon: float = DEFAULT_EPSILON,
    workers: int = 1,
) -> ScenarioResult:
    results = run_scenario(queries, scorer, observed, [method], "sufficient", k, epsilon, workers)
    return _merge_shapes(results, "sufficient", method)


def _merge_shapes(
    results: list[ScenarioResult], scenario: str, method: SelectionMethod
) -> ScenarioResult:
    """Collapse per-shape rows into one result (single-shape collections in practice)."""
    per_mrr = [v for r in results for v in r.per_query_delta_mrr]
    per_h1 = [v for r in results for v in r.per_query_delta_hits1]
    shapes = {r.shape for r in results}
    return ScenarioResult(
        scenario=scenario,
        method=method.kind,
        shape=shapes.pop() if len(shapes) == 1 else "mixed",
        n=sum(r.n for r in results),
        n_pairs=sum(r.n_pairs for r in results),
        delta_mrr=float(np.mean(per_mrr)) if per_mrr else 0.0,
        delta_hits1=float(np.mean(per_h1)) if per_h1 else 0.0,
        per_query_delta_mrr=per_mrr,
        per_query_delta_hits1=per_h1,
        skipped_queries=sum(r.skipped_queries for r in results),
        seed=method.seed,
    )


def _shape_sort_key(shape: str) -> int:
    try:
        return TABLE_SHAPE_ORDER.index(shape)
    except ValueError:
        return len(TABLE_SHAPE_ORDER)


def aggregate(results: Iterable[ScenarioResult]) -> list[dict]:
    """Rows ordered like the reporting tables: by scenario, shape, then method."""
    rows = [
        {
            "dataset": r.dataset,
            "shape": r.shape,
            "method": r.method,
            "scenario": r.scenario,
            "n": r.n,
            "delta_mrr": round(r.delta_mrr, 6),
            "delta_hits1": round(r.delta_hits1, 6),
            "seed": r.seed,
        }
        for r in results
    ]
    rows.sort(
        key=lambda row: (
            row["dataset"],
            row["scenario"],
            _shape_sort_key(row["shape"]),
            METHOD_KINDS.index(row["method"]),
        )
    )
    return rows


def write_rows(rows: list[dict], out_dir: str | os.PathLike, stem: str) -> tuple[str, str]:
    """Emit the aggregate rows as CSV + JSON (plus gnuplot-friendly .dat)."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    json_path = os.path.join(out_dir, f"{stem}.json")
    fieldnames = ["dataset", "shape", "method", "scenario", "n", "delta_mrr", "delta_hits1", "seed"]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
    with open(os.path.join(out_dir, f"{stem}.dat"), "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(fieldnames) + "\n")
        for row in rows:
            fh.write(" ".join(str(row[f]) for f in fieldnames) + "\n")
    return csv_path, json_path
