"""Partial-query execution under a neural/symbolic coalition assignment.

Execution walks the query plan level by level (beam search): intermediate
variables keep the top-k entities after collapsing duplicate entities to their
best accumulated score; atoms on the target variable score every entity.
Conjunctions combine with the product t-norm a*b, disjunctions with the
product t-conorm a+b-a*b. Unions are combined before truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import TargetFiltered, UnknownShape
from .kg import TripleGraph
from .queries import TARGET_VAR, QueryInstance, plan
from .scoring import DEFAULT_EPSILON, SymbolicScorer


def t_norm(a, b):
    return a * b


def t_conorm(a, b):
    # complement arrangement of a+b-a*b: float-exact 1.0 whenever either side
    # is exactly 1, which the symbolic-completeness invariant depends on
    return 1.0 - (1.0 - a) * (1.0 - b)


@dataclass(frozen=True)
class CoalitionAssignment:
    """The set of atoms executed neurally; the complement runs symbolically."""

    neural_atoms: frozenset[int]

    @classmethod
    def of(cls, atom_ids) -> "CoalitionAssignment":
        return cls(frozenset(int(a) for a in atom_ids))

    @classmethod
    def empty(cls) -> "CoalitionAssignment":
        return cls(frozenset())

    @classmethod
    def full(cls, q: QueryInstance) -> "CoalitionAssignment":
        return cls(frozenset(range(q.num_atoms)))

    @classmethod
    def from_mask(cls, mask: int, n_atoms: int) -> "CoalitionAssignment":
        return cls(frozenset(i for i in range(n_atoms) if mask >> i & 1))

    def mask(self) -> int:
        m = 0
        for a in self.neural_atoms:
            m |= 1 << a
        return m

    def validate_for(self, q: QueryInstance) -> None:
        if not self.neural_atoms <= set(range(q.num_atoms)):
            raise ValueError(f"coalition {sorted(self.neural_atoms)} has unknown atom ids")


@dataclass(frozen=True)
class AnswerSets:
    easy: frozenset[int]
    hard: frozenset[int]

    def __post_init__(self):
        if self.easy & self.hard:
            raise ValueError("easy and hard answer sets must be disjoint")

    @classmethod
    def from_query(cls, q: QueryInstance) -> "AnswerSets":
        return cls(q.easy_answers, q.hard_answers)


@dataclass
class LevelTrace:
    """Per-level beam record, enough to replay the maximizing path."""

    var: str
    atom_ids: tuple[int, ...]
    combiner: str
    slots: Optional[np.ndarray]  # beam entities; None when slots == all entities
    backptr: Optional[np.ndarray]  # parent slot index per slot; None at anchored levels
    atom_scores: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class RankedAnswers:
    """Full per-entity score vector z(e) for one executed partial query."""

    scores: np.ndarray
    coalition: CoalitionAssignment
    query: QueryInstance
    k: int
    trace: Optional[list[LevelTrace]] = None

    @property
    def n_entities(self) -> int:
        return len(self.scores)


def _topk_desc(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best scores, ties broken by ascending entity index."""
    order = np.argsort(-scores, kind="stable")
    return order[: min(k, len(scores))]


def execute(
    q: QueryInstance,
    coalition: CoalitionAssignment,
    scorer,
    observed: TripleGraph,
    k: int = 10,
    epsilon: float = DEFAULT_EPSILON,
    keep_trace: bool = False,
) -> RankedAnswers:
    """Run the partial query Q_S defined by `coalition` and score every entity."""
    if k < 1:
        raise ValueError("beam width k must be >= 1")
    coalition.validate_for(q)
    symbolic = SymbolicScorer(observed, epsilon)
    n = observed.n_entities

    def atom_rows(atom, subjects: np.ndarray) -> np.ndarray:
        backend = scorer if atom.atom_id in coalition.neural_atoms else symbolic
        return backend.score_matrix(subjects, atom.predicate)

    beams: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    traces: list[LevelTrace] = []
    z: Optional[np.ndarray] = None

    for step in plan(q).levels:
        atoms = [q.atoms[i] for i in step.atom_ids]
        chain = [a for a in atoms if not a.subject.is_anchor]
        anchored = [a for a in atoms if a.subject.is_anchor]
        level_atom_vecs: dict[int, np.ndarray] = {}
        backptr: Optional[np.ndarray] = None

        if step.combiner == "or":
            if chain:
                raise UnknownShape("disjunction over non-anchored atoms is not supported")
            vec = None
            for atom in anchored:
                row = atom_rows(atom, np.array([atom.subject.entity]))[0]
                level_atom_vecs[atom.atom_id] = row
                vec = row if vec is None else t_conorm(vec, row)
        else:
            if chain:
                parents, parent_scores = beams[step.parent_var]
                mat = None
                chain_rows = {}
                for atom in chain:
                    rows = atom_rows(atom, parents)
                    if keep_trace:
                        chain_rows[atom.atom_id] = rows
                    mat = rows if mat is None else mat * rows
                vec, argp = _kernels.combine_product_max(parent_scores, mat)
                backptr = argp
                if keep_trace:
                    cols = np.arange(n)
                    for atom_id, rows in chain_rows.items():
                        level_atom_vecs[atom_id] = rows[argp, cols]
            else:
                vec = None
            for atom in anchored:
                row = atom_rows(atom, np.array([atom.subject.entity]))[0]
                level_atom_vecs[atom.atom_id] = row
                vec = row if vec is None else vec * row

        if step.var == TARGET_VAR:
            z = vec
            if keep_trace:
                traces.append(
                    LevelTrace(step.var, step.atom_ids, step.combiner, None, backptr, level_atom_vecs)
                )
        else:
            kept = _topk_desc(vec, k)
            beams[step.var] = (kept, vec[kept])
            if keep_trace:
                traces.append(
                    LevelTrace(
                        step.var,
                        step.atom_ids,
                        step.combiner,
                        kept,
                        backptr[kept] if backptr is not None else None,
                        {a: v[kept] for a, v in level_atom_vecs.items()},
                    )
                )

    assert z is not None and len(z) == n and np.isfinite(z).all()
    return RankedAnswers(z, coalition, q, k, traces if keep_trace else None)


def filtered_candidates(ans: RankedAnswers, sets: AnswerSets, target: int) -> np.ndarray:
    """Boolean candidate mask: all entities minus known answers other than target."""
    mask = np.ones(ans.n_entities, dtype=bool)
    excluded = (sets.easy | sets.hard) - {target}
    if excluded:
        mask[np.fromiter(excluded, dtype=np.int64)] = False
    return mask


def rank_of(ans: RankedAnswers, candidates: np.ndarray, target: int) -> int:
    """Filtered rank: 1 + number of candidates scoring strictly above the target."""
    if not candidates[target]:
        raise TargetFiltered(f"entity {target} is not in the candidate set")
    return 1 + _kernels.count_strictly_greater(ans.scores, candidates, target)


def symbolic_answers(q: QueryInstance, g: TripleGraph) -> frozenset[int]:
    """Exact set-semantics evaluation on a graph (no beam, no truncation)."""
    sets: dict[str, set[int]] = {}
    for step in plan(q).levels:
        acc: Optional[set[int]] = None
        for atom_id in step.atom_ids:
            atom = q.atoms[atom_id]
            if atom.subject.is_anchor:
                reach = set(int(o) for o in g.neighbors(atom.subject.entity, atom.predicate))
            else:
                reach = set()
                for v in sets[atom.subject.var]:
                    reach.update(int(o) for o in g.neighbors(v, atom.predicate))
            if acc is None:
                acc = reach
            elif step.combiner == "or":
                acc |= reach
            else:
                acc &= reach
        sets[step.var] = acc if acc is not None else set()
    return frozenset(sets[TARGET_VAR])


def classify_answers(
    q: QueryInstance, observed: TripleGraph, test_graph: TripleGraph
) -> tuple[AnswerSets, frozenset[int]]:
    """Easy/hard split computed from the graphs, plus the hardness audit.

    The audit flags dataset-labeled hard answers that are in fact symbolically
    reachable on the observed graph (not genuinely hard).
    """
    easy = symbolic_answers(q, observed)
    hard = symbolic_answers(q, test_graph) - easy
    flagged = q.hard_answers & easy
    return AnswerSets(easy, hard), flagged


class CoalitionRunner:
    """Memoizes execute() per coalition for one query.

    RankedAnswers is target-independent, so one cache serves every target of
    the query; only filtering and rank lookups are per-target. This is the main
    performance lever when explaining many answers of the same query.
    """

    def __init__(
        self,
        q: QueryInstance,
        scorer,
        observed: TripleGraph,
        k: int = 10,
        epsilon: float = DEFAULT_EPSILON,
    ):
        self.q = q
        self.scorer = scorer
        self.observed = observed
        self.k = k
        self.epsilon = epsilon
        self._cache: dict[int, RankedAnswers] = {}

    def ranked(self, coalition: CoalitionAssignment, keep_trace: bool = False) -> RankedAnswers:
        key = coalition.mask()
        hit = self._cache.get(key)
        if hit is not None and (hit.trace is not None or not keep_trace):
            return hit
        ans = execute(
            self.q, coalition, self.scorer, self.observed, self.k, self.epsilon, keep_trace
        )
        self._cache[key] = ans
        return ans

    def rank(self, coalition: CoalitionAssignment, candidates: np.ndarray, target: int) -> int:
        return rank_of(self.ranked(coalition), candidates, target)


@dataclass(frozen=True)
class PathScore:
    atom_id: int
    score: float
    combiner: str  # how the atom enters its level: "and" | "or"


def argmax_path(ans: RankedAnswers, target: int) -> list[PathScore]:
    """Each atom's contributing score along the beam path achieving z(target)."""
    if ans.trace is None:
        raise ValueError("execute(..., keep_trace=True) is required for argmax_path")
    out: list[PathScore] = []
    slot = target
    for level in reversed(ans.trace):
        for atom_id in level.atom_ids:
            out.append(PathScore(atom_id, float(level.atom_scores[atom_id][slot]), level.combiner))
        if level.backptr is not None:
            slot = int(level.backptr[slot])
        # at anchored levels the slot carries over unchanged only if this is the
        # first level; previous levels do not exist in that case
    out.sort(key=lambda p: p.atom_id)
    return out
