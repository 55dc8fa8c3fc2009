"""Synthetic graphs and query sampling for tests, benchmarks and demos.

A hidden graph plays the role of the complete (test) graph; the observed graph
drops each hidden edge independently at `missing_rate`, planting the missing
links a neural scorer is supposed to recover. Queries are sampled backwards
from hidden-graph paths so every query has at least one hidden answer, and are
labeled easy/hard against the observed graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .executor import symbolic_answers
from .kg import TripleGraph, build_graph
from .queries import SHAPES, QueryInstance, parse_query
from .scoring import OracleScorer


@dataclass(frozen=True)
class SyntheticData:
    hidden: TripleGraph
    observed: TripleGraph
    seed: int
    missing_rate: float

    @property
    def n_entities(self) -> int:
        return self.hidden.n_entities

    @property
    def n_relations(self) -> int:
        return self.hidden.n_relations

    def oracle_scorer(self, seed: int | None = None) -> OracleScorer:
        return OracleScorer(self.hidden, self.observed, self.seed if seed is None else seed)


def synthetic_dataset(
    n_entities: int,
    n_relations: int,
    edges_per_relation: int,
    missing_rate: float = 0.3,
    seed: int = 0,
) -> SyntheticData:
    rng = np.random.default_rng(np.random.SeedSequence([seed, n_entities, n_relations]))
    blocks = []
    for p in range(n_relations):
        subjects = rng.integers(0, n_entities, size=edges_per_relation)
        objects = rng.integers(0, n_entities, size=edges_per_relation)
        keep = subjects != objects
        block = np.column_stack(
            [subjects[keep], np.full(int(keep.sum()), p, dtype=np.int64), objects[keep]]
        )
        blocks.append(block)
    triples = np.concatenate(blocks)
    hidden = build_graph(triples, n_entities, n_relations, "hidden")
    keep = rng.random(len(triples)) >= missing_rate
    observed = build_graph(triples[keep], n_entities, n_relations, "observed")
    return SyntheticData(hidden, observed, seed, missing_rate)


def _edge_arrays(g: TripleGraph) -> np.ndarray:
    chunks = []
    for (s, p), objs in g.out_index.items():
        block = np.empty((len(objs), 3), dtype=np.int64)
        block[:, 0] = s
        block[:, 1] = p
        block[:, 2] = objs
        chunks.append(block)
    if not chunks:
        return np.empty((0, 3), dtype=np.int64)
    return np.concatenate(chunks)


class QuerySampler:
    """Samples well-formed query instances of each admitted shape."""

    def __init__(self, data: SyntheticData, seed: int = 0):
        self.data = data
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA70]))
        self.edges = _edge_arrays(data.hidden)
        order = np.argsort(self.edges[:, 2], kind="stable")
        objs = self.edges[order, 2]
        starts = np.flatnonzero(np.r_[True, objs[1:] != objs[:-1]])
        bounds = np.r_[starts, len(objs)]
        self.in_edges = {
            int(objs[start]): order[start : bounds[i + 1]]
            for i, start in enumerate(starts)
        }

    def _random_edge(self) -> tuple[int, int, int]:
        s, p, o = self.edges[self.rng.integers(len(self.edges))]
        return int(s), int(p), int(o)

    def _random_in_edge(self, o: int) -> tuple[int, int] | None:
        idx = self.in_edges.get(o)
        if idx is None:
            return None
        s, p, _ = self.edges[idx[self.rng.integers(len(idx))]]
        return int(s), int(p)

    def _distinct_in_edges(self, o: int, count: int) -> list[tuple[int, int]] | None:
        idx = self.in_edges.get(o)
        if idx is None:
            return None
        pairs = {(int(self.edges[i][0]), int(self.edges[i][1])) for i in idx}
        if len(pairs) < count:
            return None
        chosen = sorted(pairs)
        order = self.rng.permutation(len(chosen))[:count]
        return [chosen[i] for i in order]

    def _skeleton(self, shape: str) -> str | None:
        """One DSL string for the shape, anchored on hidden-graph paths."""
        if shape == "1p":
            e0, p0, _ = self._random_edge()
            return f"?A: r:{p0}(e:{e0},A)"
        if shape == "2p":
            v, p1, _ = self._random_edge()
            first = self._random_in_edge(v)
            if first is None:
                return None
            e0, p0 = first
            return f"?A: exists X1 . r:{p0}(e:{e0},X1) AND r:{p1}(X1,A)"
        if shape == "3p":
            w, p2, _ = self._random_edge()
            mid = self._random_in_edge(w)
            if mid is None:
                return None
            v, p1 = mid
            first = self._random_in_edge(v)
            if first is None:
                return None
            e0, p0 = first
            return (
                f"?A: exists X1, X2 . r:{p0}(e:{e0},X1) AND r:{p1}(X1,X2) AND r:{p2}(X2,A)"
            )
        if shape in ("2i", "3i"):
            _, _, t = self._random_edge()
            count = 2 if shape == "2i" else 3
            branches = self._distinct_in_edges(t, count)
            if branches is None:
                return None
            atoms = [f"r:{p}(e:{e},A)" for e, p in branches]
            return "?A: " + " AND ".join(atoms)
        if shape == "2u":
            _, _, t = self._random_edge()
            first = self._random_in_edge(t)
            if first is None:
                return None
            e0, p0 = first
            e1, p1, _ = self._random_edge()
            if (e0, p0) == (e1, p1):
                return None
            return f"?A: r:{p0}(e:{e0},A) OR r:{p1}(e:{e1},A)"
        if shape == "2u1p":
            v, p2, _ = self._random_edge()
            first = self._random_in_edge(v)
            if first is None:
                return None
            e0, p0 = first
            e1, p1, _ = self._random_edge()
            if (e0, p0) == (e1, p1):
                return None
            return (
                f"?A: exists X1 . (r:{p0}(e:{e0},X1) OR r:{p1}(e:{e1},X1)) AND r:{p2}(X1,A)"
            )
        if shape == "2i1p":
            v, p2, _ = self._random_edge()
            branches = self._distinct_in_edges(v, 2)
            if branches is None:
                return None
            (e0, p0), (e1, p1) = branches
            return (
                f"?A: exists X1 . r:{p0}(e:{e0},X1) AND r:{p1}(e:{e1},X1) AND r:{p2}(X1,A)"
            )
        if shape == "1p2i":
            v, p1, t = self._random_edge()
            first = self._random_in_edge(v)
            if first is None:
                return None
            e0, p0 = first
            side = self._random_in_edge(t)
            if side is None:
                return None
            e1, p2 = side
            return (
                f"?A: exists X1 . r:{p0}(e:{e0},X1) AND r:{p1}(X1,A) AND r:{p2}(e:{e1},A)"
            )
        raise ValueError(f"unknown shape {shape!r}")

    def sample(self, shape: str, require_hard: bool = True, max_tries: int = 200) -> QueryInstance:
        if shape not in SHAPES:
            raise ValueError(f"unknown shape {shape!r}")
        for _ in range(max_tries):
            text = self._skeleton(shape)
            if text is None:
                continue
            q = parse_query(text)
            easy = symbolic_answers(q, self.data.observed)
            hard = symbolic_answers(q, self.data.hidden) - easy
            if require_hard and not hard:
                continue
            return QueryInstance(
                shape=q.shape,
                atoms=q.atoms,
                dnf=q.dnf,
                easy_answers=frozenset(easy),
                hard_answers=frozenset(hard),
            )
        raise RuntimeError(
            f"could not sample a {shape} query with hard answers in {max_tries} tries"
        )

    def sample_many(self, shape: str, count: int, require_hard: bool = True) -> list[QueryInstance]:
        return [self.sample(shape, require_hard) for _ in range(count)]
