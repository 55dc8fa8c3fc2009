"""Per-atom score vectors: neural (bilinear complex embeddings), symbolic
(graph lookup) and a seeded graph-oracle scorer for synthetic experiments.

Every scorer maps (subject, predicate) to one score per candidate object
entity, normalized to [0, 1]. Neural scores are min-max normalized over the
full candidate vector before any beam truncation; symbolic vectors contain
only {1, epsilon}.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch
from .kg import TripleGraph

DEFAULT_EPSILON = 1e-6
CONTAINER_LAYOUT = ("ent_re", "ent_im", "rel_re", "rel_im")


@dataclass(frozen=True)
class EmbeddingTable:
    """Complex-valued entity/relation embeddings, stored as split re/im parts."""

    ent_re: np.ndarray
    ent_im: np.ndarray
    rel_re: np.ndarray
    rel_im: np.ndarray

    def __post_init__(self):
        l = self.dim
        for name in CONTAINER_LAYOUT:
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[1] != l:
                raise DimensionMismatch(f"{name} must be 2-d with {l} columns")
            if not np.isfinite(arr).all():
                raise DimensionMismatch(f"{name} contains non-finite values")
        if self.ent_im.shape[0] != self.n_entities:
            raise DimensionMismatch("entity re/im row counts differ")
        if self.rel_im.shape[0] != self.n_relations:
            raise DimensionMismatch("relation re/im row counts differ")

    @property
    def n_entities(self) -> int:
        return self.ent_re.shape[0]

    @property
    def n_relations(self) -> int:
        return self.rel_re.shape[0]

    @property
    def dim(self) -> int:
        return self.ent_re.shape[1]


def save_embeddings(path: str | os.PathLike, table: EmbeddingTable) -> None:
    """Write the binary container: one-line JSON header + 4 float32-LE blocks."""
    header = {
        "entities": table.n_entities,
        "relations": table.n_relations,
        "dim": table.dim,
        "dtype": "f32le",
        "layout": list(CONTAINER_LAYOUT),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for name in CONTAINER_LAYOUT:
            block = np.ascontiguousarray(getattr(table, name), dtype="<f4")
            fh.write(block.tobytes())


def load_embeddings(
    path: str | os.PathLike,
    expected_entities: int | None = None,
    expected_relations: int | None = None,
) -> EmbeddingTable:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        header = json.loads(header_line.decode("utf-8"))
        n, m, l = header["entities"], header["relations"], header["dim"]
        if header.get("dtype") != "f32le":
            raise DimensionMismatch(f"unsupported dtype {header.get('dtype')!r}")
        if tuple(header.get("layout", ())) != CONTAINER_LAYOUT:
            raise DimensionMismatch(f"unsupported layout {header.get('layout')!r}")
        payload = fh.read()
    shapes = {"ent_re": (n, l), "ent_im": (n, l), "rel_re": (m, l), "rel_im": (m, l)}
    need = sum(a * b for a, b in shapes.values()) * 4
    if len(payload) != need:
        raise DimensionMismatch(f"payload is {len(payload)} bytes, expected {need}")
    blocks = {}
    offset = 0
    for name in CONTAINER_LAYOUT:
        rows, cols = shapes[name]
        count = rows * cols
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        blocks[name] = arr.reshape(rows, cols).astype(np.float64)
        offset += count * 4
    if expected_entities is not None and n != expected_entities:
        raise DimensionMismatch(f"container has {n} entities, dictionary has {expected_entities}")
    if expected_relations is not None and m != expected_relations:
        raise DimensionMismatch(f"container has {m} relations, dictionary has {expected_relations}")
    return EmbeddingTable(**blocks)


@dataclass(frozen=True)
class ScoreVector:
    """Scores for every candidate object entity, tagged with their provenance."""

    values: np.ndarray
    provenance: str  # "neural" | "symbolic" | "oracle"


class NeuralScorer:
    """Bilinear complex-embedding link predictor with per-call normalization.

    The raw score for (s, p, o) is Re(<e_s, e_p, conj(e_o)>), computed as
    sum_d (s_re*p_re - s_im*p_im) * o_re + (s_re*p_im + s_im*p_re) * o_im.
    """

    provenance = "neural"

    def __init__(self, table: EmbeddingTable, normalization: str = "minmax"):
        if normalization not in ("minmax", "sigmoid"):
            raise ValueError(f"unknown normalization {normalization!r}")
        self.table = table
        self.normalization = normalization

    @property
    def n_entities(self) -> int:
        return self.table.n_entities

    def score_matrix(self, subjects: np.ndarray, p: int) -> np.ndarray:
        t = self.table
        if not 0 <= p < t.n_relations:
            raise DimensionMismatch(f"relation id {p} out of range")
        subjects = np.asarray(subjects, dtype=np.int64)
        s_re, s_im = t.ent_re[subjects], t.ent_im[subjects]
        p_re, p_im = t.rel_re[p], t.rel_im[p]
        q_re = s_re * p_re - s_im * p_im
        q_im = s_re * p_im + s_im * p_re
        raw = _kernels.complex_raw(q_re, q_im, t.ent_re, t.ent_im)
        if self.normalization == "sigmoid":
            return 1.0 / (1.0 + np.exp(-raw))
        return _kernels.minmax_rows(raw)

    def scores(self, s: int, p: int) -> np.ndarray:
        return self.score_matrix(np.array([s]), p)[0]


class SymbolicScorer:
    """Graph lookup: 1 for stored neighbors, epsilon for everything else."""

    provenance = "symbolic"

    def __init__(self, graph: TripleGraph, epsilon: float = DEFAULT_EPSILON):
        self.graph = graph
        self.epsilon = float(epsilon)

    @property
    def n_entities(self) -> int:
        return self.graph.n_entities

    def score_matrix(self, subjects: np.ndarray, p: int) -> np.ndarray:
        subjects = np.asarray(subjects, dtype=np.int64)
        out = np.full((len(subjects), self.graph.n_entities), self.epsilon, dtype=np.float64)
        for row, s in enumerate(subjects):
            out[row, self.graph.neighbors(int(s), p)] = 1.0
        return out

    def scores(self, s: int, p: int) -> np.ndarray:
        return self.score_matrix(np.array([s]), p)[0]


class OracleScorer:
    """Synthetic link predictor that knows a hidden complete graph.

    Edges of the hidden graph score high, non-edges low, with small seeded
    per-entry noise. Hidden edges that are also observed sit in a slightly
    higher band than hidden edges missing from the observed graph (a trained
    predictor is most confident on its training facts); the bands overlap so a
    missing edge occasionally outscores an observed one.
    """

    provenance = "oracle"

    BAND_OBSERVED = 0.93
    BAND_MISSING = 0.90
    BAND_NONEDGE = 0.10
    NOISE = 0.05

    def __init__(self, hidden: TripleGraph, observed: TripleGraph, seed: int = 0):
        if hidden.n_entities != observed.n_entities:
            raise ValueError("hidden and observed graphs disagree on entity count")
        if not observed.is_subset_of(hidden):
            raise ValueError("observed graph must be a subset of the hidden graph")
        self.hidden = hidden
        self.observed = observed
        self.seed = int(seed)

    @property
    def n_entities(self) -> int:
        return self.hidden.n_entities

    def scores(self, s: int, p: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, s, p]))
        delta = rng.uniform(0.0, self.NOISE, size=self.n_entities)
        out = np.full(self.n_entities, self.BAND_NONEDGE, dtype=np.float64)
        out[self.hidden.neighbors(s, p)] = self.BAND_MISSING
        out[self.observed.neighbors(s, p)] = self.BAND_OBSERVED
        np.clip(out + delta, 0.0, 1.0, out=out)
        return out

    def score_matrix(self, subjects: np.ndarray, p: int) -> np.ndarray:
        return np.stack([self.scores(int(s), p) for s in np.asarray(subjects)])


def neural_scores(table: EmbeddingTable, s: int, p: int, normalization: str = "minmax") -> ScoreVector:
    return ScoreVector(NeuralScorer(table, normalization).scores(s, p), "neural")


def symbolic_scores(g: TripleGraph, s: int, p: int, epsilon: float = DEFAULT_EPSILON) -> ScoreVector:
    return ScoreVector(SymbolicScorer(g, epsilon).scores(s, p), "symbolic")


def oracle_scores(
    hidden: TripleGraph, observed: TripleGraph, s: int, p: int, noise_seed: int = 0
) -> ScoreVector:
    return ScoreVector(OracleScorer(hidden, observed, noise_seed).scores(s, p), "oracle")
