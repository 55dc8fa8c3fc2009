"""In-memory triple store with (subject, predicate) -> objects adjacency index.

Splits are cumulative (train <= valid <= test). All structures are immutable
after load and safe to share across workers without locking.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import MalformedRow, MissingDictionaryEntry

_EMPTY = np.empty(0, dtype=np.int64)


class Dictionary:
    """Bijective label <-> dense index mapping loaded from `index<TAB>label` files."""

    def __init__(self, labels: Sequence[str]):
        self._labels = list(labels)
        self._index = {label: i for i, label in enumerate(self._labels)}
        if len(self._index) != len(self._labels):
            raise ValueError("duplicate labels in dictionary")

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "Dictionary":
        entries: dict[int, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise MalformedRow(lineno, "expected `index<TAB>label`")
                try:
                    idx = int(parts[0])
                except ValueError:
                    raise MalformedRow(lineno, f"non-integer index {parts[0]!r}") from None
                if idx in entries:
                    raise MalformedRow(lineno, f"duplicate index {idx}")
                entries[idx] = parts[1]
        if sorted(entries) != list(range(len(entries))):
            raise MalformedRow(0, "indexes are not dense 0..n-1")
        return cls([entries[i] for i in range(len(entries))])

    def index(self, label: str, kind: str = "entity") -> int:
        try:
            return self._index[label]
        except KeyError:
            raise MissingDictionaryEntry(label, kind) from None

    def label(self, index: int) -> str:
        return self._labels[index]

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def __len__(self) -> int:
        return len(self._labels)


@dataclass(frozen=True)
class TripleGraph:
    """Immutable indexed triple set for one split."""

    split_name: str
    n_entities: int
    n_relations: int
    out_index: dict[tuple[int, int], np.ndarray] = field(repr=False)
    num_triples: int = 0
    duplicates_dropped: int = 0

    def neighbors(self, s: int, p: int) -> np.ndarray:
        """Objects o with (s, p, o) in the graph, ascending by entity index."""
        return self.out_index.get((s, p), _EMPTY)

    def contains(self, s: int, p: int, o: int) -> bool:
        objs = self.out_index.get((s, p))
        if objs is None:
            return False
        pos = np.searchsorted(objs, o)
        return pos < len(objs) and objs[pos] == o

    def triples(self) -> Iterator[tuple[int, int, int]]:
        for (s, p), objs in self.out_index.items():
            for o in objs:
                yield (s, p, int(o))

    def is_subset_of(self, other: "TripleGraph") -> bool:
        for (s, p), objs in self.out_index.items():
            larger = other.out_index.get((s, p))
            if larger is None or not np.isin(objs, larger).all():
                return False
        return True


def build_graph(
    triples: Iterable[tuple[int, int, int]],
    n_entities: int,
    n_relations: int,
    split_name: str = "toy",
) -> TripleGraph:
    """Index raw id triples. Deduplicates; object lists come out sorted."""
    arr = np.asarray(list(triples) if not isinstance(triples, np.ndarray) else triples,
                     dtype=np.int64)
    out_index: dict[tuple[int, int], np.ndarray] = {}
    if arr.size == 0:
        return TripleGraph(split_name, n_entities, n_relations, out_index, 0, 0)
    total = len(arr)
    arr = np.unique(arr, axis=0)  # lexicographic sort + dedup
    keys = arr[:, 0] * n_relations + arr[:, 1]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    bounds = np.r_[starts, len(arr)]
    for i, start in enumerate(starts):
        s, p = int(arr[start, 0]), int(arr[start, 1])
        out_index[(s, p)] = np.ascontiguousarray(arr[start : bounds[i + 1], 2])
    return TripleGraph(
        split_name=split_name,
        n_entities=n_entities,
        n_relations=n_relations,
        out_index=out_index,
        num_triples=len(arr),
        duplicates_dropped=total - len(arr),
    )


def load_triples(
    path: str | os.PathLike,
    entities: Dictionary,
    relations: Dictionary,
    split_name: str,
) -> TripleGraph:
    """Load a TSV split file of `subject<TAB>predicate<TAB>object` label rows."""
    raw: list[tuple[int, int, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MalformedRow(lineno, "expected `s<TAB>p<TAB>o`")
            s = entities.index(parts[0], "entity")
            p = relations.index(parts[1], "relation")
            o = entities.index(parts[2], "entity")
            raw.append((s, p, o))
    return build_graph(raw, len(entities), len(relations), split_name)


def neighbors(g: TripleGraph, s: int, p: int) -> np.ndarray:
    return g.neighbors(s, p)


def contains(g: TripleGraph, s: int, p: int, o: int) -> bool:
    return g.contains(s, p, o)


@dataclass(frozen=True)
class DatasetBundle:
    """The three cumulative split graphs plus their dictionaries."""

    entities: Dictionary
    relations: Dictionary
    train: TripleGraph
    valid: TripleGraph
    test: TripleGraph

    @property
    def entity_count(self) -> int:
        return len(self.entities)

    @property
    def relation_count(self) -> int:
        return len(self.relations)

    def observed_graph(self, query_split: str) -> TripleGraph:
        """Graph used for symbolic lookups: valid for test queries, train for valid."""
        if query_split == "test":
            return self.valid
        if query_split == "valid":
            return self.train
        raise ValueError(f"no observed-graph convention for split {query_split!r}")


def _union(a: TripleGraph, b: TripleGraph, split_name: str) -> TripleGraph:
    def gen():
        yield from a.triples()
        yield from b.triples()

    return build_graph(gen(), a.n_entities, a.n_relations, split_name)


def load_dataset(
    directory: str | os.PathLike,
    cumulative: bool = True,
    validate: bool = True,
) -> DatasetBundle:
    """Load `entities.dict`, `relations.dict` and the three split TSVs.

    With cumulative=False the split files are incremental and are unioned here
    so the bundle invariant train <= valid <= test always holds.
    """
    directory = os.fspath(directory)
    entities = Dictionary.from_file(os.path.join(directory, "entities.dict"))
    relations = Dictionary.from_file(os.path.join(directory, "relations.dict"))
    graphs = {}
    for split in ("train", "valid", "test"):
        graphs[split] = load_triples(
            os.path.join(directory, f"{split}.txt"), entities, relations, split
        )
    if not cumulative:
        graphs["valid"] = _union(graphs["train"], graphs["valid"], "valid")
        graphs["test"] = _union(graphs["valid"], graphs["test"], "test")
    if validate:
        if not graphs["train"].is_subset_of(graphs["valid"]):
            raise ValueError("train split is not a subset of valid (cumulative datasets expected)")
        if not graphs["valid"].is_subset_of(graphs["test"]):
            raise ValueError("valid split is not a subset of test (cumulative datasets expected)")
    return DatasetBundle(entities, relations, graphs["train"], graphs["valid"], graphs["test"])
