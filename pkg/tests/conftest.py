import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from atomshap import QuerySampler, build_graph, synthetic_dataset
from atomshap.queries import parse_query
from atomshap.scoring import EmbeddingTable

settings.register_profile("ci", deadline=None, max_examples=60)
settings.load_profile("ci")

# toy entity ids used in readable fixtures
A, B, C, D, X, Y, Z = range(7)


def graph(triples, n_entities=7, n_relations=3, split="toy"):
    return build_graph(triples, n_entities, n_relations, split)


@pytest.fixture
def chain_graph():
    """A --r0--> B --r1--> D, plus A --r0--> C."""
    return graph([(A, 0, B), (A, 0, C), (B, 1, D)])


@pytest.fixture
def q2p():
    return parse_query("?V2: exists V1 . r:0(e:0,V1) AND r:1(V1,V2)")


def random_embeddings(rng, n_entities, n_relations, dim=4):
    return EmbeddingTable(
        ent_re=rng.normal(size=(n_entities, dim)),
        ent_im=rng.normal(size=(n_entities, dim)),
        rel_re=rng.normal(size=(n_relations, dim)),
        rel_im=rng.normal(size=(n_relations, dim)),
    )


def random_toy_graph(rng, n_entities, n_relations, density=0.15, split="toy"):
    triples = []
    for s in range(n_entities):
        for p in range(n_relations):
            for o in range(n_entities):
                if s != o and rng.random() < density:
                    triples.append((s, p, o))
    return build_graph(triples, n_entities, n_relations, split)


@pytest.fixture(scope="session")
def small_synth():
    """Shared small synthetic dataset with planted missing edges."""
    return synthetic_dataset(
        n_entities=60, n_relations=4, edges_per_relation=220, missing_rate=0.3, seed=7
    )


@pytest.fixture(scope="session")
def small_sampler(small_synth):
    return QuerySampler(small_synth, seed=7)
