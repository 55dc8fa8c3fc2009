import numpy as np
import pytest

from atomshap import (
    AnswerSets,
    CoalitionAssignment,
    CoalitionRunner,
    NeuralScorer,
    OracleScorer,
    SymbolicScorer,
    argmax_path,
    classify_answers,
    execute,
    filtered_candidates,
    parse_query,
    rank_of,
    symbolic_answers,
)
from atomshap.errors import TargetFiltered
from atomshap.executor import RankedAnswers, t_conorm

from conftest import A, B, C, D, graph, random_embeddings, random_toy_graph
from oracles import bf_rank, bf_scores, bf_symbolic_answers

EPS = 1e-6


def run(q, graph_, coalition=(), scorer=None, k=10, keep_trace=False):
    scorer = scorer or SymbolicScorer(graph_, EPS)
    return execute(
        q, CoalitionAssignment.of(coalition), scorer, graph_, k, EPS, keep_trace
    )


class TestExecuteToy:
    def test_2p_symbolic_complete_path(self, q2p):
        g = graph([(A, 0, B), (B, 1, D)])
        ans = run(q2p, g)
        assert ans.scores[D] == 1.0
        others = np.delete(ans.scores, D)
        assert (others < 1.0).all() and (others > 0).all()

    def test_single_atom_identity(self):
        g = graph([(A, 0, B), (A, 0, C)])
        q = parse_query("?X: r:0(e:0,X)")
        ans = run(q, g)
        expected = SymbolicScorer(g, EPS).scores(A, 0)
        assert np.array_equal(ans.scores, expected)

    def test_symbolic_completeness(self, small_synth, small_sampler):
        for shape in ("2p", "2i", "2u", "2u1p", "1p2i"):
            q = small_sampler.sample(shape)
            ans = execute(
                q,
                CoalitionAssignment.empty(),
                SymbolicScorer(small_synth.observed, EPS),
                small_synth.observed,
                k=small_synth.n_entities,
                epsilon=EPS,
            )
            reached = {int(e) for e in np.flatnonzero(ans.scores == 1.0)}
            assert reached == set(symbolic_answers(q, small_synth.observed))

    def test_determinism(self, small_synth, small_sampler):
        q = small_sampler.sample("3p")
        scorer = small_synth.oracle_scorer(3)
        a1 = execute(q, CoalitionAssignment.of({0, 2}), scorer, small_synth.observed, 10)
        a2 = execute(q, CoalitionAssignment.of({0, 2}), scorer, small_synth.observed, 10)
        assert np.array_equal(a1.scores, a2.scores)

    def test_beam_truncation_can_drop_paths(self):
        # nine distractor branches outrank the true path when k is too small:
        # tie-break keeps the lowest entity ids, and entities 1..9 precede 10.
        triples = [(A, 0, i) for i in range(1, 11)] + [(10, 1, 11)]
        g = graph(triples, n_entities=12, n_relations=2)
        q = parse_query("?X: exists Y . r:0(e:0,Y) AND r:1(Y,X)")
        wide = run(q, g, k=12)
        narrow = run(q, g, k=9)
        assert wide.scores[11] == 1.0
        assert narrow.scores[11] < 1.0


class TestBruteForceEquivalence:
    SHAPE_TEXTS = {
        "1p": "?X: r:0(e:{e0},X)",
        "2p": "?X: exists Y . r:0(e:{e0},Y) AND r:1(Y,X)",
        "3p": "?X: exists Y, Z . r:0(e:{e0},Y) AND r:1(Y,Z) AND r:2(Z,X)",
        "2i": "?X: r:0(e:{e0},X) AND r:1(e:{e1},X)",
        "3i": "?X: r:0(e:{e0},X) AND r:1(e:{e1},X) AND r:2(e:{e2},X)",
        "2u": "?X: r:0(e:{e0},X) OR r:1(e:{e1},X)",
        "2u1p": "?X: exists Y . (r:0(e:{e0},Y) OR r:1(e:{e1},Y)) AND r:2(Y,X)",
        "2i1p": "?X: exists Y . r:0(e:{e0},Y) AND r:1(e:{e1},Y) AND r:2(Y,X)",
        "1p2i": "?X: exists Y . r:0(e:{e0},Y) AND r:1(Y,X) AND r:2(e:{e1},X)",
    }

    @pytest.mark.parametrize("shape", sorted(SHAPE_TEXTS))
    def test_matches_enumeration(self, shape):
        rng = np.random.default_rng(hash(shape) % 2**32)
        for trial in range(4):
            n = int(rng.integers(6, 14))
            g = random_toy_graph(rng, n, 3, density=0.2)
            anchors = rng.integers(0, n, 3)
            q = parse_query(self.SHAPE_TEXTS[shape].format(e0=anchors[0], e1=anchors[1], e2=anchors[2]))
            scorer = NeuralScorer(random_embeddings(rng, n, 3, dim=3))
            for mask in range(1 << q.num_atoms):
                coalition = {i for i in range(q.num_atoms) if mask >> i & 1}
                got = run(q, g, coalition, scorer, k=n).scores
                want = bf_scores(q, coalition, scorer, g, EPS)
                np.testing.assert_allclose(got, want, atol=1e-9)


class TestFilteredCandidates:
    def fake_ans(self, n=6):
        q = parse_query("?X: r:0(e:0,X)")
        return RankedAnswers(np.linspace(0, 1, n), CoalitionAssignment.empty(), q, 1)

    def test_excludes_other_answers(self):
        ans = self.fake_ans()
        sets = AnswerSets(easy=frozenset({0}), hard=frozenset({1, 2}))
        mask = filtered_candidates(ans, sets, target=1)
        assert not mask[0] and not mask[2]
        assert mask[1] and mask[3] and mask[4] and mask[5]

    def test_empty_sets_keep_everything(self):
        mask = filtered_candidates(self.fake_ans(), AnswerSets(frozenset(), frozenset()), 3)
        assert mask.all()

    def test_false_answer_excludes_all_known(self):
        ans = self.fake_ans()
        sets = AnswerSets(easy=frozenset({0}), hard=frozenset({1}))
        mask = filtered_candidates(ans, sets, target=5)
        assert not mask[0] and not mask[1] and mask[5]

    def test_easy_target_is_retained(self):
        ans = self.fake_ans()
        sets = AnswerSets(easy=frozenset({0, 3}), hard=frozenset({1}))
        mask = filtered_candidates(ans, sets, target=3)
        assert mask[3] and not mask[0] and not mask[1]


class TestRankOf:
    def ranked(self, scores):
        q = parse_query("?X: r:0(e:0,X)")
        return RankedAnswers(np.asarray(scores, float), CoalitionAssignment.empty(), q, 1)

    def test_optimistic_ties(self):
        # t=0.9 vs {0.95, 0.9, 0.1}: only the 0.95 counts
        ans = self.ranked([0.9, 0.95, 0.9, 0.1])
        assert rank_of(ans, np.ones(4, bool), 0) == 2

    def test_unique_max_is_rank_one(self):
        ans = self.ranked([0.2, 0.99, 0.5])
        assert rank_of(ans, np.ones(3, bool), 1) == 1

    def test_all_tied_rank_one(self):
        ans = self.ranked([1.0, 1.0, 1.0])
        for t in range(3):
            assert rank_of(ans, np.ones(3, bool), t) == 1

    def test_target_filtered_raises(self):
        ans = self.ranked([0.5, 0.6])
        mask = np.array([True, False])
        with pytest.raises(TargetFiltered):
            rank_of(ans, mask, 1)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            scores = rng.random(20)
            mask = rng.random(20) > 0.3
            ids = [int(i) for i in np.flatnonzero(mask)]
            if not ids:
                continue
            t = ids[int(rng.integers(len(ids)))]
            ans = self.ranked(scores)
            assert rank_of(ans, mask, t) == bf_rank(scores, ids, t)

    def test_monotone_under_shrinking_candidates(self):
        rng = np.random.default_rng(12)
        scores = rng.random(30)
        ans = self.ranked(scores)
        mask = np.ones(30, bool)
        t = 7
        previous = rank_of(ans, mask, t)
        for e in rng.permutation(30):
            if e == t:
                continue
            mask[e] = False
            r = rank_of(ans, mask, t)
            assert r <= previous
            previous = r


class TestClassifyAnswers:
    def test_complete_graph_all_easy(self):
        g = graph([(A, 0, B), (B, 1, D)])
        q = parse_query("?X: exists Y . r:0(e:0,Y) AND r:1(Y,X)")
        sets, flagged = classify_answers(q, g, g)
        assert sets.easy == {D}
        assert sets.hard == frozenset()
        assert flagged == frozenset()

    def test_planted_missing_edge_is_hard(self, q2p):
        hidden = graph([(A, 0, B), (B, 1, D)])
        observed = graph([(A, 0, B)])
        sets, flagged = classify_answers(q2p, observed, hidden)
        assert sets.hard == {D}
        assert sets.easy == frozenset()

    def test_mislabeled_hard_flagged(self):
        g = graph([(A, 0, B), (B, 1, D)])
        q = parse_query("?X: exists Y . r:0(e:0,Y) AND r:1(Y,X)", hard=[D])
        _, flagged = classify_answers(q, g, g)
        assert flagged == {D}

    def test_union_branch_not_genuinely_hard(self):
        # the missing link sits in one union branch; the other still derives D
        hidden = graph([(A, 0, B), (C, 1, B), (B, 2, D)], n_relations=3)
        observed = graph([(A, 0, B), (B, 2, D)], n_relations=3)
        q = parse_query(
            "?X: exists Y . (r:0(e:0,Y) OR r:1(e:2,Y)) AND r:2(Y,X)", hard=[D]
        )
        sets, flagged = classify_answers(q, observed, hidden)
        assert D in sets.easy
        assert flagged == {D}

    def test_matches_bruteforce_sets(self, small_synth, small_sampler):
        for shape in ("2p", "3i", "2u1p", "1p2i"):
            q = small_sampler.sample(shape)
            assert set(symbolic_answers(q, small_synth.observed)) == bf_symbolic_answers(
                q, small_synth.observed
            )


class TestArgmaxPath:
    def test_2p_path_scores_multiply_to_z(self, q2p):
        g = graph([(A, 0, B), (B, 1, D)])
        ans = run(q2p, g, keep_trace=True)
        path = argmax_path(ans, D)
        assert [p.atom_id for p in path] == [0, 1]
        assert np.prod([p.score for p in path]) == pytest.approx(ans.scores[D])

    def test_single_atom(self):
        g = graph([(A, 0, B)])
        q = parse_query("?X: r:0(e:0,X)")
        ans = run(q, g, keep_trace=True)
        (p,) = argmax_path(ans, B)
        assert p.score == pytest.approx(ans.scores[B]) == 1.0

    def test_union_reports_both_branches(self):
        g = graph([(A, 0, C), (B, 1, C)])
        q = parse_query("?X: r:0(e:0,X) OR r:1(e:1,X)")
        ans = run(q, g, keep_trace=True)
        path = argmax_path(ans, C)
        assert [p.combiner for p in path] == ["or", "or"]
        assert t_conorm(path[0].score, path[1].score) == pytest.approx(ans.scores[C])

    def test_oracle_path_consistent(self, small_synth, small_sampler):
        q = small_sampler.sample("1p2i")
        scorer = small_synth.oracle_scorer(1)
        ans = execute(
            q, CoalitionAssignment.full(q), scorer, small_synth.observed, 10, EPS, True
        )
        target = int(np.argmax(ans.scores))
        path = argmax_path(ans, target)
        assert np.prod([p.score for p in path]) == pytest.approx(ans.scores[target])

    def test_requires_trace(self, q2p):
        g = graph([(A, 0, B), (B, 1, D)])
        ans = run(q2p, g)
        with pytest.raises(ValueError):
            argmax_path(ans, D)


class TestRunnerMemoization:
    def test_cache_reused(self, small_synth, small_sampler):
        q = small_sampler.sample("2i")
        runner = CoalitionRunner(q, small_synth.oracle_scorer(2), small_synth.observed, 10)
        a1 = runner.ranked(CoalitionAssignment.of({0}))
        a2 = runner.ranked(CoalitionAssignment.of({0}))
        assert a1 is a2

    def test_trace_upgrade(self, small_synth, small_sampler):
        q = small_sampler.sample("2i")
        runner = CoalitionRunner(q, small_synth.oracle_scorer(2), small_synth.observed, 10)
        plain = runner.ranked(CoalitionAssignment.full(q))
        traced = runner.ranked(CoalitionAssignment.full(q), keep_trace=True)
        assert traced.trace is not None
        assert np.array_equal(plain.scores, traced.scores)
