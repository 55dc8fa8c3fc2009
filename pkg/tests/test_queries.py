import json

import pytest
from hypothesis import given, strategies as st

from atomshap import Dictionary, parse_query, plan, render_query
from atomshap.errors import DslSyntaxError, SchemaError, UnboundVariable, UnknownShape
from atomshap.queries import (
    SHAPES,
    TARGET_VAR,
    QueryInstance,
    load_query_file,
    query_to_json,
    save_query_file,
)

ENTS = Dictionary(["A", "B", "C", "D"])
RELS = Dictionary(["r1", "r2", "r3"])


class TestParse:
    def test_2p(self):
        q = parse_query("?V2: exists V1 . r1(A,V1) AND r2(V1,V2)", ENTS, RELS)
        assert q.shape == "2p"
        assert q.num_atoms == 2
        assert q.atoms[0].subject.entity == 0
        assert q.atoms[1].object.var == TARGET_VAR

    def test_2u(self):
        q = parse_query("?V1: r1(A,V1) OR r2(B,V1)", ENTS, RELS)
        assert q.shape == "2u"
        assert q.dnf == ((0,), (1,))

    def test_self_loop_rejected(self):
        with pytest.raises((UnboundVariable, DslSyntaxError)):
            parse_query("?V1: r1(V1,V1)", ENTS, RELS)

    def test_union_then_projection(self):
        q = parse_query("?V2: exists V1 . (r1(A,V1) OR r2(B,V1)) AND r3(V1,V2)", ENTS, RELS)
        assert q.shape == "2u1p"
        assert q.dnf == ((0, 2), (1, 2))

    @pytest.mark.parametrize(
        "text,shape",
        [
            ("?X: r1(A,X)", "1p"),
            ("?X: exists Y . r1(A,Y) AND r2(Y,X)", "2p"),
            ("?X: exists Y, Z . r1(A,Y) AND r2(Y,Z) AND r3(Z,X)", "3p"),
            ("?X: r1(A,X) AND r2(B,X)", "2i"),
            ("?X: r1(A,X) AND r2(B,X) AND r3(C,X)", "3i"),
            ("?X: r1(A,X) OR r2(B,X)", "2u"),
            ("?X: exists Y . (r1(A,Y) OR r2(B,Y)) AND r3(Y,X)", "2u1p"),
            ("?X: exists Y . r1(A,Y) AND r2(B,Y) AND r3(Y,X)", "2i1p"),
            ("?X: exists Y . r1(A,Y) AND r2(Y,X) AND r3(B,X)", "1p2i"),
        ],
    )
    def test_all_shapes_inferred(self, text, shape):
        assert parse_query(text, ENTS, RELS).shape == shape

    def test_unknown_entity(self):
        from atomshap.errors import MissingDictionaryEntry

        with pytest.raises(MissingDictionaryEntry):
            parse_query("?X: r1(Q,X)", ENTS, RELS)

    def test_negation_rejected(self):
        with pytest.raises(DslSyntaxError):
            parse_query("?X: NOT(A,X)", ENTS, RELS)

    def test_syntax_error_position(self):
        with pytest.raises(DslSyntaxError) as err:
            parse_query("?X r1(A,X)", ENTS, RELS)
        assert err.value.position >= 0

    def test_unsupported_structure(self):
        # a 4-atom chain is valid EPFO but not an admitted shape
        with pytest.raises(UnknownShape):
            parse_query(
                "?X: exists Y, Z, W . r1(A,Y) AND r2(Y,Z) AND r1(Z,W) AND r2(W,X)",
                ENTS,
                RELS,
            )


class TestPlan:
    def test_2p_levels(self):
        q = parse_query("?X: exists Y . r1(A,Y) AND r2(Y,X)", ENTS, RELS)
        levels = plan(q).levels
        assert [(s.var, s.atom_ids) for s in levels] == [("V1", (0,)), (TARGET_VAR, (1,))]

    def test_3i_single_level_tnorm(self):
        q = parse_query("?X: r1(A,X) AND r2(B,X) AND r3(C,X)", ENTS, RELS)
        levels = plan(q).levels
        assert len(levels) == 1
        assert levels[0].atom_ids == (0, 1, 2)
        assert levels[0].combiner == "and"

    def test_2u1p_levels(self):
        q = parse_query("?X: exists Y . (r1(A,Y) OR r2(B,Y)) AND r3(Y,X)", ENTS, RELS)
        levels = plan(q).levels
        assert [(s.var, s.atom_ids, s.combiner) for s in levels] == [
            ("V1", (0, 1), "or"),
            (TARGET_VAR, (2,), "and"),
        ]

    def test_target_resolves_last(self):
        for text in (
            "?X: exists Y . r1(A,Y) AND r2(Y,X) AND r3(B,X)",
            "?X: exists Y, Z . r1(A,Y) AND r2(Y,Z) AND r3(Z,X)",
        ):
            q = parse_query(text, ENTS, RELS)
            assert plan(q).levels[-1].var == TARGET_VAR


def random_query_strategy():
    anchors = st.integers(0, 30)
    rels = st.integers(0, 9)

    def build(shape, draw_ids):
        e = [f"e:{i}" for i in draw_ids[0]]
        r = [f"r:{i}" for i in draw_ids[1]]
        texts = {
            "1p": f"?X: {r[0]}({e[0]},X)",
            "2p": f"?X: exists Y . {r[0]}({e[0]},Y) AND {r[1]}(Y,X)",
            "3p": f"?X: exists Y, Z . {r[0]}({e[0]},Y) AND {r[1]}(Y,Z) AND {r[2]}(Z,X)",
            "2i": f"?X: {r[0]}({e[0]},X) AND {r[1]}({e[1]},X)",
            "3i": f"?X: {r[0]}({e[0]},X) AND {r[1]}({e[1]},X) AND {r[2]}({e[2]},X)",
            "2u": f"?X: {r[0]}({e[0]},X) OR {r[1]}({e[1]},X)",
            "2u1p": f"?X: exists Y . ({r[0]}({e[0]},Y) OR {r[1]}({e[1]},Y)) AND {r[2]}(Y,X)",
            "2i1p": f"?X: exists Y . {r[0]}({e[0]},Y) AND {r[1]}({e[1]},Y) AND {r[2]}(Y,X)",
            "1p2i": f"?X: exists Y . {r[0]}({e[0]},Y) AND {r[1]}(Y,X) AND {r[2]}({e[1]},X)",
        }
        return texts[shape]

    return st.tuples(
        st.sampled_from(SHAPES),
        st.tuples(st.lists(anchors, min_size=3, max_size=3), st.lists(rels, min_size=3, max_size=3)),
    ).map(lambda t: build(*t))


class TestRoundTrip:
    @given(random_query_strategy())
    def test_parse_render_parse(self, text):
        q = parse_query(text)
        again = parse_query(render_query(q))
        assert again == q

    @given(random_query_strategy())
    def test_json_round_trip(self, text):
        q = parse_query(text)
        record = query_to_json(q)
        assert record["shape"] == q.shape
        # shape of the encoded atoms matches the dnf arity
        assert all(len(g) >= 1 for g in record["dnf"])


class TestQueryFile:
    def make_file(self, tmp_path, records):
        path = tmp_path / "queries.json"
        with open(path, "w") as fh:
            json.dump(records, fh)
        return path

    def test_load_valid(self, tmp_path):
        q = parse_query("?X: exists Y . r:0(e:1,Y) AND r:1(Y,X)", easy=[2], hard=[3])
        path = tmp_path / "q.json"
        save_query_file(path, [q])
        loaded = load_query_file(path)
        assert loaded == [q]

    def test_easy_hard_overlap_rejected(self, tmp_path):
        record = query_to_json(parse_query("?X: r:0(e:1,X)"))
        record["easy"] = [2]
        record["hard"] = [2, 3]
        path = self.make_file(tmp_path, [record])
        with pytest.raises(SchemaError) as err:
            load_query_file(path)
        assert err.value.pointer.startswith("/0")

    def test_schema_violation_has_pointer(self, tmp_path):
        path = self.make_file(tmp_path, [{"shape": "2p"}])
        with pytest.raises(SchemaError) as err:
            load_query_file(path)
        assert err.value.pointer.startswith("/0")

    def test_declared_shape_must_match(self, tmp_path):
        record = query_to_json(parse_query("?X: r:0(e:1,X) AND r:1(e:2,X)"))
        record["shape"] = "2u"
        path = self.make_file(tmp_path, [record])
        with pytest.raises(SchemaError):
            load_query_file(path)

    def test_entity_bounds_checked(self, tmp_path):
        record = query_to_json(parse_query("?X: r:0(e:50,X)"))
        path = self.make_file(tmp_path, [record])
        with pytest.raises(SchemaError):
            load_query_file(path, n_entities=10)
        assert len(load_query_file(path, n_entities=100)) == 1


class TestInstanceValidation:
    def test_dense_atom_ids_required(self, q2p):
        atoms = (q2p.atoms[0],)
        with pytest.raises(UnknownShape):
            QueryInstance("2p", atoms, q2p.dnf)

    def test_answer_sets_disjoint(self, q2p):
        with pytest.raises(ValueError):
            QueryInstance(q2p.shape, q2p.atoms, q2p.dnf, frozenset([1]), frozenset([1]))
