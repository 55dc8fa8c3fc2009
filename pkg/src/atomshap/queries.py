"""Typed EPFO queries: atom DAGs, the textual DSL, the JSON file format and
topological execution plans.

Only the admitted shape templates are accepted (the eight multi-atom shapes
plus the degenerate single projection `1p`); anything else is rejected at
validation time. Negation and non-existential quantifiers are rejected by the
grammar itself.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import (
    CyclicDependency,
    DslSyntaxError,
    SchemaError,
    UnboundVariable,
    UnknownShape,
)
from .kg import Dictionary

TARGET_VAR = "V_A"

# shape -> (atom skeletons, dnf, combiner per variable)
# skeleton terms: "e<i>" anchor slot, "V<i>" intermediate, TARGET_VAR answer.
_TEMPLATES: dict[str, tuple[tuple[tuple[str, str], ...], tuple[tuple[int, ...], ...]]] = {
    "1p": ((("e0", TARGET_VAR),), ((0,),)),
    "2p": ((("e0", "V1"), ("V1", TARGET_VAR)), ((0, 1),)),
    "3p": ((("e0", "V1"), ("V1", "V2"), ("V2", TARGET_VAR)), ((0, 1, 2),)),
    "2i": ((("e0", TARGET_VAR), ("e1", TARGET_VAR)), ((0, 1),)),
    "3i": ((("e0", TARGET_VAR), ("e1", TARGET_VAR), ("e2", TARGET_VAR)), ((0, 1, 2),)),
    "2u": ((("e0", TARGET_VAR), ("e1", TARGET_VAR)), ((0,), (1,))),
    "2u1p": ((("e0", "V1"), ("e1", "V1"), ("V1", TARGET_VAR)), ((0, 2), (1, 2))),
    "2i1p": ((("e0", "V1"), ("e1", "V1"), ("V1", TARGET_VAR)), ((0, 1, 2),)),
    "1p2i": ((("e0", "V1"), ("V1", TARGET_VAR), ("e1", TARGET_VAR)), ((0, 1, 2),)),
}

SHAPES = tuple(_TEMPLATES)
TABLE_SHAPE_ORDER = ("2p", "2u", "2i", "3i", "3p", "2u1p", "2i1p", "1p2i")


@dataclass(frozen=True)
class Term:
    """Either a constant anchor entity or an existential variable."""

    entity: Optional[int] = None
    var: Optional[str] = None

    def __post_init__(self):
        if (self.entity is None) == (self.var is None):
            raise ValueError("a term is exactly one of anchor or variable")
        if self.entity is not None and self.entity < 0:
            raise ValueError("anchor entity ids are non-negative")

    @property
    def is_anchor(self) -> bool:
        return self.entity is not None

    @classmethod
    def anchor(cls, entity: int) -> "Term":
        return cls(entity=entity)

    @classmethod
    def variable(cls, name: str) -> "Term":
        return cls(var=name)

    def render(self, entities: Optional[Dictionary] = None) -> str:
        if self.is_anchor:
            if entities is not None:
                return entities.label(self.entity)
            return f"e:{self.entity}"
        return self.var


@dataclass(frozen=True)
class Atom:
    """One relation application p(subject, object) inside a query."""

    subject: Term
    predicate: int
    object: Term
    atom_id: int

    def __post_init__(self):
        if not self.subject.is_anchor and not self.object.is_anchor:
            if self.subject.var == self.object.var:
                raise UnboundVariable(
                    f"atom {self.atom_id}: subject and object are the same variable"
                )

    def render(
        self,
        entities: Optional[Dictionary] = None,
        relations: Optional[Dictionary] = None,
    ) -> str:
        pred = relations.label(self.predicate) if relations is not None else f"r:{self.predicate}"
        return f"{pred}({self.subject.render(entities)},{self.object.render(entities)})"


@dataclass(frozen=True)
class QueryInstance:
    """A validated query of one admitted shape, with its answer sets."""

    shape: str
    atoms: tuple[Atom, ...]
    dnf: tuple[tuple[int, ...], ...]
    easy_answers: frozenset[int] = frozenset()
    hard_answers: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.shape not in _TEMPLATES:
            raise UnknownShape(f"shape {self.shape!r} is not admitted")
        skeleton, dnf = _TEMPLATES[self.shape]
        if len(self.atoms) != len(skeleton):
            raise UnknownShape(
                f"shape {self.shape} expects {len(skeleton)} atoms, got {len(self.atoms)}"
            )
        if self.dnf != dnf:
            raise UnknownShape(f"dnf {self.dnf} does not match the {self.shape} template")
        for i, (atom, (s_slot, o_slot)) in enumerate(zip(self.atoms, skeleton)):
            if atom.atom_id != i:
                raise UnknownShape("atom_ids must be dense in textual order")
            if _is_anchor_slot(s_slot) != atom.subject.is_anchor:
                raise UnknownShape(f"atom {i} subject does not match the {self.shape} template")
            if atom.object.is_anchor or atom.object.var != o_slot:
                raise UnknownShape(f"atom {i} object does not match the {self.shape} template")
            if not atom.subject.is_anchor and atom.subject.var != s_slot:
                raise UnknownShape(f"atom {i} subject does not match the {self.shape} template")
        if self.easy_answers & self.hard_answers:
            raise ValueError("easy and hard answer sets must be disjoint")

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @property
    def variables(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for atom in self.atoms:
            for term in (atom.subject, atom.object):
                if not term.is_anchor:
                    seen.setdefault(term.var, None)
        return tuple(seen)

    def first_level_atoms(self) -> tuple[int, ...]:
        """Atoms that contain an anchor entity."""
        return tuple(a.atom_id for a in self.atoms if a.subject.is_anchor)

    def last_level_atoms(self) -> tuple[int, ...]:
        """Atoms that contain the target variable."""
        return tuple(
            a.atom_id
            for a in self.atoms
            if (not a.object.is_anchor and a.object.var == TARGET_VAR)
            or (not a.subject.is_anchor and a.subject.var == TARGET_VAR)
        )

    def render(
        self,
        entities: Optional[Dictionary] = None,
        relations: Optional[Dictionary] = None,
    ) -> str:
        return render_query(self, entities, relations)

    def canonical_key(self) -> tuple:
        """Hashable identity ignoring answer sets; stable across runs."""
        return (
            self.shape,
            tuple(
                (a.subject.entity, a.subject.var, a.predicate, a.object.entity, a.object.var)
                for a in self.atoms
            ),
        )


def _is_anchor_slot(slot: str) -> bool:
    return slot.startswith("e")


@dataclass(frozen=True)
class PlanStep:
    """Resolve one variable from the atoms that constrain it."""

    var: str
    atom_ids: tuple[int, ...]
    combiner: str  # "and" | "or"
    parent_var: Optional[str]  # variable feeding the chain atoms, if any


@dataclass(frozen=True)
class ExecutionPlan:
    levels: tuple[PlanStep, ...]

    def __post_init__(self):
        if self.levels[-1].var != TARGET_VAR:
            raise CyclicDependency("target variable must resolve last")


def plan(q: QueryInstance) -> ExecutionPlan:
    """Topological variable-resolution plan; unique up to atom order per level."""
    by_object: dict[str, list[Atom]] = {}
    for atom in q.atoms:
        by_object.setdefault(atom.object.var, []).append(atom)

    resolved: set[str] = set()
    steps: list[PlanStep] = []
    pending = dict(by_object)
    while pending:
        progressed = False
        for var in list(pending):
            atoms = pending[var]
            deps = {a.subject.var for a in atoms if not a.subject.is_anchor}
            if deps <= resolved:
                combiner = _combiner_for(q, [a.atom_id for a in atoms])
                parents = sorted(deps)
                steps.append(
                    PlanStep(
                        var=var,
                        atom_ids=tuple(a.atom_id for a in atoms),
                        combiner=combiner,
                        parent_var=parents[0] if parents else None,
                    )
                )
                resolved.add(var)
                del pending[var]
                progressed = True
        if not progressed:
            raise CyclicDependency(f"unresolvable variables: {sorted(pending)}")
    steps.sort(key=lambda s: (s.var == TARGET_VAR, s.var))
    return ExecutionPlan(tuple(steps))


def _combiner_for(q: QueryInstance, atom_ids: Sequence[int]) -> str:
    if len(atom_ids) == 1:
        return "and"
    groups = [set(g) for g in q.dnf]
    same = any(set(atom_ids) <= g for g in groups)
    return "and" if same else "or"


# --- DSL -------------------------------------------------------------------
#
# query  := '?' VAR ':' [ 'exists' VAR (',' VAR)* '.' ] expr
# expr   := conj ('OR' conj)*
# conj   := unit ('AND' unit)*
# unit   := atom | '(' expr ')'
# atom   := NAME '(' term ',' term ')'
# term   := VAR | NAME | 'e:' INT
#
# A NAME in term position is a variable iff it was declared (the '?' variable
# or an 'exists' variable); otherwise it is an entity label. Colons are legal
# inside names (NELL-style labels); names cannot contain whitespace or
# `( ) , . ?`. Labels outside that alphabet must use the e:/r: id forms.

_TOKEN_RE = re.compile(r"\s*(?:(?P<punct>[?().,])|(?P<name>[^\s?().,]+))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise DslSyntaxError(pos, f"unexpected character {text[pos]!r}")
        if m.group("punct"):
            tokens.append(("punct", m.group("punct"), m.start("punct")))
        else:
            tokens.append(("name", m.group("name"), m.start("name")))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(
        self,
        text: str,
        entities: Optional[Dictionary],
        relations: Optional[Dictionary],
    ):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.entities = entities
        self.relations = relations
        self.declared: dict[str, None] = {}
        self.atoms: list[tuple[Term, int, Term]] = []

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("eof", "", len(self.text))

    def _next(self):
        tok = self._peek()
        self.i += 1
        return tok

    def _expect(self, value: str):
        kind, tok, pos = self._next()
        if tok != value:
            raise DslSyntaxError(pos, f"expected {value!r}, found {tok!r}")

    def parse(self):
        self._expect("?")
        kind, target, pos = self._next()
        if kind != "name":
            raise DslSyntaxError(pos, "expected the answer variable after '?'")
        if target.endswith(":"):
            target = target[:-1]
        else:
            kind, tok, pos2 = self._next()
            if tok != ":":
                raise DslSyntaxError(pos2, f"expected ':' after the answer variable, found {tok!r}")
        if not target:
            raise DslSyntaxError(pos, "empty answer variable name")
        self.declared[target] = None
        kind, tok, pos = self._peek()
        if kind == "name" and tok.lower() == "exists":
            self._next()
            while True:
                kind, var, pos = self._next()
                if kind != "name":
                    raise DslSyntaxError(pos, "expected a variable name after 'exists'")
                if var in self.declared:
                    raise DslSyntaxError(pos, f"variable {var!r} declared twice")
                self.declared[var] = None
                kind, tok, pos = self._peek()
                if tok == ",":
                    self._next()
                    continue
                break
            self._expect(".")
        tree = self._expr()
        kind, tok, pos = self._peek()
        if kind != "eof":
            raise DslSyntaxError(pos, f"unexpected trailing input {tok!r}")
        return target, tree

    def _expr(self):
        node = self._conj()
        while True:
            kind, tok, pos = self._peek()
            if kind == "name" and tok.upper() == "OR":
                self._next()
                rhs = self._conj()
                node = ("or", node, rhs)
            else:
                return node

    def _conj(self):
        node = self._unit()
        while True:
            kind, tok, pos = self._peek()
            if kind == "name" and tok.upper() == "AND":
                self._next()
                rhs = self._unit()
                node = ("and", node, rhs)
            else:
                return node

    def _unit(self):
        kind, tok, pos = self._peek()
        if tok == "(":
            self._next()
            node = self._expr()
            self._expect(")")
            return node
        return self._atom()

    def _atom(self):
        kind, name, pos = self._next()
        if kind != "name":
            raise DslSyntaxError(pos, f"expected a relation name, found {name!r}")
        if name.upper() in ("AND", "OR", "NOT") or name.lower() == "exists":
            raise DslSyntaxError(pos, f"{name!r} is not allowed here (EPFO atoms only)")
        predicate = self._relation_id(name, pos)
        self._expect("(")
        subject = self._term()
        self._expect(",")
        obj = self._term()
        self._expect(")")
        atom_id = len(self.atoms)
        self.atoms.append((subject, predicate, obj))
        return ("atom", atom_id)

    def _relation_id(self, name: str, pos: int) -> int:
        if name.startswith("r:"):
            return int(name[2:])
        if self.relations is not None:
            return self.relations.index(name, "relation")
        if name.isdigit():
            return int(name)
        raise DslSyntaxError(pos, f"cannot resolve relation {name!r} without a dictionary")

    def _term(self) -> Term:
        kind, tok, pos = self._next()
        if kind != "name":
            raise DslSyntaxError(pos, f"expected a term, found {tok!r}")
        if tok in self.declared:
            return Term.variable(tok)
        if tok.startswith("e:"):
            return Term.anchor(int(tok[2:]))
        if self.entities is not None:
            return Term.anchor(self.entities.index(tok, "entity"))
        if tok.isdigit():
            return Term.anchor(int(tok))
        raise DslSyntaxError(pos, f"cannot resolve entity {tok!r} without a dictionary")


def _tree_to_dnf(tree) -> tuple[tuple[int, ...], ...]:
    if tree[0] == "atom":
        return ((tree[1],),)
    _, lhs, rhs = tree
    left, right = _tree_to_dnf(lhs), _tree_to_dnf(rhs)
    if tree[0] == "or":
        return left + right
    return tuple(l + r for l in left for r in right)


def _canonicalize(
    raw_atoms: Sequence[tuple[Term, int, Term]],
    target: str,
    dnf: tuple[tuple[int, ...], ...],
    easy: Iterable[int] = (),
    hard: Iterable[int] = (),
) -> QueryInstance:
    """Rename variables to canonical names, infer the shape, validate."""
    used_vars: dict[str, None] = {}
    for s, _, o in raw_atoms:
        if not s.is_anchor and not o.is_anchor and s.var == o.var:
            raise UnboundVariable(f"self-loop atom over variable {s.var!r} is not allowed")
        for t in (s, o):
            if not t.is_anchor:
                used_vars.setdefault(t.var, None)
    if target not in used_vars:
        raise UnboundVariable(f"answer variable {target!r} does not occur in any atom")

    rename = {target: TARGET_VAR}
    n = 0
    for var in used_vars:
        if var != target:
            n += 1
            rename[var] = f"V{n}"

    def conv(t: Term) -> Term:
        return t if t.is_anchor else Term.variable(rename[t.var])

    shape = _infer_shape(
        [(conv(s), p, conv(o)) for s, p, o in raw_atoms], dnf
    )
    skeleton, template_dnf = _TEMPLATES[shape]
    slot_rename = _match_template(
        [(conv(s), p, conv(o)) for s, p, o in raw_atoms], skeleton
    )
    atoms = tuple(
        Atom(
            subject=_apply_slots(conv(s), slot_rename),
            predicate=p,
            object=_apply_slots(conv(o), slot_rename),
            atom_id=i,
        )
        for i, (s, p, o) in enumerate(raw_atoms)
    )
    return QueryInstance(
        shape=shape,
        atoms=atoms,
        dnf=template_dnf,
        easy_answers=frozenset(easy),
        hard_answers=frozenset(hard),
    )


def _apply_slots(t: Term, rename: dict[str, str]) -> Term:
    return t if t.is_anchor else Term.variable(rename[t.var])


def _match_template(
    atoms: Sequence[tuple[Term, int, Term]],
    skeleton: tuple[tuple[str, str], ...],
) -> dict[str, str]:
    """Map the query's variable names onto the template slot names."""
    rename: dict[str, str] = {TARGET_VAR: TARGET_VAR}
    for (s, _, o), (s_slot, o_slot) in zip(atoms, skeleton):
        for term, slot in ((s, s_slot), (o, o_slot)):
            if term.is_anchor:
                if not _is_anchor_slot(slot):
                    raise UnknownShape("anchor where the template expects a variable")
                continue
            if _is_anchor_slot(slot):
                raise UnknownShape("variable where the template expects an anchor")
            prev = rename.setdefault(term.var, slot)
            if prev != slot:
                raise UnknownShape("variable usage does not match the template")
    return rename


def _infer_shape(
    atoms: Sequence[tuple[Term, int, Term]],
    dnf: tuple[tuple[int, ...], ...],
) -> str:
    def norm_groups(groups):
        return tuple(sorted(tuple(sorted(g)) for g in groups))

    for shape, (skeleton, template_dnf) in _TEMPLATES.items():
        if len(atoms) != len(skeleton):
            continue
        if norm_groups(dnf) != norm_groups(template_dnf):
            continue
        try:
            _match_template(atoms, skeleton)
        except UnknownShape:
            continue
        return shape
    raise UnknownShape(
        "query structure does not match any admitted shape template"
    )


def parse_query(
    text: str,
    entities: Optional[Dictionary] = None,
    relations: Optional[Dictionary] = None,
    easy: Iterable[int] = (),
    hard: Iterable[int] = (),
) -> QueryInstance:
    """Parse DSL text into a validated QueryInstance (variables canonicalized)."""
    parser = _Parser(text, entities, relations)
    target, tree = parser.parse()
    dnf = _tree_to_dnf(tree)
    seen: set[int] = set()
    for group in dnf:
        if len(set(group)) != len(group):
            raise UnknownShape("an atom occurs twice in one conjunction")
        seen.update(group)
    if seen != set(range(len(parser.atoms))):
        raise UnknownShape("dnf does not cover the query atoms")
    return _canonicalize(parser.atoms, target, dnf, easy, hard)


def render_query(
    q: QueryInstance,
    entities: Optional[Dictionary] = None,
    relations: Optional[Dictionary] = None,
) -> str:
    """Canonical DSL text; `parse_query(render_query(q)) == q` (answer sets aside)."""
    existentials = [v for v in q.variables if v != TARGET_VAR]
    head = f"?{TARGET_VAR}:"
    if existentials:
        head += " exists " + ", ".join(existentials) + " ."

    def atom_str(aid: int) -> str:
        return q.atoms[aid].render(entities, relations)

    if q.shape == "2u":
        body = f"{atom_str(0)} OR {atom_str(1)}"
    elif q.shape == "2u1p":
        body = f"({atom_str(0)} OR {atom_str(1)}) AND {atom_str(2)}"
    else:
        body = " AND ".join(atom_str(a.atom_id) for a in q.atoms)
    return f"{head} {body}"


# --- JSON file format --------------------------------------------------------

_TERM_PATTERN = r"^(e:\d+|v:\S+)$"
QUERY_FILE_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["shape", "atoms", "dnf", "easy", "hard"],
        "additionalProperties": True,
        "properties": {
            "shape": {"type": "string", "enum": list(SHAPES)},
            "atoms": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["s", "p", "o"],
                    "properties": {
                        "s": {"type": "string", "pattern": _TERM_PATTERN},
                        "p": {"type": "integer", "minimum": 0},
                        "o": {"type": "string", "pattern": _TERM_PATTERN},
                    },
                },
            },
            "dnf": {
                "type": "array",
                "minItems": 1,
                "items": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
            "easy": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            "hard": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        },
    },
}


def _term_from_json(encoded: str) -> Term:
    if encoded.startswith("e:"):
        return Term.anchor(int(encoded[2:]))
    return Term.variable(encoded[2:])


def _term_to_json(t: Term) -> str:
    return f"e:{t.entity}" if t.is_anchor else f"v:{t.var}"


def query_to_json(q: QueryInstance) -> dict:
    return {
        "shape": q.shape,
        "atoms": [
            {"s": _term_to_json(a.subject), "p": a.predicate, "o": _term_to_json(a.object)}
            for a in q.atoms
        ],
        "dnf": [list(g) for g in q.dnf],
        "easy": sorted(q.easy_answers),
        "hard": sorted(q.hard_answers),
    }


def load_query_file(
    path: str | os.PathLike,
    n_entities: Optional[int] = None,
    n_relations: Optional[int] = None,
) -> list[QueryInstance]:
    """Load and validate a JSON query file; errors carry a JSON pointer."""
    import jsonschema

    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    validator = jsonschema.Draft202012Validator(QUERY_FILE_SCHEMA)
    best = jsonschema.exceptions.best_match(validator.iter_errors(data))
    if best is not None:
        pointer = "/" + "/".join(str(p) for p in best.absolute_path)
        raise SchemaError(pointer, best.message)

    queries = []
    for idx, record in enumerate(data):
        pointer = f"/{idx}"
        try:
            raw_atoms = [
                (_term_from_json(a["s"]), a["p"], _term_from_json(a["o"]))
                for a in record["atoms"]
            ]
            target = _target_from_structure(raw_atoms, pointer)
            q = _canonicalize(
                raw_atoms,
                target,
                tuple(tuple(g) for g in record["dnf"]),
                record["easy"],
                record["hard"],
            )
        except (UnknownShape, UnboundVariable, ValueError) as exc:
            raise SchemaError(pointer, str(exc)) from exc
        if q.shape != record["shape"]:
            raise SchemaError(
                pointer + "/shape",
                f"declared shape {record['shape']!r} but structure is {q.shape!r}",
            )
        _check_bounds(q, n_entities, n_relations, pointer)
        queries.append(q)
    return queries


def _target_from_structure(
    raw_atoms: Sequence[tuple[Term, int, Term]], pointer: str
) -> str:
    """The answer variable is the one that never feeds another atom's subject."""
    objs = {o.var for _, _, o in raw_atoms if not o.is_anchor}
    subjects = {s.var for s, _, _ in raw_atoms if not s.is_anchor}
    sinks = objs - subjects
    if len(sinks) != 1:
        raise SchemaError(pointer, f"cannot identify a unique answer variable (sinks: {sorted(sinks)})")
    return next(iter(sinks))


def _check_bounds(
    q: QueryInstance, n_entities: Optional[int], n_relations: Optional[int], pointer: str
):
    if n_entities is not None:
        ids = [a.subject.entity for a in q.atoms if a.subject.is_anchor]
        ids += list(q.easy_answers) + list(q.hard_answers)
        bad = [i for i in ids if i >= n_entities]
        if bad:
            raise SchemaError(pointer, f"entity ids out of range: {sorted(bad)[:5]}")
    if n_relations is not None:
        bad = [a.predicate for a in q.atoms if a.predicate >= n_relations]
        if bad:
            raise SchemaError(pointer, f"relation ids out of range: {sorted(bad)[:5]}")


def save_query_file(path: str | os.PathLike, queries: Iterable[QueryInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([query_to_json(q) for q in queries], fh)
