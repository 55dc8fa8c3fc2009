"""Exact Shapley attribution over query atoms.

The cooperative game: players are the query's atoms; a coalition S executes
its atoms neurally and the rest symbolically; the payoff is the rank
improvement of the target entity over the all-symbolic run,
val(S) = r(Q_empty) - r(Q_S). All marginals are integers, so the weighted sums
are computed exactly over rationals and the efficiency identity
sum(phi) = r(Q_empty) - r(Q_full) holds with zero residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations
from math import factorial

from .errors import IncompleteTable
from .executor import (
    AnswerSets,
    CoalitionAssignment,
    CoalitionRunner,
    filtered_candidates,
)
from .kg import TripleGraph
from .queries import QueryInstance


@dataclass(frozen=True)
class CoalitionValueTable:
    """val(Q_S) for every coalition S, encoded as a bitmask over atom ids."""

    n_atoms: int
    target: int
    values: dict[int, int]  # mask -> rank(Q_empty) - rank(Q_mask)
    ranks: dict[int, int]  # mask -> rank(Q_mask)

    def __post_init__(self):
        if set(self.values) != set(range(1 << self.n_atoms)):
            raise IncompleteTable(f"expected {1 << self.n_atoms} coalition entries")
        if self.values[0] != 0:
            raise ValueError("the empty coalition must have value 0")

    @property
    def full_mask(self) -> int:
        return (1 << self.n_atoms) - 1


@dataclass(frozen=True)
class ShapleyReport:
    """Per-atom attributions plus the end ranks they must account for."""

    query: QueryInstance
    target: int
    phi: dict[int, Fraction]
    rank_symbolic: int
    rank_neural: int
    table: CoalitionValueTable
    atom_strings: tuple[str, ...]

    @property
    def efficiency_residual(self) -> Fraction:
        return sum(self.phi.values(), Fraction(0)) - (self.rank_symbolic - self.rank_neural)


def coalition_values(
    q: QueryInstance,
    target: int,
    scorer,
    observed: TripleGraph,
    k: int = 10,
    runner: CoalitionRunner | None = None,
    answer_sets: AnswerSets | None = None,
) -> CoalitionValueTable:
    """Execute all 2^|A| partial queries and tabulate the rank-difference payoff."""
    if runner is None:
        runner = CoalitionRunner(q, scorer, observed, k)
    if answer_sets is None:
        answer_sets = AnswerSets.from_query(q)
    n = q.num_atoms
    base = runner.ranked(CoalitionAssignment.empty())
    candidates = filtered_candidates(base, answer_sets, target)
    ranks = {}
    for mask in range(1 << n):
        ranks[mask] = runner.rank(CoalitionAssignment.from_mask(mask, n), candidates, target)
    values = {mask: ranks[0] - r for mask, r in ranks.items()}
    return CoalitionValueTable(n_atoms=n, target=target, values=values, ranks=ranks)


def shapley_values(table: CoalitionValueTable) -> dict[int, Fraction]:
    """Closed-form Shapley values with |S|!(|A|-|S|-1)!/|A|! weights, exact."""
    n = table.n_atoms
    fact = [factorial(i) for i in range(n + 1)]
    phi = {a: Fraction(0) for a in range(n)}
    for a in range(n):
        bit = 1 << a
        for mask in range(1 << n):
            if mask & bit:
                continue
            s = bin(mask).count("1")
            weight = Fraction(fact[s] * fact[n - s - 1], fact[n])
            phi[a] += weight * (table.values[mask | bit] - table.values[mask])
    return phi


def permutation_oracle(table: CoalitionValueTable) -> dict[int, Fraction]:
    """Average marginal contribution over all |A|! join orders (test oracle)."""
    n = table.n_atoms
    if n > 6:
        raise ValueError("permutation enumeration is limited to 6 atoms")
    totals = {a: Fraction(0) for a in range(n)}
    count = 0
    for order in permutations(range(n)):
        mask = 0
        for a in order:
            before = table.values[mask]
            mask |= 1 << a
            totals[a] += table.values[mask] - before
        count += 1
    return {a: t / count for a, t in totals.items()}


def explain(
    q: QueryInstance,
    target: int,
    scorer,
    observed: TripleGraph,
    k: int = 10,
    runner: CoalitionRunner | None = None,
    answer_sets: AnswerSets | None = None,
) -> ShapleyReport:
    """Full attribution for one (query, target) pair.

    Any entity id is a legal target: explaining a false answer (neither easy
    nor hard) simply filters out all of the known answers.
    """
    table = coalition_values(q, target, scorer, observed, k, runner, answer_sets)
    phi = shapley_values(table)
    report = ShapleyReport(
        query=q,
        target=target,
        phi=phi,
        rank_symbolic=table.ranks[0],
        rank_neural=table.ranks[table.full_mask],
        table=table,
        atom_strings=tuple(a.render() for a in q.atoms),
    )
    assert report.efficiency_residual == 0
    return report


def _format_phi(value: Fraction) -> str:
    return f"{float(value):.1f}"


def report_to_json(report: ShapleyReport) -> dict:
    n = report.table.n_atoms
    return {
        "query": {
            "shape": report.query.shape,
            "text": report.query.render(),
            "atoms": list(report.atom_strings),
        },
        "target": report.target,
        "rank_symbolic": report.rank_symbolic,
        "rank_neural": report.rank_neural,
        "phi": {str(a): _format_phi(v) for a, v in sorted(report.phi.items())},
        "phi_exact": {str(a): str(v) for a, v in sorted(report.phi.items())},
        "coalitions": {
            format(mask, f"#0{n + 2}b"): int(v) for mask, v in sorted(report.table.values.items())
        },
        "efficiency": {
            "sum_phi": str(sum(report.phi.values(), Fraction(0))),
            "rank_difference": report.rank_symbolic - report.rank_neural,
            "residual": str(report.efficiency_residual),
        },
    }
