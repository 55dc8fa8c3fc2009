"""Neurosymbolic complex query answering over incomplete knowledge graphs with
exact Shapley-value attributions of each query atom's effect on an answer's
rank, plus the necessary/sufficient evaluation harness for such explanations."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .errors import AtomshapError
from .evaluation import (
    SelectionMethod,
    hits_at_k,
    mrr,
    necessary_eval,
    run_scenario,
    select_atom,
    sufficient_eval,
)
from .executor import (
    AnswerSets,
    CoalitionAssignment,
    CoalitionRunner,
    RankedAnswers,
    argmax_path,
    classify_answers,
    execute,
    filtered_candidates,
    rank_of,
    symbolic_answers,
)
from .kg import DatasetBundle, Dictionary, TripleGraph, build_graph, load_dataset, load_triples
from .queries import (
    SHAPES,
    Atom,
    ExecutionPlan,
    QueryInstance,
    Term,
    load_query_file,
    parse_query,
    plan,
    render_query,
)
from .scoring import (
    EmbeddingTable,
    NeuralScorer,
    OracleScorer,
    ScoreVector,
    SymbolicScorer,
    load_embeddings,
    neural_scores,
    oracle_scores,
    save_embeddings,
    symbolic_scores,
)
from .shapley import (
    CoalitionValueTable,
    ShapleyReport,
    coalition_values,
    explain,
    permutation_oracle,
    report_to_json,
    shapley_values,
)
from .synth import QuerySampler, SyntheticData, synthetic_dataset

__version__ = "0.1.0"
