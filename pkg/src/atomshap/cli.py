"""Command-line surface: ingest, explain, evaluate, audit-hardness, bench."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import _kernels
from .bench import bench_backends, bench_explain
from .errors import AtomshapError
from .evaluation import (
    METHOD_KINDS,
    SelectionMethod,
    aggregate,
    run_scenario,
    write_rows,
)
from .executor import classify_answers
from .kg import DatasetBundle, load_dataset
from .queries import TABLE_SHAPE_ORDER, QueryInstance, load_query_file, parse_query
from .scoring import (
    DEFAULT_EPSILON,
    NeuralScorer,
    OracleScorer,
    SymbolicScorer,
    load_embeddings,
)
from .shapley import explain, report_to_json
from .synth import QuerySampler, SyntheticData, synthetic_dataset

_DEFAULTS = {
    "k": 10,
    "epsilon": DEFAULT_EPSILON,
    "seed": 0,
    "scorer": "oracle",
    "observed": "valid",
    "workers": os.cpu_count() or 1,
    "synth_entities": 120,
    "synth_relations": 6,
    "synth_edges_per_relation": 400,
    "missing_rate": 0.3,
    "synth_queries": 50,
    "normalization": "minmax",
}


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        import tomllib as toml
    except ModuleNotFoundError:
        import tomli as toml
    with open(path, "rb") as fh:
        return toml.load(fh)


def _resolve(args, key):
    """Flags win over the config file; the config wins over built-in defaults."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in args._config:
        return args._config[key]
    return _DEFAULTS.get(key)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="optional TOML file with defaults; flags win")
    p.add_argument("--k", type=int, default=None, help="beam width (default 10)")
    p.add_argument("--epsilon", type=float, default=None, help="symbolic non-edge score")
    p.add_argument("--seed", type=int, default=None, help="root seed for all randomness")
    p.add_argument("--scorer", choices=("complex", "oracle", "symbolic"), default=None)
    p.add_argument("--observed", choices=("train", "valid"), default=None,
                   help="observed graph split for symbolic lookups (real data)")
    p.add_argument("--out", default=None, help="output directory for artifacts")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--data", default=None, help="dataset directory (dicts + split TSVs)")
    p.add_argument("--embeddings", default=None, help="embedding container path")
    p.add_argument("--synthetic", action="store_true", help="use a generated dataset")
    p.add_argument("--synth-entities", type=int, default=None, dest="synth_entities")
    p.add_argument("--synth-relations", type=int, default=None, dest="synth_relations")
    p.add_argument("--synth-edges-per-relation", type=int, default=None,
                   dest="synth_edges_per_relation")
    p.add_argument("--missing-rate", type=float, default=None, dest="missing_rate")
    p.add_argument("--synth-queries", type=int, default=None, dest="synth_queries",
                   help="queries sampled per shape in synthetic mode")


class _Context:
    """Resolved run configuration: graphs, scorer and query source."""

    def __init__(self, args):
        self.k = int(_resolve(args, "k"))
        if self.k < 1:
            raise ValueError("--k must be >= 1")
        self.epsilon = float(_resolve(args, "epsilon"))
        self.seed = int(_resolve(args, "seed"))
        self.workers = int(_resolve(args, "workers"))
        self.out = _resolve(args, "out")
        self.scorer_kind = _resolve(args, "scorer")
        self.observed_split = _resolve(args, "observed")
        self.bundle: DatasetBundle | None = None
        self.synth: SyntheticData | None = None

        if getattr(args, "data", None) or args._config.get("data"):
            self.bundle = load_dataset(_resolve(args, "data"))
            self.observed = (
                self.bundle.valid if self.observed_split == "valid" else self.bundle.train
            )
            self.full_graph = self.bundle.test
        elif getattr(args, "synthetic", False) or args._config.get("synthetic"):
            self.synth = synthetic_dataset(
                int(_resolve(args, "synth_entities")),
                int(_resolve(args, "synth_relations")),
                int(_resolve(args, "synth_edges_per_relation")),
                float(_resolve(args, "missing_rate")),
                self.seed,
            )
            self.observed = self.synth.observed
            self.full_graph = self.synth.hidden
        else:
            raise ValueError("either --data DIR or --synthetic is required")

        if self.scorer_kind == "complex":
            path = _resolve(args, "embeddings")
            if not path:
                raise ValueError("--scorer complex requires --embeddings")
            expected_e = self.bundle.entity_count if self.bundle else None
            expected_r = self.bundle.relation_count if self.bundle else None
            table = load_embeddings(path, expected_e, expected_r)
            self.scorer = NeuralScorer(table, _resolve(args, "normalization"))
        elif self.scorer_kind == "oracle":
            self.scorer = OracleScorer(self.full_graph, self.observed, self.seed)
        else:
            self.scorer = SymbolicScorer(self.observed, self.epsilon)

    def config_dict(self) -> dict:
        return {
            "k": self.k,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "scorer": self.scorer_kind,
            "kernel_backend": _kernels.BACKEND,
            "workers": self.workers,
            "observed": "synthetic" if self.synth else self.observed_split,
        }

    def queries_for(self, args, shapes: tuple[str, ...]):
        qfile = getattr(args, "queries", None)
        if qfile:
            n_ent = self.observed.n_entities
            n_rel = self.observed.n_relations
            queries = []
            for path in qfile:
                queries.extend(load_query_file(path, n_ent, n_rel))
            return [q for q in queries if q.shape in shapes]
        if self.synth is None:
            raise ValueError("--queries FILE is required when not in synthetic mode")
        sampler = QuerySampler(self.synth, self.seed)
        per_shape = int(_resolve(args, "synth_queries"))
        out = []
        for shape in shapes:
            out.extend(sampler.sample_many(shape, per_shape))
        return out

    def resolve_entity(self, text: str) -> int:
        if text.startswith("e:"):
            return int(text[2:])
        if self.bundle is not None and text in self.bundle.entities:
            return self.bundle.entities.index(text)
        if text.isdigit():
            return int(text)
        raise ValueError(f"cannot resolve entity {text!r}")


def cmd_ingest(args) -> dict:
    ctx_needed = bool(getattr(args, "data", None) or args._config.get("data"))
    summary: dict = {}
    if ctx_needed:
        bundle = load_dataset(_resolve(args, "data"), cumulative=not args.incremental)
        summary["nodes"] = bundle.entity_count
        summary["relations"] = bundle.relation_count
        summary["splits"] = {
            name: {
                "triples": g.num_triples,
                "duplicates_dropped": g.duplicates_dropped,
            }
            for name, g in (("train", bundle.train), ("valid", bundle.valid), ("test", bundle.test))
        }
    elif not args.queries:
        raise ValueError("ingest needs --data and/or --queries")
    if args.queries:
        counts: dict[str, int] = {}
        total = 0
        for path in args.queries:
            for q in load_query_file(path):
                counts[q.shape] = counts.get(q.shape, 0) + 1
                total += 1
        summary["queries"] = {"total": total, "by_shape": counts, "errors": 0}
    return summary


def cmd_explain(args) -> dict:
    ctx = _Context(args)
    if args.query:
        entities = ctx.bundle.entities if ctx.bundle else None
        relations = ctx.bundle.relations if ctx.bundle else None
        q = parse_query(args.query, entities, relations)
        if not q.easy_answers and not q.hard_answers:
            sets, _ = classify_answers(q, ctx.observed, ctx.full_graph)
            q = QueryInstance(q.shape, q.atoms, q.dnf, sets.easy, sets.hard)
    else:
        queries = ctx.queries_for(args, TABLE_SHAPE_ORDER + ("1p",))
        if not 0 <= args.index < len(queries):
            raise ValueError(f"--index {args.index} out of range ({len(queries)} queries)")
        q = queries[args.index]
    target = ctx.resolve_entity(args.target)
    report = explain(q, target, ctx.scorer, ctx.observed, ctx.k)
    payload = report_to_json(report)
    payload["config"] = ctx.config_dict()
    return payload


def cmd_evaluate(args) -> dict:
    ctx = _Context(args)
    shapes = tuple(args.shapes.split(",")) if args.shapes else TABLE_SHAPE_ORDER
    for shape in shapes:
        if shape not in TABLE_SHAPE_ORDER + ("1p",):
            raise ValueError(f"unknown shape {shape!r}")
    if args.methods in (None, "all"):
        kinds = METHOD_KINDS
    else:
        kinds = tuple(args.methods.split(","))
    methods = [
        SelectionMethod(kind, ctx.seed if kind in ("first_level", "last_level", "random") else None)
        for kind in kinds
    ]
    scenarios = ("necessary", "sufficient") if args.scenario == "both" else (args.scenario,)
    queries = ctx.queries_for(args, shapes)
    dataset = "synthetic" if ctx.synth else os.path.basename(str(_resolve(args, "data")))
    results = []
    for scenario in scenarios:
        results.extend(
            run_scenario(
                queries, ctx.scorer, ctx.observed, methods, scenario,
                ctx.k, ctx.epsilon, ctx.workers, dataset,
            )
        )
    rows = aggregate(results)
    payload = {"rows": rows, "config": ctx.config_dict()}
    if ctx.out:
        csv_path, json_path = write_rows(rows, ctx.out, "evaluation")
        with open(os.path.join(ctx.out, "evaluation_meta.json"), "w", encoding="utf-8") as fh:
            json.dump(payload["config"], fh, indent=2)
        payload["artifacts"] = [csv_path, json_path]
    return payload


def cmd_audit_hardness(args) -> dict:
    ctx = _Context(args)
    shapes = tuple(args.shapes.split(",")) if args.shapes else TABLE_SHAPE_ORDER
    queries = ctx.queries_for(args, shapes)
    table: dict[str, dict] = {}
    for shape in shapes:
        group = [q for q in queries if q.shape == shape]
        if not group:
            continue
        flagged = 0
        hard_total = 0
        easy_total = 0
        for q in group:
            _, flags = classify_answers(q, ctx.observed, ctx.full_graph)
            flagged += len(flags)
            hard_total += len(q.hard_answers)
            easy_total += len(q.easy_answers)
        table[shape] = {
            "queries": len(group),
            "avg_easy_per_query": round(easy_total / len(group), 2),
            "avg_hard_per_query": round(hard_total / len(group), 2),
            "labeled_hard": hard_total,
            "not_genuinely_hard": flagged,
        }
    return {"shapes": table, "config": ctx.config_dict()}


def cmd_bench(args) -> dict:
    ctx = _Context(args)
    if ctx.synth is None:
        raise ValueError("bench runs on synthetic data; pass --synthetic")
    shapes = TABLE_SHAPE_ORDER
    kwargs = dict(
        k=ctx.k,
        seed=ctx.seed,
        queries_per_shape=args.queries_per_shape,
        warmup=args.warmup,
        iters=args.iters,
    )
    if args.compare_backends:
        per_backend = bench_backends(ctx.synth, shapes, **kwargs)
        rows = [
            {"backend": name, "mean_ms": {s: round(v, 3) for s, v in res.items()}}
            for name, res in per_backend.items()
        ]
    else:
        res = bench_explain(ctx.synth, shapes, scorer=ctx.scorer, **kwargs)
        rows = [{"backend": _kernels.BACKEND, "mean_ms": {s: round(v, 3) for s, v in res.items()}}]
    payload = {"shapes": list(shapes), "rows": rows, "config": ctx.config_dict()}
    if ctx.out:
        os.makedirs(ctx.out, exist_ok=True)
        with open(os.path.join(ctx.out, "bench.json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    return payload


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atomshap",
        description="Neurosymbolic query answering with Shapley-value atom attributions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a dataset and/or validate query files")
    _add_common(p)
    p.add_argument("--incremental", action="store_true",
                   help="split files are incremental; union them")
    p.add_argument("--queries", nargs="*", default=None, help="query JSON files to validate")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("explain", help="Shapley attribution for one query/target pair")
    _add_common(p)
    p.add_argument("--query", help="query DSL text")
    p.add_argument("--queries", nargs="*", default=None, help="query JSON file(s)")
    p.add_argument("--index", type=int, default=0, help="query index within --queries")
    p.add_argument("--target", required=True, help="target entity (label, e:ID or id)")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="necessary/sufficient explanation evaluation")
    _add_common(p)
    p.add_argument("--scenario", choices=("necessary", "sufficient", "both"), default="both")
    p.add_argument("--methods", default="all",
                   help=f"comma list from {','.join(METHOD_KINDS)} or 'all'")
    p.add_argument("--shapes", default=None, help="comma list of shapes (default: all 8)")
    p.add_argument("--queries", nargs="*", default=None, help="query JSON file(s)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("audit-hardness", help="flag dataset-labeled hard answers that are not")
    _add_common(p)
    p.add_argument("--shapes", default=None)
    p.add_argument("--queries", nargs="*", default=None)
    p.set_defaults(func=cmd_audit_hardness)

    p = sub.add_parser("bench", help="mean explain() latency per query shape")
    _add_common(p)
    p.add_argument("--queries-per-shape", type=int, default=3, dest="queries_per_shape")
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--compare-backends", action="store_true", dest="compare_backends")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args._config = _load_config(getattr(args, "config", None))
        payload = args.func(args)
        json.dump(payload, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0
    except (AtomshapError, ValueError, OSError, RuntimeError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
