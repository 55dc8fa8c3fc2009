"""Latency measurement for explain() and for the kernel backends."""

from __future__ import annotations

import time
from contextlib import contextmanager
from statistics import mean

from . import _kernels
from .executor import CoalitionRunner
from .queries import TABLE_SHAPE_ORDER
from .shapley import explain
from .synth import QuerySampler, SyntheticData


@contextmanager
def use_backend(name: str):
    """Temporarily reroute the kernel dispatch to one backend."""
    impl = _kernels.implementations()[name]
    saved = (
        _kernels.complex_raw,
        _kernels.minmax_rows,
        _kernels.combine_product_max,
        _kernels.count_strictly_greater,
    )
    _kernels.complex_raw = impl.complex_raw
    _kernels.minmax_rows = impl.minmax_rows
    _kernels.combine_product_max = impl.combine_product_max
    _kernels.count_strictly_greater = impl.count_strictly_greater
    try:
        yield
    finally:
        (
            _kernels.complex_raw,
            _kernels.minmax_rows,
            _kernels.combine_product_max,
            _kernels.count_strictly_greater,
        ) = saved


def bench_explain(
    data: SyntheticData,
    shapes: tuple[str, ...] = TABLE_SHAPE_ORDER,
    k: int = 10,
    seed: int = 0,
    queries_per_shape: int = 3,
    warmup: int = 1,
    iters: int = 5,
    scorer=None,
) -> dict[str, float]:
    """Mean explain() wall time in milliseconds per shape (warmup excluded)."""
    if scorer is None:
        scorer = data.oracle_scorer(seed)
    _kernels.warmup()
    sampler = QuerySampler(data, seed)
    out: dict[str, float] = {}
    for shape in shapes:
        queries = sampler.sample_many(shape, queries_per_shape)
        pairs = [(q, min(q.hard_answers)) for q in queries]
        for q, t in pairs[: max(1, warmup)]:
            explain(q, t, scorer, data.observed, k)
        samples = []
        for _ in range(iters):
            for q, t in pairs:
                start = time.perf_counter()
                explain(q, t, scorer, data.observed, k)
                samples.append((time.perf_counter() - start) * 1e3)
        out[shape] = mean(samples)
    return out


def bench_backends(
    data: SyntheticData,
    shapes: tuple[str, ...] = TABLE_SHAPE_ORDER,
    k: int = 10,
    seed: int = 0,
    **kwargs,
) -> dict[str, dict[str, float]]:
    """bench_explain under every importable kernel backend."""
    out = {}
    for name in sorted(_kernels.implementations()):
        with use_backend(name):
            out[name] = bench_explain(data, shapes, k, seed, **kwargs)
    return out


def time_explain_once(q, target, scorer, observed, k: int) -> float:
    """One timed explain() call in milliseconds, reusing no caches."""
    runner = CoalitionRunner(q, scorer, observed, k)
    start = time.perf_counter()
    explain(q, target, scorer, observed, k, runner=runner)
    return (time.perf_counter() - start) * 1e3
