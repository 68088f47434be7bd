"""
Planner benchmark: every planner on every graph, one row per (graph, planner).

Rows carry graph_id, algorithm, length_mm, wall_ms and seed; summarize()
reduces them to per-planner median / variance / mean wall time plus the
relative metrics against the greedy and Christofides baselines.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from config import DEFAULT_HOME_MM
from errors import GraphError
from planning.astar import astar_otsp
from planning.christofides import christofides_otsp
from planning.genetic import ga_otsp
from planning.graph import Tour, TourGraph, graph_from_points
from planning.greedy import PlannerConfig, greedy_dijkstra, noisy_dijkstra
from shapes.synthetic import clustered_points, film_centres

logger = logging.getLogger(__name__)

BENCHMARK_COLUMNS = ["graph_id", "algorithm", "length_mm", "wall_ms", "seed"]

PLANNERS: Dict[str, Callable[[TourGraph, PlannerConfig], Tour]] = {
    "greedy_dijkstra": lambda g, cfg: greedy_dijkstra(g),
    "noisy_dijkstra": lambda g, cfg: noisy_dijkstra(g, cfg),
    "christofides": lambda g, cfg: christofides_otsp(g),
    "astar": lambda g, cfg: astar_otsp(g, beam_width=cfg.beam_width),
    "genetic": lambda g, cfg: ga_otsp(g, cfg),
}


def run_planner(name: str, graph: TourGraph, cfg: PlannerConfig) -> Tour:
    try:
        planner = PLANNERS[name]
    except KeyError:
        raise GraphError(f"unknown planner {name!r}; choose from {sorted(PLANNERS)}") from None
    return planner(graph, cfg)


def clustered_graphs(
    count: int = 115,
    seed: int = 0,
    clusters: int = 35,
    per_cluster: int = 3,
    home=DEFAULT_HOME_MM,
) -> List[TourGraph]:
    """
    Film-array style graphs: home plus clusters x per_cluster contact points.
    All graphs share one array layout drawn from seed; each graph draws its
    own contact points, as repeated campaigns over the same substrate do.
    """
    centres = film_centres(np.random.default_rng([seed]), clusters)
    graphs = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        points = clustered_points(rng, per_cluster=per_cluster, centres=centres)
        graphs.append(graph_from_points(np.vstack([np.asarray(home, dtype=np.float64), points])))
    return graphs


def _bench_one(args) -> List[dict]:
    graph_id, graph, cfg, algorithms = args
    rows = []
    for name in algorithms:
        t0 = time.perf_counter()
        tour = run_planner(name, graph, cfg)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        rows.append(
            {
                "graph_id": graph_id,
                "algorithm": name,
                "length_mm": tour.length_mm,
                "wall_ms": wall_ms,
                "seed": cfg.seed,
            }
        )
    return rows


def benchmark(
    graphs: Sequence[TourGraph],
    cfg: PlannerConfig = None,
    algorithms: Optional[Sequence[str]] = None,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Run the planners on each graph. Graph i uses seed cfg.seed XOR i, so the
    table does not depend on how graphs are spread over workers (wall_ms aside).
    """
    cfg = cfg or PlannerConfig()
    algorithms = list(algorithms or PLANNERS)
    jobs = [(i, g, cfg.model_copy(update={"seed": cfg.seed ^ i}), algorithms) for i, g in enumerate(graphs)]
    if workers <= 1 or len(jobs) <= 1:
        chunks = [_bench_one(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_bench_one, jobs))
    table = pd.DataFrame([row for chunk in chunks for row in chunk], columns=BENCHMARK_COLUMNS)
    logger.info("Benchmarked %d planner(s) on %d graph(s)", len(algorithms), len(graphs))
    return table


def summarize(table: pd.DataFrame) -> pd.DataFrame:
    """
    Per-planner median_mm, variance_mm2 (ddof=1), mean_wall_ms, the relative
    median improvement over greedy_dijkstra (percent) and the variance ratio
    christofides / planner (> 1 means tighter than Christofides).
    """
    grouped = table.groupby("algorithm", sort=True)["length_mm"]
    summary = pd.DataFrame(
        {
            "median_mm": grouped.median(),
            "variance_mm2": grouped.var(ddof=1),
            "mean_wall_ms": table.groupby("algorithm", sort=True)["wall_ms"].mean(),
            "graphs": grouped.count(),
        }
    )
    if "greedy_dijkstra" in summary.index:
        base = summary.loc["greedy_dijkstra", "median_mm"]
        summary["improvement_vs_greedy_pct"] = 100.0 * (base - summary["median_mm"]) / base
    if "christofides" in summary.index:
        summary["variance_ratio_vs_christofides"] = (
            summary.loc["christofides", "variance_mm2"] / summary["variance_mm2"]
        )
    return summary


def write_benchmark(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format="%.6f")
    return path
