"""
A* over (current node, visited set) states for the open-loop tour.

Up to ASTAR_EXACT_LIMIT nodes the search is exhaustive with the admissible
heuristic h = min d(current, U) + MST(U) over the unvisited set U, and the
result is optimal. Larger graphs fall back to a beam search ranked by
g + sum over unvisited u of the distance from u to its nearest neighbour
(each unvisited node still has to be entered once).
"""

import heapq
import logging
from typing import Dict, List, Tuple

import numpy as np

from config import ASTAR_EXACT_LIMIT, DEFAULT_BEAM_WIDTH
from errors import GraphError
from planning.graph import Tour, TourGraph, make_tour

logger = logging.getLogger(__name__)


def _mst_weight(dist: np.ndarray, nodes: List[int]) -> float:
    """Prim's algorithm on the sub-matrix of `nodes`."""
    if len(nodes) < 2:
        return 0.0
    sub = dist[np.ix_(nodes, nodes)]
    in_tree = np.zeros(len(nodes), dtype=bool)
    in_tree[0] = True
    best = sub[0].copy()
    total = 0.0
    for _ in range(len(nodes) - 1):
        candidates = np.where(in_tree, np.inf, best)
        j = int(np.argmin(candidates))
        total += float(candidates[j])
        in_tree[j] = True
        best = np.minimum(best, sub[j])
    return total


def _exact_search(graph: TourGraph) -> List[int]:
    dist = graph.dist
    n = graph.size
    full = (1 << n) - 1
    mst_cache: Dict[int, float] = {}

    def heuristic(cur: int, mask: int) -> float:
        rest = [u for u in range(n) if not mask >> u & 1]
        if not rest:
            return 0.0
        if mask not in mst_cache:
            mst_cache[mask] = _mst_weight(dist, rest)
        return float(dist[cur, rest].min()) + mst_cache[mask]

    start_state = (graph.start, 1 << graph.start)
    best_g: Dict[Tuple[int, int], float] = {start_state: 0.0}
    parent: Dict[Tuple[int, int], Tuple[int, int]] = {}
    counter = 0
    frontier = [(heuristic(*start_state), counter, 0.0, start_state)]
    expanded = 0

    while frontier:
        _, _, g, state = heapq.heappop(frontier)
        if g > best_g[state]:
            continue
        cur, mask = state
        if mask == full:
            path = [cur]
            while state in parent:
                state = parent[state]
                path.append(state[0])
            logger.debug("astar exact: %d expansions", expanded)
            return path[::-1]
        expanded += 1
        for nxt in range(n):
            if mask >> nxt & 1:
                continue
            child = (nxt, mask | 1 << nxt)
            g_child = g + float(dist[cur, nxt])
            if g_child < best_g.get(child, np.inf):
                best_g[child] = g_child
                parent[child] = state
                counter += 1
                heapq.heappush(frontier, (g_child + heuristic(*child), counter, g_child, child))
    raise RuntimeError("A* frontier exhausted before reaching a full tour")


def _beam_search(graph: TourGraph, width: int) -> List[int]:
    dist = graph.dist
    n = graph.size
    off_diag = dist + np.diag(np.full(n, np.inf))
    nearest = off_diag.min(axis=1)

    paths = np.array([[graph.start]], dtype=np.intp)
    visited = np.zeros((1, n), dtype=bool)
    visited[0, graph.start] = True
    g = np.zeros(1)
    remaining = np.array([nearest.sum() - nearest[graph.start]])

    for _ in range(n - 1):
        cur = paths[:, -1]
        g_next = g[:, None] + dist[cur]
        rem_next = remaining[:, None] - nearest[None, :]
        f = np.where(visited, np.inf, g_next + rem_next).ravel()
        keep = min(width, int(np.isfinite(f).sum()))
        if keep < len(f):
            pick = np.argpartition(f, keep - 1)[:keep]
        else:
            pick = np.arange(len(f))
        # rank by f, then by flat index for a schedule-free tie rule
        pick = pick[np.lexsort((pick, f[pick]))]
        pick = pick[np.isfinite(f[pick])]
        rows, cols = np.divmod(pick, n)

        paths = np.column_stack([paths[rows], cols])
        visited = visited[rows].copy()
        visited[np.arange(len(rows)), cols] = True
        g = g_next[rows, cols]
        remaining = rem_next[rows, cols]

    return paths[int(np.argmin(g))].tolist()


def astar_otsp(graph: TourGraph, h: str = "mst", beam_width: int = DEFAULT_BEAM_WIDTH) -> Tour:
    """
    Open-loop tour by A*. `h` selects the heuristic family: "mst" (exact
    search when small enough, beam otherwise) or "beam" to force the beam.
    """
    if h not in ("mst", "beam"):
        raise GraphError(f"unknown heuristic {h!r}")
    if graph.size == 1:
        return make_tour(graph, [graph.start], "astar")
    if h == "mst" and graph.size <= ASTAR_EXACT_LIMIT:
        order = _exact_search(graph)
    else:
        order = _beam_search(graph, beam_width)
    return make_tour(graph, order, "astar")
