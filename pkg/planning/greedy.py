"""
Greedy ("Dijkstra") and noisy-Dijkstra open-loop tour construction.

greedy_dijkstra repeatedly appends the nearest unvisited node to the current
one. noisy_dijkstra reruns that construction on edge lengths perturbed by
uniform noise eps_ij ~ U(-alpha d_ij, alpha d_ij), scores each tour on the
true lengths and keeps the shortest. Generation 0 is the unperturbed tour.
The winner then goes through 2-opt segment reversals, which remove the
crossings a greedy construction leaves behind.
"""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config import (
    DEFAULT_ALPHA,
    DEFAULT_BEAM_WIDTH,
    DEFAULT_GENERATIONS,
    DEFAULT_SEED,
    GA_MUTATION_RATE,
    GA_POPULATION,
    MAX_POLISH_PASSES,
    POLISH_TOUR,
)
from planning.graph import Tour, TourGraph, make_tour, tour_length

logger = logging.getLogger(__name__)


class PlannerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(default=DEFAULT_ALPHA, ge=0)
    generations: int = Field(default=DEFAULT_GENERATIONS, ge=1)
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    population: int = Field(default=GA_POPULATION, ge=2)
    mutation_rate: float = Field(default=GA_MUTATION_RATE, ge=0, le=1)
    beam_width: int = Field(default=DEFAULT_BEAM_WIDTH, ge=1)
    polish: bool = POLISH_TOUR


def greedy_order(dist: np.ndarray, start: int) -> np.ndarray:
    """Nearest-unvisited construction; ties go to the lowest node index."""
    n = len(dist)
    order = np.empty(n, dtype=np.intp)
    order[0] = start
    visited = np.zeros(n, dtype=bool)
    visited[start] = True
    current = start
    for step in range(1, n):
        row = np.where(visited, np.inf, dist[current])
        current = int(np.argmin(row))
        visited[current] = True
        order[step] = current
    return order


def greedy_dijkstra(graph: TourGraph) -> Tour:
    return make_tour(graph, greedy_order(graph.dist, graph.start), "greedy_dijkstra")


def perturbed_distances(dist: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """d_ij + eps_ij with one symmetric draw per undirected edge."""
    n = len(dist)
    eps = rng.uniform(-1.0, 1.0, size=(n, n))
    eps = np.triu(eps, 1)
    eps = eps + eps.T
    return dist * (1.0 + alpha * eps)


def untangle(dist: np.ndarray, order, max_passes: int = MAX_POLISH_PASSES) -> np.ndarray:
    """
    2-opt on an open path with a fixed first node: reverse order[i..j]
    whenever that shortens the path, until a sweep changes nothing. The
    last node may move (reversing a tail only swaps one edge).
    """
    order = np.array(order, dtype=np.intp)
    n = len(order)
    if n < 3:
        return order
    for _ in range(max_passes):
        changed = False
        for i in range(1, n - 1):
            a, b = order[i - 1], order[i]
            c = order[i + 1 :]
            d = np.append(order[i + 2 :], -1)
            tail = d < 0
            delta = dist[a, c] - dist[a, b]
            delta += np.where(tail, 0.0, dist[b, np.where(tail, 0, d)] - dist[c, np.where(tail, 0, d)])
            j = int(np.argmin(delta))
            if delta[j] < -1e-9:
                order[i : i + j + 2] = order[i : i + j + 2][::-1]
                changed = True
        if not changed:
            break
    return order


def noisy_dijkstra(graph: TourGraph, cfg: PlannerConfig = None, keep_history: bool = False) -> Tour:
    """
    Best-of-generations noisy greedy tour, then (cfg.polish) untangled.

    Noise for generation g is drawn from default_rng([cfg.seed, g]), so the
    result does not depend on which thread runs which graph. history holds
    the per-generation lengths before untangling.
    """
    cfg = cfg or PlannerConfig()
    best_order = greedy_order(graph.dist, graph.start)
    best_len = tour_length(graph, best_order)
    history = [best_len]
    for gen in range(1, cfg.generations):
        rng = np.random.default_rng([cfg.seed, gen])
        order = greedy_order(perturbed_distances(graph.dist, cfg.alpha, rng), graph.start)
        length = tour_length(graph, order)
        if keep_history:
            history.append(length)
        if length < best_len:
            best_order, best_len = order, length
            logger.debug("noisy_dijkstra generation %d: %.3f mm", gen, length)
    if cfg.polish:
        polished = untangle(graph.dist, best_order)
        polished_len = tour_length(graph, polished)
        if polished_len < best_len:
            logger.debug("noisy_dijkstra untangled %.3f -> %.3f mm", best_len, polished_len)
            best_order, best_len = polished, polished_len
    return make_tour(
        graph,
        best_order,
        "noisy_dijkstra",
        cfg.seed,
        history=history if keep_history else [],
    )
