"""
Genetic-algorithm baseline over open-loop permutations with a fixed start.

Order crossover + swap mutation, binary tournament selection, elitism 1.
All randomness comes from default_rng(cfg.seed).
"""

import logging

import numpy as np

from planning.graph import Tour, TourGraph, make_tour
from planning.greedy import PlannerConfig

logger = logging.getLogger(__name__)


def _lengths(dist: np.ndarray, start: int, population: np.ndarray) -> np.ndarray:
    legs = dist[population[:, :-1], population[:, 1:]].sum(axis=1)
    return dist[start, population[:, 0]] + legs


def order_crossover(p1: np.ndarray, p2: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """OX: keep a slice of p1, fill the rest in p2's order starting after the slice."""
    m = len(p1)
    a, b = sorted(rng.choice(m + 1, size=2, replace=False))
    segment = p1[a:b]
    taken = np.zeros(int(max(p1.max(), p2.max())) + 1, dtype=bool)
    taken[segment] = True
    rolled = np.roll(p2, -b)
    fill = rolled[~taken[rolled]]
    child = np.empty_like(p1)
    child[a:b] = segment
    child[np.r_[b:m, 0:a]] = fill
    return child


def swap_mutation(individual: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    i, j = rng.choice(len(individual), size=2, replace=False)
    individual[i], individual[j] = individual[j], individual[i]
    return individual


def _tournament(fitness: np.ndarray, rng: np.random.Generator) -> int:
    i, j = rng.choice(len(fitness), size=2, replace=False)
    return int(i) if fitness[i] <= fitness[j] else int(j)


def ga_otsp(graph: TourGraph, cfg: PlannerConfig = None) -> Tour:
    cfg = cfg or PlannerConfig()
    others = np.array([i for i in range(graph.size) if i != graph.start], dtype=np.intp)
    if len(others) < 2:
        return make_tour(graph, [graph.start, *others.tolist()], "genetic", cfg.seed)

    rng = np.random.default_rng(cfg.seed)
    dist = graph.dist
    population = np.stack([rng.permutation(others) for _ in range(cfg.population)])
    fitness = _lengths(dist, graph.start, population)

    for _ in range(cfg.generations):
        elite = int(np.argmin(fitness))
        children = [population[elite].copy()]
        while len(children) < cfg.population:
            p1 = population[_tournament(fitness, rng)]
            p2 = population[_tournament(fitness, rng)]
            child = order_crossover(p1, p2, rng)
            if rng.random() < cfg.mutation_rate:
                child = swap_mutation(child, rng)
            children.append(child)
        population = np.stack(children)
        fitness = _lengths(dist, graph.start, population)

    best = population[int(np.argmin(fitness))]
    logger.debug("genetic: best %.3f mm after %d generations", float(fitness.min()), cfg.generations)
    return make_tour(graph, [graph.start, *best.tolist()], "genetic", cfg.seed)
