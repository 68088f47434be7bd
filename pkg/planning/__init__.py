from planning.astar import astar_otsp
from planning.christofides import christofides_otsp
from planning.genetic import ga_otsp
from planning.graph import GraphNode, Tour, TourGraph, build_graph, graph_from_points, tour_length
from planning.greedy import PlannerConfig, greedy_dijkstra, noisy_dijkstra

__all__ = [
    "astar_otsp",
    "christofides_otsp",
    "ga_otsp",
    "GraphNode",
    "Tour",
    "TourGraph",
    "build_graph",
    "graph_from_points",
    "tour_length",
    "PlannerConfig",
    "greedy_dijkstra",
    "noisy_dijkstra",
]
