"""
Christofides baseline adapted to the open-loop problem.

The closed tour (MST + minimum-weight perfect matching on odd-degree vertices
+ Eulerian circuit + shortcutting) is opened at the start node by deleting
the heavier of the two closed-tour edges incident to it.
"""

import logging
from typing import List

import networkx as nx

from planning.graph import Tour, TourGraph, make_tour

logger = logging.getLogger(__name__)


def _complete_graph(graph: TourGraph) -> nx.Graph:
    G = nx.Graph()
    n = graph.size
    G.add_nodes_from(range(n))
    for i in range(n):
        for j in range(i + 1, n):
            G.add_edge(i, j, weight=float(graph.dist[i, j]))
    return G


def closed_tour(graph: TourGraph) -> List[int]:
    """Christofides Hamiltonian cycle as a node list starting at graph.start (no repeat)."""
    G = _complete_graph(graph)
    mst = nx.minimum_spanning_tree(G, weight="weight")
    odd = [v for v, deg in mst.degree() if deg % 2 == 1]
    matching = nx.min_weight_matching(G.subgraph(odd), weight="weight")

    multi = nx.MultiGraph(mst)
    multi.add_edges_from(sorted(tuple(sorted(e)) for e in matching))

    cycle, seen = [], set()
    for u, _ in nx.eulerian_circuit(multi, source=graph.start):
        if u not in seen:
            seen.add(u)
            cycle.append(u)
    return cycle


def christofides_otsp(graph: TourGraph) -> Tour:
    n = graph.size
    if n <= 2:
        order = [graph.start] + [i for i in range(n) if i != graph.start]
        return make_tour(graph, order, "christofides", closed_length_mm=2 * float(graph.dist[order[0], order[-1]]))

    cycle = closed_tour(graph)
    d = graph.dist
    closed = float(sum(d[cycle[i], cycle[(i + 1) % n]] for i in range(n)))
    first, last = cycle[1], cycle[-1]
    if d[graph.start, first] >= d[last, graph.start]:
        # drop start -> first: walk the cycle backwards
        order = [graph.start] + cycle[:0:-1]
    else:
        order = cycle
    tour = make_tour(graph, order, "christofides", closed_length_mm=closed)
    logger.debug("christofides: closed %.3f mm, open %.3f mm", closed, tour.length_mm)
    return tour
