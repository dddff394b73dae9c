"""Shared generators for randomized tests: connected graphs, trees, and
measurement sets with heterogeneous noise."""

from __future__ import annotations

import numpy as np

from cfosync import Graph, MeasurementSet, generate_measurements, generate_truth
from cfosync.model import Measurement


def random_tree(rng: np.random.Generator, n: int) -> Graph:
    """Uniform random attachment tree on agents 1..n."""
    edges = []
    for v in range(2, n + 1):
        u = int(rng.integers(1, v))
        edges.append((u, v))
    return Graph.from_edges(n, edges)


def random_connected_graph(rng: np.random.Generator, n: int,
                           extra_edge_frac: float = 0.5) -> Graph:
    """Random attachment tree plus extra random edges (keeps connectivity)."""
    edges = set()
    for v in range(2, n + 1):
        u = int(rng.integers(1, v))
        edges.add((u, v))
    n_extra = int(rng.integers(0, max(1, int(extra_edge_frac * n)) + 1))
    for _ in range(n_extra):
        i = int(rng.integers(1, n + 1))
        j = int(rng.integers(1, n + 1))
        if i != j:
            edges.add((min(i, j), max(i, j)))
    return Graph.from_edges(n, sorted(edges))


def heterogeneous_measurements(rng: np.random.Generator, graph: Graph,
                               sigma2_range: tuple[float, float] = (0.25, 4.0),
                               offset_scale: float = 100.0) -> MeasurementSet:
    """Measurements with per-edge noise variance drawn from sigma2_range."""
    truth = generate_truth(graph, offset_scale, seed=int(rng.integers(2**31)))
    ms = MeasurementSet()
    for (i, j) in sorted(graph.edges):
        s2 = float(rng.uniform(*sigma2_range))
        noise = float(rng.normal(0.0, np.sqrt(s2)))
        ms.add(Measurement(edge=(i, j),
                           r=truth.offsets[i] + truth.offsets[j] + noise,
                           sigma2=s2))
    return ms


def triangle(sigma2: float = 1.0, r12: float = 0.0, r13: float = 0.0,
             r23: float = 0.0) -> tuple[Graph, MeasurementSet]:
    g = Graph.from_edges(3, [(1, 2), (1, 3), (2, 3)])
    ms = MeasurementSet()
    for e, r in (((1, 2), r12), ((1, 3), r13), ((2, 3), r23)):
        ms.add(Measurement(edge=e, r=r, sigma2=sigma2))
    return g, ms


def seeded_instance(seed: int, n: int, sigma: float = 1.0):
    """(graph, truth, measurements) for a random connected instance."""
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, n)
    truth = generate_truth(g, 100.0, seed=seed + 1)
    meas = generate_measurements(g, truth, sigma, seed=seed + 2)
    return g, truth, meas
