"""Independent brute-force oracles shared by the test modules.

These deliberately avoid the library's own counting/enumeration logic:
subtree counts come from scanning all bitmasks, cycle counts from scanning
all edge subsets with a walk-based validity check, and Hamiltonicity from
the library's permutation scan (which itself is validated here against a
hand-rolled walk).
"""

from __future__ import annotations

import itertools

import numpy as np

from structprob import RootedTree


def brute_force_subtree_count(tree: RootedTree) -> int:
    """Count root-containing connected vertex subsets by scanning bitmasks."""
    d = tree.vertex_count
    count = 0
    for mask in range(1 << d):
        if not mask & 1:  # root must be included
            continue
        ok = True
        for v in range(1, d):
            if mask >> v & 1 and not mask >> tree.parent[v] & 1:
                ok = False
                break
        count += ok
    return count


def brute_force_subtree_payloads(tree: RootedTree) -> set[tuple[int, ...]]:
    d = tree.vertex_count
    out = set()
    for mask in range(1 << d):
        if not mask & 1:
            continue
        bits = tuple(mask >> v & 1 for v in range(d))
        if all(bits[tree.parent[v]] for v in range(1, d) if bits[v]):
            out.add(bits)
    return out


def _edge_subset_is_simple_cycle(edges: tuple[tuple[int, int], ...]) -> bool:
    """Walk-based check: following the edges from any endpoint must traverse
    every edge once and return to the start after len(edges) hops."""
    if len(edges) < 3:
        return False
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    if any(len(nb) != 2 for nb in adj.values()):
        return False
    start = edges[0][0]
    prev, cur = None, start
    visited = {start}
    for _ in range(len(edges)):
        nxt = [w for w in adj[cur] if w != prev]
        if not nxt:
            return False
        prev, cur = cur, nxt[0]
        visited.add(cur)
    # one closed walk must cover every vertex, ruling out disjoint cycles
    return cur == start and visited == set(adj) and len(adj) == len(edges)


def brute_force_cycle_payloads(n: int) -> set[tuple[tuple[int, int], ...]]:
    """All simple cycles on n labelled vertices, by scanning edge subsets."""
    all_edges = [(u, v) for u in range(n) for v in range(u + 1, n)]
    found = set()
    for r in range(3, len(all_edges) + 1):
        for subset in itertools.combinations(all_edges, r):
            if _edge_subset_is_simple_cycle(subset):
                found.add(tuple(sorted(subset)))
    return found


def random_parent_array(d: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniform random recursive tree: each vertex picks an earlier parent."""
    return (0,) + tuple(int(rng.integers(0, v)) for v in range(1, d))


def empirical_tv(counts: np.ndarray, probs: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=float)
    return 0.5 * float(np.abs(counts / counts.sum() - probs).sum())


def multinomial_tv_noise(probs: np.ndarray, n: int, sigmas: float = 3.0) -> float:
    """Concentration band for the TV distance of an empirical distribution."""
    probs = np.asarray(probs, dtype=float)
    return sigmas * 0.5 * float(np.sqrt(probs * (1 - probs) / n).sum())
