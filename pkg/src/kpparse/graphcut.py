"""Exact s-t min cut and alpha-expansion for Potts energies over regions."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .energy import PairwiseWeights, UnaryTable, total_energy

RESIDUAL_EPS = 1e-12
DEFAULT_MAX_CYCLES = 10


class FlowNetwork:
    """Directed capacity graph stored as paired residual arcs.

    Arc ``k`` and ``k ^ 1`` are each other's reverse. Node 0 is the source and
    node 1 the sink; further nodes are created with :meth:`add_node`.
    """

    SOURCE = 0
    SINK = 1

    def __init__(self, node_count: int = 2):
        if node_count < 2:
            raise ValueError("a flow network needs a source and a sink")
        self.node_count = node_count
        self.head: list[int] = []
        self.cap: list[float] = []
        self.original: list[float] = []
        self.adj: list[list[int]] = [[] for _ in range(node_count)]

    def add_node(self) -> int:
        self.adj.append([])
        self.node_count += 1
        return self.node_count - 1

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> int:
        if cap < 0 or rev_cap < 0 or not np.isfinite(cap) or not np.isfinite(rev_cap):
            raise ValueError("capacities must be finite and nonnegative")
        k = len(self.head)
        self.head += [v, u]
        self.cap += [float(cap), float(rev_cap)]
        self.original += [float(cap), float(rev_cap)]
        self.adj[u].append(k)
        self.adj[v].append(k + 1)
        return k

    def flow_on(self, arc: int) -> float:
        return self.original[arc] - self.cap[arc]

    def _levels(self, s: int, t: int) -> list[int] | None:
        level = [-1] * self.node_count
        level[s] = 0
        queue = deque([s])
        head, cap, adj = self.head, self.cap, self.adj
        while queue:
            u = queue.popleft()
            for k in adj[u]:
                v = head[k]
                if level[v] < 0 and cap[k] > RESIDUAL_EPS:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level if level[t] >= 0 else None

    def _augment(self, s: int, t: int, level: list[int]) -> float:
        # iterative DFS over the level graph, one shortest path at a time
        head, cap, adj = self.head, self.cap, self.adj
        it = [0] * self.node_count
        pushed = 0.0
        while True:
            path: list[int] = []
            u = s
            while u != t:
                arcs = adj[u]
                while it[u] < len(arcs):
                    k = arcs[it[u]]
                    v = head[k]
                    if cap[k] > RESIDUAL_EPS and level[v] == level[u] + 1:
                        break
                    it[u] += 1
                else:
                    if u == s:
                        return pushed
                    level[u] = -1  # dead end
                    k = path.pop()
                    u = head[k ^ 1]
                    it[u] += 1
                    continue
                path.append(k)
                u = head[k]
            bottleneck = min(cap[k] for k in path)
            for k in path:
                cap[k] -= bottleneck
                cap[k ^ 1] += bottleneck
            pushed += bottleneck

    def source_side(self, s: int = SOURCE) -> set[int]:
        seen = {s}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for k in self.adj[u]:
                v = self.head[k]
                if v not in seen and self.cap[k] > RESIDUAL_EPS:
                    seen.add(v)
                    queue.append(v)
        return seen

    def cut_capacity(self, side: set[int]) -> float:
        total = 0.0
        for k in range(0, len(self.head)):
            u, v = self.head[k ^ 1], self.head[k]
            if u in side and v not in side:
                total += self.original[k]
        return total


def max_flow(network: FlowNetwork, s: int = FlowNetwork.SOURCE, t: int = FlowNetwork.SINK) -> tuple[float, set[int]]:
    """Maximum s-t flow and the source side of a minimum cut.

    Augments along shortest residual paths, phase by phase (BFS level graph,
    then blocking flow). The returned node set is everything reachable from
    the source in the final residual graph, i.e. the smallest minimum cut.
    """
    value = 0.0
    while (level := network._levels(s, t)) is not None:
        value += network._augment(s, t, level)
    return value, network.source_side(s)


@dataclass(frozen=True)
class Labeling:
    labels: np.ndarray
    energy: float


def _as_labels(labels) -> np.ndarray:
    y = np.array(labels, dtype=np.int64)
    y.setflags(write=False)
    return y


def expansion_move(current: Labeling, alpha: int, unary: UnaryTable, weights: PairwiseWeights) -> Labeling:
    """Best labeling reachable by letting any subset of regions switch to ``alpha``.

    Regions that end on the source side of the min cut take ``alpha``. Since
    the minimal source side is returned, exact ties keep the current label.
    """
    y = np.asarray(current.labels, dtype=np.int64)
    costs = unary.costs
    n = len(y)
    keep_cost = costs[np.arange(n), y].astype(np.float64)
    alpha_cost = costs[:, alpha].astype(np.float64)
    active = y != alpha
    node = np.full(n, -1, np.int64)
    node[active] = np.arange(2, 2 + int(active.sum()))
    net = FlowNetwork(2 + int(active.sum()))

    w = weights.scaled()
    for (i, j), wij in zip(weights.edges.tolist(), w.tolist()):
        if wij == 0.0 or not (active[i] or active[j]):
            continue
        if not active[j]:
            keep_cost[i] += wij
        elif not active[i]:
            keep_cost[j] += wij
        elif y[i] == y[j]:
            net.add_edge(int(node[i]), int(node[j]), wij, wij)
        else:
            aux = net.add_node()
            net.add_edge(FlowNetwork.SOURCE, aux, wij)
            net.add_edge(aux, int(node[i]), wij)
            net.add_edge(aux, int(node[j]), wij)

    for i in np.flatnonzero(active):
        # only the difference between the two terminal costs matters
        base = min(keep_cost[i], alpha_cost[i])
        to_keep, to_alpha = keep_cost[i] - base, alpha_cost[i] - base
        if to_keep > 0:
            net.add_edge(FlowNetwork.SOURCE, int(node[i]), to_keep)
        if to_alpha > 0:
            net.add_edge(int(node[i]), FlowNetwork.SINK, to_alpha)

    _, side = max_flow(net)
    new = y.copy()
    for i in np.flatnonzero(active):
        if int(node[i]) in side:
            new[i] = alpha
    return Labeling(_as_labels(new), total_energy(new, unary, weights))


def _improves(new: float, old: float) -> bool:
    return new < old - 1e-12 * max(1.0, abs(old))


def alpha_expansion(
    unary: UnaryTable,
    weights: PairwiseWeights,
    initial=None,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> Labeling:
    """Cycle expansion moves over labels 0..K until a full cycle makes no progress.

    Starts from the per-region unary argmin (smallest label on ties) unless an
    initial labeling is given. Moves are accepted only on a strict energy
    decrease, so the energy sequence is monotone.
    """
    if initial is None:
        y = unary.costs.argmin(axis=1)
    else:
        y = np.asarray(initial.labels if isinstance(initial, Labeling) else initial, dtype=np.int64)
    current = Labeling(_as_labels(y), total_energy(y, unary, weights))
    if len(weights.edges) == 0 or not np.any(weights.weights):
        if initial is None:
            return current
    for _ in range(max_cycles):
        improved = False
        for alpha in range(unary.num_labels):
            move = expansion_move(current, alpha, unary, weights)
            if _improves(move.energy, current.energy):
                assert move.energy <= current.energy
                current = move
                improved = True
        if not improved:
            break
    return current
