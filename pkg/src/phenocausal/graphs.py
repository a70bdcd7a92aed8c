"""Directed acyclic graphs over named variables.

This module holds the graph-theoretic machinery that everything else is
built on: d-separation (reachability / Bayes-ball style), graphical causal
sufficiency of a variable subset, marginalization of a DAG onto a
sufficient subset (directed paths through dropped nodes collapse to single
edges), and the backdoor criterion.

Node order is explicit and stable: every set-valued result is returned as a
tuple sorted by the graph's node order, so repeated runs produce identical
output.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

__all__ = [
    "Dag",
    "GraphError",
    "CycleError",
    "SufficiencyError",
    "d_separated",
    "is_graphically_causally_sufficient",
    "hidden_common_causes",
    "marginal_dag",
    "backdoor_admissible",
    "all_dags",
    "random_dag",
    "EXHAUSTIVE_NODE_CAP",
]

# Exhaustive operations (DAG enumeration, all-triples Markov checks) refuse
# to run above this many nodes unless the caller raises the cap explicitly.
EXHAUSTIVE_NODE_CAP = 7


class GraphError(ValueError):
    """Malformed graph or invalid graph-operation arguments."""


class CycleError(GraphError):
    """The edge set admits no topological order."""


class SufficiencyError(GraphError):
    """A subset required to be graphically causally sufficient is not.

    Carries the name of a witnessing hidden common cause in ``witness``.
    """

    def __init__(self, subset: Sequence[str], witness: str, reached: Sequence[str]):
        self.witness = witness
        self.reached = tuple(reached)
        super().__init__(
            f"subset {sorted(subset)} is not graphically causally sufficient: "
            f"hidden node {witness!r} causes {list(self.reached)} through paths "
            "avoiding the subset"
        )


@dataclass(frozen=True)
class Dag:
    """Immutable DAG over an ordered tuple of named nodes.

    ``edges`` are (parent, child) pairs. Construction validates that all
    endpoints are declared nodes, that there are no self loops or duplicate
    edges, and that a topological order exists.
    """

    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str]] = ()):
        nodes = tuple(nodes)
        if len(set(nodes)) != len(nodes):
            raise GraphError(f"duplicate node names in {nodes}")
        edge_list = [tuple(e) for e in edges]
        edge_set = frozenset(edge_list)
        if len(edge_set) != len(edge_list):
            raise GraphError("duplicate edges")
        node_set = set(nodes)
        for a, b in edge_set:
            if a == b:
                raise GraphError(f"self loop on {a!r}")
            if a not in node_set or b not in node_set:
                raise GraphError(f"edge ({a!r}, {b!r}) mentions an undeclared node")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edge_set)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(nodes)})
        self.topological_order()  # raises CycleError on cycles

    # -- basic structure ---------------------------------------------------

    def parents(self, node: str) -> tuple[str, ...]:
        self._check_nodes([node])
        return self.sorted_tuple(a for a, b in self.edges if b == node)

    def children(self, node: str) -> tuple[str, ...]:
        self._check_nodes([node])
        return self.sorted_tuple(b for a, b in self.edges if a == node)

    def ancestors(self, nodes: Iterable[str]) -> tuple[str, ...]:
        """All nodes with a directed path into ``nodes`` (the set included)."""
        seen = set(self._check_nodes(nodes))
        stack = list(seen)
        while stack:
            node = stack.pop()
            for a, b in self.edges:
                if b == node and a not in seen:
                    seen.add(a)
                    stack.append(a)
        return self.sorted_tuple(seen)

    def descendants(self, node: str, strict: bool = True) -> tuple[str, ...]:
        """Nodes reachable from ``node`` by a directed path."""
        self._check_nodes([node])
        seen = {node}
        stack = [node]
        while stack:
            top = stack.pop()
            for a, b in self.edges:
                if a == top and b not in seen:
                    seen.add(b)
                    stack.append(b)
        if strict:
            seen.discard(node)
        return self.sorted_tuple(seen)

    def topological_order(self) -> tuple[str, ...]:
        indeg = {n: 0 for n in self.nodes}
        for _, b in self.edges:
            indeg[b] += 1
        ready = [n for n in self.nodes if indeg[n] == 0]
        order: list[str] = []
        while ready:
            # pop in node order for determinism
            ready.sort(key=self._index.__getitem__)
            n = ready.pop(0)
            order.append(n)
            for c in (b for a, b in self.edges if a == n):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(self.nodes):
            raise CycleError(f"edge set {sorted(self.edges)} contains a cycle")
        return tuple(order)

    def sorted_tuple(self, names: Iterable[str]) -> tuple[str, ...]:
        """Deduplicate and sort names by this graph's node order."""
        return tuple(sorted(set(names), key=self._index.__getitem__))

    def _check_nodes(self, names: Iterable[str]) -> tuple[str, ...]:
        names = tuple(names)
        unknown = [n for n in names if n not in self._index]
        if unknown:
            raise GraphError(f"unknown node(s) {unknown}; graph has {list(self.nodes)}")
        return names

    def restrict_edges(self, keep: Iterable[str]) -> frozenset[tuple[str, str]]:
        keep_set = set(keep)
        return frozenset((a, b) for a, b in self.edges if a in keep_set and b in keep_set)

    def relabel(self, mapping: dict[str, str]) -> "Dag":
        return Dag(
            (mapping.get(n, n) for n in self.nodes),
            ((mapping.get(a, a), mapping.get(b, b)) for a, b in self.edges),
        )

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {"nodes": list(self.nodes), "edges": sorted(list(e) for e in self.edges)},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Dag":
        obj = json.loads(text)
        return cls(obj["nodes"], [tuple(e) for e in obj["edges"]])

    def to_edge_list(self) -> str:
        """Text form: one ``a -> b`` line per edge, bare lines for isolated nodes."""
        lines = [f"{a} -> {b}" for a, b in sorted(self.edges)]
        touched = {n for e in self.edges for n in e}
        lines.extend(n for n in self.nodes if n not in touched)
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_edge_list(cls, text: str) -> "Dag":
        nodes: list[str] = []
        edges = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "->" in line:
                a, b = (part.strip() for part in line.split("->", 1))
                for n in (a, b):
                    if n not in nodes:
                        nodes.append(n)
                edges.append((a, b))
            elif line not in nodes:
                nodes.append(line)
        return cls(nodes, edges)


# ---------------------------------------------------------------------------
# d-separation
# ---------------------------------------------------------------------------


def d_separated(g: Dag, a: Iterable[str], b: Iterable[str], c: Iterable[str] = ()) -> bool:
    """True iff every path between ``a`` and ``b`` is blocked by ``c``.

    A path is blocked when it contains a chain or fork whose middle node is
    in ``c``, or an inverted fork (collider) whose middle node is neither in
    ``c`` nor an ancestor of ``c``. Computed by reachability over
    (node, travel-direction) states rather than path enumeration.

    ``a``, ``b``, ``c`` must be pairwise disjoint.
    """
    a_set = set(g._check_nodes(a))
    b_set = set(g._check_nodes(b))
    c_set = set(g._check_nodes(c))
    if a_set & b_set or a_set & c_set or b_set & c_set:
        raise GraphError("d_separated requires pairwise disjoint node sets")
    if not a_set or not b_set:
        return True

    anc_c = set(g.ancestors(c_set)) if c_set else set()
    parents = {n: g.parents(n) for n in g.nodes}
    children = {n: g.children(n) for n in g.nodes}

    # Travel states: (node, "up") means the trail enters the node from a
    # child; (node, "down") means it enters from a parent.
    frontier = [(s, "up") for s in a_set]
    visited: set[tuple[str, str]] = set()
    while frontier:
        node, direction = frontier.pop()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node in b_set and node not in c_set:
            return False
        if direction == "up":
            if node in c_set:
                continue
            frontier.extend((p, "up") for p in parents[node])
            frontier.extend((ch, "down") for ch in children[node])
        else:
            if node not in c_set:
                frontier.extend((ch, "down") for ch in children[node])
            if node in anc_c:  # collider with an observed descendant opens
                frontier.extend((p, "up") for p in parents[node])
    return True


# ---------------------------------------------------------------------------
# Graphical causal sufficiency and marginal DAGs
# ---------------------------------------------------------------------------


def _reachable_inside(g: Dag, start: str, s: set[str]) -> tuple[str, ...]:
    """Members of ``s`` reachable from ``start`` by directed paths whose
    intermediate nodes all lie outside ``s``."""
    hits: set[str] = set()
    stack = [start]
    seen = {start}
    while stack:
        for ch in g.children(stack.pop()):
            if ch in s:
                hits.add(ch)
            elif ch not in seen:
                seen.add(ch)
                stack.append(ch)
    return g.sorted_tuple(hits)


def hidden_common_causes(g: Dag, s: Iterable[str]) -> tuple[tuple[str, tuple[str, ...]], ...]:
    """Nodes outside ``s`` that cause two or more members of ``s`` through
    paths avoiding ``s``, with the members they reach."""
    s_set = set(g._check_nodes(s))
    out = []
    for node in g.nodes:
        if node in s_set:
            continue
        reached = _reachable_inside(g, node, s_set)
        if len(reached) >= 2:
            out.append((node, reached))
    return tuple(out)


def is_graphically_causally_sufficient(g: Dag, s: Iterable[str]) -> bool:
    """True iff no node outside ``s`` reaches two or more members of ``s``
    via directed paths that avoid ``s`` internally."""
    return not hidden_common_causes(g, s)


def marginal_dag(g: Dag, s: Iterable[str], check: bool = True) -> Dag:
    """Marginalize ``g`` onto the subset ``s``.

    The result has nodes ``s`` (in ``g``'s order) and an edge x -> y exactly
    when ``g`` has a directed path from x to y passing through no other
    member of ``s``.

    With ``check=True`` (default) the subset must be graphically causally
    sufficient, otherwise :class:`SufficiencyError` is raised naming a
    hidden common cause. ``check=False`` computes the same edge set as a
    plain graph operation without the guarantee that the result carries
    marginal causal semantics.
    """
    s_nodes = g.sorted_tuple(g._check_nodes(s))
    s_set = set(s_nodes)
    if check:
        bad = hidden_common_causes(g, s_set)
        if bad:
            witness, reached = bad[0]
            raise SufficiencyError(s_nodes, witness, reached)
    edges = []
    for u in s_nodes:
        for v in _reachable_inside(g, u, s_set):
            if v != u:
                edges.append((u, v))
    return Dag(s_nodes, edges)


# ---------------------------------------------------------------------------
# Backdoor criterion
# ---------------------------------------------------------------------------


def backdoor_admissible(g: Dag, x: str, y: str, z: Iterable[str]) -> bool:
    """Backdoor criterion for the ordered pair (x, y).

    ``z`` must contain no descendant of ``x`` and must block every path
    from x to y that starts with an edge into x. The blocking condition is
    checked as d-separation of x and y in the graph with x's outgoing
    edges removed.
    """
    g._check_nodes([x, y])
    z_set = set(g._check_nodes(z))
    if x == y:
        raise GraphError("x and y must differ")
    if x in z_set or y in z_set:
        raise GraphError("z must exclude x and y")
    if z_set & set(g.descendants(x)):
        return False
    trimmed = Dag(g.nodes, ((a, b) for a, b in g.edges if a != x))
    return d_separated(trimmed, {x}, {y}, z_set)


# ---------------------------------------------------------------------------
# Enumeration and random generation
# ---------------------------------------------------------------------------


def all_dags(nodes: Sequence[str], cap: int = EXHAUSTIVE_NODE_CAP) -> Iterator[Dag]:
    """Yield every DAG over ``nodes``, deduplicated, in a deterministic order.

    Enumerates permutations x lower-triangular edge masks; above ``cap``
    nodes this is refused.
    """
    nodes = tuple(nodes)
    n = len(nodes)
    if n > cap:
        raise GraphError(f"refusing exhaustive enumeration over {n} nodes (cap {cap})")
    pair_slots = [(i, j) for i in range(n) for j in range(i + 1, n)]
    seen: set[frozenset[tuple[str, str]]] = set()
    graphs: list[tuple[tuple[tuple[str, str], ...], Dag]] = []
    for perm in itertools.permutations(range(n)):
        for mask in range(1 << len(pair_slots)):
            edges = tuple(
                (nodes[perm[i]], nodes[perm[j]])
                for k, (i, j) in enumerate(pair_slots)
                if mask >> k & 1
            )
            key = frozenset(edges)
            if key in seen:
                continue
            seen.add(key)
            graphs.append((tuple(sorted(edges)), Dag(nodes, edges)))
    graphs.sort(key=lambda item: (len(item[0]), item[0]))
    for _, g in graphs:
        yield g


def random_dag(nodes: Sequence[str], rng, edge_prob: float = 0.5) -> Dag:
    """Random DAG: random topological order, independent edge coin flips."""
    nodes = list(nodes)
    order = list(rng.permutation(len(nodes)))
    edges = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if rng.random() < edge_prob:
                edges.append((nodes[order[i]], nodes[order[j]]))
    return Dag(nodes, edges)
