"""Undirected simple graphs with a canonical edge order.

Every array in the package that is indexed "per edge" follows the order
stored on the Graph: endpoints normalized to (min, max), edges sorted
lexicographically.  Table entries for an edge (i, j) are laid out as
(0,0), (0,1), (1,0), (1,1) with x_i the first coordinate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .exceptions import GraphConstructionError, GraphFileError

__all__ = [
    "Graph",
    "torus",
    "cycle",
    "chain",
    "complete",
    "from_file",
    "build_graph",
    "load_graph",
    "save_graph",
]


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    edges: tuple
    degrees: tuple
    neighbors: tuple  # neighbors[i] = tuple of adjacent node ids

    @property
    def num_edges(self):
        return len(self.edges)

    def edge_index(self):
        """Mapping from either orientation of an edge to its canonical position."""
        idx = {}
        for k, (i, j) in enumerate(self.edges):
            idx[(i, j)] = k
            idx[(j, i)] = k
        return idx

    @staticmethod
    def from_edges(num_nodes, edges):
        if num_nodes < 1:
            raise GraphConstructionError(f"num_nodes must be >= 1 (got num_nodes={num_nodes})")
        canon = set()
        for i, j in edges:
            if i == j:
                raise GraphConstructionError(f"self-loop on node {i} is not allowed")
            if not (0 <= i < num_nodes and 0 <= j < num_nodes):
                raise GraphConstructionError(
                    f"edge ({i}, {j}) references a node outside [0, {num_nodes})"
                )
            e = (min(i, j), max(i, j))
            if e in canon:
                raise GraphConstructionError(f"duplicate edge ({e[0]}, {e[1]})")
            canon.add(e)
        ordered = tuple(sorted(canon))
        deg = [0] * num_nodes
        nbr = [[] for _ in range(num_nodes)]
        for i, j in ordered:
            deg[i] += 1
            deg[j] += 1
            nbr[i].append(j)
            nbr[j].append(i)
        return Graph(
            num_nodes=num_nodes,
            edges=ordered,
            degrees=tuple(deg),
            neighbors=tuple(tuple(sorted(x)) for x in nbr),
        )


def torus(rows, cols):
    """rows x cols grid with wraparound in both directions; constant degree 4."""
    if rows < 3:
        raise GraphConstructionError(f"torus requires rows >= 3 (got rows={rows})")
    if cols < 3:
        raise GraphConstructionError(f"torus requires cols >= 3 (got cols={cols})")
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            edges.append((u, r * cols + (c + 1) % cols))
            edges.append((u, ((r + 1) % rows) * cols + c))
    return Graph.from_edges(rows * cols, edges)


def cycle(n):
    if n < 3:
        raise GraphConstructionError(f"cycle requires n >= 3 (got n={n})")
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def chain(n):
    if n < 2:
        raise GraphConstructionError(f"chain requires n >= 2 (got n={n})")
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def complete(n):
    if n < 2:
        raise GraphConstructionError(f"complete requires n >= 2 (got n={n})")
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def from_file(path):
    return load_graph(path)


def build_graph(spec):
    """Build a graph from a compact text spec: torus:RxC, cycle:N, chain:N,
    complete:N, or file:PATH."""
    kind, sep, arg = spec.partition(":")
    if not sep:
        raise GraphConstructionError(f"graph spec {spec!r} is missing ':<args>'")
    try:
        if kind == "torus":
            r, _, c = arg.partition("x")
            return torus(int(r), int(c))
        if kind == "cycle":
            return cycle(int(arg))
        if kind == "chain":
            return chain(int(arg))
        if kind == "complete":
            return complete(int(arg))
    except ValueError as exc:
        raise GraphConstructionError(f"bad graph spec {spec!r}: {exc}") from exc
    if kind == "file":
        return load_graph(arg)
    raise GraphConstructionError(f"unknown graph kind {kind!r}")


def load_graph(path):
    with open(path) as fh:
        text = fh.read()
    obj = _parse_json(text, path)
    return graph_from_obj(obj, path)


def graph_from_obj(obj, source="<inline>"):
    if not isinstance(obj, dict) or "num_nodes" not in obj or "edges" not in obj:
        raise GraphFileError(f"{source}: expected an object with num_nodes and edges")
    try:
        return Graph.from_edges(int(obj["num_nodes"]), [tuple(e) for e in obj["edges"]])
    except (TypeError, ValueError) as exc:
        raise GraphFileError(f"{source}: {exc}") from exc


def save_graph(graph, path):
    with open(path, "w") as fh:
        json.dump({"num_nodes": graph.num_nodes, "edges": [list(e) for e in graph.edges]}, fh)
        fh.write("\n")


def _parse_json(text, path):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFileError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
