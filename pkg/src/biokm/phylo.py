"""Topology trees over network nodes, built by Neighbor-Joining.

Endpoints (server and clients) are the tree's leaves; inferred junction
nodes are internal.  Input is a symmetric nonnegative distance matrix;
for a star network the matrix comes from per-client round-trip times,
which are additive over the relay (client-to-client distance is the sum
of the two spoke times).

Joining follows the classic rate-corrected recursion: with ``u[i]`` the
net divergence (row sum) over the m active nodes, the pair minimizing

    d[i][j] - (u[i] + u[j]) / (m - 2)

is fused into a new node with branch lengths

    b_i = d[i][j] / 2 + (u[i] - u[j]) / (2 (m - 2)),   b_j = d[i][j] - b_i

and distances d[new][k] = (d[i][k] + d[j][k] - d[i][j]) / 2, until three
nodes remain and meet at one center (two leaves collapse to one edge).
Output trees are unrooted; a negative branch is clamped to zero and the
deficit moved to its sibling so the pair distance is preserved.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


class MatrixInvariantViolation(ValueError):
    """Distance matrix is not symmetric nonnegative with a zero diagonal."""


class NegativeRtt(ValueError):
    pass


class NewickError(ValueError):
    """Unparseable tree text."""


class DistanceMatrix:
    """Symmetric nonnegative distances over uniquely labeled nodes."""

    def __init__(self, labels: Iterable[str], values) -> None:
        self.labels = tuple(labels)
        self.values = np.asarray(values, dtype=float).copy()
        n = len(self.labels)
        if n < 2:
            raise MatrixInvariantViolation("need at least two labels")
        if len(set(self.labels)) != n:
            raise MatrixInvariantViolation("labels must be unique")
        if self.values.shape != (n, n):
            raise MatrixInvariantViolation(
                f"matrix shape {self.values.shape} does not match {n} labels"
            )
        if np.any(np.diagonal(self.values) != 0):
            raise MatrixInvariantViolation("diagonal must be zero")
        if not np.array_equal(self.values, self.values.T):
            raise MatrixInvariantViolation("matrix must be symmetric")
        if np.any(self.values < 0):
            raise MatrixInvariantViolation("distances must be nonnegative")

    def __len__(self) -> int:
        return len(self.labels)

    def distance(self, a: str, b: str) -> float:
        return float(self.values[self.labels.index(a), self.labels.index(b)])

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["", *self.labels])
            for label, row in zip(self.labels, self.values):
                writer.writerow([label, *(repr(float(x)) for x in row)])
        return path

    @classmethod
    def from_csv(cls, path) -> "DistanceMatrix":
        with Path(path).open("r", encoding="utf-8", newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
        if len(rows) < 2:
            raise MatrixInvariantViolation(f"{path}: not a matrix")
        header = rows[0]
        labels = header[1:] if header[0] == "" else header
        data = []
        for row in rows[1:]:
            cells = row[1:] if len(row) == len(labels) + 1 else row
            data.append([float(x) for x in cells])
        return cls(labels, data)


def net_divergence(dm: DistanceMatrix, i: int) -> float:
    """Sum of distances from node i to every other node."""
    if not 0 <= i < len(dm):
        raise IndexError(f"node index {i} out of range 0..{len(dm) - 1}")
    return float(dm.values[i].sum())


class PhyloTree:
    """Unrooted tree: labeled leaves, unlabeled internals, weighted edges."""

    def __init__(self) -> None:
        self._adj: dict[int, dict[int, float]] = {}
        self.labels: dict[int, str] = {}
        self._next = 0

    def add_node(self, label: str | None = None) -> int:
        node = self._next
        self._next += 1
        self._adj[node] = {}
        if label is not None:
            self.labels[node] = label
        return node

    def add_edge(self, a: int, b: int, length: float) -> None:
        if length < 0:
            raise ValueError(f"branch length must be >= 0, got {length}")
        self._adj[a][b] = length
        self._adj[b][a] = length

    def neighbors(self, node: int) -> dict[int, float]:
        return dict(self._adj[node])

    @property
    def leaf_ids(self) -> list[int]:
        return [n for n, adj in self._adj.items() if len(adj) <= 1]

    @property
    def internal_ids(self) -> list[int]:
        return [n for n, adj in self._adj.items() if len(adj) > 1]

    @property
    def leaf_labels(self) -> list[str]:
        return sorted(self.labels[n] for n in self.leaf_ids)

    def edges(self) -> list[tuple[int, int, float]]:
        out = []
        for a, adj in self._adj.items():
            for b, length in adj.items():
                if a < b:
                    out.append((a, b, length))
        return out

    def leaf_distances(self) -> DistanceMatrix:
        """Pairwise path lengths between leaves, labels sorted."""
        by_label = sorted((self.labels[n], n) for n in self.leaf_ids)
        labels = [lbl for lbl, _ in by_label]
        n = len(labels)
        values = np.zeros((n, n))
        for row, (_, start) in enumerate(by_label):
            dist = {start: 0.0}
            stack = [start]
            while stack:
                cur = stack.pop()
                for nxt, length in self._adj[cur].items():
                    if nxt not in dist:
                        dist[nxt] = dist[cur] + length
                        stack.append(nxt)
            for col, (_, leaf) in enumerate(by_label):
                values[row, col] = dist[leaf]
        return DistanceMatrix(labels, values)


def _clamped_pair(b_i: float, b_j: float) -> tuple[float, float]:
    # keep b_i + b_j intact while zeroing a negative member
    if b_i < 0:
        b_j += b_i
        b_i = 0.0
    elif b_j < 0:
        b_i += b_j
        b_j = 0.0
    return max(b_i, 0.0), max(b_j, 0.0)


def nj_build(dm: DistanceMatrix) -> PhyloTree:
    """Neighbor-Joining over a distance matrix.

    Ties on the join criterion go to the pair whose nodes were created
    first (input label order, then join order), making the output
    deterministic for any input.
    """
    tree = PhyloTree()
    ids = [tree.add_node(label) for label in dm.labels]
    n = len(ids)
    if n == 2:
        tree.add_edge(ids[0], ids[1], float(dm.values[0, 1]))
        return tree

    d = dm.values.astype(float).copy()
    nodes = list(ids)
    order = list(range(n))  # creation rank, for deterministic tie-breaks
    next_rank = n

    while len(nodes) > 3:
        m = len(nodes)
        u = d.sum(axis=0)
        best = None
        best_m = None
        best_rank = None
        for i in range(m):
            for j in range(i + 1, m):
                mij = d[i, j] - (u[i] + u[j]) / (m - 2)
                rank = tuple(sorted((order[i], order[j])))
                if best is None or mij < best_m or (mij == best_m and rank < best_rank):
                    best, best_m, best_rank = (i, j), mij, rank
        i, j = best
        b_i = 0.5 * d[i, j] + (u[i] - u[j]) / (2 * (m - 2))
        b_i, b_j = _clamped_pair(b_i, d[i, j] - b_i)
        joined = tree.add_node()
        tree.add_edge(nodes[i], joined, b_i)
        tree.add_edge(nodes[j], joined, b_j)

        fresh = 0.5 * (d[i, :] + d[j, :] - d[i, j])
        d[i, :] = fresh
        d[:, i] = fresh
        d[i, i] = 0.0
        nodes[i] = joined
        order[i] = next_rank
        next_rank += 1
        d = np.delete(np.delete(d, j, axis=0), j, axis=1)
        del nodes[j]
        del order[j]

    # last three meet at one center (three-point branch lengths)
    center = tree.add_node()
    b0 = 0.5 * (d[0, 1] + d[0, 2] - d[1, 2])
    b1 = 0.5 * (d[0, 1] + d[1, 2] - d[0, 2])
    b2 = 0.5 * (d[0, 2] + d[1, 2] - d[0, 1])
    for node, length in zip(nodes, (b0, b1, b2)):
        tree.add_edge(node, center, max(length, 0.0))
    return tree


def _format_length(x: float) -> str:
    return format(x, "g")


def _render_from(tree: PhyloTree, root: int) -> str:
    def rec(node: int, parent: int) -> tuple[str, str]:
        children = [
            (peer, length)
            for peer, length in tree._adj[node].items()
            if peer != parent
        ]
        if not children:
            label = tree.labels[node]
            return label, label
        rendered = sorted(
            (rec(peer, node), length) for peer, length in children
        )
        inner = ",".join(
            f"{text}:{_format_length(length)}" for (_, text), length in rendered
        )
        min_leaf = rendered[0][0][0]
        return min_leaf, f"({inner})"

    parts = sorted(
        (rec(peer, root), length) for peer, length in tree._adj[root].items()
    )
    inner = ",".join(
        f"{text}:{_format_length(length)}" for (_, text), length in parts
    )
    return f"({inner});"


def to_newick(tree: PhyloTree) -> str:
    """Canonical Newick text for an unrooted tree.

    Children are ordered by the smallest leaf label they contain, and of
    all internal anchor nodes the one yielding the lexicographically
    smallest string wins, so isomorphic trees render identically.  A
    two-leaf tree renders as ``(A:d,B:0);`` with the smaller label
    carrying the whole edge.
    """
    leaves = tree.leaf_ids
    if len(leaves) < 2:
        raise ValueError("tree must have at least two leaves")
    if len(leaves) == 2:
        (a, b) = sorted(leaves, key=lambda n: tree.labels[n])
        length = tree._adj[a][b]
        return f"({tree.labels[a]}:{_format_length(length)},{tree.labels[b]}:0);"
    return min(_render_from(tree, root) for root in tree.internal_ids)


def from_newick(text: str) -> PhyloTree:
    """Parse Newick text into an unrooted tree.

    Degree-2 junction nodes (including a rooted input's root) are
    collapsed by summing their two incident branch lengths.
    """
    text = text.strip()
    if not text.endswith(";"):
        raise NewickError("missing terminating semicolon")
    body = text[:-1]
    tree = PhyloTree()
    pos = 0

    def parse_node() -> int:
        nonlocal pos
        if pos < len(body) and body[pos] == "(":
            pos += 1
            node = tree.add_node()
            while True:
                child, length = parse_child()
                tree.add_edge(node, child, length)
                if pos >= len(body) or body[pos] != ",":
                    break
                pos += 1
            if pos >= len(body) or body[pos] != ")":
                raise NewickError(f"expected ')' at offset {pos}")
            pos += 1
            return node
        label = parse_token()
        if not label:
            raise NewickError(f"expected a label at offset {pos}")
        return tree.add_node(label)

    def parse_child() -> tuple[int, float]:
        nonlocal pos
        node = parse_node()
        length = 0.0
        if pos < len(body) and body[pos] == ":":
            pos += 1
            token = parse_token()
            try:
                length = float(token)
            except ValueError:
                raise NewickError(f"bad branch length {token!r}") from None
        return node, length

    def parse_token() -> str:
        nonlocal pos
        start = pos
        while pos < len(body) and body[pos] not in "(),:;":
            pos += 1
        return body[start:pos].strip()

    root = parse_node()
    if pos != len(body):
        raise NewickError(f"trailing text at offset {pos}: {body[pos:]!r}")

    # suppress unifurcations left by rooted input
    changed = True
    while changed:
        changed = False
        for node in list(tree._adj):
            if node in tree.labels:
                continue
            adj = tree._adj[node]
            if len(adj) == 2:
                (a, la), (b, lb) = adj.items()
                del tree._adj[a][node]
                del tree._adj[b][node]
                del tree._adj[node]
                tree.add_edge(a, b, la + lb)
                changed = True
                break
    _ = root
    return tree


def star_distances(rtt: Mapping[str, float], server_label: str = "server") -> DistanceMatrix:
    """Distance matrix of a hub-and-spoke network from per-client RTTs.

    The hub relays everything, so the client pair distance is the sum of
    the two spoke round trips; hub-to-client distance is that client's
    round trip.
    """
    if not rtt:
        raise ValueError("need at least one client round-trip time")
    if server_label in rtt:
        raise ValueError(f"server label {server_label!r} collides with a client")
    for nick, value in rtt.items():
        if value < 0:
            raise NegativeRtt(f"round-trip time for {nick!r} is negative: {value}")
    labels = [server_label, *rtt.keys()]
    spokes = [0.0, *rtt.values()]
    n = len(labels)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                values[i, j] = spokes[i] + spokes[j]
    return DistanceMatrix(labels, values)
