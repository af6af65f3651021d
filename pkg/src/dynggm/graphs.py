"""Undirected labelled graphs, clique-minimal-separator decomposition, and
descriptive statistics.

Graphs are immutable.  Nodes are labelled 1..p.  Internally each node's
neighbourhood is a bitmask and the edge set is a single integer key, which
makes the operations cheap enough to sit inside the particle filter's
mutation loop and makes graphs usable as cache keys.

The decomposition produces a perfect sequence of prime components and
minimal separators (running-intersection property), computed via an
MCS-M minimal triangulation followed by merging of clique-tree edges whose
separator is not complete in the original graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "Graph",
    "PrimeDecomposition",
    "GraphMetrics",
    "flip_edge",
    "is_decomposable",
    "prime_decomposition",
    "graph_metrics",
    "write_edge_list",
    "read_edge_list",
]


def _pair_index(p: int, h: int, k: int) -> int:
    # Row-major index of the unordered pair (h, k), 1 <= h < k <= p.
    return (h - 1) * (2 * p - h) // 2 + (k - h - 1)


_PAIR_TABLES: dict[int, tuple[tuple[int, int], ...]] = {}


def _pair_table(p: int) -> tuple[tuple[int, int], ...]:
    """0-based (h, k) endpoints of every pair bit, cached per p."""
    table = _PAIR_TABLES.get(p)
    if table is None:
        table = tuple(
            (h, k) for h in range(p) for k in range(h + 1, p)
        )
        _PAIR_TABLES[p] = table
    return table


def _check_pair(p: int, h: int, k: int) -> None:
    if not (1 <= h < k <= p):
        raise IndexError(f"edge ({h},{k}) out of range for p={p}")


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes 1..p.

    ``edge_mask`` has one bit per unordered pair in row-major order; it is
    the canonical encoding used for hashing and caching.
    """

    p: int
    edge_mask: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        n_pairs = self.p * (self.p - 1) // 2
        if not 0 <= self.edge_mask < (1 << n_pairs):
            raise ValueError("edge_mask has bits outside the pair range")

    @classmethod
    def from_edges(cls, p: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        mask = 0
        for h, k in edges:
            if h > k:
                h, k = k, h
            _check_pair(p, h, k)
            mask |= 1 << _pair_index(p, h, k)
        return cls(p, mask)

    @classmethod
    def empty(cls, p: int) -> "Graph":
        return cls(p, 0)

    @classmethod
    def complete(cls, p: int) -> "Graph":
        return cls(p, (1 << (p * (p - 1) // 2)) - 1)

    @cached_property
    def neighbor_masks(self) -> tuple[int, ...]:
        """Bitmask of neighbours per node (bit i set = node i+1 adjacent)."""
        masks = [0] * self.p
        pairs = _pair_table(self.p)
        m = self.edge_mask
        while m:
            b = m & -m
            h, k = pairs[b.bit_length() - 1]
            masks[h] |= 1 << k
            masks[k] |= 1 << h
            m ^= b
        return tuple(masks)

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        out = []
        idx = 0
        for h in range(1, self.p + 1):
            for k in range(h + 1, self.p + 1):
                if (self.edge_mask >> idx) & 1:
                    out.append((h, k))
                idx += 1
        return frozenset(out)

    @property
    def n_edges(self) -> int:
        return self.edge_mask.bit_count()

    def has_edge(self, h: int, k: int) -> bool:
        if h > k:
            h, k = k, h
        _check_pair(self.p, h, k)
        return bool((self.edge_mask >> _pair_index(self.p, h, k)) & 1)

    def adjacency(self) -> np.ndarray:
        """Symmetric 0/1 adjacency matrix with zero diagonal."""
        a = np.zeros((self.p, self.p), dtype=np.int8)
        for h, k in self.edges:
            a[h - 1, k - 1] = a[k - 1, h - 1] = 1
        return a

    def degree(self, v: int) -> int:
        return self.neighbor_masks[v - 1].bit_count()

    def subgraph_is_complete(self, nodes_mask: int) -> bool:
        """True iff the induced subgraph on ``nodes_mask`` (0-based bits) is complete."""
        rem = nodes_mask
        while rem:
            b = rem & -rem
            v = b.bit_length() - 1
            rem ^= b
            if (self.neighbor_masks[v] & nodes_mask) != (nodes_mask ^ b):
                return False
        return True

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Graph(p={self.p}, edges={sorted(self.edges)})"


def flip_edge(g: Graph, h: int, k: int) -> Graph:
    """Graph differing from ``g`` exactly at the pair (h, k); an involution."""
    if h > k:
        h, k = k, h
    _check_pair(g.p, h, k)
    return Graph(g.p, g.edge_mask ^ (1 << _pair_index(g.p, h, k)))


def flip_mask(g: Graph, mask: int) -> Graph:
    """Flip every pair whose bit is set in ``mask``."""
    return Graph(g.p, g.edge_mask ^ mask)


# ---------------------------------------------------------------------------
# Chordality and decomposition
# ---------------------------------------------------------------------------


def _mcs(nodes: list[int], nbr: Sequence[int]) -> tuple[list[int], list[int], bool]:
    """Maximum cardinality search on the induced subgraph.

    Returns (selection order, per-vertex mask of earlier-selected neighbours,
    chordal flag).  Selection order reversed is a perfect elimination
    ordering when the flag is true.
    """
    allowed = 0
    for v in nodes:
        allowed |= 1 << v
    weight = {v: 0 for v in nodes}
    selected = 0
    order: list[int] = []
    earlier_masks: list[int] = []
    pos = {}
    chordal = True
    for i in range(len(nodes)):
        best, best_w = -1, -1
        for v in nodes:
            if not (selected >> v) & 1 and weight[v] > best_w:
                best, best_w = v, weight[v]
        earlier = nbr[best] & selected
        order.append(best)
        earlier_masks.append(earlier)
        pos[best] = i
        selected |= 1 << best
        rem = nbr[best] & allowed & ~selected
        while rem:
            b = rem & -rem
            weight[b.bit_length() - 1] += 1
            rem ^= b
        if earlier and chordal:
            # zero fill-in test: earlier neighbours minus the latest one must
            # all be adjacent to that latest one
            last, last_pos = -1, -1
            rem = earlier
            while rem:
                b = rem & -rem
                u = b.bit_length() - 1
                rem ^= b
                if pos[u] > last_pos:
                    last, last_pos = u, pos[u]
            if (earlier & ~(1 << last)) & ~nbr[last]:
                chordal = False
    return order, earlier_masks, chordal


def is_decomposable(g: Graph) -> bool:
    """True iff the graph is chordal (perfect elimination ordering exists)."""
    return _mcs(list(range(g.p)), g.neighbor_masks)[2]


def _mcs_m(nodes: list[int], nbr: Sequence[int]) -> tuple[dict[int, int], list[int]]:
    """MCS-M minimal triangulation of the induced subgraph.

    Returns (filled neighbour masks for the subgraph, meo), the latter being
    an elimination order (first eliminated first) perfect for the fill.
    """
    allowed = 0
    for v in nodes:
        allowed |= 1 << v
    weight = {v: 0 for v in nodes}
    unnumbered = allowed
    fill_nbr = {v: nbr[v] & allowed for v in nodes}
    meo_rev: list[int] = []
    INF = len(nodes) + 1
    for _ in range(len(nodes)):
        best, best_w = -1, -1
        for v in nodes:
            if (unnumbered >> v) & 1 and weight[v] > best_w:
                best, best_w = v, weight[v]
        x = best
        meo_rev.append(x)
        unnumbered ^= 1 << x
        # y is reached iff some x->y path through unnumbered vertices has all
        # interior weights < w(y); minmax[y] = min over paths of the maximum
        # interior weight (-1 when a direct edge exists).
        minmax = {v: INF for v in nodes}
        rem = nbr[x] & unnumbered
        while rem:
            b = rem & -rem
            minmax[b.bit_length() - 1] = -1
            rem ^= b
        changed = True
        while changed:
            changed = False
            for u in nodes:
                if not (unnumbered >> u) & 1 or minmax[u] >= INF:
                    continue
                through = max(minmax[u], weight[u])
                rem = nbr[u] & unnumbered
                while rem:
                    b = rem & -rem
                    y = b.bit_length() - 1
                    rem ^= b
                    if through < minmax[y]:
                        minmax[y] = through
                        changed = True
        for y in nodes:
            if (unnumbered >> y) & 1 and minmax[y] < weight[y]:
                weight[y] += 1
                if not (nbr[x] >> y) & 1:
                    fill_nbr[x] |= 1 << y
                    fill_nbr[y] |= 1 << x
    meo_rev.reverse()  # selection assigns numbers n..1; reverse = elimination order
    return fill_nbr, meo_rev


@dataclass(frozen=True)
class PrimeDecomposition:
    """Perfect sequence of prime components and minimal separators.

    ``separators[0]`` is empty by convention; ``separators[m]`` (m >= 1) is
    the intersection of ``components[m]`` with the union of the earlier
    components.  Node sets are stored as sorted tuples of 1-based labels
    together with bitmasks for fast slicing.
    """

    p: int
    components: tuple[tuple[int, ...], ...]
    separators: tuple[tuple[int, ...], ...]
    complete_flags: tuple[bool, ...]
    component_masks: tuple[int, ...]
    separator_masks: tuple[int, ...]

    @property
    def n_components(self) -> int:
        return len(self.components)


def _bits(mask: int) -> Iterator[int]:
    while mask:
        b = mask & -mask
        yield b.bit_length() - 1
        mask ^= b


def _component_of(start: int, allowed: int, nbr: Sequence[int]) -> int:
    """Connected component (bitmask) of ``start`` within ``allowed`` vertices."""
    comp = 1 << start
    stack = [start]
    while stack:
        u = stack.pop()
        rem = nbr[u] & allowed & ~comp
        while rem:
            b = rem & -rem
            comp |= b
            stack.append(b.bit_length() - 1)
            rem ^= b
    return comp


def _is_clique(mask: int, nbr: Sequence[int]) -> bool:
    for v in _bits(mask):
        if (nbr[v] & mask) != (mask & ~(1 << v)):
            return False
    return True


def _maximal_cliques_chordal(meo: Sequence[int], nbr) -> list[int]:
    """Maximal cliques (bitmasks) of a chordal (sub)graph from its meo.

    ``nbr`` maps a vertex to its neighbour mask within the subgraph."""
    pos = {v: i for i, v in enumerate(meo)}
    cand = []
    for i, v in enumerate(meo):
        later = 0
        rem = nbr[v]
        while rem:
            b = rem & -rem
            u = b.bit_length() - 1
            rem ^= b
            if pos[u] > i:
                later |= b
        cand.append((1 << v) | later)
    cand.sort(key=lambda m: -m.bit_count())
    out: list[int] = []
    for m in cand:
        if not any((m | q) == q for q in out):
            out.append(m)
    return out


def _clique_tree(cliques: list[int]) -> list[tuple[int, int]]:
    """Maximum-weight spanning tree on clique intersections (junction tree)."""
    r = len(cliques)
    if r <= 1:
        return []
    in_tree = {0}
    edges = []
    best = {}
    for j in range(1, r):
        best[j] = (-(cliques[0] & cliques[j]).bit_count(), 0)
    while len(in_tree) < r:
        j = min(best, key=lambda t: (best[t][0], t))
        w, i = best.pop(j)
        edges.append((i, j))
        in_tree.add(j)
        for k in list(best):
            w2 = -(cliques[j] & cliques[k]).bit_count()
            if w2 < best[k][0]:
                best[k] = (w2, j)
    return edges


def _atoms_of_connected(
    comp_mask: int, nbr: Sequence[int]
) -> list[tuple[int, int]]:
    """(atom, separator) pairs in perfect-sequence order for one connected
    component; the first pair has an empty separator."""
    nodes = list(_bits(comp_mask))
    m = len(nodes)
    if m <= 2 or _is_clique(comp_mask, nbr):
        return [(comp_mask, 0)]

    order, earlier_masks, chordal = _mcs(nodes, nbr)
    if chordal:
        # maximal cliques directly from the search; every clique-tree
        # separator is complete, so the cliques are the atoms
        cand = [(1 << v) | em for v, em in zip(order, earlier_masks)]
        cand.sort(key=lambda mm: -mm.bit_count())
        cliques: list[int] = []
        for mm in cand:
            if not any((mm | q) == q for q in cliques):
                cliques.append(mm)
        tree = _clique_tree(cliques)
        adj: list[list[tuple[int, int]]] = [[] for _ in cliques]
        for i, j in tree:
            sep = cliques[i] & cliques[j]
            adj[i].append((j, sep))
            adj[j].append((i, sep))
        out: list[tuple[int, int]] = []
        visited = [False] * len(cliques)
        stack = [(0, 0)]
        visited[0] = True
        while stack:
            node, sep = stack.pop()
            out.append((cliques[node], sep))
            for nxt, s in adj[node]:
                if not visited[nxt]:
                    visited[nxt] = True
                    stack.append((nxt, s))
        return out

    sub_nbr = {v: nbr[v] & comp_mask for v in nodes}
    fill_nbr, meo = _mcs_m(nodes, nbr)
    cliques = _maximal_cliques_chordal(meo, fill_nbr)
    tree = _clique_tree(cliques)

    # merge clique-tree edges whose separator is not complete in g; the
    # groups are the atoms, the surviving edges the clique minimal separators
    parent = list(range(len(cliques)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    kept_edges = []
    for i, j in tree:
        sep = cliques[i] & cliques[j]
        if _is_clique(sep, sub_nbr):
            kept_edges.append((i, j))
        else:
            parent[find(i)] = find(j)

    groups: dict[int, int] = {}
    for idx, c in enumerate(cliques):
        root = find(idx)
        groups[root] = groups.get(root, 0) | c
    atom_ids = {root: n for n, root in enumerate(sorted(groups))}
    atoms = [groups[root] for root in sorted(groups)]
    adj = [[] for _ in atoms]
    for i, j in kept_edges:
        a, b = atom_ids[find(i)], atom_ids[find(j)]
        sep = cliques[i] & cliques[j]
        adj[a].append((b, sep))
        adj[b].append((a, sep))

    out = []
    visited = [False] * len(atoms)
    stack = [(0, 0)]
    visited[0] = True
    while stack:
        node, sep = stack.pop()
        out.append((atoms[node], sep))
        for nxt, s in adj[node]:
            if not visited[nxt]:
                visited[nxt] = True
                stack.append((nxt, s))
    return out


def prime_decomposition(g: Graph) -> PrimeDecomposition:
    """Clique-minimal-separator decomposition as a perfect sequence.

    Connected components are decomposed independently; the separator
    between two components is the empty set.  Uses a compiled bitmask
    kernel up to 62 nodes, with the pure-Python path beyond.
    """
    p, nbr = g.p, g.neighbor_masks
    comps: list[int] = []
    seps: list[int] = []
    if p <= 62:
        from ._fastpath import decompose_masks

        comp_arr, sep_arr = decompose_masks(p, nbr)
        comps = [int(c) for c in comp_arr]
        seps = [int(s) for s in sep_arr]
    else:
        remaining = (1 << p) - 1
        while remaining:
            start = (remaining & -remaining).bit_length() - 1
            comp = _component_of(start, remaining, nbr)
            remaining ^= comp
            for atom, sep in _atoms_of_connected(comp, nbr):
                comps.append(atom)
                seps.append(sep)

    def labels(mask: int) -> tuple[int, ...]:
        return tuple(v + 1 for v in _bits(mask))

    flags = tuple(_is_clique(m, nbr) for m in comps)
    return PrimeDecomposition(
        p=p,
        components=tuple(labels(m) for m in comps),
        separators=tuple(labels(m) for m in seps),
        complete_flags=flags,
        component_masks=tuple(comps),
        separator_masks=tuple(seps),
    )


# ---------------------------------------------------------------------------
# Graph statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphMetrics:
    degree: tuple[int, ...]
    betweenness: tuple[float, ...]
    local_clustering: tuple[float, ...]
    global_clustering: float


def graph_metrics(g: Graph) -> GraphMetrics:
    """Degree, geodesic betweenness (unordered pairs), and clustering.

    Local clustering of a node with degree < 2 is 0; the global coefficient
    is the mean of the local ones.
    """
    p, nbr = g.p, g.neighbor_masks
    degree = tuple(m.bit_count() for m in nbr)

    # Brandes accumulation; undirected ordered-pair total halved at the end.
    bet = [0.0] * p
    for s in range(p):
        stack: list[int] = []
        preds: list[list[int]] = [[] for _ in range(p)]
        sigma = [0.0] * p
        dist = [-1] * p
        sigma[s] = 1.0
        dist[s] = 0
        queue = [s]
        qi = 0
        while qi < len(queue):
            v = queue[qi]
            qi += 1
            stack.append(v)
            for w in _bits(nbr[v]):
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * p
        for w in reversed(stack):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bet[w] += delta[w]
    betweenness = tuple(b / 2.0 for b in bet)

    local = []
    for v in range(p):
        d = degree[v]
        if d < 2:
            local.append(0.0)
            continue
        tri = 0
        for u in _bits(nbr[v]):
            tri += (nbr[u] & nbr[v]).bit_count()
        tri //= 2
        local.append(tri / (d * (d - 1) / 2))
    return GraphMetrics(
        degree=degree,
        betweenness=betweenness,
        local_clustering=tuple(local),
        global_clustering=float(np.mean(local)) if local else 0.0,
    )


# ---------------------------------------------------------------------------
# Serialization: first line p, then one "h k" pair per line (1-based)
# ---------------------------------------------------------------------------


def write_edge_list(g: Graph) -> str:
    lines = [str(g.p)]
    lines += [f"{h} {k}" for h, k in sorted(g.edges)]
    return "\n".join(lines) + "\n"


def read_edge_list(text: str) -> Graph:
    lines = [ln for ln in (ln.strip() for ln in text.splitlines()) if ln]
    if not lines:
        raise ValueError("empty edge-list document")
    p = int(lines[0])
    edges = []
    for ln in lines[1:]:
        h, k = map(int, ln.split())
        edges.append((h, k))
    return Graph.from_edges(p, edges)
