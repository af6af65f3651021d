"""Compiled kernels for the evaluator's hot loop.

The Monte-Carlo constant kernel re-implements the Cholesky-completion
estimator with scalar loops under numba; it seeds numba's thread-local
generator at entry, so a call's draws depend only on its seed argument and
results are reproducible under any thread scheduling.  The numpy
implementation in ``gwishart`` remains the reference; the two are
cross-checked in the test suite.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["mc_exponent_moments", "mc_weight_logmean_jit", "decompose_masks"]


@njit(cache=True, nogil=True)
def mc_weight_logmean_jit(seed, d, T, t_diag, nu, adj, n_mc):
    """log of the mean completion weight (the Monte-Carlo factor of the
    normalizing constant); nan on degeneracy.  T is chol-upper of inv(D)."""
    m = T.shape[0]
    np.random.seed(seed)
    psi = np.zeros((m, m))
    phi = np.zeros((m, m))
    vmax = -1e300
    exps = np.empty(n_mc)
    for k in range(n_mc):
        sumsq = 0.0
        for i in range(m):
            psi[i, i] = np.sqrt(2.0 * np.random.gamma(0.5 * (d + nu[i]), 1.0))
            for j in range(i + 1, m):
                if adj[i, j]:
                    psi[i, j] = np.random.standard_normal()
        for i in range(m):
            for j in range(i + 1, m):
                if not adj[i, j]:
                    if i == 0:
                        phi_ij = 0.0
                    else:
                        c = 0.0
                        for r in range(i):
                            c += phi[r, i] * phi[r, j]
                        phi_ij = -c / (psi[i, i] * t_diag[i])
                    s = 0.0
                    for l in range(i, j):
                        s += psi[i, l] * T[l, j]
                    val = (phi_ij - s) / t_diag[j]
                    psi[i, j] = val
                    sumsq += val * val
            for j in range(i, m):
                s = 0.0
                for l in range(i, j + 1):
                    s += psi[i, l] * T[l, j]
                phi[i, j] = s
        e = -0.5 * sumsq
        exps[k] = e
        if e > vmax:
            vmax = e
    acc = 0.0
    for k in range(n_mc):
        acc += math.exp(exps[k] - vmax)
    mean_w = acc / n_mc
    if not math.isfinite(mean_w) or mean_w <= 0.0:
        return math.nan
    return vmax + math.log(mean_w)


@njit(cache=True, nogil=True)
def _mc_kernel(seed, d, T, t_diag, nu, adj, n_mc):
    np.random.seed(seed)
    m = T.shape[0]
    psi = np.zeros((m, m))
    phi = np.zeros((m, m))
    exps = np.empty(n_mc)
    for k in range(n_mc):
        sumsq = 0.0
        for i in range(m):
            psi[i, i] = np.sqrt(2.0 * np.random.gamma(0.5 * (d + nu[i]), 1.0))
            for j in range(i + 1, m):
                if adj[i, j]:
                    psi[i, j] = np.random.standard_normal()
        for i in range(m):
            for j in range(i + 1, m):
                if not adj[i, j]:
                    if i == 0:
                        phi_ij = 0.0
                    else:
                        c = 0.0
                        for r in range(i):
                            c += phi[r, i] * phi[r, j]
                        phi_ij = -c / (psi[i, i] * t_diag[i])
                    s = 0.0
                    for l in range(i, j):
                        s += psi[i, l] * T[l, j]
                    val = (phi_ij - s) / t_diag[j]
                    psi[i, j] = val
                    sumsq += val * val
            for j in range(i, m):
                s = 0.0
                for l in range(i, j + 1):
                    s += psi[i, l] * T[l, j]
                phi[i, j] = s
        exps[k] = -0.5 * sumsq
    return exps


def mc_exponent_moments(
    seed: int,
    d: float,
    T: np.ndarray,
    t_diag: np.ndarray,
    nu: np.ndarray,
    adj: np.ndarray,
    n_mc: int,
) -> np.ndarray:
    """Exponents of the completion weights; seeded, thread-safe."""
    return _mc_kernel(
        np.uint32(seed & 0xFFFFFFFF),
        float(d),
        T,
        t_diag,
        nu.astype(np.int64),
        adj.astype(np.bool_),
        n_mc,
    )


# ---------------------------------------------------------------------------
# Clique-minimal-separator decomposition on int64 bitmasks (p <= 63)
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _pop(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@njit(cache=True, nogil=True)
def _lsb_index(x):
    i = 0
    while not (x >> i) & 1:
        i += 1
    return i


@njit(cache=True, nogil=True)
def _is_clique_mask(mask, nbr):
    rem = mask
    while rem:
        v = _lsb_index(rem)
        rem &= rem - 1
        if (nbr[v] & mask) != (mask ^ (1 << v)):
            return False
    return True


@njit(cache=True, nogil=True)
def _clique_tree_edges(cliques, r, tree_a, tree_b):
    """Maximum-weight spanning tree (Prim); fills tree_a/tree_b, returns count."""
    if r <= 1:
        return 0
    in_tree = np.zeros(r, dtype=np.bool_)
    best_w = np.full(r, -1, dtype=np.int64)
    best_i = np.zeros(r, dtype=np.int64)
    in_tree[0] = True
    for j in range(1, r):
        best_w[j] = _pop(cliques[0] & cliques[j])
        best_i[j] = 0
    n_edges = 0
    for _ in range(r - 1):
        j_sel = -1
        w_sel = -1
        for j in range(r):
            if not in_tree[j] and best_w[j] > w_sel:
                w_sel = best_w[j]
                j_sel = j
        in_tree[j_sel] = True
        tree_a[n_edges] = best_i[j_sel]
        tree_b[n_edges] = j_sel
        n_edges += 1
        for k in range(r):
            if not in_tree[k]:
                w = _pop(cliques[j_sel] & cliques[k])
                if w > best_w[k]:
                    best_w[k] = w
                    best_i[k] = j_sel
    return n_edges


@njit(cache=True, nogil=True)
def _emit_tree(atoms, n_atoms, adj_a, adj_b, adj_sep, n_adj, out_comps, out_seps, n_out):
    """DFS over the atom tree appending (atom, separator) in perfect order."""
    visited = np.zeros(n_atoms, dtype=np.bool_)
    stack_node = np.empty(n_atoms, dtype=np.int64)
    stack_sep = np.empty(n_atoms, dtype=np.int64)
    top = 0
    stack_node[top] = 0
    stack_sep[top] = 0
    top += 1
    visited[0] = True
    while top > 0:
        top -= 1
        node = stack_node[top]
        sep = stack_sep[top]
        out_comps[n_out] = atoms[node]
        out_seps[n_out] = sep
        n_out += 1
        for e in range(n_adj):
            nxt = -1
            if adj_a[e] == node:
                nxt = adj_b[e]
            elif adj_b[e] == node:
                nxt = adj_a[e]
            if nxt >= 0 and not visited[nxt]:
                visited[nxt] = True
                stack_node[top] = nxt
                stack_sep[top] = adj_sep[e]
                top += 1
    return n_out


@njit(cache=True, nogil=True)
def _decompose_jit(p, nbr):
    """Perfect sequence of (atom mask, separator mask) pairs."""
    out_comps = np.zeros(p, dtype=np.int64)
    out_seps = np.zeros(p, dtype=np.int64)
    n_out = 0

    weight = np.zeros(p, dtype=np.int64)
    pos = np.zeros(p, dtype=np.int64)
    order = np.zeros(p, dtype=np.int64)
    earlier = np.zeros(p, dtype=np.int64)
    fill = np.zeros(p, dtype=np.int64)
    minmax = np.zeros(p, dtype=np.int64)
    cliques = np.zeros(p, dtype=np.int64)
    tree_a = np.zeros(p, dtype=np.int64)
    tree_b = np.zeros(p, dtype=np.int64)
    parent = np.zeros(p, dtype=np.int64)
    atoms = np.zeros(p, dtype=np.int64)
    adj_a = np.zeros(p, dtype=np.int64)
    adj_b = np.zeros(p, dtype=np.int64)
    adj_sep = np.zeros(p, dtype=np.int64)

    remaining = np.int64((1 << p) - 1)
    while remaining:
        # connected component of the lowest remaining vertex
        start = _lsb_index(remaining)
        comp = np.int64(1 << start)
        frontier = comp
        while frontier:
            v = _lsb_index(frontier)
            frontier &= frontier - 1
            add = nbr[v] & remaining & ~comp
            comp |= add
            frontier |= add
        remaining &= ~comp
        m = _pop(comp)

        if m <= 2 or _is_clique_mask(comp, nbr):
            out_comps[n_out] = comp
            out_seps[n_out] = 0
            n_out += 1
            continue

        # --- MCS over the component, with chordality check
        rem = comp
        while rem:
            v = _lsb_index(rem)
            rem &= rem - 1
            weight[v] = 0
        selected = np.int64(0)
        chordal = True
        for i in range(m):
            best = -1
            best_w = np.int64(-1)
            rem = comp & ~selected
            while rem:
                v = _lsb_index(rem)
                rem &= rem - 1
                if weight[v] > best_w:
                    best = v
                    best_w = weight[v]
            e_mask = nbr[best] & selected
            order[i] = best
            earlier[i] = e_mask
            pos[best] = i
            selected |= np.int64(1) << best
            rem = nbr[best] & comp & ~selected
            while rem:
                v = _lsb_index(rem)
                rem &= rem - 1
                weight[v] += 1
            if e_mask and chordal:
                last = -1
                last_pos = -1
                rem = e_mask
                while rem:
                    u = _lsb_index(rem)
                    rem &= rem - 1
                    if pos[u] > last_pos:
                        last = u
                        last_pos = pos[u]
                if (e_mask & ~(np.int64(1) << last)) & ~nbr[last]:
                    chordal = False

        if chordal:
            # maximal cliques directly; every separator is complete
            r = 0
            for i in range(m):
                cand = (np.int64(1) << order[i]) | earlier[i]
                keep = True
                for q in range(r):
                    if (cand | cliques[q]) == cliques[q]:
                        keep = False
                        break
                if keep:
                    # drop any previously kept clique contained in cand
                    w = 0
                    for q in range(r):
                        if (cliques[q] | cand) != cand:
                            cliques[w] = cliques[q]
                            w += 1
                    r = w
                    cliques[r] = cand
                    r += 1
            n_tree = _clique_tree_edges(cliques[:r], r, tree_a, tree_b)
            for e in range(n_tree):
                adj_a[e] = tree_a[e]
                adj_b[e] = tree_b[e]
                adj_sep[e] = cliques[tree_a[e]] & cliques[tree_b[e]]
            n_out = _emit_tree(
                cliques[:r], r, adj_a, adj_b, adj_sep, n_tree,
                out_comps, out_seps, n_out,
            )
            continue

        # --- MCS-M minimal triangulation of the component
        rem = comp
        while rem:
            v = _lsb_index(rem)
            rem &= rem - 1
            weight[v] = 0
            fill[v] = nbr[v] & comp
        unnumbered = comp
        INF = np.int64(m + 1)
        for step in range(m):
            best = -1
            best_w = np.int64(-1)
            rem = unnumbered
            while rem:
                v = _lsb_index(rem)
                rem &= rem - 1
                if weight[v] > best_w:
                    best = v
                    best_w = weight[v]
            x = best
            order[m - 1 - step] = x  # meo: first eliminated at index 0
            unnumbered &= ~(np.int64(1) << x)
            rem = unnumbered
            while rem:
                v = _lsb_index(rem)
                rem &= rem - 1
                minmax[v] = INF
            rem = nbr[x] & unnumbered
            while rem:
                v = _lsb_index(rem)
                rem &= rem - 1
                minmax[v] = -1
            changed = True
            while changed:
                changed = False
                rem = unnumbered
                while rem:
                    u = _lsb_index(rem)
                    rem &= rem - 1
                    if minmax[u] >= INF:
                        continue
                    through = minmax[u] if minmax[u] > weight[u] else weight[u]
                    rem2 = nbr[u] & unnumbered
                    while rem2:
                        y = _lsb_index(rem2)
                        rem2 &= rem2 - 1
                        if through < minmax[y]:
                            minmax[y] = through
                            changed = True
            rem = unnumbered
            while rem:
                y = _lsb_index(rem)
                rem &= rem - 1
                if minmax[y] < weight[y]:
                    weight[y] += 1
                    if not (nbr[x] >> y) & 1:
                        fill[x] |= np.int64(1) << y
                        fill[y] |= np.int64(1) << x

        # maximal cliques of the triangulation from the meo
        for i in range(m):
            pos[order[i]] = i
        r = 0
        for i in range(m):
            v = order[i]
            later = np.int64(0)
            rem = fill[v]
            while rem:
                u = _lsb_index(rem)
                rem &= rem - 1
                if pos[u] > i:
                    later |= np.int64(1) << u
            cand = (np.int64(1) << v) | later
            keep = True
            for q in range(r):
                if (cand | cliques[q]) == cliques[q]:
                    keep = False
                    break
            if keep:
                w = 0
                for q in range(r):
                    if (cliques[q] | cand) != cand:
                        cliques[w] = cliques[q]
                        w += 1
                r = w
                cliques[r] = cand
                r += 1
        n_tree = _clique_tree_edges(cliques[:r], r, tree_a, tree_b)

        # merge across separators that are not complete in the original graph
        for q in range(r):
            parent[q] = q
        kept = 0
        for e in range(n_tree):
            i = tree_a[e]
            j = tree_b[e]
            sep = cliques[i] & cliques[j]
            if _is_clique_mask(sep, nbr):
                tree_a[kept] = i
                tree_b[kept] = j
                adj_sep[kept] = sep
                kept += 1
            else:
                ri = i
                while parent[ri] != ri:
                    ri = parent[ri]
                rj = j
                while parent[rj] != rj:
                    rj = parent[rj]
                parent[ri] = rj

        n_atoms = 0
        group_id = np.full(r, -1, dtype=np.int64)
        for q in range(r):
            root = q
            while parent[root] != root:
                root = parent[root]
            if group_id[root] < 0:
                group_id[root] = n_atoms
                atoms[n_atoms] = 0
                n_atoms += 1
            atoms[group_id[root]] |= cliques[q]
        # remap kept edges to atom ids
        for e in range(kept):
            ra = tree_a[e]
            while parent[ra] != ra:
                ra = parent[ra]
            rb = tree_b[e]
            while parent[rb] != rb:
                rb = parent[rb]
            adj_a[e] = group_id[ra]
            adj_b[e] = group_id[rb]
        n_out = _emit_tree(
            atoms[:n_atoms], n_atoms, adj_a, adj_b, adj_sep, kept,
            out_comps, out_seps, n_out,
        )

    return out_comps[:n_out], out_seps[:n_out]


def decompose_masks(p: int, neighbor_masks) -> tuple[np.ndarray, np.ndarray]:
    """Perfect-sequence (component, separator) bitmask arrays, p <= 63."""
    nbr = np.array(neighbor_masks, dtype=np.int64)
    return _decompose_jit(p, nbr)
