"""G-Wishart densities: normalizing constants, conjugate segment marginal
likelihoods, and sampling of structured precision matrices.

The constant of a complete component is analytic (it is the Wishart/
hyper-Wishart constant; note the exponent of the determinant is
-(d+m-1)/2).  Non-complete prime components use a Monte-Carlo estimator
built on the Cholesky reparameterization with structural-zero completion:
free elements are chi/normal draws, non-free elements are filled in by the
zero constraints, and the weight is exp(-0.5 * sum of squared non-free
elements).  On a complete graph the weight is identically one and the
estimator reduces to the analytic constant.

``MarginalEvaluator`` memoizes marginal likelihoods at prime-component
granularity and derives the Monte-Carlo randomness from the cache key, so
a given (graph, segment) pair always evaluates to the same number within
one evaluator's lifetime -- the property that keeps the pseudo-marginal
chain's target well-defined.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, multigammaln

from .graphs import Graph, prime_decomposition
from .rng import StreamFactory

__all__ = [
    "GWishartParams",
    "SegmentStatistics",
    "LogConstant",
    "log_norm_const_complete",
    "log_norm_const_mc",
    "log_norm_const",
    "log_marginal_likelihood",
    "MarginalEvaluator",
    "sample_gwishart",
]

LOG_2PI = math.log(2.0 * math.pi)


class NumericalError(RuntimeError):
    """Raised when a numerical routine exhausts its failure budget."""


@dataclass(frozen=True)
class GWishartParams:
    """Shape d > 2 and symmetric positive-definite inverse scale D."""

    d: float
    D: np.ndarray

    def __post_init__(self):
        if self.d <= 2:
            raise ValueError("shape parameter d must exceed 2")
        D = np.asarray(self.D, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError("D must be a square matrix")
        if not np.allclose(D, D.T, atol=1e-10):
            raise ValueError("D must be symmetric")
        np.linalg.cholesky(D)  # raises LinAlgError if not PD
        object.__setattr__(self, "D", D)

    @property
    def p(self) -> int:
        return self.D.shape[0]


@dataclass(frozen=True)
class SegmentStatistics:
    """Length and scatter matrix of one data segment."""

    n: int
    H: np.ndarray

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("segment length must be non-negative")
        H = np.asarray(self.H, dtype=float)
        if not np.allclose(H, H.T, atol=1e-8):
            raise ValueError("H must be symmetric")
        object.__setattr__(self, "H", H)

    @classmethod
    def from_data(cls, Y: np.ndarray) -> "SegmentStatistics":
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return cls(n=Y.shape[0], H=Y.T @ Y)


class LogConstant(NamedTuple):
    value: float
    se: float


def _chol_logdet(M: np.ndarray) -> float:
    L = np.linalg.cholesky(M)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def log_norm_const_complete(d: float, D_sub: np.ndarray) -> float:
    """log I for a complete component: the hyper-Wishart constant
    2^{(d+m-1)m/2} Gamma_m((d+m-1)/2) |D|^{-(d+m-1)/2}.
    """
    D_sub = np.atleast_2d(D_sub)
    m = D_sub.shape[0]
    a = 0.5 * (d + m - 1)
    return a * m * math.log(2.0) + multigammaln(a, m) - a * _chol_logdet(D_sub)


def _mc_log_constant(
    d: float,
    D: np.ndarray,
    p: int,
    nbr: tuple[int, ...],
    n_mc: int,
    rng: np.random.Generator,
    max_retries: int = 5,
) -> LogConstant:
    """Core Monte-Carlo estimate; ``nbr`` are 0-based neighbour bitmasks."""
    nu = np.array([(nbr[i] >> (i + 1)).bit_count() for i in range(p)])
    n_edges = int(nu.sum())

    Sigma = np.linalg.inv(D)
    Sigma = 0.5 * (Sigma + Sigma.T)
    T = np.linalg.cholesky(Sigma).T  # upper triangular, Sigma = T' T
    t_diag = np.diag(T).copy()

    log_c = float(
        np.sum(0.5 * (d + nu) * math.log(2.0) + gammaln(0.5 * (d + nu)))
        + np.sum((d + nu) * np.log(t_diag))
        + 0.5 * n_edges * LOG_2PI
        + sum(
            math.log(t_diag[j])
            for i in range(p)
            for j in range(i + 1, p)
            if (nbr[i] >> j) & 1
        )
    )

    rows = []  # (i, free columns > i, nonfree columns > i)
    any_nonfree = False
    for i in range(p):
        free_j = [j for j in range(i + 1, p) if (nbr[i] >> j) & 1]
        nonfree_j = [j for j in range(i + 1, p) if not (nbr[i] >> j) & 1]
        rows.append((i, free_j, nonfree_j))
        any_nonfree = any_nonfree or bool(nonfree_j)
    if not any_nonfree:
        return LogConstant(log_c, 0.0)

    def draw_exponents(n: int, r: np.random.Generator) -> np.ndarray:
        psi = np.zeros((n, p, p))
        phi = np.zeros((n, p, p))
        for i in range(p):
            psi[:, i, i] = np.sqrt(r.chisquare(df=d + nu[i], size=n))
        sumsq = np.zeros(n)
        for i, free_j, nonfree_j in rows:
            row = psi[:, i, :]
            if free_j:
                row[:, free_j] = r.standard_normal((n, len(free_j)))
            if nonfree_j:
                if i > 0:
                    # cross[:, j] = sum_{r<i} phi_ri phi_rj for all j at once
                    cross = np.einsum(
                        "nr,nrj->nj", phi[:, :i, i], phi[:, :i, i + 1 :]
                    )
                for j in nonfree_j:
                    if i == 0:
                        phi_ij = 0.0
                    else:
                        phi_ij = -cross[:, j - i - 1] / (row[:, i] * t_diag[i])
                    val = (phi_ij - row[:, i:j] @ T[i:j, j]) / t_diag[j]
                    row[:, j] = val
                    sumsq += val * val
            phi[:, i, :] = row @ T
        return -0.5 * sumsq

    exponents = draw_exponents(n_mc, rng)
    for _ in range(max_retries):
        bad = ~np.isfinite(exponents)
        if not bad.any():
            break
        exponents[bad] = draw_exponents(int(bad.sum()), rng)
    else:
        raise NumericalError("degenerate Monte-Carlo draws exceeded retry budget")

    vmax = exponents.max()
    w = np.exp(exponents - vmax)
    mean_w = float(w.mean())
    log_mean = vmax + math.log(mean_w)
    if n_mc > 1:
        se = float(w.std(ddof=1) / (mean_w * math.sqrt(n_mc)))
    else:
        se = float("inf")
    return LogConstant(log_c + log_mean, se)


def log_norm_const_mc(
    g: Graph,
    params: GWishartParams,
    n_mc: int,
    rng: np.random.Generator,
    max_retries: int = 5,
) -> LogConstant:
    """Monte-Carlo estimate of log I_G(d, D) with its standard error.

    Exact (zero variance) whenever the graph is complete or has no
    non-adjacent pair reachable by the completion, e.g. p = 1.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    if params.D.shape[0] != g.p:
        raise ValueError("dimension mismatch between graph and D")
    return _mc_log_constant(
        params.d, params.D, g.p, g.neighbor_masks, n_mc, rng, max_retries
    )


def _submatrix(M: np.ndarray, nodes: tuple[int, ...]) -> np.ndarray:
    idx = np.array(nodes, dtype=int) - 1
    return M[np.ix_(idx, idx)]


def _mask_nodes(mask: int) -> tuple[int, ...]:
    out = []
    while mask:
        b = mask & -mask
        out.append(b.bit_length())
        mask ^= b
    return tuple(out)




def _induced_subgraph(g: Graph, nodes: tuple[int, ...]) -> Graph:
    relabel = {v: i + 1 for i, v in enumerate(nodes)}
    edges = [
        (relabel[h], relabel[k])
        for h, k in g.edges
        if h in relabel and k in relabel
    ]
    return Graph.from_edges(len(nodes), edges)


def log_norm_const(
    g: Graph, params: GWishartParams, n_mc: int, rng: np.random.Generator
) -> LogConstant:
    """log I_G(d, D) via the prime-component factorization.

    Complete components and all separators take the analytic path;
    non-complete prime components are estimated by Monte Carlo.
    """
    dec = prime_decomposition(g)
    total, var = 0.0, 0.0
    for nodes, flag in zip(dec.components, dec.complete_flags):
        D_sub = _submatrix(params.D, nodes)
        if flag:
            total += log_norm_const_complete(params.d, D_sub)
        else:
            sub = _induced_subgraph(g, nodes)
            est = log_norm_const_mc(sub, GWishartParams(params.d, D_sub), n_mc, rng)
            total += est.value
            var += est.se**2
    for nodes in dec.separators:
        if nodes:
            total -= log_norm_const_complete(params.d, _submatrix(params.D, nodes))
    return LogConstant(total, math.sqrt(var))


def log_marginal_likelihood(
    g: Graph,
    stats: SegmentStatistics,
    params: GWishartParams,
    n_mc: int = 1000,
    rng: np.random.Generator | None = None,
) -> float:
    """Conjugate segment marginal:
    -(n p / 2) log 2 pi + log I_G(d + n, D + H) - log I_G(d, D).
    """
    if stats.n < 1:
        raise ValueError("segment must contain at least one observation")
    rng = rng if rng is not None else np.random.default_rng(0)
    post = GWishartParams(params.d + stats.n, params.D + stats.H)
    num = log_norm_const(g, post, n_mc, rng)
    den = log_norm_const(g, params, n_mc, rng)
    return -0.5 * stats.n * g.p * LOG_2PI + num.value - den.value


# ---------------------------------------------------------------------------
# Caching evaluator used inside the particle filter
# ---------------------------------------------------------------------------


class MarginalEvaluator:
    """Segment marginal likelihoods over a fixed panel, memoized.

    Values are cached per (graph, segment) and, underneath, per
    (prime component, segment), which different graphs share.  Monte-Carlo
    constants derive their random stream from the cache key, never from the
    caller, so results are independent of evaluation order and thread
    scheduling.
    """

    def __init__(
        self,
        Y: np.ndarray,
        params: GWishartParams,
        n_mc: int = 1000,
        streams: StreamFactory | None = None,
        max_cache_entries: int = 1_000_000,
    ):
        self.Y = np.asarray(Y, dtype=float)
        if self.Y.ndim != 2:
            raise ValueError("Y must be a T x p matrix")
        self.params = params
        self.p = params.p
        if self.Y.shape[1] != self.p:
            raise ValueError("panel width disagrees with D")
        self.n_mc = n_mc
        self._streams = (streams or StreamFactory(0)).labelled("gwconst")
        self._seed_material = (
            f"{self._streams.seed}/{self._streams.label}".encode()
        )
        self._lock = threading.Lock()
        self._dec: dict[int, tuple] = {}
        self._stats: dict[tuple[int, int], SegmentStatistics] = {}
        self._marg: dict[tuple[int, int, int], float] = {}
        self._comp_prior: dict[tuple, float] = {}
        self._comp_post: dict[tuple, float] = {}
        self.mc_calls = 0
        # values are reproducible from their keys, so dropping a full cache
        # and recomputing is safe; the cap bounds long-run memory
        self._max_entries = max_cache_entries
        self.cache_evictions = 0
        # scalar D lets complete-component prior constants collapse by size
        diag = float(params.D[0, 0]) if params.p else 1.0
        self._scalar_d = (
            diag if np.allclose(params.D, diag * np.eye(params.p), atol=1e-12) else None
        )

    def _mc_seed(self, *key: int) -> int:
        import hashlib

        digest = hashlib.blake2b(
            self._seed_material + repr(key).encode(), digest_size=4
        ).digest()
        return int.from_bytes(digest, "little")

    # -- helpers -----------------------------------------------------------

    def segment_stats(self, start: int, end: int) -> SegmentStatistics:
        """Scatter statistics of observations t in [start, end), 1-based."""
        key = (start, end)
        st = self._stats.get(key)
        if st is None:
            block = self.Y[start - 1 : end - 1]
            st = SegmentStatistics(n=block.shape[0], H=block.T @ block)
            with self._lock:
                self._stats.setdefault(key, st)
        return st

    def decomposition(self, g: Graph):
        """(component masks, separator masks, complete flags), cached."""
        dec = self._dec.get(g.edge_mask)
        if dec is None:
            if g.p <= 62:
                from ._fastpath import decompose_masks

                comp_arr, sep_arr = decompose_masks(g.p, g.neighbor_masks)
                comps = tuple(int(c) for c in comp_arr)
                seps = tuple(int(s) for s in sep_arr)
            else:
                full = prime_decomposition(g)
                comps = full.component_masks
                seps = full.separator_masks
            flags = tuple(g.subgraph_is_complete(c) for c in comps)
            dec = (comps, seps, flags)
            with self._lock:
                self._dec.setdefault(g.edge_mask, dec)
        return dec

    def _complete_term(self, mask: int, start: int, end: int) -> float:
        """Posterior-minus-prior constant of a complete component/separator."""
        d, D = self.params.d, self.params.D
        kp = ("c", mask.bit_count()) if self._scalar_d is not None else ("c", mask)
        prior = self._comp_prior.get(kp)
        if prior is None:
            nodes = _mask_nodes(mask)
            prior = log_norm_const_complete(d, _submatrix(D, nodes))
            with self._lock:
                self._comp_prior.setdefault(kp, prior)
        ks = (mask, start, end)
        post = self._comp_post.get(ks)
        if post is None:
            st = self.segment_stats(start, end)
            nodes = _mask_nodes(mask)
            post = log_norm_const_complete(d + st.n, _submatrix(D + st.H, nodes))
            with self._lock:
                self._comp_post.setdefault(ks, post)
        return post - prior

    def _mc_term(self, g: Graph, mask: int, start: int, end: int) -> float:
        # local structure: sub-neighbour masks and the induced edge bitmask
        nodes = _mask_nodes(mask)
        m = len(nodes)
        nbr_full = g.neighbor_masks
        local = {v: i for i, v in enumerate(nodes)}
        sub_nbr = [0] * m
        for a, v in enumerate(nodes):
            rem = nbr_full[v - 1] & mask
            row = 0
            while rem:
                b = rem & -rem
                row |= 1 << local[b.bit_length()]
                rem ^= b
            sub_nbr[a] = row
        sub_mask = 0
        bit = 0
        for a in range(m):
            for b in range(a + 1, m):
                if (sub_nbr[a] >> b) & 1:
                    sub_mask |= 1 << bit
                bit += 1

        d, D = self.params.d, self.params.D
        if self._scalar_d is not None:
            # structure determines the prior constant when D is scalar
            kp = ("m", m, sub_mask)
        else:
            kp = ("m", mask, sub_mask)
        ks = ("m", mask, sub_mask, start, end)
        prior = self._comp_prior.get(kp)
        post = self._comp_post.get(ks)
        if prior is None or post is None:
            adj = np.zeros((m, m), dtype=bool)
            for a in range(m):
                rem = sub_nbr[a]
                while rem:
                    b = rem & -rem
                    adj[a, b.bit_length() - 1] = True
                    rem ^= b
            nu = np.array([(sub_nbr[i] >> (i + 1)).bit_count() for i in range(m)])
            if prior is None:
                prior = self._run_mc(
                    d,
                    self._scalar_d * np.eye(m)
                    if self._scalar_d is not None
                    else _submatrix(D, nodes),
                    nu,
                    adj,
                    (1, m, sub_mask)
                    if self._scalar_d is not None
                    else (2, mask, sub_mask),
                )
                with self._lock:
                    self._comp_prior.setdefault(kp, prior)
            if post is None:
                st = self.segment_stats(start, end)
                post = self._run_mc(
                    d + st.n,
                    _submatrix(D + st.H, nodes),
                    nu,
                    adj,
                    (3, mask, sub_mask, start, end),
                )
                with self._lock:
                    self._comp_post.setdefault(ks, post)
        return post - prior

    def _run_mc(self, d, D_sub, nu, adj, key) -> float:
        from ._fastpath import mc_weight_logmean_jit

        nu_arr = np.asarray(nu, dtype=np.int64)
        d_plus = d + nu_arr
        Sigma = np.linalg.inv(D_sub)
        T = np.ascontiguousarray(np.linalg.cholesky(0.5 * (Sigma + Sigma.T)).T)
        t_diag = np.ascontiguousarray(np.diag(T))
        log_t = np.log(t_diag)
        n_edges = int(nu_arr.sum())
        # sum of log t_jj over edges (j = larger endpoint) via column degrees
        col_counts = np.array(
            [int(adj[:j, j].sum()) for j in range(adj.shape[0])]
        )
        log_c = float(
            np.sum(0.5 * d_plus * math.log(2.0) + gammaln(0.5 * d_plus))
            + np.sum(d_plus * log_t)
            + 0.5 * n_edges * LOG_2PI
            + np.sum(col_counts * log_t)
        )
        factor = mc_weight_logmean_jit(
            np.uint32(self._mc_seed(*key)),
            float(d),
            T,
            t_diag,
            nu_arr,
            adj,
            self.n_mc,
        )
        self.mc_calls += 1
        if not math.isfinite(factor):
            raise NumericalError("degenerate Monte-Carlo completion draws")
        return log_c + factor

    # -- public ------------------------------------------------------------

    def log_marginal(self, g: Graph, start: int, end: int) -> float:
        """log P(Y_{start:end-1} | G), cached and reproducible per key."""
        key = (g.edge_mask, start, end)
        val = self._marg.get(key)
        if val is not None:
            return val
        comps, seps, flags = self.decomposition(g)
        n = end - start
        total = -0.5 * n * self.p * LOG_2PI
        for mask, flag in zip(comps, flags):
            if flag:
                total += self._complete_term(mask, start, end)
            else:
                total += self._mc_term(g, mask, start, end)
        for mask in seps:
            if mask:
                total -= self._complete_term(mask, start, end)
        with self._lock:
            if len(self._marg) >= self._max_entries:
                self._marg.clear()
                self.cache_evictions += 1
            if len(self._dec) >= self._max_entries:
                self._dec.clear()
                self.cache_evictions += 1
            if len(self._comp_post) >= self._max_entries:
                self._comp_post.clear()
                self.cache_evictions += 1
            if len(self._comp_prior) >= self._max_entries:
                self._comp_prior.clear()
                self.cache_evictions += 1
            self._marg.setdefault(key, total)
        return total


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _wishart(nu: float, scale_chol: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bartlett draw from Wishart(nu, scale) given chol(scale) lower."""
    m = scale_chol.shape[0]
    A = np.zeros((m, m))
    A[np.diag_indices(m)] = np.sqrt(rng.chisquare(df=nu - np.arange(m)))
    if m > 1:
        rows, cols = np.tril_indices(m, -1)
        A[rows, cols] = rng.standard_normal(len(rows))
    LA = scale_chol @ A
    return LA @ LA.T


def _bron_kerbosch(g: Graph) -> list[tuple[int, ...]]:
    """Maximal cliques (1-based node tuples)."""
    nbr = g.neighbor_masks
    out: list[int] = []

    def expand(r: int, cand: int, excl: int) -> None:
        if not cand and not excl:
            out.append(r)
            return
        pivot_pool = cand | excl
        pivot = (pivot_pool & -pivot_pool).bit_length() - 1
        best = pivot
        best_cnt = (cand & nbr[pivot]).bit_count()
        rem = pivot_pool
        while rem:
            b = rem & -rem
            v = b.bit_length() - 1
            rem ^= b
            c = (cand & nbr[v]).bit_count()
            if c > best_cnt:
                best, best_cnt = v, c
        ext = cand & ~nbr[best]
        while ext:
            b = ext & -ext
            v = b.bit_length() - 1
            ext ^= b
            expand(r | b, cand & nbr[v], excl & nbr[v])
            cand &= ~b
            excl |= b

    expand(0, (1 << g.p) - 1, 0)
    cliques = []
    for mask in out:
        nodes = []
        rem = mask
        while rem:
            b = rem & -rem
            nodes.append(b.bit_length())
            rem ^= b
        cliques.append(tuple(nodes))
    return cliques


def _pad(p: int, nodes: tuple[int, ...], block: np.ndarray) -> np.ndarray:
    out = np.zeros((p, p))
    idx = np.array(nodes, dtype=int) - 1
    out[np.ix_(idx, idx)] = block
    return out


def _sample_decomposable(
    g: Graph, params: GWishartParams, rng: np.random.Generator
) -> np.ndarray:
    """Exact draw for a decomposable graph by sequential clique composition."""
    dec = prime_decomposition(g)
    d, D = params.d, params.D
    omega = np.zeros((g.p, g.p))
    sigma_blocks: list[np.ndarray] = []  # per component, over its nodes

    for m, (nodes, sep) in enumerate(zip(dec.components, dec.separators)):
        c = len(nodes)
        nu = d + c - 1
        D_c = _submatrix(D, nodes)
        if not sep:
            W = _wishart(nu, np.linalg.cholesky(np.linalg.inv(D_c)), rng)
            omega += _pad(g.p, nodes, W)
            sigma_blocks.append(np.linalg.inv(W))
            continue
        # locate parent component containing the separator
        parent = next(
            i for i in range(m) if set(sep) <= set(dec.components[i])
        )
        parent_nodes = dec.components[parent]
        pos = [parent_nodes.index(v) for v in sep]
        sig_ss = sigma_blocks[parent][np.ix_(pos, pos)]

        s_idx = [nodes.index(v) for v in sep]
        r_idx = [i for i in range(c) if i not in s_idx]
        psi_ss = D_c[np.ix_(s_idx, s_idx)]
        psi_rr = D_c[np.ix_(r_idx, r_idx)]
        psi_rs = D_c[np.ix_(r_idx, s_idx)]
        psi_ss_inv = np.linalg.inv(psi_ss)
        psi_cond = psi_rr - psi_rs @ psi_ss_inv @ psi_rs.T

        W = _wishart(nu, np.linalg.cholesky(np.linalg.inv(psi_cond)), rng)
        sig_cond = np.linalg.inv(W)
        Z = rng.standard_normal((len(r_idx), len(s_idx)))
        B = (
            psi_rs @ psi_ss_inv
            + np.linalg.cholesky(sig_cond) @ Z @ np.linalg.cholesky(psi_ss_inv).T
        )

        # clique precision, ordered (sep..., rest...) then mapped back
        k_rr = W
        k_rs = -k_rr @ B
        sig_ss_inv = np.linalg.inv(sig_ss)
        k_ss = sig_ss_inv + B.T @ k_rr @ B
        K = np.zeros((c, c))
        K[np.ix_(r_idx, r_idx)] = k_rr
        K[np.ix_(r_idx, s_idx)] = k_rs
        K[np.ix_(s_idx, r_idx)] = k_rs.T
        K[np.ix_(s_idx, s_idx)] = k_ss
        omega += _pad(g.p, nodes, K)
        omega -= _pad(g.p, sep, sig_ss_inv)

        sig_c = np.zeros((c, c))
        sig_c[np.ix_(s_idx, s_idx)] = sig_ss
        sig_c[np.ix_(r_idx, s_idx)] = B @ sig_ss
        sig_c[np.ix_(s_idx, r_idx)] = (B @ sig_ss).T
        sig_c[np.ix_(r_idx, r_idx)] = sig_cond + B @ sig_ss @ B.T
        sigma_blocks.append(sig_c)
    return omega


def sample_gwishart(
    g: Graph,
    params: GWishartParams,
    rng: np.random.Generator,
    gibbs_burn_in: int = 100,
) -> np.ndarray:
    """Draw a precision matrix from W_G(d, D).

    Decomposable graphs (including complete and empty) are sampled exactly;
    non-decomposable graphs use a block Gibbs sweep over maximal cliques
    with ``gibbs_burn_in`` warm-up sweeps.  Structural zeros hold exactly.
    """
    dec = prime_decomposition(g)
    if all(dec.complete_flags):
        return _sample_decomposable(g, params, rng)

    d, D = params.d, params.D
    p = g.p
    cliques = _bron_kerbosch(g)
    chols = {
        cl: np.linalg.cholesky(np.linalg.inv(_submatrix(D, cl))) for cl in cliques
    }
    omega = np.eye(p)
    all_idx = np.arange(p)
    for _ in range(gibbs_burn_in + 1):
        for cl in cliques:
            idx = np.array(cl, dtype=int) - 1
            rest = np.setdiff1d(all_idx, idx, assume_unique=True)
            A = _wishart(d + len(cl) - 1, chols[cl], rng)
            if rest.size:
                cross = omega[np.ix_(idx, rest)]
                shift = cross @ np.linalg.solve(omega[np.ix_(rest, rest)], cross.T)
                shift = 0.5 * (shift + shift.T)  # solve() asymmetry compounds
            else:
                shift = 0.0
            omega[np.ix_(idx, idx)] = A + shift
    return omega
