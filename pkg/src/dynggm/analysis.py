"""Posterior summaries: change-point distributions, credible sets,
conditional graph refits with edge inclusion probabilities, Bayesian FDR
edge selection, precision/covariance estimates, predictive bands, and
evaluation against simulation ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import Graph
from .gwishart import (
    GWishartParams,
    MarginalEvaluator,
    SegmentStatistics,
    sample_gwishart,
)
from .pmcmc import PosteriorTrace
from .priors import ChangePointConfig, ModelHyperparams
from .rng import StreamFactory
from .smc import SmcParams, run_particle_filter, tune_temperatures

__all__ = [
    "map_config",
    "marginal_cp_probability",
    "kappa_distribution",
    "credible_set_cp",
    "edge_ppi",
    "fdr_threshold",
    "precision_posterior",
    "posterior_predictive",
    "evaluate_vs_truth",
]


def map_config(trace: PosteriorTrace) -> tuple[tuple[int, ...], float]:
    """Most-visited configuration and its relative frequency; ties broken by
    smaller kappa, then lexicographic order."""
    if not trace.records:
        raise ValueError("empty trace")
    counts: dict[tuple[int, ...], int] = {}
    for rec in trace.records:
        counts[rec.points] = counts.get(rec.points, 0) + 1
    best = min(counts, key=lambda pts: (-counts[pts], len(pts), pts))
    return best, counts[best] / len(trace.records)


def marginal_cp_probability(trace: PosteriorTrace) -> np.ndarray:
    """Per-time-point posterior probability of being a change point.

    Entry t-1 corresponds to time t (entry 0, time 1, is always zero)."""
    out = np.zeros(trace.T)
    for rec in trace.records:
        for t in rec.points:
            out[t - 1] += 1
    return out / len(trace.records)


def kappa_distribution(trace: PosteriorTrace) -> dict[int, float]:
    out: dict[int, float] = {}
    for rec in trace.records:
        out[rec.kappa] = out.get(rec.kappa, 0) + 1
    return {k: v / len(trace.records) for k, v in sorted(out.items())}


def credible_set_cp(
    trace: PosteriorTrace, level: float
) -> list[tuple[int, int]]:
    """Smallest credible set per ordered change point, conditional on the
    modal kappa; each reported as the [min, max] of the set."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    kappas = kappa_distribution(trace)
    kappa_star = max(kappas, key=lambda k: (kappas[k], -k))
    if kappa_star == 0:
        return []
    cond = [r for r in trace.records if r.kappa == kappa_star]
    intervals = []
    for j in range(kappa_star):
        counts: dict[int, int] = {}
        for rec in cond:
            t = rec.points[j]
            counts[t] = counts.get(t, 0) + 1
        total = sum(counts.values())
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        mass, taken = 0.0, []
        for t, n in ordered:
            taken.append(t)
            mass += n / total
            if mass >= level:
                break
        intervals.append((min(taken), max(taken)))
    return intervals


@dataclass(frozen=True)
class EdgePPI:
    """Per-segment symmetric matrices of posterior edge inclusion
    probabilities (zero diagonal)."""

    matrices: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        """Upper-triangle entries of every segment, concatenated."""
        out = []
        for m in self.matrices:
            iu = np.triu_indices(m.shape[0], 1)
            out.append(m[iu])
        return np.concatenate(out) if out else np.array([])


def edge_ppi(
    Y: np.ndarray,
    points: tuple[int, ...],
    hp: ModelHyperparams,
    sp: SmcParams,
    seed: int,
    n_mc: int = 1000,
) -> EdgePPI:
    """Conditional refit: one high-N filter run at the fixed configuration;
    PPIs are weight-averaged edge indicators of the terminal cloud's
    genealogies (the smoothed per-segment graph posteriors)."""
    Y = np.asarray(Y, dtype=float)
    T, p = Y.shape
    config = ChangePointConfig(T, hp.ell, tuple(sorted(points)))
    if not config.is_feasible():
        raise ValueError("configuration is infeasible")
    streams = StreamFactory(seed)
    ev = MarginalEvaluator(
        Y, GWishartParams(hp.d, hp.D), n_mc=n_mc, streams=streams.labelled("lik")
    )
    smc_streams = streams.labelled("refit")
    ladder = tune_temperatures(ev, config, hp, sp, smc_streams, 0)
    _, _, cloud = run_particle_filter(ev, config, ladder, hp, sp, smc_streams, 0)

    lw = cloud.log_weights - cloud.log_weights.max()
    w = np.exp(lw)
    w /= w.sum()
    mats = []
    for j in range(config.kappa + 1):
        acc = np.zeros((p, p))
        for n, path in enumerate(cloud.paths):
            acc += w[n] * path[j].adjacency()
        mats.append(acc)
    return EdgePPI(tuple(mats))


def fdr_threshold(
    ppi_values: np.ndarray, alpha: float
) -> tuple[float, np.ndarray]:
    """Smallest threshold t with mean(1 - PPI) over {PPI >= t} <= alpha.

    Returns (threshold, boolean selection mask); when even the largest PPI
    fails the rule, the selection is empty and the threshold is above 1.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    ppi = np.asarray(ppi_values, dtype=float)
    best = None
    for t in sorted(np.unique(ppi))[::-1]:
        sel = ppi >= t
        if np.mean(1.0 - ppi[sel]) <= alpha:
            best = t
        else:
            break
    if best is None:
        return float("inf"), np.zeros_like(ppi, dtype=bool)
    return float(best), ppi >= best


def precision_posterior(
    Y: np.ndarray,
    points: tuple[int, ...],
    graphs: list[Graph],
    hp: ModelHyperparams,
    n_draws: int,
    seed: int,
) -> dict:
    """Monte-Carlo posterior means of precision, covariance, and correlation
    per segment, conditional on fixed graphs (conjugate update d+n, D+H)."""
    Y = np.asarray(Y, dtype=float)
    T, p = Y.shape
    config = ChangePointConfig(T, hp.ell, tuple(sorted(points)))
    segs = config.segments()
    if len(graphs) != len(segs):
        raise ValueError("one graph per segment required")
    streams = StreamFactory(seed).labelled("precpost")
    precisions, covariances, correlations = [], [], []
    for j, ((start, end), g) in enumerate(zip(segs, graphs)):
        block = Y[start - 1 : end - 1]
        stats = SegmentStatistics.from_data(block)
        post = GWishartParams(hp.d + stats.n, hp.D + stats.H)
        acc_prec = np.zeros((p, p))
        acc_cov = np.zeros((p, p))
        rng = streams.stream(j)
        for _ in range(n_draws):
            om = sample_gwishart(g, post, rng)
            acc_prec += om
            acc_cov += np.linalg.inv(om)
        prec = acc_prec / n_draws
        cov = acc_cov / n_draws
        sd = np.sqrt(np.diag(cov))
        corr = cov / np.outer(sd, sd)
        np.fill_diagonal(corr, 1.0)
        precisions.append(prec)
        covariances.append(cov)
        correlations.append(corr)
    return {
        "precision": precisions,
        "covariance": covariances,
        "correlation": correlations,
    }


def posterior_predictive(
    T: int,
    p: int,
    points: tuple[int, ...],
    covariances: list[np.ndarray],
    n_rep: int,
    seed: int,
    levels: tuple[float, ...] = (0.90, 0.95),
) -> dict[float, tuple[np.ndarray, np.ndarray]]:
    """Predictive bands conditional on per-segment covariance matrices.

    Returns, per level, (lower, upper) arrays of shape (T, p) holding the
    pointwise credible envelope of replicated panels.
    """
    config = ChangePointConfig(T, 1, tuple(sorted(points)))
    segs = config.segments()
    if len(covariances) != len(segs):
        raise ValueError("one covariance per segment required")
    rng = StreamFactory(seed).labelled("predictive").stream(0)
    sims = np.empty((n_rep, T, p))
    for (start, end), cov in zip(segs, covariances):
        L = np.linalg.cholesky(cov)
        z = rng.standard_normal((n_rep, end - start, p))
        sims[:, start - 1 : end - 1, :] = z @ L.T
    bands = {}
    for level in levels:
        lo = np.quantile(sims, 0.5 * (1 - level), axis=0)
        hi = np.quantile(sims, 1 - 0.5 * (1 - level), axis=0)
        bands[level] = (lo, hi)
    return bands


def predictive_bands_from_graphs(
    Y: np.ndarray,
    points: tuple[int, ...],
    graphs: list[Graph],
    hp: ModelHyperparams,
    n_rep: int,
    seed: int,
    levels: tuple[float, ...] = (0.90, 0.95),
) -> dict[float, tuple[np.ndarray, np.ndarray]]:
    """Predictive bands conditional on graphs: each replicate draws a fresh
    precision from the conjugate posterior before simulating the panel."""
    Y = np.asarray(Y, dtype=float)
    T, p = Y.shape
    config = ChangePointConfig(T, hp.ell, tuple(sorted(points)))
    segs = config.segments()
    streams = StreamFactory(seed).labelled("predictive-g")
    sims = np.empty((n_rep, T, p))
    for j, ((start, end), g) in enumerate(zip(segs, graphs)):
        stats = SegmentStatistics.from_data(Y[start - 1 : end - 1])
        post = GWishartParams(hp.d + stats.n, hp.D + stats.H)
        rng = streams.stream(j)
        for r in range(n_rep):
            om = sample_gwishart(g, post, rng)
            L = np.linalg.cholesky(np.linalg.inv(om))
            z = rng.standard_normal((end - start, p))
            sims[r, start - 1 : end - 1, :] = z @ L.T
    bands = {}
    for level in levels:
        lo = np.quantile(sims, 0.5 * (1 - level), axis=0)
        hi = np.quantile(sims, 1 - 0.5 * (1 - level), axis=0)
        bands[level] = (lo, hi)
    return bands


def predictive_bands_from_changepoints(
    Y: np.ndarray,
    points: tuple[int, ...],
    hp: ModelHyperparams,
    sp: SmcParams,
    n_rep: int,
    seed: int,
    levels: tuple[float, ...] = (0.90, 0.95),
    n_mc: int = 1000,
) -> dict[float, tuple[np.ndarray, np.ndarray]]:
    """Predictive bands conditional on the change points only: replicates
    draw a graph sequence from a conditional filter's terminal cloud, then a
    precision per segment from its conjugate posterior."""
    Y = np.asarray(Y, dtype=float)
    T, p = Y.shape
    config = ChangePointConfig(T, hp.ell, tuple(sorted(points)))
    streams = StreamFactory(seed)
    ev = MarginalEvaluator(
        Y, GWishartParams(hp.d, hp.D), n_mc=n_mc, streams=streams.labelled("lik")
    )
    smc_streams = streams.labelled("cp-refit")
    ladder = tune_temperatures(ev, config, hp, sp, smc_streams, 0)
    _, _, cloud = run_particle_filter(ev, config, ladder, hp, sp, smc_streams, 0)
    lw = cloud.log_weights - cloud.log_weights.max()
    w = np.exp(lw)
    w /= w.sum()

    segs = config.segments()
    stats = [SegmentStatistics.from_data(Y[a - 1 : b - 1]) for a, b in segs]
    rng = streams.labelled("cp-predictive").stream(0)
    sims = np.empty((n_rep, T, p))
    for r in range(n_rep):
        path = cloud.paths[int(rng.choice(len(w), p=w))]
        for (a, b), st, g in zip(segs, stats, path):
            post = GWishartParams(hp.d + st.n, hp.D + st.H)
            om = sample_gwishart(g, post, rng)
            L = np.linalg.cholesky(np.linalg.inv(om))
            sims[r, a - 1 : b - 1, :] = rng.standard_normal((b - a, p)) @ L.T
    bands = {}
    for level in levels:
        lo = np.quantile(sims, 0.5 * (1 - level), axis=0)
        hi = np.quantile(sims, 1 - 0.5 * (1 - level), axis=0)
        bands[level] = (lo, hi)
    return bands


def evaluate_vs_truth(
    ppi: EdgePPI,
    est_points: tuple[int, ...],
    true_graphs: list[Graph],
    true_points: tuple[int, ...],
    grid_step: float = 0.01,
) -> dict:
    """FPR/TPR curves over a threshold grid, trapezoid AUC, and change-point
    recovery summaries.  Estimated segments are matched to true segments by
    order; a count mismatch is aligned up to the shorter length and flagged.
    """
    n_est, n_true = len(ppi.matrices), len(true_graphs)
    mismatch = n_est != n_true
    n_seg = min(n_est, n_true)

    ppi_vals, truth_vals = [], []
    for j in range(n_seg):
        m = ppi.matrices[j]
        a = true_graphs[j].adjacency().astype(bool)
        iu = np.triu_indices(m.shape[0], 1)
        ppi_vals.append(m[iu])
        truth_vals.append(a[iu])
    ppi_flat = np.concatenate(ppi_vals)
    truth_flat = np.concatenate(truth_vals)

    thresholds = np.arange(0.0, 1.0 + 1e-9, grid_step)
    fpr, tpr = [], []
    pos = truth_flat.sum()
    neg = (~truth_flat).sum()
    for t in thresholds:
        sel = ppi_flat >= t
        tp = (sel & truth_flat).sum()
        fp = (sel & ~truth_flat).sum()
        tpr.append(tp / pos if pos else 0.0)
        fpr.append(fp / neg if neg else 0.0)
    fpr_arr, tpr_arr = np.array(fpr), np.array(tpr)
    order = np.argsort(fpr_arr, kind="stable")
    auc = float(np.trapezoid(tpr_arr[order], fpr_arr[order]))

    cp_summary = []
    for j in range(min(len(est_points), len(true_points))):
        cp_summary.append(
            {
                "true": int(true_points[j]),
                "estimated": int(est_points[j]),
                "abs_error": abs(int(est_points[j]) - int(true_points[j])),
            }
        )
    return {
        "thresholds": thresholds,
        "fpr": fpr_arr,
        "tpr": tpr_arr,
        "auc": auc,
        "segment_count_mismatch": mismatch,
        "kappa_true": len(true_points),
        "kappa_estimated": len(est_points),
        "changepoints": cp_summary,
    }
