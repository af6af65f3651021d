"""Return-panel ingestion and the five simulation scenarios with ground truth.

Scenario 1: independent columns, no change points.
Scenario 2: one static graph with nine edges and strong partial correlations.
Scenario 3: tridiagonal precision (1 on the diagonal, 0.5 off), one change
            point at t=70 swapping five edges (new entries 0.2, nearest-PD
            repaired).
Scenario 4: p=20, change points at 60/100/150, edges flipped with
            probability 0.4, precisions drawn from the G-Wishart.
Scenario 5: misspecified: variances quadruple at t=60, then from t=100 a
            diagonal vech-GARCH recursion (A=0.21, B=0.80) drives smooth
            change.
"""

from __future__ import annotations

import csv
import datetime
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph
from .gwishart import GWishartParams, sample_gwishart
from .rng import StreamFactory

__all__ = [
    "ReturnsPanel",
    "ScenarioSpec",
    "ScenarioTruth",
    "DataError",
    "load_returns_csv",
    "log_returns",
    "simulate_scenario",
    "nearest_pd",
    "empirical_omega",
    "write_truth",
    "read_truth",
    "write_panel_csv",
]


class DataError(ValueError):
    """Malformed input data."""


@dataclass(frozen=True)
class ReturnsPanel:
    values: np.ndarray  # T x p
    labels: tuple[str, ...]
    dates: tuple[str, ...] | None = None
    standardized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DataError("panel must be two-dimensional")
        if np.isnan(v).any():
            raise DataError("panel contains missing values")
        object.__setattr__(self, "values", v)
        if self.standardized:
            mu = v.mean(axis=0)
            sd = v.std(axis=0, ddof=1)
            if np.any(np.abs(mu) > 1e-8) or np.any(np.abs(sd - 1) > 1e-6):
                raise DataError("standardized flag set but columns are not standardized")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def _standardize(values: np.ndarray) -> np.ndarray:
    mu = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1)
    return (values - mu) / sd


def load_returns_csv(path, standardize: bool = False) -> ReturnsPanel:
    """Parse a rectangular CSV with a header row and a leading date column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DataError(f"{path}: header must have a date column plus labels")
        labels = tuple(h.strip() for h in header[1:])
        width = len(header)
        dates, rows = [], []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(
                    f"{path}: line {lineno}: expected {width} fields, got {len(row)}"
                )
            date = row[0].strip()
            if date in seen:
                raise DataError(f"{path}: line {lineno}: duplicate date {date!r}")
            seen.add(date)
            try:
                rows.append([float(x) for x in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: non-numeric cell ({exc})") from None
            dates.append(date)
    values = np.array(rows, dtype=float)
    if standardize:
        values = _standardize(values)
    return ReturnsPanel(
        values=values, labels=labels, dates=tuple(dates), standardized=standardize
    )


def write_panel_csv(panel: ReturnsPanel, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("date",) + panel.labels)
        dates = panel.dates or tuple(str(t + 1) for t in range(panel.T))
        for d, row in zip(dates, panel.values):
            writer.writerow([d] + [f"{x:.12g}" for x in row])


def log_returns(panel: ReturnsPanel) -> ReturnsPanel:
    """Weekly log returns from daily simple returns.

    Weeks are Monday-start calendar weeks of the panel's dates; a weekly log
    return is the sum of log(1 + r) over the week's days.  Boundary weeks
    shorter than their neighbouring week are dropped as partial.
    """
    if panel.dates is None:
        raise DataError("daily panel needs dates to delimit weeks")
    if np.any(panel.values <= -1.0):
        raise DataError("simple returns must exceed -1")
    parsed = [datetime.date.fromisoformat(d) for d in panel.dates]
    weeks: list[tuple[tuple[int, int], list[int]]] = []
    for i, d in enumerate(parsed):
        iso = d.isocalendar()
        key = (iso[0], iso[1])
        if weeks and weeks[-1][0] == key:
            weeks[-1][1].append(i)
        else:
            weeks.append((key, [i]))
    if len(weeks) >= 3:
        if len(weeks[0][1]) < len(weeks[1][1]):
            weeks = weeks[1:]
        if len(weeks[-1][1]) < len(weeks[-2][1]):
            weeks = weeks[:-1]
    log1p = np.log1p(panel.values)
    values = np.array([log1p[idx].sum(axis=0) for _, idx in weeks])
    dates = tuple(parsed[idx[0]].isoformat() for _, idx in weeks)
    return ReturnsPanel(values=values, labels=panel.labels, dates=dates)


# ---------------------------------------------------------------------------
# Positive-definite repair and sparsity elicitation
# ---------------------------------------------------------------------------


def nearest_pd(
    M: np.ndarray, floor: float = 1e-8, max_iter: int = 50
) -> np.ndarray:
    """Nearest symmetric positive-definite matrix (eigenvalue clipping at
    ``floor``); inputs already satisfying the floor are returned unchanged."""
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, atol=1e-10):
        raise ValueError("input must be symmetric")
    vals = np.linalg.eigvalsh(M)
    if vals.min() >= floor:
        return M
    sym = 0.5 * (M + M.T)
    for k in range(max_iter):
        vals, vecs = np.linalg.eigh(sym)
        out = (vecs * np.maximum(vals, floor)) @ vecs.T
        out = 0.5 * (out + out.T)
        try:
            np.linalg.cholesky(out)
            return out
        except np.linalg.LinAlgError:
            sym = out + floor * np.eye(M.shape[0])
    raise np.linalg.LinAlgError("nearest-PD repair did not converge")


def empirical_omega(Y: np.ndarray, threshold: float | None = None) -> float:
    """Sparsity estimate: edge count of a pooled single-graph fit divided
    by p, from thresholded partial correlations (|pc| > 2/sqrt(T));
    clipped to [0, (p-1)/2]."""
    Y = np.asarray(Y, dtype=float)
    T, p = Y.shape
    if T <= p:
        raise DataError("pooled estimate needs T > p")
    S = Y.T @ Y / T
    try:
        omega_hat = np.linalg.inv(S)
    except np.linalg.LinAlgError:
        raise DataError("singular pooled covariance") from None
    dinv = 1.0 / np.sqrt(np.diag(omega_hat))
    pcorr = -omega_hat * np.outer(dinv, dinv)
    thr = threshold if threshold is not None else 2.0 / math.sqrt(T)
    iu = np.triu_indices(p, 1)
    n_edges = int((np.abs(pcorr[iu]) > thr).sum())
    return float(np.clip(n_edges / p, 0.0, (p - 1) / 2))


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: int
    seed: int = 0
    p: int | None = None
    T: int = 200

    def __post_init__(self):
        if self.scenario not in (1, 2, 3, 4, 5):
            raise ValueError("scenario must be 1..5")
        if self.p is None:
            object.__setattr__(self, "p", 20 if self.scenario == 4 else 10)
        t_min = {1: 1, 2: 1, 3: 71, 4: 151, 5: 101}[self.scenario]
        if self.T < t_min:
            raise ValueError(
                f"scenario {self.scenario} places events up to t={t_min - 1};"
                f" T must be >= {t_min}"
            )


@dataclass(frozen=True)
class ScenarioTruth:
    scenario: int
    seed: int
    points: tuple[int, ...]
    graphs: tuple[Graph, ...]
    precisions: tuple[np.ndarray, ...]
    smooth_from: int | None = None  # scenario 5: GARCH onset
    covariance_path: np.ndarray | None = None  # scenario 5: per-time covariances


def _random_edge_set(p: int, n_edges: int, rng: np.random.Generator) -> Graph:
    pairs = [(h, k) for h in range(1, p + 1) for k in range(h + 1, p + 1)]
    idx = rng.choice(len(pairs), size=n_edges, replace=False)
    return Graph.from_edges(p, [pairs[i] for i in idx])


def _simulate_segment(
    cov: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    return rng.standard_normal((n, cov.shape[0])) @ L.T


def _scenario_2_precision(
    p: int, rng: np.random.Generator, n_edges: int = 9
) -> tuple[Graph, np.ndarray]:
    # strong-signal static graph: entries 0.5 on edges, unit diagonal;
    # resample until comfortably positive definite (keeps exact zeros)
    for _ in range(200):
        g = _random_edge_set(p, n_edges, rng)
        om = np.eye(p) + 0.5 * g.adjacency()
        if np.linalg.eigvalsh(om).min() >= 0.05:
            return g, om
    raise RuntimeError("could not build a well-conditioned scenario-2 precision")


def _scenario_3_precisions(
    p: int, rng: np.random.Generator
) -> tuple[Graph, np.ndarray, Graph, np.ndarray]:
    om0 = np.eye(p) + np.diag(np.full(p - 1, 0.5), 1) + np.diag(np.full(p - 1, 0.5), -1)
    g0 = Graph.from_edges(p, [(h, h + 1) for h in range(1, p)])
    chain_edges = sorted(g0.edges)
    removed = [chain_edges[i] for i in rng.choice(len(chain_edges), size=5, replace=False)]
    non_edges = [
        (h, k)
        for h in range(1, p + 1)
        for k in range(h + 1, p + 1)
        if not g0.has_edge(h, k)
    ]
    added = [non_edges[i] for i in rng.choice(len(non_edges), size=5, replace=False)]
    om1 = om0.copy()
    for h, k in removed:
        om1[h - 1, k - 1] = om1[k - 1, h - 1] = 0.0
    for h, k in added:
        om1[h - 1, k - 1] = om1[k - 1, h - 1] = 0.2
    om1 = nearest_pd(om1)
    g1 = Graph.from_edges(p, sorted((set(chain_edges) - set(removed)) | set(added)))
    return g0, om0, g1, om1


def simulate_scenario(spec: ScenarioSpec) -> tuple[ReturnsPanel, ScenarioTruth]:
    """Deterministic per (scenario, seed): panel plus ground truth."""
    p, T = spec.p, spec.T
    streams = StreamFactory(spec.seed).labelled(f"scenario{spec.scenario}")
    rng = streams.stream(0)
    labels = tuple(f"V{j+1}" for j in range(p))

    if spec.scenario == 1:
        Y = rng.standard_normal((T, p))
        truth = ScenarioTruth(
            1, spec.seed, (), (Graph.empty(p),), (np.eye(p),)
        )
        return ReturnsPanel(Y, labels), truth

    if spec.scenario == 2:
        g, om = _scenario_2_precision(p, rng)
        Y = _simulate_segment(np.linalg.inv(om), T, rng)
        return ReturnsPanel(Y, labels), ScenarioTruth(2, spec.seed, (), (g,), (om,))

    if spec.scenario == 3:
        g0, om0, g1, om1 = _scenario_3_precisions(p, rng)
        cp = 70
        Y = np.vstack(
            [
                _simulate_segment(np.linalg.inv(om0), cp - 1, rng),
                _simulate_segment(np.linalg.inv(om1), T - cp + 1, rng),
            ]
        )
        return ReturnsPanel(Y, labels), ScenarioTruth(
            3, spec.seed, (cp,), (g0, g1), (om0, om1)
        )

    if spec.scenario == 4:
        points = (60, 100, 150)
        graphs = [_random_edge_set(p, 11, rng)]
        n_pairs = p * (p - 1) // 2
        for _ in points:
            mask = 0
            for i in np.nonzero(rng.random(n_pairs) < 0.4)[0]:
                mask |= 1 << int(i)
            graphs.append(Graph(graphs[-1].p, graphs[-1].edge_mask ^ mask))
        params = GWishartParams(3.0, np.eye(p))
        precisions = [sample_gwishart(g, params, rng) for g in graphs]
        cuts = (1,) + points + (T + 1,)
        Y = np.vstack(
            [
                _simulate_segment(np.linalg.inv(om), b - a, rng)
                for om, (a, b) in zip(precisions, zip(cuts, cuts[1:]))
            ]
        )
        return ReturnsPanel(Y, labels), ScenarioTruth(
            4, spec.seed, points, tuple(graphs), tuple(precisions)
        )

    # scenario 5
    g = _random_edge_set(p, 21, rng)
    om = sample_gwishart(g, GWishartParams(3.0, np.eye(p)), rng)
    sigma1 = np.linalg.inv(om)
    sigma2 = 4.0 * sigma1  # standard deviations double, correlations fixed
    garch_from = 100
    cov_path = np.empty((T, p, p))
    Y = np.empty((T, p))
    cov_path[: 60 - 1] = sigma1
    Y[: 60 - 1] = _simulate_segment(sigma1, 60 - 1, rng)
    cov_path[60 - 1 : garch_from - 1] = sigma2
    Y[60 - 1 : garch_from - 1] = _simulate_segment(sigma2, garch_from - 60, rng)
    a_coef, b_coef = 0.21, 0.80
    sigma = sigma2
    for t in range(garch_from, T + 1):  # 1-based times
        prev = Y[t - 2]
        sigma = a_coef * np.outer(prev, prev) + b_coef * sigma
        cov_path[t - 1] = sigma
        L = np.linalg.cholesky(sigma)
        Y[t - 1] = L @ rng.standard_normal(p)
    truth = ScenarioTruth(
        5,
        spec.seed,
        (60,),
        (g, g),
        (om, np.linalg.inv(sigma2)),
        smooth_from=garch_from,
        covariance_path=cov_path,
    )
    return ReturnsPanel(Y, labels), truth


# ---------------------------------------------------------------------------
# Ground-truth serialization
# ---------------------------------------------------------------------------


def write_truth(truth: ScenarioTruth, path) -> None:
    doc = {
        "scenario": truth.scenario,
        "seed": truth.seed,
        "config": list(truth.points),
        "segments": [
            {
                "edges": sorted(list(e) for e in g.edges),
                "p": g.p,
                "precision": om.tolist(),
            }
            for g, om in zip(truth.graphs, truth.precisions)
        ],
    }
    if truth.smooth_from is not None:
        doc["smooth_from"] = truth.smooth_from
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def read_truth(path) -> ScenarioTruth:
    with open(path) as fh:
        doc = json.load(fh)
    graphs = tuple(
        Graph.from_edges(seg["p"], [tuple(e) for e in seg["edges"]])
        for seg in doc["segments"]
    )
    precisions = tuple(np.array(seg["precision"]) for seg in doc["segments"])
    return ScenarioTruth(
        scenario=doc["scenario"],
        seed=doc["seed"],
        points=tuple(doc["config"]),
        graphs=graphs,
        precisions=precisions,
        smooth_from=doc.get("smooth_from"),
    )
