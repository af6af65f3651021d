"""Inner particle filter with adaptive tempering, dynamic resampling, and
Metropolis-Hastings mutations.

A preliminary, independent filter run determines each segment's temperature
ladder by solving ESS(phi) = epsilon * N with bisection (the preliminary
run resamples and mutates at every interior temperature, per its published
accounting).  The estimating filter then reuses the ladder verbatim: it
accumulates cumulative importance weights across stages and segments,
folds the mean weight into the likelihood estimate exactly when resampling
triggers (strictly ESS < epsilon * N), and adds the final mean weight at
the end.  The returned graph sequence is drawn proportionally to terminal
weights, with its genealogy recorded through every resampling.

All randomness comes from streams keyed by (chain iteration, segment,
temperature step, particle index), so estimates are bit-reproducible
regardless of thread scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph, flip_mask
from .gwishart import MarginalEvaluator
from .priors import (
    ChangePointConfig,
    ModelHyperparams,
    log_graph_initial_prior,
    log_graph_transition_prior,
)
from .rng import StreamFactory

__all__ = [
    "SmcParams",
    "TemperatureLadder",
    "LikelihoodEstimate",
    "ParticleCloud",
    "DegenerateCloudError",
    "ess",
    "solve_next_temperature",
    "multinomial_resample",
    "mutate",
    "tune_temperatures",
    "run_particle_filter",
    "write_diagnostics_csv",
]


def write_diagnostics_csv(diagnostics: list[dict], path) -> None:
    """Persist a filter run's per-stage diagnostics stream
    (segment, temperature, ESS, resampled flag, mutation acceptance)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "phi", "ess", "resampled", "mutation_acceptance"])
        for row in diagnostics:
            writer.writerow(
                [
                    row["segment"],
                    f"{row['phi']:.8g}",
                    f"{row['ess']:.6g}",
                    int(row["resampled"]),
                    f"{row['mutation_acceptance']:.6g}",
                ]
            )


class DegenerateCloudError(RuntimeError):
    """All particle weights vanished."""


class LadderMismatchError(ValueError):
    """Ladder does not match the configuration's segment count."""


@dataclass(frozen=True)
class SmcParams:
    """Tuning constants of the inner filter."""

    N: int = 200
    M: int = 10
    epsilon: float = 0.5
    s0: float | None = None  # default: 1/p expected single flip
    threads: int = 1

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.M < 0:
            raise ValueError("M must be >= 0")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")

    def flip_rate(self, p: int) -> float:
        s0 = self.s0 if self.s0 is not None else 1.0 / p
        return 2.0 * s0 / (p - 1) if p > 1 else 0.0


@dataclass(frozen=True)
class TemperatureLadder:
    """Interior temperatures per segment (strictly between 0 and 1)."""

    ladders: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        for lad in self.ladders:
            if any(not 0.0 < t < 1.0 for t in lad):
                raise ValueError("interior temperatures must lie in (0, 1)")
            if list(lad) != sorted(lad):
                raise ValueError("temperatures must increase")

    @property
    def n_segments(self) -> int:
        return len(self.ladders)


@dataclass(frozen=True)
class LikelihoodEstimate:
    """Unbiased log-likelihood estimate and per-segment factor bookkeeping."""

    log_value: float
    segment_factors: tuple[float, ...]


@dataclass
class ParticleCloud:
    """Terminal state of one filter run, including genealogy."""

    particles: list[Graph]
    log_weights: np.ndarray
    paths: list[tuple[Graph, ...]]  # per particle: graphs of completed segments
    parent_events: list[tuple[int, int, np.ndarray]]
    segment_index: int


def ess(log_weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2 computed stably from log weights."""
    lw = np.asarray(log_weights, dtype=float)
    finite = lw[np.isfinite(lw)]
    if finite.size == 0:
        raise DegenerateCloudError("all log-weights are -inf")
    m = finite.max()
    w = np.exp(finite - m)
    s1 = w.sum()
    s2 = (w * w).sum()
    return float(s1 * s1 / s2)


def _log_mean_exp(lw: np.ndarray) -> float:
    m = float(np.max(lw))
    if not np.isfinite(m):
        raise DegenerateCloudError("all log-weights are -inf")
    return m + math.log(float(np.mean(np.exp(lw - m))))


def solve_next_temperature(
    log_likelihoods: np.ndarray,
    phi_prev: float,
    epsilon: float,
    N: int,
    tol_phi: float = 1e-6,
    tol_ess: float = 1e-3,
) -> float | None:
    """Largest phi <= 1 with ESS(phi) >= epsilon N, from uniform weights at
    phi_prev.  Returns 1.0 when no tempering is needed, None when the ladder
    is already complete.
    """
    if phi_prev >= 1.0:
        return None
    ll = np.asarray(log_likelihoods, dtype=float)
    target = epsilon * N

    def ess_at(phi: float) -> float:
        return ess((phi - phi_prev) * ll)

    if ess_at(1.0) >= target:
        return 1.0
    lo, hi = phi_prev, 1.0
    ess_lo = float(N)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        e = ess_at(mid)
        assert e <= ess_lo + 1e-9 * N, "ESS must be non-increasing in phi"
        if e >= target:
            lo, ess_lo = mid, e
        else:
            hi = mid
        if hi - lo < tol_phi and abs(e - target) <= tol_ess * N:
            return mid
    return 0.5 * (lo + hi)


def multinomial_resample(
    log_weights: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Offspring ancestor indices drawn i.i.d. from the normalized weights."""
    lw = np.asarray(log_weights, dtype=float)
    n = lw.size
    m = float(np.max(lw))
    if not np.isfinite(m):
        raise DegenerateCloudError("cannot resample a degenerate cloud")
    w = np.exp(lw - m)
    return rng.choice(n, size=n, p=w / w.sum())


def _log_prior_term(
    g: Graph, g_prev: Graph | None, hp: ModelHyperparams
) -> float:
    if g_prev is None:
        return log_graph_initial_prior(g, hp)
    return log_graph_transition_prior(g, g_prev, hp)


def mutate(
    g: Graph,
    g_prev: Graph | None,
    segment: tuple[int, int],
    phi: float,
    hp: ModelHyperparams,
    M: int,
    s0: float,
    rng: np.random.Generator,
    evaluator: MarginalEvaluator,
) -> tuple[Graph, int]:
    """M Metropolis-Hastings steps invariant for
    [P(Y_seg | G)]^phi * P(G | G_prev).

    The proposal flips each edge independently with probability 2 s0/(p-1)
    (symmetric), so the acceptance ratio is the tempered likelihood ratio
    times the prior ratio.  Returns the final graph and the acceptance count.
    """
    p = g.p
    if p < 2 or M == 0:
        return g, 0
    q = 2.0 * s0 / (p - 1)
    n_pairs = p * (p - 1) // 2
    start, end = segment
    cur_ll = evaluator.log_marginal(g, start, end)
    cur_prior = _log_prior_term(g, g_prev, hp)
    accepted = 0
    for _ in range(M):
        flips = np.nonzero(rng.random(n_pairs) < q)[0]
        if flips.size == 0:
            continue
        mask = 0
        for i in flips:
            mask |= 1 << int(i)
        g_new = flip_mask(g, mask)
        new_prior = _log_prior_term(g_new, g_prev, hp)
        if new_prior == float("-inf"):
            continue
        new_ll = evaluator.log_marginal(g_new, start, end)
        log_r = phi * (new_ll - cur_ll) + (new_prior - cur_prior)
        if log_r >= 0.0 or rng.random() < math.exp(log_r):
            g, cur_ll, cur_prior = g_new, new_ll, new_prior
            accepted += 1
    return g, accepted


def _init_cloud(
    N: int, p: int, hp: ModelHyperparams, rng: np.random.Generator
) -> list[Graph]:
    """N i.i.d. draws from the initial edge prior, one shared stream."""
    n_pairs = p * (p - 1) // 2
    if n_pairs == 0:
        return [Graph.empty(p)] * N
    draws = rng.random((N, n_pairs)) < hp.edge_prob
    out = []
    for n in range(N):
        mask = 0
        for i in np.nonzero(draws[n])[0]:
            mask |= 1 << int(i)
        out.append(Graph(p, mask))
    return out


def _transition_cloud(
    prev: list[Graph], hp: ModelHyperparams, rng: np.random.Generator
) -> list[Graph]:
    """Edge-flip transitions of every particle, one shared stream."""
    p = prev[0].p
    n_pairs = p * (p - 1) // 2
    if n_pairs == 0:
        return list(prev)
    draws = rng.random((len(prev), n_pairs)) < hp.flip_prob
    out = []
    for g, row in zip(prev, draws):
        mask = 0
        for i in np.nonzero(row)[0]:
            mask |= 1 << int(i)
        out.append(flip_mask(g, mask))
    return out


def _map_particles(fn, n: int, threads: int):
    if threads <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(n)))


def tune_temperatures(
    evaluator: MarginalEvaluator,
    config: ChangePointConfig,
    hp: ModelHyperparams,
    sp: SmcParams,
    streams: StreamFactory,
    chain_iter: int = 0,
) -> TemperatureLadder:
    """Preliminary, independent filter run that fixes the temperature
    ladder subsequently reused verbatim by the estimating filter."""
    segs = config.segments()
    p = hp.p
    N = sp.N
    s0 = sp.s0 if sp.s0 is not None else 1.0 / p
    init_s = streams.labelled("tune-init")
    res_s = streams.labelled("tune-res")
    mut_s = streams.labelled("tune-mut")

    particles: list[Graph] = []
    prev_terminal: list[Graph | None] = [None] * N
    ladders: list[tuple[float, ...]] = []
    for j, (start, end) in enumerate(segs):
        if j == 0:
            particles = _init_cloud(N, p, hp, init_s.stream(chain_iter, j))
        else:
            particles = _transition_cloud(
                prev_terminal, hp, init_s.stream(chain_iter, j)
            )
        loglik = np.array(
            _map_particles(
                lambda n: evaluator.log_marginal(particles[n], start, end),
                N,
                sp.threads,
            )
        )
        temps: list[float] = []
        phi_prev = 0.0
        s = 1
        while True:
            phi = solve_next_temperature(loglik, phi_prev, sp.epsilon, N)
            if phi is None or phi >= 1.0:
                break
            temps.append(phi)
            inc = (phi - phi_prev) * loglik
            idx = multinomial_resample(inc, res_s.stream(chain_iter, j, s))
            particles = [particles[i] for i in idx]
            prev_terminal = [prev_terminal[i] for i in idx]

            def step(n: int):
                return mutate(
                    particles[n],
                    prev_terminal[n],
                    (start, end),
                    phi,
                    hp,
                    sp.M,
                    s0,
                    mut_s.stream(chain_iter, j, s, n),
                    evaluator,
                )

            moved = _map_particles(step, N, sp.threads)
            particles = [g for g, _ in moved]
            loglik = np.array(
                _map_particles(
                    lambda n: evaluator.log_marginal(particles[n], start, end),
                    N,
                    sp.threads,
                )
            )
            phi_prev = phi
            s += 1
        ladders.append(tuple(temps))
        prev_terminal = list(particles)
    return TemperatureLadder(tuple(ladders))


def run_particle_filter(
    evaluator: MarginalEvaluator,
    config: ChangePointConfig,
    ladder: TemperatureLadder,
    hp: ModelHyperparams,
    sp: SmcParams,
    streams: StreamFactory,
    chain_iter: int = 0,
    diagnostics: list | None = None,
) -> tuple[LikelihoodEstimate, list[Graph], ParticleCloud]:
    """Estimating filter: positive unbiased likelihood estimate plus one
    graph sequence drawn from the terminal cloud with its genealogy."""
    segs = config.segments()
    if ladder.n_segments != len(segs):
        raise LadderMismatchError(
            f"ladder has {ladder.n_segments} segments, config has {len(segs)}"
        )
    p = hp.p
    N = sp.N
    s0 = sp.s0 if sp.s0 is not None else 1.0 / p
    init_s = streams.labelled("est-init")
    res_s = streams.labelled("est-res")
    mut_s = streams.labelled("est-mut")
    gen_s = streams.labelled("est-gen")

    lw = np.zeros(N)
    log_est = 0.0
    factors = [0.0] * len(segs)
    particles: list[Graph] = []
    prev_terminal: list[Graph | None] = [None] * N
    paths: list[tuple[Graph, ...]] = [()] * N
    parent_events: list[tuple[int, int, np.ndarray]] = []

    for j, (start, end) in enumerate(segs):
        if j == 0:
            particles = _init_cloud(N, p, hp, init_s.stream(chain_iter, j))
        else:
            particles = _transition_cloud(
                prev_terminal, hp, init_s.stream(chain_iter, j)
            )
        loglik = np.array(
            _map_particles(
                lambda n: evaluator.log_marginal(particles[n], start, end),
                N,
                sp.threads,
            )
        )
        temps = list(ladder.ladders[j]) + [1.0]
        phi_prev = 0.0
        for s, phi in enumerate(temps, start=1):
            lw = lw + (phi - phi_prev) * loglik
            cloud_ess = ess(lw)
            acc_count = 0
            resampled = cloud_ess < sp.epsilon * N
            if resampled:
                factor = _log_mean_exp(lw)
                log_est += factor
                factors[j] += factor
                idx = multinomial_resample(lw, res_s.stream(chain_iter, j, s))
                parent_events.append((j, s, idx))
                particles = [particles[i] for i in idx]
                prev_terminal = [prev_terminal[i] for i in idx]
                paths = [paths[i] for i in idx]
                loglik = loglik[idx]

                def step(n: int):
                    return mutate(
                        particles[n],
                        prev_terminal[n],
                        (start, end),
                        phi,
                        hp,
                        sp.M,
                        s0,
                        mut_s.stream(chain_iter, j, s, n),
                        evaluator,
                    )

                moved = _map_particles(step, N, sp.threads)
                particles = [g for g, _ in moved]
                acc_count = sum(a for _, a in moved)
                loglik = np.array(
                    _map_particles(
                        lambda n: evaluator.log_marginal(particles[n], start, end),
                        N,
                        sp.threads,
                    )
                )
                lw = np.zeros(N)
            if diagnostics is not None:
                diagnostics.append(
                    {
                        "segment": j,
                        "phi": phi,
                        "ess": cloud_ess,
                        "resampled": resampled,
                        "mutation_acceptance": (
                            acc_count / (N * sp.M) if resampled and sp.M else float("nan")
                        ),
                    }
                )
            phi_prev = phi
        paths = [paths[n] + (particles[n],) for n in range(N)]
        prev_terminal = list(particles)

    final_factor = _log_mean_exp(lw)
    log_est += final_factor
    factors[-1] += final_factor

    m = float(np.max(lw))
    w = np.exp(lw - m)
    probs = w / w.sum()
    star = int(gen_s.stream(chain_iter).choice(N, p=probs))
    sequence = list(paths[star])

    estimate = LikelihoodEstimate(log_value=log_est, segment_factors=tuple(factors))
    cloud = ParticleCloud(
        particles=particles,
        log_weights=lw.copy(),
        paths=paths,
        parent_events=parent_events,
        segment_index=len(segs) - 1,
    )
    return estimate, sequence, cloud
