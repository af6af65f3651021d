"""Outer reversible-jump Metropolis-Hastings over change-point
configurations, with the inner particle filter as pseudo-marginal
likelihood.

Each iteration proposes a birth, death, global move, or local move of one
change point; birth positions are uniform on the feasible set, deaths
uniform on current points, global moves re-insert uniformly, and local
moves re-insert with exponentially decaying weight inside the merged gap.
Because the same resulting configuration can arise from either move type,
their densities are summed when computing the proposal probability.  A
proposed configuration is evaluated by a fresh preliminary tuning run plus
an estimating filter run; the stored estimate of the current state is
never recomputed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .graphs import Graph
from .gwishart import GWishartParams, MarginalEvaluator, NumericalError
from .priors import ChangePointConfig, ModelHyperparams, log_prior_config
from .rng import StreamFactory
from .smc import (
    DegenerateCloudError,
    LikelihoodEstimate,
    SmcParams,
    TemperatureLadder,
    run_particle_filter,
    tune_temperatures,
)

__all__ = [
    "MoveProbabilities",
    "ChainState",
    "TraceRecord",
    "PosteriorTrace",
    "feasible_positions",
    "event_probabilities",
    "propose",
    "mh_step",
    "run_chain",
    "write_trace",
    "read_trace",
]

BIRTH, DEATH, GLOBAL, LOCAL, STAY = "birth", "death", "global", "local", "stay"


@dataclass(frozen=True)
class MoveProbabilities:
    """Event probabilities q_B, q_D, the boundary death probability q'_D,
    and the local-move decay lambda."""

    q_b: float = 0.25
    q_d: float = 0.25
    q_d_prime: float = 0.5
    lam: float = 0.3

    def __post_init__(self):
        for name in ("q_b", "q_d", "q_d_prime"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.q_b + self.q_d >= 1.0:
            raise ValueError("q_b + q_d must be < 1")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")


@dataclass(frozen=True)
class ChainState:
    config: ChangePointConfig
    graphs: tuple[Graph, ...]
    log_lik_est: float
    log_prior: float
    ladder: TemperatureLadder


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    points: tuple[int, ...]
    kappa: int
    move: str
    accepted: bool
    log_lik_est: float


@dataclass(frozen=True)
class PosteriorTrace:
    """Kept (post burn-in, thinned) records plus run metadata."""

    records: tuple[TraceRecord, ...]
    T: int
    p: int
    hp: ModelHyperparams
    diagnostics: dict


def feasible_positions(c: ChangePointConfig) -> tuple[int, ...]:
    """Time points whose insertion keeps every segment span >= ell."""
    cuts = (1,) + c.points + (c.T + 1,)
    out = []
    for a, b in zip(cuts, cuts[1:]):
        # inserting t in (a, b) requires t - a >= ell and b - t >= ell
        lo = a + c.ell
        hi = b - c.ell
        out.extend(range(max(lo, 2), hi + 1))
    return tuple(out)


def event_probabilities(
    c: ChangePointConfig, probs: MoveProbabilities
) -> dict[str, float]:
    """The birth/death/move event table."""
    n_free = len(feasible_positions(c))
    if c.kappa == 0:
        if n_free == 0:
            return {BIRTH: 0.0, DEATH: 0.0, GLOBAL: 0.0, LOCAL: 0.0, STAY: 1.0}
        return {BIRTH: 1.0, DEATH: 0.0, GLOBAL: 0.0, LOCAL: 0.0, STAY: 0.0}
    if n_free == 0:
        p_b, p_d = 0.0, probs.q_d_prime
    else:
        p_b, p_d = probs.q_b, probs.q_d
    p_move = 0.5 * (1.0 - p_b - p_d)
    return {BIRTH: p_b, DEATH: p_d, GLOBAL: p_move, LOCAL: p_move, STAY: 0.0}


def _local_support(
    c: ChangePointConfig, removed: int
) -> tuple[int, int]:
    """Closed interval [c_l + ell, c_r - ell] around the removed point."""
    cuts = (1,) + c.points + (c.T + 1,)
    i = cuts.index(removed)
    return cuts[i - 1] + c.ell, cuts[i + 1] - c.ell


def _log_local_weight(
    c: ChangePointConfig, removed: int, newpos: int, lam: float
) -> float:
    """log of the normalized local-move density of inserting ``newpos``
    in place of ``removed``; -inf outside the support interval."""
    lo, hi = _local_support(c, removed)
    if not lo <= newpos <= hi:
        return float("-inf")
    z = sum(math.exp(-lam * abs(chi - removed)) for chi in range(lo, hi + 1))
    return -lam * abs(newpos - removed) - math.log(z)


def log_proposal_density(
    c_from: ChangePointConfig,
    c_to: ChangePointConfig,
    probs: MoveProbabilities,
) -> float:
    """log q(c_to | c_from) for configurations differing by one event.

    For move outcomes the global and local densities are summed, since the
    same configuration can be reached by either move type.
    """
    ev = event_probabilities(c_from, probs)
    from_set, to_set = set(c_from.points), set(c_to.points)
    if to_set == from_set:
        raise ValueError("proposal density for identical configurations is"
                         " handled by the caller")
    if len(to_set) == len(from_set) + 1 and from_set <= to_set:
        if ev[BIRTH] == 0.0:
            return float("-inf")
        n_free = len(feasible_positions(c_from))
        return math.log(ev[BIRTH]) - math.log(n_free)
    if len(to_set) == len(from_set) - 1 and to_set <= from_set:
        if ev[DEATH] == 0.0:
            return float("-inf")
        return math.log(ev[DEATH]) - math.log(c_from.kappa)
    if len(to_set) == len(from_set):
        diff_removed = from_set - to_set
        diff_added = to_set - from_set
        if len(diff_removed) != 1 or len(diff_added) != 1:
            raise ValueError("configurations differ by more than one move")
        removed, added = diff_removed.pop(), diff_added.pop()
        total = 0.0
        if ev[GLOBAL] > 0.0:
            reduced = c_from.with_points(from_set - {removed})
            n_free = len(feasible_positions(reduced))
            total += ev[GLOBAL] / (c_from.kappa * n_free)
        if ev[LOCAL] > 0.0:
            lw = _log_local_weight(c_from, removed, added, probs.lam)
            if lw > float("-inf"):
                total += ev[LOCAL] * math.exp(lw) / c_from.kappa
        return math.log(total) if total > 0.0 else float("-inf")
    raise ValueError("configurations differ by more than one event")


def propose(
    c: ChangePointConfig,
    probs: MoveProbabilities,
    rng: np.random.Generator,
) -> tuple[ChangePointConfig, str, float, float]:
    """Draw one event and a new configuration.

    Returns (proposal, move type, log q(c'|c), log q(c|c')).  A ``stay``
    outcome (no legal event, or a move that redraws the removed point)
    carries symmetric densities by construction.
    """
    ev = event_probabilities(c, probs)
    names = (BIRTH, DEATH, GLOBAL, LOCAL, STAY)
    weights = np.array([ev[n] for n in names])
    weights = weights / weights.sum()
    move = names[int(rng.choice(len(names), p=weights))]

    if move == STAY:
        return c, STAY, 0.0, 0.0

    if move == BIRTH:
        free = feasible_positions(c)
        newpos = int(free[int(rng.integers(len(free)))])
        c_new = c.with_points(set(c.points) | {newpos})
    elif move == DEATH:
        removed = int(c.points[int(rng.integers(c.kappa))])
        c_new = c.with_points(set(c.points) - {removed})
    else:
        removed = int(c.points[int(rng.integers(c.kappa))])
        reduced = c.with_points(set(c.points) - {removed})
        if move == GLOBAL:
            free = feasible_positions(reduced)
            newpos = int(free[int(rng.integers(len(free)))])
        else:
            lo, hi = _local_support(c, removed)
            support = np.arange(lo, hi + 1)
            w = np.exp(-probs.lam * np.abs(support - removed))
            newpos = int(rng.choice(support, p=w / w.sum()))
        c_new = reduced.with_points(set(reduced.points) | {newpos})
        if c_new.points == c.points:
            # the move redrew the same point: a no-op with symmetric density
            return c, move, 0.0, 0.0

    log_fwd = log_proposal_density(c, c_new, probs)
    log_rev = log_proposal_density(c_new, c, probs)
    return c_new, move, log_fwd, log_rev


@dataclass
class _InnerRunner:
    """Runs tuning plus the estimating filter for a proposed configuration."""

    evaluator: MarginalEvaluator
    hp: ModelHyperparams
    sp: SmcParams
    streams: StreamFactory
    inner_failures: int = 0

    def __call__(
        self, config: ChangePointConfig, chain_iter: int
    ) -> tuple[LikelihoodEstimate, list[Graph], TemperatureLadder]:
        ladder = tune_temperatures(
            self.evaluator, config, self.hp, self.sp, self.streams, chain_iter
        )
        est, seq, _ = run_particle_filter(
            self.evaluator, config, ladder, self.hp, self.sp, self.streams, chain_iter
        )
        return est, seq, ladder


def mh_step(
    state: ChainState,
    runner,
    hp: ModelHyperparams,
    probs: MoveProbabilities,
    rng: np.random.Generator,
    iteration: int,
) -> tuple[ChainState, TraceRecord]:
    """One reversible-jump step; ``runner(config, iteration)`` supplies the
    likelihood estimate and graph proposal for the proposed configuration."""
    c_new, move, log_fwd, log_rev = propose(state.config, probs, rng)

    if move == STAY:
        rec = TraceRecord(
            iteration, state.config.points, state.config.kappa, STAY, False,
            state.log_lik_est,
        )
        return state, rec

    try:
        est, seq, ladder = runner(c_new, iteration)
    except (DegenerateCloudError, NumericalError, np.linalg.LinAlgError):
        if hasattr(runner, "inner_failures"):
            runner.inner_failures += 1
        rec = TraceRecord(
            iteration, state.config.points, state.config.kappa, move, False,
            state.log_lik_est,
        )
        return state, rec

    log_prior_new = log_prior_config(c_new, hp)
    log_alpha = (
        est.log_value + log_prior_new + log_rev
    ) - (state.log_lik_est + state.log_prior + log_fwd)
    accept = log_alpha >= 0.0 or rng.random() < math.exp(log_alpha)
    if accept:
        state = ChainState(
            config=c_new,
            graphs=tuple(seq),
            log_lik_est=est.log_value,
            log_prior=log_prior_new,
            ladder=ladder,
        )
    rec = TraceRecord(
        iteration, state.config.points, state.config.kappa, move, accept,
        state.log_lik_est,
    )
    return state, rec


def run_chain(
    Y: np.ndarray,
    hp: ModelHyperparams,
    probs: MoveProbabilities,
    sp: SmcParams,
    n_iter: int,
    burn_in: int,
    thin: int,
    seed: int,
    init_points: tuple[int, ...] = (),
    n_mc: int = 1000,
    progress=None,
) -> PosteriorTrace:
    """Full pseudo-marginal chain over change-point configurations.

    The chain starts from ``init_points`` (default: no change points), keeps
    one shared marginal-likelihood cache for its entire life, and returns
    the post burn-in, thinned records together with acceptance diagnostics.
    """
    if n_iter <= burn_in:
        raise ValueError("n_iter must exceed burn_in")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    Y = np.asarray(Y, dtype=float)
    T, p = Y.shape
    if p != hp.p:
        raise ValueError("panel width disagrees with hyperparameters")

    streams = StreamFactory(seed)
    evaluator = MarginalEvaluator(
        Y, GWishartParams(hp.d, hp.D), n_mc=n_mc, streams=streams.labelled("lik")
    )
    runner = _InnerRunner(evaluator, hp, sp, streams.labelled("smc"))
    move_rng = streams.labelled("moves").stream(0)

    config0 = ChangePointConfig(T, hp.ell, tuple(sorted(init_points)))
    if not config0.is_feasible():
        raise ValueError(f"initial configuration {init_points} is infeasible")
    est0, seq0, ladder0 = runner(config0, 0)
    state = ChainState(
        config=config0,
        graphs=tuple(seq0),
        log_lik_est=est0.log_value,
        log_prior=log_prior_config(config0, hp),
        ladder=ladder0,
    )

    kept: list[TraceRecord] = []
    counts = {m: [0, 0] for m in (BIRTH, DEATH, GLOBAL, LOCAL, STAY)}
    for it in range(1, n_iter + 1):
        state, rec = mh_step(state, runner, hp, probs, move_rng, it)
        counts[rec.move][0] += 1
        counts[rec.move][1] += int(rec.accepted)
        if it > burn_in and (it - burn_in) % thin == 0:
            kept.append(rec)
        if progress is not None:
            progress(it, rec)

    diagnostics = {
        "acceptance_by_move": {
            m: (c[1] / c[0] if c[0] else float("nan")) for m, c in counts.items()
        },
        "proposals_by_move": {m: c[0] for m, c in counts.items()},
        "mc_constant_calls": evaluator.mc_calls,
        "inner_failures": runner.inner_failures,
    }
    return PosteriorTrace(
        records=tuple(kept), T=T, p=p, hp=hp, diagnostics=diagnostics
    )


# ---------------------------------------------------------------------------
# Trace persistence: newline-delimited JSON
# ---------------------------------------------------------------------------


def write_trace(trace: PosteriorTrace, path) -> None:
    with open(path, "w") as fh:
        for r in trace.records:
            fh.write(
                json.dumps(
                    {
                        "iter": r.iteration,
                        "kappa": r.kappa,
                        "points": list(r.points),
                        "move": r.move,
                        "accepted": r.accepted,
                        "loglik": r.log_lik_est,
                    }
                )
                + "\n"
            )


def read_trace(path, T: int, p: int, hp: ModelHyperparams) -> PosteriorTrace:
    records = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            records.append(
                TraceRecord(
                    iteration=d["iter"],
                    points=tuple(d["points"]),
                    kappa=d["kappa"],
                    move=d["move"],
                    accepted=d["accepted"],
                    log_lik_est=d["loglik"],
                )
            )
    return PosteriorTrace(
        records=tuple(records), T=T, p=p, hp=hp, diagnostics={}
    )
