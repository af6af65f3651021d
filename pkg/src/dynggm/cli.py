"""Command-line front end: simulate -> fit -> summarize -> evaluate, plus
predictive checks, driven by a TOML run configuration.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.  Every command resolves its effective configuration (file values
overridden by flags, "auto" rules applied) and writes it next to the
outputs, so a run can be reproduced from its own artefacts.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .analysis import (
    EdgePPI,
    credible_set_cp,
    edge_ppi,
    evaluate_vs_truth,
    fdr_threshold,
    kappa_distribution,
    map_config,
    marginal_cp_probability,
    posterior_predictive,
    precision_posterior,
    predictive_bands_from_changepoints,
    predictive_bands_from_graphs,
)
from .datasim import (
    DataError,
    ReturnsPanel,
    ScenarioSpec,
    empirical_omega,
    load_returns_csv,
    read_truth,
    simulate_scenario,
    write_panel_csv,
    write_truth,
)
from .graphs import Graph, graph_metrics
from .gwishart import NumericalError
from .pmcmc import MoveProbabilities, read_trace, run_chain, write_trace
from .priors import ModelHyperparams
from .smc import DegenerateCloudError, SmcParams

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration."""

    # data
    data_path: str | None = None
    scenario: int | None = None
    scenario_seed: int = 0
    T: int = 200
    standardize: bool = False
    # hyperparameters ("auto" resolved at load time against the panel)
    omega: float | str = "auto"
    z: float = 0.1
    p0: float = 0.1
    ell: int | str = "auto"
    d: float = 3.0
    d_scale: float = 1.0  # D = d_scale * identity
    # sampler
    n_particles: int = 200
    n_mutations: int = 10
    epsilon: float = 0.5
    s0: float | str = "auto"
    n_iter: int = 10_000
    burn_in: int = 2_000
    thin: int = 1
    seed: int = 1
    q_b: float = 0.25
    q_d: float = 0.25
    q_d_prime: float = 0.5
    lam: float = 0.3
    threads: int = 1
    n_mc: int = 100
    init_points: tuple[int, ...] = ()
    # refit
    refit_particles: int = 1_000
    refit_mutations: int = 20
    # posterior post-processing
    fdr_alpha: float = 0.05
    ppi_threshold: float = 0.8
    edge_rule: str = "fdr"  # "fdr" or "threshold"
    n_precision_draws: int = 500
    n_predictive: int = 2_000
    # output
    out_dir: str = "runs/out"

    def validate(self) -> None:
        if self.scenario is None and self.data_path is None:
            raise ConfigError("either a scenario or a data path is required")
        if not 0.0 < self.p0 < 1.0:
            raise ConfigError("p0 must lie in (0, 1)")
        if self.n_iter <= self.burn_in:
            raise ConfigError("n_iter must exceed burn_in")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        for name in ("q_b", "q_d", "q_d_prime"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if self.q_b + self.q_d >= 1.0:
            raise ConfigError("q_b + q_d must be < 1")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in (0, 1]")
        if self.edge_rule not in ("fdr", "threshold"):
            raise ConfigError("edge_rule must be 'fdr' or 'threshold'")
        if isinstance(self.omega, str) and self.omega != "auto":
            raise ConfigError("omega must be a number or 'auto'")
        if isinstance(self.ell, str) and self.ell != "auto":
            raise ConfigError("ell must be an integer or 'auto'")
        if isinstance(self.s0, str) and self.s0 != "auto":
            raise ConfigError("s0 must be a number or 'auto'")


_SECTIONS = {
    "data": {
        "path": "data_path",
        "scenario": "scenario",
        "seed": "scenario_seed",
        "T": "T",
        "standardize": "standardize",
    },
    "hyper": {
        "omega": "omega",
        "z": "z",
        "p0": "p0",
        "ell": "ell",
        "d": "d",
        "d_scale": "d_scale",
    },
    "sampler": {
        "n_particles": "n_particles",
        "n_mutations": "n_mutations",
        "epsilon": "epsilon",
        "s0": "s0",
        "n_iter": "n_iter",
        "burn_in": "burn_in",
        "thin": "thin",
        "seed": "seed",
        "q_b": "q_b",
        "q_d": "q_d",
        "q_d_prime": "q_d_prime",
        "lambda": "lam",
        "threads": "threads",
        "n_mc": "n_mc",
        "init_points": "init_points",
    },
    "refit": {
        "n_particles": "refit_particles",
        "n_mutations": "refit_mutations",
    },
    "posterior": {
        "fdr_alpha": "fdr_alpha",
        "ppi_threshold": "ppi_threshold",
        "edge_rule": "edge_rule",
        "n_precision_draws": "n_precision_draws",
        "n_predictive": "n_predictive",
    },
    "output": {"dir": "out_dir"},
}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    values: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from None
        for section, mapping in _SECTIONS.items():
            for key, val in doc.get(section, {}).items():
                if key not in mapping:
                    raise ConfigError(f"unknown key [{section}] {key}")
                values[mapping[key]] = val
        for section in doc:
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "init_points" in values:
        values["init_points"] = tuple(int(t) for t in values["init_points"])
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return json.dumps(str(v))


def write_effective_config(cfg: RunConfig, path: Path) -> None:
    lines = []
    flat = asdict(cfg)
    for section, mapping in _SECTIONS.items():
        pairs = [
            (key, flat[attr])
            for key, attr in mapping.items()
            if flat[attr] is not None
        ]
        if not pairs:
            continue
        lines.append(f"[{section}]")
        lines += [f"{key} = {_toml_value(val)}" for key, val in pairs]
        lines.append("")
    path.write_text("\n".join(lines))


def _load_panel(cfg: RunConfig) -> ReturnsPanel:
    if cfg.data_path is not None:
        try:
            return load_returns_csv(cfg.data_path, standardize=cfg.standardize)
        except FileNotFoundError:
            raise DataError(f"data file not found: {cfg.data_path}") from None
    panel, _ = simulate_scenario(
        ScenarioSpec(cfg.scenario, seed=cfg.scenario_seed, T=cfg.T)
    )
    return panel


def resolve_model(cfg: RunConfig, panel: ReturnsPanel) -> tuple[RunConfig, ModelHyperparams]:
    """Apply the auto rules (omega from the pooled fit, ell = p + 2,
    s0 = 1/p) and build the model hyperparameters."""
    p = panel.p
    omega = cfg.omega
    if omega == "auto":
        omega = empirical_omega(panel.values)
    ell = cfg.ell
    if ell == "auto":
        ell = p + 2
    s0 = cfg.s0
    if s0 == "auto":
        s0 = 1.0 / p
    resolved = replace(cfg, omega=float(omega), ell=int(ell), s0=float(s0))
    hp = ModelHyperparams(
        p=p,
        omega=float(omega),
        z=cfg.z,
        p0=cfg.p0,
        ell=int(ell),
        d=cfg.d,
        D=cfg.d_scale * np.eye(p),
    )
    return resolved, hp


def _smc_params(cfg: RunConfig, refit: bool = False) -> SmcParams:
    return SmcParams(
        N=cfg.refit_particles if refit else cfg.n_particles,
        M=cfg.refit_mutations if refit else cfg.n_mutations,
        epsilon=cfg.epsilon,
        s0=float(cfg.s0) if not isinstance(cfg.s0, str) else None,
        threads=cfg.threads,
    )


def _write_matrix_csv(path: Path, matrix: np.ndarray, labels) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("",) + tuple(labels))
        for lab, row in zip(labels, matrix):
            writer.writerow([lab] + [f"{x:.10g}" for x in row])


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except DataError as exc:
            _fail(EXIT_DATA, str(exc))
        except OSError as exc:
            _fail(EXIT_DATA, str(exc))
        except (NumericalError, DegenerateCloudError, np.linalg.LinAlgError) as exc:
            _fail(EXIT_NUMERICAL, str(exc))
        except ValueError as exc:
            _fail(EXIT_CONFIG, str(exc))

    wrapper.__name__ = fn.__name__
    return wrapper


@click.group()
def main():
    """Change-point detection in dynamic Gaussian graphical models."""


_config_opt = click.option("--config", "config_path", type=str, default=None)
_out_opt = click.option("--out", "out_dir", type=str, default=None)


@main.command()
@_config_opt
@click.option("--scenario", type=int, default=None)
@click.option("--seed", "scenario_seed", type=int, default=None)
@click.option("--T", "T", type=int, default=None)
@_out_opt
@_guarded
def simulate(config_path, scenario, scenario_seed, T, out_dir):
    """Generate a scenario panel plus its ground truth."""
    cfg = load_config(
        config_path,
        {"scenario": scenario, "scenario_seed": scenario_seed, "T": T, "out_dir": out_dir},
    )
    if cfg.scenario is None:
        raise ConfigError("simulate requires a scenario id")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel, truth = simulate_scenario(
        ScenarioSpec(cfg.scenario, seed=cfg.scenario_seed, T=cfg.T)
    )
    write_panel_csv(panel, out / "panel.csv")
    write_truth(truth, out / "truth.json")
    write_effective_config(cfg, out / "effective_config.toml")
    click.echo(f"wrote {out / 'panel.csv'} and {out / 'truth.json'}")


@main.command()
@_config_opt
@click.option("--data", "data_path", type=str, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--n-iter", "n_iter", type=int, default=None)
@click.option("--burn-in", "burn_in", type=int, default=None)
@click.option("--thin", type=int, default=None)
@click.option("--threads", type=int, default=None)
@_out_opt
@_guarded
def fit(config_path, data_path, seed, n_iter, burn_in, thin, threads, out_dir):
    """Run the change-point chain and persist its trace."""
    cfg = load_config(
        config_path,
        {
            "data_path": data_path,
            "seed": seed,
            "n_iter": n_iter,
            "burn_in": burn_in,
            "thin": thin,
            "threads": threads,
            "out_dir": out_dir,
        },
    )
    panel = _load_panel(cfg)
    cfg, hp = resolve_model(cfg, panel)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_effective_config(cfg, out / "effective_config.toml")

    timings: list[tuple] = []
    t_prev = time.perf_counter()

    def progress(it, rec):
        nonlocal t_prev
        now = time.perf_counter()
        timings.append((it, rec.move, rec.accepted, rec.kappa, rec.log_lik_est, now - t_prev))
        t_prev = now

    trace = run_chain(
        panel.values,
        hp,
        MoveProbabilities(cfg.q_b, cfg.q_d, cfg.q_d_prime, cfg.lam),
        _smc_params(cfg),
        n_iter=cfg.n_iter,
        burn_in=cfg.burn_in,
        thin=cfg.thin,
        seed=cfg.seed,
        init_points=cfg.init_points,
        n_mc=cfg.n_mc,
        progress=progress,
    )
    write_trace(trace, out / "trace.ndjson")
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "move", "accepted", "kappa", "loglik", "seconds"])
        for row in timings:
            writer.writerow(row)
    with open(out / "run_meta.json", "w") as fh:
        json.dump(
            {
                "T": trace.T,
                "p": trace.p,
                "diagnostics": trace.diagnostics,
                "mean_seconds_per_iteration": float(
                    np.mean([t[-1] for t in timings])
                ),
            },
            fh,
            indent=1,
        )
    click.echo(f"wrote {out / 'trace.ndjson'}")


def _selected_graphs(ppi: EdgePPI, cfg: RunConfig) -> tuple[list[Graph], float]:
    flat = ppi.flat()
    if cfg.edge_rule == "fdr":
        threshold, _ = fdr_threshold(flat, cfg.fdr_alpha)
    else:
        threshold = cfg.ppi_threshold
    graphs = []
    for m in ppi.matrices:
        p = m.shape[0]
        edges = [
            (h + 1, k + 1)
            for h in range(p)
            for k in range(h + 1, p)
            if m[h, k] >= threshold
        ]
        graphs.append(Graph.from_edges(p, edges))
    return graphs, threshold


@main.command()
@_config_opt
@click.option("--trace", "trace_path", type=str, required=True)
@click.option("--data", "data_path", type=str, default=None)
@_out_opt
@_guarded
def summarize(config_path, trace_path, data_path, out_dir):
    """Posterior summaries: MAP, credible sets, PPIs, precision estimates."""
    cfg = load_config(config_path, {"data_path": data_path, "out_dir": out_dir})
    panel = _load_panel(cfg)
    cfg, hp = resolve_model(cfg, panel)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not Path(trace_path).exists():
        raise DataError(f"trace file not found: {trace_path}")
    trace = read_trace(trace_path, panel.T, panel.p, hp)
    if not trace.records:
        raise DataError("empty trace")

    cfg_points, map_prob = map_config(trace)
    kappa_pmf = kappa_distribution(trace)
    marg = marginal_cp_probability(trace)
    cred90 = credible_set_cp(trace, 0.90)
    cred95 = credible_set_cp(trace, 0.95)

    ppi = edge_ppi(
        panel.values, cfg_points, hp, _smc_params(cfg, refit=True),
        seed=cfg.seed + 1, n_mc=cfg.n_mc,
    )
    graphs, threshold = _selected_graphs(ppi, cfg)
    post = precision_posterior(
        panel.values, cfg_points, graphs, hp,
        n_draws=cfg.n_precision_draws, seed=cfg.seed + 2,
    )

    labels = panel.labels
    for j, m in enumerate(ppi.matrices):
        _write_matrix_csv(out / f"ppi_seg{j}.csv", m, labels)
        _write_matrix_csv(out / f"precision_seg{j}.csv", post["precision"][j], labels)
        _write_matrix_csv(out / f"covariance_seg{j}.csv", post["covariance"][j], labels)
        _write_matrix_csv(out / f"correlation_seg{j}.csv", post["correlation"][j], labels)

    with open(out / "marginal_cp.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "probability"])
        for t, pr in enumerate(marg, start=1):
            writer.writerow([t, f"{pr:.8g}"])

    with open(out / "graph_metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "node", "degree", "betweenness", "local_clustering", "global_clustering"])
        for j, g in enumerate(graphs):
            gm = graph_metrics(g)
            for v in range(g.p):
                writer.writerow(
                    [j, labels[v], gm.degree[v], f"{gm.betweenness[v]:.6g}",
                     f"{gm.local_clustering[v]:.6g}", f"{gm.global_clustering:.6g}"]
                )

    with open(out / "fdr_edges.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "node_a", "node_b", "ppi"])
        for j, (g, m) in enumerate(zip(graphs, ppi.matrices)):
            for h, k in sorted(g.edges):
                writer.writerow([j, labels[h - 1], labels[k - 1], f"{m[h-1,k-1]:.6g}"])

    report = {
        "map_config": list(cfg_points),
        "map_probability": map_prob,
        "kappa_pmf": {str(k): v for k, v in kappa_pmf.items()},
        "credible_sets_90": [list(iv) for iv in cred90],
        "credible_sets_95": [list(iv) for iv in cred95],
        "edge_rule": cfg.edge_rule,
        "edge_threshold": threshold,
        "selected_edges": [sorted(list(e) for e in g.edges) for g in graphs],
    }
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=1)
    write_effective_config(cfg, out / "effective_config.toml")
    click.echo(f"wrote {out / 'report.json'}")


@main.command(name="predictive-check")
@_config_opt
@click.option("--trace", "trace_path", type=str, required=True)
@click.option("--data", "data_path", type=str, default=None)
@click.option(
    "--mode",
    type=click.Choice(["covariances", "graphs", "changepoints"]),
    default="covariances",
)
@_out_opt
@_guarded
def predictive_check(config_path, trace_path, data_path, mode, out_dir):
    """Posterior predictive bands under the chosen conditioning."""
    cfg = load_config(config_path, {"data_path": data_path, "out_dir": out_dir})
    panel = _load_panel(cfg)
    cfg, hp = resolve_model(cfg, panel)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not Path(trace_path).exists():
        raise DataError(f"trace file not found: {trace_path}")
    trace = read_trace(trace_path, panel.T, panel.p, hp)
    if not trace.records:
        raise DataError("empty trace")
    cfg_points, _ = map_config(trace)

    if mode == "changepoints":
        bands = predictive_bands_from_changepoints(
            panel.values, cfg_points, hp, _smc_params(cfg, refit=True),
            n_rep=cfg.n_predictive, seed=cfg.seed + 3, n_mc=cfg.n_mc,
        )
    else:
        ppi = edge_ppi(
            panel.values, cfg_points, hp, _smc_params(cfg, refit=True),
            seed=cfg.seed + 1, n_mc=cfg.n_mc,
        )
        graphs, _ = _selected_graphs(ppi, cfg)
        if mode == "graphs":
            bands = predictive_bands_from_graphs(
                panel.values, cfg_points, graphs, hp,
                n_rep=cfg.n_predictive, seed=cfg.seed + 3,
            )
        else:
            post = precision_posterior(
                panel.values, cfg_points, graphs, hp,
                n_draws=cfg.n_precision_draws, seed=cfg.seed + 2,
            )
            bands = posterior_predictive(
                panel.T, panel.p, cfg_points, post["covariance"],
                n_rep=cfg.n_predictive, seed=cfg.seed + 3,
            )
    for level, (lo, hi) in bands.items():
        tag = str(int(round(level * 100)))
        with open(out / f"predictive_bands_{mode}_{tag}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["t"]
                + [f"lo_{lab}" for lab in panel.labels]
                + [f"hi_{lab}" for lab in panel.labels]
            )
            for t in range(panel.T):
                writer.writerow(
                    [t + 1]
                    + [f"{x:.8g}" for x in lo[t]]
                    + [f"{x:.8g}" for x in hi[t]]
                )
    click.echo(f"wrote predictive bands ({mode}) to {out}")


@main.command()
@click.option("--summary-dir", "summary_dir", type=str, required=True)
@click.option("--truth", "truth_path", type=str, required=True)
@_out_opt
@_guarded
def evaluate(summary_dir, truth_path, out_dir):
    """Compare summarized posteriors to the simulation ground truth."""
    sdir = Path(summary_dir)
    report_path = sdir / "report.json"
    if not report_path.exists():
        raise DataError(f"missing {report_path}")
    if not Path(truth_path).exists():
        raise DataError(f"truth file not found: {truth_path}")
    report = json.loads(report_path.read_text())
    truth = read_truth(truth_path)
    p = truth.graphs[0].p

    mats = []
    j = 0
    while (sdir / f"ppi_seg{j}.csv").exists():
        rows = list(csv.reader(open(sdir / f"ppi_seg{j}.csv")))
        m = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
        if m.shape != (p, p):
            raise DataError(
                f"ppi_seg{j}.csv has shape {m.shape}, truth has p={p}"
            )
        mats.append(m)
        j += 1
    if not mats:
        raise DataError(f"no ppi_seg*.csv files in {summary_dir}")

    out = Path(out_dir) if out_dir else sdir
    out.mkdir(parents=True, exist_ok=True)
    metrics = evaluate_vs_truth(
        EdgePPI(tuple(mats)),
        tuple(report["map_config"]),
        list(truth.graphs),
        truth.points,
    )
    with open(out / "roc.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for t, fp, tp in zip(metrics["thresholds"], metrics["fpr"], metrics["tpr"]):
            writer.writerow([f"{t:.2f}", f"{fp:.8g}", f"{tp:.8g}"])
    with open(out / "cp_table.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["true_cp", "map_estimate", "abs_error", "map_probability", "prob_kappa_true"]
        )
        kappa_pmf = report["kappa_pmf"]
        p_true_kappa = kappa_pmf.get(str(metrics["kappa_true"]), 0.0)
        for row in metrics["changepoints"]:
            writer.writerow(
                [row["true"], row["estimated"], row["abs_error"],
                 f"{report['map_probability']:.6g}", f"{p_true_kappa:.6g}"]
            )
    doc = {
        "auc": metrics["auc"],
        "kappa_true": metrics["kappa_true"],
        "kappa_estimated": metrics["kappa_estimated"],
        "segment_count_mismatch": metrics["segment_count_mismatch"],
        "fpr_at_half": float(
            metrics["fpr"][int(np.argmin(np.abs(metrics["thresholds"] - 0.5)))]
        ),
        "changepoints": metrics["changepoints"],
    }
    with open(out / "metrics.json", "w") as fh:
        json.dump(doc, fh, indent=1)
    click.echo(f"wrote {out / 'metrics.json'}")


if __name__ == "__main__":
    main()
