"""Monte-Carlo execution of experiments: seed fan-out, regret aggregation,
CSV persistence, and the empirical regret decomposition diagnostics.

Seeds run independently (seed_i = base_seed + i) and may execute in
parallel, capped by the MFT_THREADS environment variable (0 or unset
means one worker per CPU); aggregation is a deterministic fold in seed
order, so output files are byte-identical regardless of scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from math import sqrt
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, NotStabilizable
from .inference import SelectionScheme, sample_truncated
from .model import SystemSpec, TypeParams
from .planning import StabilitySet, assemble_rel, plan, split_theta
from .tsde import RunRecord, RunResult, run_policy

__all__ = [
    "AggregateRecord",
    "ExperimentResult",
    "RelComponents",
    "run_experiment",
    "aggregate_records",
    "regret_components",
    "selection_comparison",
    "write_runs_csv",
    "write_aggregate_csv",
]

RUNS_HEADER = ("seed,t,cum_cost,cum_regret,episodes_mf,episodes_rel,"
               "max_state_norm,fallbacks,diverged")
AGGREGATE_HEADER = "t,regret_mean,regret_std,regret_over_sqrt_t,n_eff"


@dataclass(frozen=True)
class AggregateRecord:
    """Across-seed summary of cumulative regret at one logged time."""

    t: int
    regret_mean: float
    regret_std: float
    regret_over_sqrt_t: float
    n_eff: int


@dataclass
class ExperimentResult:
    """All outputs of one experiment (per-seed rows plus the aggregate).

    actor_diags holds, per seed, the (name, episode count, det-halving
    count, fallback count) summary of every learning actor.
    """

    config: ExperimentConfig
    per_seed: list[list[RunRecord]]
    aggregates: list[AggregateRecord]
    diverged_seeds: tuple[int, ...]
    actor_diags: list[list[tuple[str, int, int, int]]] | None = None
    component_rows: list[tuple] | None = None


def _worker_count(seeds: int) -> int:
    raw = os.environ.get("MFT_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"MFT_THREADS must be an integer, got {raw!r}") from None
    if cap <= 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, seeds))


def _draw_true_system(cfg: ExperimentConfig, seed: int) -> SystemSpec:
    """Sample a true system from the prior (strict Bayesian-regret mode).

    Draws each relative parameter and the mean-field parameter from their
    truncated priors, then backs out the coupling blocks D, E so the
    assembled mean-field pair matches the drawn one.  Retries until the
    resulting system passes construction checks.
    """
    spec = cfg.spec
    M, dx, du = spec.num_types, spec.d_x, spec.d_u
    rng = np.random.default_rng([seed, 0x7275])
    mf_mean = np.asarray(cfg.prior.mf_mean, dtype=float)
    if mf_mean.ndim == 1:
        mf_mean = np.tile(mf_mean[:, None], (1, M * dx))
    rel_mean = np.asarray(cfg.prior.rel_mean, dtype=float)
    if rel_mean.ndim == 1:
        rel_mean = np.tile(rel_mean[:, None], (1, dx))

    from .inference import ColumnPosterior
    from .planning import assemble_mf

    mf_nom = assemble_mf(spec)
    anchored = cfg.prior.anchored_sets
    mf_post = ColumnPosterior.from_prior(
        mf_mean, cfg.prior.mf_cov, 1.0,
        StabilitySet(kind="mf", delta=cfg.prior.delta,
                     Q=spec.Q_mf, R=spec.R_mf, d_state=M * dx,
                     anchor_A=mf_nom.A if anchored else None,
                     anchor_B=mf_nom.B if anchored else None))
    rel_posts = [
        ColumnPosterior.from_prior(
            rel_mean, cfg.prior.rel_cov, 1.0,
            StabilitySet(kind=f"rel{m}", delta=cfg.prior.delta,
                         Q=spec.per_type[m].Q, R=spec.per_type[m].R,
                         d_state=dx,
                         anchor_A=spec.per_type[m].A if anchored else None,
                         anchor_B=spec.per_type[m].B if anchored else None))
        for m in range(M)
    ]

    for _ in range(100):
        mf_out = sample_truncated(mf_post, rng, cfg.prior.max_attempts)
        rel_outs = [sample_truncated(p, rng, cfg.prior.max_attempts)
                    for p in rel_posts]
        if mf_out.fallback or any(o.fallback for o in rel_outs):
            continue
        A_mf, B_mf = split_theta(mf_out.theta, M * dx)
        per_type = []
        for m in range(M):
            A_m, B_m = split_theta(rel_outs[m].theta, dx)
            D_m = A_mf[m * dx:(m + 1) * dx, :].copy()
            D_m[:, m * dx:(m + 1) * dx] -= A_m
            E_m = B_mf[m * dx:(m + 1) * dx, :].copy()
            E_m[:, m * du:(m + 1) * du] -= B_m
            tp = spec.per_type[m]
            per_type.append(TypeParams(A=A_m, B=B_m, D=D_m, E=E_m,
                                       Q=tp.Q, R=tp.R))
        try:
            return replace(spec, per_type=tuple(per_type))
        except (ValueError, NotStabilizable):
            continue
    raise ConfigError("could not draw a stabilizable true system from the prior")


def _run_one(args: tuple[ExperimentConfig, int, float | None]):
    cfg, seed, j_true = args
    spec = cfg.spec
    anchor_spec = None
    if cfg.bayesian_truth:
        # The simulated truth is drawn from the prior; the truncation
        # sets stay anchored at the configured nominal system.
        spec = _draw_true_system(cfg, seed)
        anchor_spec = cfg.spec
        j_true = None
    result = run_policy(
        cfg.policy, spec, cfg.horizon, seed,
        prior=cfg.prior, record_stride=cfg.record_stride,
        verbose=cfg.verbose_components, j_true=j_true,
        store_episodes=cfg.verbose_components,
        anchor_spec=anchor_spec,
    )
    comp_rows = None
    if cfg.verbose_components:
        comp_rows = []
        if not result.diverged:   # undefined on a frozen trajectory
            for comp in regret_components(result, spec):
                for i in range(len(comp.r1)):
                    comp_rows.append((
                        seed, comp.type_index, i, comp.r0, float(comp.r1[i]),
                        float(comp.r2[i]), float(comp.total[i]),
                        float(comp.realized_excess[i]),
                    ))
    return seed, result.records, result.diverged, comp_rows, result.actor_diags()


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
) -> ExperimentResult:
    """Execute all seeds of an experiment and optionally persist CSVs.

    Writes <label>_runs.csv (per-seed rows) and <label>_aggregate.csv
    into out_dir when given; with verbose_components also
    <label>_components.csv.
    """
    if cfg.verbose_components and cfg.policy.kind != "tsde_mf":
        raise ConfigError("regret components require the tsde_mf policy")
    j_true = None
    if not cfg.bayesian_truth:
        from .planning import optimal_avg_cost

        j_true = optimal_avg_cost(cfg.spec)

    seeds = [cfg.base_seed + i for i in range(cfg.seeds)]
    tasks = [(cfg, s, j_true) for s in seeds]
    workers = _worker_count(cfg.seeds)
    outputs: dict[int, tuple] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for seed, records, diverged, comp, diags in pool.map(_run_one, tasks):
                outputs[seed] = (records, diverged, comp, diags)
    else:
        for task in tasks:
            seed, records, diverged, comp, diags = _run_one(task)
            outputs[seed] = (records, diverged, comp, diags)

    per_seed = [outputs[s][0] for s in seeds]
    diverged_seeds = tuple(s for s in seeds if outputs[s][1])
    aggregates = aggregate_records(per_seed)
    component_rows = None
    if cfg.verbose_components:
        component_rows = [row for s in seeds for row in outputs[s][2]]

    result = ExperimentResult(
        config=cfg, per_seed=per_seed, aggregates=aggregates,
        diverged_seeds=diverged_seeds,
        actor_diags=[outputs[s][3] for s in seeds],
        component_rows=component_rows,
    )
    if out_dir is not None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_runs_csv(out / f"{cfg.label}_runs.csv", per_seed)
            write_aggregate_csv(out / f"{cfg.label}_aggregate.csv", aggregates)
            if component_rows is not None:
                _write_components_csv(out / f"{cfg.label}_components.csv",
                                      component_rows)
        except OSError as exc:
            raise ConfigError(f"cannot write outputs to {out}: {exc}") from None
    return result


def aggregate_records(
    per_seed: list[list[RunRecord]],
    value=lambda rec: rec.cum_regret,
) -> list[AggregateRecord]:
    """Across-seed mean/std of a per-record value on the shared time grid.

    Diverged runs are excluded from the statistics from their divergence
    time onward but remain counted: n_eff + diverged = configured seeds at
    every logged t.
    """
    if not per_seed:
        return []
    grid = [rec.t for rec in per_seed[0]]
    for records in per_seed:
        if [rec.t for rec in records] != grid:
            raise ValueError("seed record grids differ; cannot aggregate")
    out = []
    for idx, t in enumerate(grid):
        vals = [value(records[idx]) for records in per_seed
                if not records[idx].diverged]
        n_eff = len(vals)
        if n_eff == 0:
            mean = std = float("nan")
        else:
            mean = float(np.mean(vals))
            std = float(np.std(vals, ddof=1)) if n_eff > 1 else 0.0
        out.append(AggregateRecord(
            t=t, regret_mean=mean, regret_std=std,
            regret_over_sqrt_t=mean / sqrt(t), n_eff=n_eff,
        ))
    return out


def write_runs_csv(path: str | Path, per_seed: list[list[RunRecord]]) -> None:
    lines = [RUNS_HEADER]
    for records in per_seed:
        for rec in records:
            lines.append(
                f"{rec.seed},{rec.t},{rec.cum_cost!r},{rec.cum_regret!r},"
                f"{rec.episodes_mf},{sum(rec.episodes_rel)},"
                f"{rec.max_state_norm!r},{rec.fallbacks},{int(rec.diverged)}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def write_aggregate_csv(path: str | Path,
                        aggregates: list[AggregateRecord]) -> None:
    lines = [AGGREGATE_HEADER]
    for agg in aggregates:
        lines.append(
            f"{agg.t},{agg.regret_mean!r},{agg.regret_std!r},"
            f"{agg.regret_over_sqrt_t!r},{agg.n_eff}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


_COMPONENTS_HEADER = "seed,type,agent,r0,r1,r2,total,realized_excess"


def _write_components_csv(path: Path, rows: list[tuple]) -> None:
    lines = [_COMPONENTS_HEADER]
    for seed, m, i, r0, r1, r2, total, excess in rows:
        lines.append(f"{seed},{m},{i},{r0!r},{r1!r},{r2!r},{total!r},{excess!r}")
    path.write_text("\n".join(lines) + "\n")


@dataclass
class RelComponents:
    """Empirical regret decomposition of one type's relative systems.

    r0 is the sampling-error term (identical across agents); r1 and r2
    are the time-varying-controller and model-mismatch terms per agent.
    total = r0 + r1 + r2 equals realized_excess (the realized relative
    cost minus horizon times the true relative average cost) exactly, by
    the average-cost Bellman identity; the next-state term of r1 enters
    through its conditional mean given the regressor, which is what makes
    the identity hold path by path.
    """

    type_index: int
    r0: float
    r1: np.ndarray
    r2: np.ndarray
    total: np.ndarray
    realized_excess: np.ndarray


def regret_components(result: RunResult, spec: SystemSpec) -> list[RelComponents]:
    """Empirical (R0, R1, R2) of every relative system on a verbose run."""
    if result.verbose is None:
        raise ValueError("regret_components requires a verbose run "
                         "(run_policy(..., verbose=True))")
    if result.diverged:
        raise ValueError("run diverged; the decomposition is undefined on a "
                         "frozen trajectory")
    controller = result.controller
    if not hasattr(controller, "rel_actors"):
        raise ValueError("regret_components requires the tsde_mf policy")

    vlog = result.verbose
    T = result.horizon
    n = spec.agents_per_type
    sb2 = spec.sigma_breve2
    gains_true = plan(spec)

    out = []
    for m, actor in enumerate(controller.rel_actors):
        if not actor.episodes:
            raise ValueError("no episode log; run with store_episodes=True")
        theta_true = assemble_rel(spec, m).theta
        j_true_rel = sb2 * gains_true.rel[m].avg_cost_coeff

        starts = [ep.t_start for ep in actor.episodes] + [T + 1]
        r0 = -T * j_true_rel
        r1 = np.zeros(n)
        r2 = np.zeros(n)
        for k, ep in enumerate(actor.episodes):
            t0, t1 = starts[k], min(starts[k + 1], T + 1)
            if t0 > T:
                break
            if ep.gain_pair is None:
                raise ValueError(
                    "episode without a Riccati solution (sampling fallback); "
                    "components are undefined")
            S_k = ep.gain_pair.S
            tr_S = ep.gain_pair.avg_cost_coeff
            r0 += (t1 - t0) * sb2 * tr_S

            sl = slice(t0 - 1, t1 - 1)
            x = vlog.xrel[sl, m]                     # (len, n, d_x)
            z = np.concatenate([x, vlog.urel[sl, m]], axis=2)
            pred_true = z @ theta_true               # (len, n, d_x)
            pred_k = z @ ep.theta
            q_x = np.einsum("tid,de,tie->i", x, S_k, x)
            q_true = np.einsum("tid,de,tie->i", pred_true, S_k, pred_true)
            q_k = np.einsum("tid,de,tie->i", pred_k, S_k, pred_k)
            r1 += q_x - q_true - (t1 - t0) * sb2 * tr_S
            r2 += q_true - q_k

        realized = vlog.rel_costs[:, m, :].sum(axis=0) - T * j_true_rel
        out.append(RelComponents(
            type_index=m, r0=r0, r1=r1, r2=r2, total=r0 + r1 + r2,
            realized_excess=realized,
        ))
    return out


def selection_comparison(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    schemes: tuple[str, ...] | None = None,
) -> dict[str, list[AggregateRecord]]:
    """Run identical experiments differing only in the agent-selection rule.

    The emitted series is the per-type-averaged relative regret
    (cumulative relative cost minus t times the true relative average
    cost), aggregated across seeds; one <selection_SCHEME>_aggregate.csv
    and one <selection_SCHEME>_runs.csv per scheme when out_dir is given.
    """
    if schemes is None:
        schemes = cfg.schemes
    gains = plan(cfg.spec)
    j_rel_total = cfg.spec.sigma_breve2 * sum(
        gp.avg_cost_coeff for gp in gains.rel)

    results = {}
    for scheme_text in schemes:
        scheme = SelectionScheme.parse(scheme_text)
        sub = cfg.with_overrides(
            policy=replace(cfg.policy, kind="tsde_mf", scheme=scheme),
            label=f"selection_{scheme}",
        )
        res = run_experiment(sub, out_dir=None)
        aggregates = aggregate_records(
            res.per_seed,
            value=lambda rec: rec.cum_rel_cost - rec.t * j_rel_total,
        )
        results[str(scheme)] = aggregates
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            write_runs_csv(out / f"selection_{scheme}_runs.csv", res.per_seed)
            write_aggregate_csv(out / f"selection_{scheme}_aggregate.csv",
                                aggregates)
    return results
