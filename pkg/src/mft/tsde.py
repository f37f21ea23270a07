"""Thompson sampling with dynamic episodes for mean-field teams.

The learning controller runs |M|+1 independent "actors": one for the
mean-field system and one per type for the relative system.  Each actor
keeps a column-Gaussian posterior over its dynamics parameter, holds its
gain fixed within an episode, and starts a new episode (resampling the
parameter and recomputing the gain) when either the episode has outgrown
the previous one by more than one step or the posterior covariance
determinant has halved since the episode began.

Also provided: the naive baseline that runs one such loop over the whole
joint n|M|-agent system, a fixed-gain controller (covering the known-model
oracle), and `run_policy`, which simulates any of them against the true
system and streams per-step cost/regret records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log

import numpy as np

from . import model
from .inference import (
    ColumnPosterior,
    Regressor,
    SelectionScheme,
    sample_truncated,
    select_agent,
)
from .model import GlobalState, SystemSpec, decompose
from .planning import (
    GainPair,
    StabilitySet,
    gain_for,
    optimal_avg_cost,
    plan,
)

__all__ = [
    "ActorState",
    "Policy",
    "PriorSpec",
    "EpisodeLog",
    "RunRecord",
    "RunResult",
    "episode_should_end",
    "advance_episode",
    "TsdeMfController",
    "NaiveTsdeController",
    "GainController",
    "joint_system_matrices",
    "joint_noise_cov",
    "run_policy",
    "DIVERGENCE_LIMIT",
]

_LOG2 = log(2.0)
DIVERGENCE_LIMIT = 1e12


@dataclass
class EpisodeLog:
    """One episode of one actor: start time, sampled parameter, its gain."""

    t_start: int
    theta: np.ndarray
    gain_pair: GainPair | None


@dataclass
class ActorState:
    """Episode bookkeeping of one TSDE actor.

    episode_start / prev_episode_len / log_det_at_start drive the two
    stopping criteria; theta and gain are the current sample and its
    feedback gain; pending_z holds the regressor rows written at the end
    of the previous step, waiting for this step's observation.
    halving_count tracks how often the determinant criterion fired (the
    eta - 1 of the episode-count bound), fallback_count how often
    truncated sampling gave up and substituted a deterministic parameter.
    """

    posterior: ColumnPosterior
    gain_shape: tuple[int, int]
    max_attempts: int = 1000
    force_theta: np.ndarray | None = None
    store_episodes: bool = True

    k: int = 0
    episode_start: int = 0
    prev_episode_len: int = 0
    log_det_at_start: float = 0.0
    theta: np.ndarray | None = None
    gain: np.ndarray | None = None
    gain_pair: GainPair | None = None
    halving_count: int = 0
    fallback_count: int = 0
    last_accepted: np.ndarray | None = None
    pending_z: np.ndarray | None = None
    episodes: list[EpisodeLog] = field(default_factory=list)

    def __post_init__(self):
        self.log_det_at_start = self.posterior.log_det

    def observe(self, x_next_rows: np.ndarray) -> None:
        """Absorb the transitions of the regressors recorded last step."""
        if self.pending_z is None:
            return
        for z, x_next in zip(self.pending_z, x_next_rows):
            self.posterior.update(Regressor(z=z, x_next=x_next))
        self.pending_z = None


def episode_should_end(actor: ActorState, t: int) -> bool:
    """Length grew past the previous episode, or det(Sigma) halved."""
    if t - actor.episode_start > actor.prev_episode_len:
        return True
    return actor.posterior.log_det < actor.log_det_at_start - _LOG2


def advance_episode(actor: ActorState, t: int, rng: np.random.Generator) -> None:
    """Close the current episode at time t and sample the next parameter."""
    if actor.posterior.log_det < actor.log_det_at_start - _LOG2:
        actor.halving_count += 1
    actor.prev_episode_len = t - actor.episode_start
    actor.k += 1
    actor.episode_start = t
    actor.log_det_at_start = actor.posterior.log_det

    if actor.force_theta is not None:
        theta = np.asarray(actor.force_theta, dtype=float)
        gp = gain_for(theta, actor.posterior.trunc)
        if gp is None:
            raise ValueError("forced parameter is not stabilizable")
    else:
        out = sample_truncated(actor.posterior, rng, actor.max_attempts,
                               actor.last_accepted)
        theta, gp = out.theta, out.gain
        if out.fallback:
            actor.fallback_count += 1
        else:
            actor.last_accepted = theta

    actor.theta = theta
    if gp is not None:
        actor.gain_pair = gp
        actor.gain = gp.L
    elif actor.gain is None:
        # No stabilizing parameter available at all; act with zero gain.
        actor.gain = np.zeros(actor.gain_shape)
        actor.gain_pair = None
    if actor.store_episodes:
        actor.episodes.append(EpisodeLog(t_start=t, theta=theta,
                                         gain_pair=actor.gain_pair))


@dataclass(frozen=True)
class PriorSpec:
    """Prior parameters for the posteriors and the truncation sets.

    mf_mean / rel_mean are per-column mean vectors (tiled across columns);
    covariances may be given as matrices or left as scaled identities via
    the *_cov_scale shortcuts in `filled`.  delta bounds the closed-loop
    norm in the truncation sets; with anchored_sets (the benchmark form)
    a candidate is kept when its gain stabilizes the nominal/true system,
    otherwise when it stabilizes itself.  joint_mean_fill /
    joint_cov_scale shape the prior of the naive joint learner.
    """

    mf_mean: np.ndarray
    rel_mean: np.ndarray
    mf_cov: np.ndarray
    rel_cov: np.ndarray
    delta: float = 0.99
    max_attempts: int = 1000
    joint_mean_fill: float = 0.0
    joint_cov_scale: float = 1.0
    anchored_sets: bool = True

    @classmethod
    def filled(cls, spec: SystemSpec, mf_fill: float = 1.0, rel_fill: float = 1.0,
               mf_cov_scale: float = 1.0, rel_cov_scale: float = 1.0,
               delta: float = 0.99, max_attempts: int = 1000,
               joint_mean_fill: float = 0.0, joint_cov_scale: float = 1.0,
               anchored_sets: bool = True) -> "PriorSpec":
        p_mf = spec.num_types * (spec.d_x + spec.d_u)
        p_rel = spec.d_x + spec.d_u
        return cls(
            mf_mean=np.full(p_mf, float(mf_fill)),
            rel_mean=np.full(p_rel, float(rel_fill)),
            mf_cov=mf_cov_scale * np.eye(p_mf),
            rel_cov=rel_cov_scale * np.eye(p_rel),
            delta=delta,
            max_attempts=max_attempts,
            joint_mean_fill=joint_mean_fill,
            joint_cov_scale=joint_cov_scale,
            anchored_sets=anchored_sets,
        )


@dataclass(frozen=True)
class Policy:
    """What controls the system during a run.

    kind is one of "tsde_mf", "naive_tsde", "optimal", "fixed_gain".
    scheme applies to tsde_mf.  mf_gain/rel_gains configure fixed_gain
    (None means zero gains).  force_theta_mf / force_theta_rel pin the
    sampled parameters of the learning actors (test hook).
    """

    kind: str = "tsde_mf"
    scheme: SelectionScheme = SelectionScheme()
    mf_gain: np.ndarray | None = None
    rel_gains: tuple[np.ndarray, ...] | None = None
    force_theta_mf: np.ndarray | None = None
    force_theta_rel: tuple[np.ndarray, ...] | None = None

    KINDS = ("tsde_mf", "naive_tsde", "optimal", "fixed_gain")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")


@dataclass
class StepInfo:
    """Intermediate quantities of one control step (verbose logging)."""

    controls: np.ndarray
    xbar: np.ndarray | None = None
    xrel: np.ndarray | None = None
    ubar: np.ndarray | None = None
    urel: np.ndarray | None = None
    selected: np.ndarray | None = None  # (M,) agent index, -1 meaning all


class TsdeMfController:
    """Coordinator plus mean-field / relative actors (the learning policy).

    anchor_spec supplies the nominal system the anchored truncation sets
    are built around (the true system in the benchmark experiments); it
    defaults to the simulated system itself.
    """

    def __init__(self, spec: SystemSpec, prior: PriorSpec,
                 scheme: SelectionScheme | None = None,
                 force_theta_mf: np.ndarray | None = None,
                 force_theta_rel: tuple[np.ndarray, ...] | None = None,
                 store_episodes: bool = True,
                 anchor_spec: SystemSpec | None = None):
        self.spec = spec
        self.scheme = scheme or SelectionScheme()
        M, dx, du = spec.num_types, spec.d_x, spec.d_u
        anchor = anchor_spec if anchor_spec is not None else spec

        if prior.anchored_sets:
            from .planning import assemble_mf
            mf_anchor = assemble_mf(anchor)
            mf_anchor_A, mf_anchor_B = mf_anchor.A, mf_anchor.B
        else:
            mf_anchor_A = mf_anchor_B = None
        mf_trunc = StabilitySet(kind="mf", delta=prior.delta,
                                Q=spec.Q_mf, R=spec.R_mf, d_state=M * dx,
                                anchor_A=mf_anchor_A, anchor_B=mf_anchor_B)
        mf_mean = np.asarray(prior.mf_mean, dtype=float)
        if mf_mean.ndim == 1:
            mf_mean = np.tile(mf_mean[:, None], (1, M * dx))
        self.mf_actor = ActorState(
            posterior=ColumnPosterior.from_prior(
                mf_mean, prior.mf_cov, spec.sigma_bar2, mf_trunc),
            gain_shape=(M * du, M * dx),
            max_attempts=prior.max_attempts,
            force_theta=force_theta_mf,
            store_episodes=store_episodes,
        )

        self.rel_actors: list[ActorState] = []
        for m, tp in enumerate(spec.per_type):
            if prior.anchored_sets:
                anchor_tp = anchor.per_type[m]
                rel_anchor_A, rel_anchor_B = anchor_tp.A, anchor_tp.B
            else:
                rel_anchor_A = rel_anchor_B = None
            trunc = StabilitySet(kind=f"rel{m}", delta=prior.delta,
                                 Q=tp.Q, R=tp.R, d_state=dx,
                                 anchor_A=rel_anchor_A, anchor_B=rel_anchor_B)
            rel_mean = np.asarray(prior.rel_mean, dtype=float)
            if rel_mean.ndim == 1:
                rel_mean = np.tile(rel_mean[:, None], (1, dx))
            self.rel_actors.append(ActorState(
                posterior=ColumnPosterior.from_prior(
                    rel_mean, prior.rel_cov, spec.sigma_breve2, trunc),
                gain_shape=(du, dx),
                max_attempts=prior.max_attempts,
                force_theta=(None if force_theta_rel is None
                             else force_theta_rel[m]),
                store_episodes=store_episodes,
            ))
        self.pending_agents: list[np.ndarray | None] = [None] * M

    def step(self, state: GlobalState, rng: np.random.Generator) -> StepInfo:
        spec = self.spec
        M, n, du = spec.num_types, spec.agents_per_type, spec.d_u
        t = state.t
        dec = decompose(state, spec)
        xbar, xrel = dec.mf, dec.rel

        # Absorb last step's transitions (mean-field, then types in order).
        self.mf_actor.observe(xbar[None, :])
        for m, actor in enumerate(self.rel_actors):
            if actor.pending_z is not None:
                actor.observe(xrel[m][self.pending_agents[m]])

        # Episode checks and resampling, in the same fixed order.
        if episode_should_end(self.mf_actor, t):
            advance_episode(self.mf_actor, t, rng)
        for actor in self.rel_actors:
            if episode_should_end(actor, t):
                advance_episode(actor, t, rng)

        # Controls: u[i] = ubar[m] + L_rel[m] xrel[i].
        ubar = self.mf_actor.gain @ xbar
        controls = np.empty((M, n, du))
        urel = np.empty((M, n, du))
        for m, actor in enumerate(self.rel_actors):
            urel[m] = xrel[m] @ actor.gain.T
            controls[m] = urel[m] + ubar[m * du:(m + 1) * du]

        # Record regressors for the next step's posterior updates.
        self.mf_actor.pending_z = np.concatenate([xbar, ubar])[None, :]
        selected = np.empty(M, dtype=int)
        for m, actor in enumerate(self.rel_actors):
            z_all = np.concatenate([xrel[m], urel[m]], axis=1)
            j = select_agent(self.scheme, z_all, actor.posterior.Sigma, rng)
            idx = np.arange(n) if j is None else np.array([j])
            actor.pending_z = z_all[idx]
            self.pending_agents[m] = idx
            selected[m] = -1 if j is None else j

        return StepInfo(controls=controls, xbar=xbar, xrel=xrel,
                        ubar=ubar, urel=urel, selected=selected)

    @property
    def actors(self) -> list[tuple[str, ActorState]]:
        out = [("mf", self.mf_actor)]
        out += [(f"rel{m}", a) for m, a in enumerate(self.rel_actors)]
        return out


def joint_system_matrices(
    spec: SystemSpec,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(A, B, Q, R) of the flat joint system over all n|M| agents.

    Agents are ordered type-major; the joint state/control are the
    concatenations of the per-agent vectors in that order.  The returned
    cost matrices reproduce the team stage cost exactly (agent terms carry
    the 1/n weight).
    """
    M, n, dx, du = spec.num_types, spec.agents_per_type, spec.d_x, spec.d_u
    N = M * n
    A = np.zeros((N * dx, N * dx))
    B = np.zeros((N * dx, N * du))
    Q = np.zeros((N * dx, N * dx))
    R = np.zeros((N * du, N * du))
    Gx = np.zeros((M * dx, N * dx))   # joint state -> stacked type means
    Gu = np.zeros((M * du, N * du))
    Dstack = np.zeros((N * dx, M * dx))
    Estack = np.zeros((N * dx, M * du))
    for m, tp in enumerate(spec.per_type):
        for i in range(n):
            a = m * n + i
            A[a * dx:(a + 1) * dx, a * dx:(a + 1) * dx] = tp.A
            B[a * dx:(a + 1) * dx, a * du:(a + 1) * du] = tp.B
            Q[a * dx:(a + 1) * dx, a * dx:(a + 1) * dx] = tp.Q / n
            R[a * du:(a + 1) * du, a * du:(a + 1) * du] = tp.R / n
            Gx[m * dx:(m + 1) * dx, a * dx:(a + 1) * dx] = np.eye(dx) / n
            Gu[m * du:(m + 1) * du, a * du:(a + 1) * du] = np.eye(du) / n
            Dstack[a * dx:(a + 1) * dx, :] = tp.D
            Estack[a * dx:(a + 1) * dx, :] = tp.E
    A += Dstack @ Gx
    B += Estack @ Gu
    Q += Gx.T @ spec.Q_bar @ Gx
    R += Gu.T @ spec.R_bar @ Gu
    return A, B, Q, R


def joint_noise_cov(spec: SystemSpec) -> np.ndarray:
    """Covariance of the joint disturbance w + v + v0 over all agents."""
    M, n, dx = spec.num_types, spec.agents_per_type, spec.d_x
    N = M * n
    cov = spec.sigma_w2 * np.eye(N * dx)
    ones_type = np.kron(np.ones((n, n)), np.eye(dx))
    for m in range(M):
        sl = slice(m * n * dx, (m + 1) * n * dx)
        cov[sl, sl] += spec.sigma_v2 * ones_type
    cov += spec.sigma_v02 * np.kron(np.ones((N, N)), np.eye(dx))
    return cov


class NaiveTsdeController:
    """Single TSDE loop over the joint n|M|-agent system (the baseline).

    The joint disturbance contains the common noise channels, so the
    scalar-variance posterior update is misspecified unless they are off;
    the effective per-coordinate regression noise used here is
    sigma_w2 + sigma_v2 + sigma_v02.
    """

    def __init__(self, spec: SystemSpec, prior: PriorSpec,
                 store_episodes: bool = True,
                 anchor_spec: SystemSpec | None = None):
        self.spec = spec
        M, n, dx, du = spec.num_types, spec.agents_per_type, spec.d_x, spec.d_u
        N = M * n
        _, _, Q_j, R_j = joint_system_matrices(spec)
        anchor_A = anchor_B = None
        if prior.anchored_sets:
            anchor = anchor_spec if anchor_spec is not None else spec
            anchor_A, anchor_B, _, _ = joint_system_matrices(anchor)
        trunc = StabilitySet(kind="joint", delta=prior.delta,
                             Q=Q_j, R=R_j, d_state=N * dx,
                             anchor_A=anchor_A, anchor_B=anchor_B)
        p = N * (dx + du)
        mean = np.full((p, N * dx), float(prior.joint_mean_fill))
        cov = prior.joint_cov_scale * np.eye(p)
        noise_var = spec.sigma_w2 + spec.sigma_v2 + spec.sigma_v02
        self.actor = ActorState(
            posterior=ColumnPosterior.from_prior(mean, cov, noise_var, trunc),
            gain_shape=(N * du, N * dx),
            max_attempts=prior.max_attempts,
            store_episodes=store_episodes,
        )

    def step(self, state: GlobalState, rng: np.random.Generator) -> StepInfo:
        spec = self.spec
        x_flat = np.asarray(state.x, dtype=float).reshape(-1)
        self.actor.observe(x_flat[None, :])
        if episode_should_end(self.actor, state.t):
            advance_episode(self.actor, state.t, rng)
        u_flat = self.actor.gain @ x_flat
        self.actor.pending_z = np.concatenate([x_flat, u_flat])[None, :]
        controls = u_flat.reshape(spec.num_types, spec.agents_per_type, spec.d_u)
        return StepInfo(controls=controls)

    @property
    def actors(self) -> list[tuple[str, ActorState]]:
        return [("joint", self.actor)]


class GainController:
    """Fixed feedback in the decomposed coordinates (oracle or pinned gains)."""

    def __init__(self, spec: SystemSpec, mf_gain: np.ndarray | None,
                 rel_gains: tuple[np.ndarray, ...] | None):
        M, dx, du = spec.num_types, spec.d_x, spec.d_u
        self.spec = spec
        self.mf_gain = (np.zeros((M * du, M * dx)) if mf_gain is None
                        else np.asarray(mf_gain, dtype=float))
        if rel_gains is None:
            rel_gains = tuple(np.zeros((du, dx)) for _ in range(M))
        self.rel_gains = tuple(np.asarray(g, dtype=float) for g in rel_gains)

    @classmethod
    def optimal(cls, spec: SystemSpec) -> "GainController":
        gains = plan(spec)
        return cls(spec, gains.mf.L, tuple(gp.L for gp in gains.rel))

    def step(self, state: GlobalState, rng: np.random.Generator) -> StepInfo:
        spec = self.spec
        M, n, du = spec.num_types, spec.agents_per_type, spec.d_u
        dec = decompose(state, spec)
        xbar, xrel = dec.mf, dec.rel
        ubar = self.mf_gain @ xbar
        controls = np.empty((M, n, du))
        urel = np.empty((M, n, du))
        for m in range(M):
            urel[m] = xrel[m] @ self.rel_gains[m].T
            controls[m] = urel[m] + ubar[m * du:(m + 1) * du]
        return StepInfo(controls=controls, xbar=xbar, xrel=xrel,
                        ubar=ubar, urel=urel)

    @property
    def actors(self) -> list[tuple[str, ActorState]]:
        return []


@dataclass
class RunRecord:
    """Per-time-step log row of one run (one seed)."""

    seed: int
    t: int
    cum_cost: float
    cum_regret: float
    episodes_mf: int
    episodes_rel: tuple[int, ...]
    max_state_norm: float
    fallbacks: int
    diverged: bool
    cum_rel_cost: float = 0.0


@dataclass
class VerboseLog:
    """Full trajectory internals (states, controls, decompositions, costs)."""

    xbar: np.ndarray       # (T, M d_x)
    ubar: np.ndarray       # (T, M d_u)
    xrel: np.ndarray       # (T, M, n, d_x)
    urel: np.ndarray       # (T, M, n, d_u)
    controls: np.ndarray   # (T, M, n, d_u)
    costs: np.ndarray      # (T,)
    mf_costs: np.ndarray   # (T,)
    rel_costs: np.ndarray  # (T, M, n)
    selected: np.ndarray   # (T, M), -1 where the whole type updated


@dataclass
class RunResult:
    """Everything produced by one run: records, diagnostics, final actors."""

    seed: int
    horizon: int
    j_true: float
    records: list[RunRecord]
    diverged: bool
    controller: object
    verbose: VerboseLog | None = None

    def actor_diags(self) -> list[tuple[str, int, int, int]]:
        """(name, episode count, det-halving count, fallback count) per actor."""
        return [(name, a.k, a.halving_count, a.fallback_count)
                for name, a in self.controller.actors]


def _build_controller(policy: Policy, spec: SystemSpec, prior: PriorSpec,
                      store_episodes: bool, anchor_spec: SystemSpec | None):
    if policy.kind == "tsde_mf":
        return TsdeMfController(spec, prior, policy.scheme,
                                force_theta_mf=policy.force_theta_mf,
                                force_theta_rel=policy.force_theta_rel,
                                store_episodes=store_episodes,
                                anchor_spec=anchor_spec)
    if policy.kind == "naive_tsde":
        return NaiveTsdeController(spec, prior, store_episodes=store_episodes,
                                   anchor_spec=anchor_spec)
    if policy.kind == "optimal":
        return GainController.optimal(spec)
    return GainController(spec, policy.mf_gain, policy.rel_gains)


def run_policy(
    policy: Policy,
    spec: SystemSpec,
    horizon: int,
    seed: int,
    prior: PriorSpec | None = None,
    record_stride: int = 1,
    verbose: bool = False,
    j_true: float | None = None,
    store_episodes: bool = True,
    anchor_spec: SystemSpec | None = None,
) -> RunResult:
    """Simulate one seed of a policy against the true system.

    Streams a RunRecord every `record_stride` steps (and always at the
    final step) with cumulative cost, cumulative regret against
    horizon * J(true system), episode counts, the running max agent state
    norm, and sampling-fallback counts.  If the state norm ever exceeds
    DIVERGENCE_LIMIT (or goes non-finite) the run is frozen and every
    later record carries the diverged flag; it is reported, not raised.

    anchor_spec, when given, is the nominal system the anchored
    truncation sets are built around instead of the simulated one (used
    when the true system is itself drawn from the prior).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    if prior is None:
        prior = PriorSpec.filled(spec)
    if j_true is None:
        j_true = optimal_avg_cost(spec)

    rng = np.random.default_rng(seed)
    M, n, dx, du = spec.num_types, spec.agents_per_type, spec.d_x, spec.d_u
    if spec.x0_sigma2 > 0.0:
        x0 = np.sqrt(spec.x0_sigma2) * rng.standard_normal((M, n, dx))
    else:
        x0 = np.zeros((M, n, dx))
    state = GlobalState(x=x0, t=1)
    controller = _build_controller(policy, spec, prior, store_episodes,
                                   anchor_spec)

    records: list[RunRecord] = []
    vlog = None
    if verbose:
        T = horizon
        vlog = VerboseLog(
            xbar=np.zeros((T, M * dx)), ubar=np.zeros((T, M * du)),
            xrel=np.zeros((T, M, n, dx)), urel=np.zeros((T, M, n, du)),
            controls=np.zeros((T, M, n, du)), costs=np.zeros(T),
            mf_costs=np.zeros(T), rel_costs=np.zeros((T, M, n)),
            selected=np.full((T, M), -1, dtype=int),
        )

    cum_cost = 0.0
    cum_rel_cost = 0.0
    max_norm = 0.0
    diverged = False

    for t in range(1, horizon + 1):
        if not diverged:
            norm_now = float(np.max(np.linalg.norm(state.x, axis=-1)))
            max_norm = max(max_norm, norm_now)
            if not np.isfinite(norm_now) or norm_now > DIVERGENCE_LIMIT:
                diverged = True

        info = None
        if not diverged:
            try:
                info = controller.step(state, rng)
            except (FloatingPointError, np.linalg.LinAlgError):
                # Posterior or sampling numerics broke down under an
                # exploding state; treat it as the divergence it signals.
                diverged = True

        if not diverged:
            controls = info.controls
            # Reuse the controller's decomposition where available; the
            # type means are bit-identical to recomputing them.
            xbar2 = (info.xbar.reshape(M, dx) if info.xbar is not None
                     else state.x.mean(axis=1))
            ubar2 = controls.mean(axis=1)
            cost, mf_cost, rel_costs = model._stage_costs(
                state.x, controls, xbar2, ubar2, spec)
            if not np.isfinite(cost):
                diverged = True
            else:
                cum_cost += cost
                cum_rel_cost += float(rel_costs.mean(axis=1).sum())
                if verbose:
                    i = t - 1
                    vlog.controls[i] = controls
                    vlog.costs[i] = cost
                    vlog.mf_costs[i] = mf_cost
                    vlog.rel_costs[i] = rel_costs
                    if info.xbar is not None:
                        vlog.xbar[i] = info.xbar
                        vlog.xrel[i] = info.xrel
                        vlog.ubar[i] = info.ubar
                        vlog.urel[i] = info.urel
                    if info.selected is not None:
                        vlog.selected[i] = info.selected
                x_next = model._advance(state.x, controls, xbar2.reshape(-1),
                                        ubar2.reshape(-1), spec, rng)
                state = GlobalState(x=x_next, t=t + 1)

        if t % record_stride == 0 or t == horizon:
            if controller.actors:
                names = [name for name, _ in controller.actors]
                if names[0] == "mf":
                    episodes_mf = controller.actors[0][1].k
                    episodes_rel = tuple(a.k for _, a in controller.actors[1:])
                else:  # naive joint learner
                    episodes_mf = controller.actors[0][1].k
                    episodes_rel = ()
                fallbacks = sum(a.fallback_count for _, a in controller.actors)
            else:
                episodes_mf, episodes_rel, fallbacks = 0, (), 0
            records.append(RunRecord(
                seed=seed, t=t, cum_cost=cum_cost,
                cum_regret=cum_cost - t * j_true,
                episodes_mf=episodes_mf, episodes_rel=episodes_rel,
                max_state_norm=max_norm, fallbacks=fallbacks,
                diverged=diverged, cum_rel_cost=cum_rel_cost,
            ))

    return RunResult(seed=seed, horizon=horizon, j_true=j_true,
                     records=records, diverged=diverged,
                     controller=controller, verbose=vlog)
