"""True mean-field team system: data, simulation, and state decomposition.

A population of n agents per type (|M| types) evolves as

    x[i,t+1] = A @ x[i,t] + B @ u[i,t] + D @ xbar[t] + E @ ubar[t]
               + w[i,t] + v[m,t] + v0[t]

where xbar/ubar stack the per-type empirical means of states/controls and
the three Gaussian noise channels are local (w, per agent), common within
a type (v), and common to everyone (v0), all with scaled-identity
covariances.  The per-step cost is quadratic with a weak mean-field
coupling through Q_bar/R_bar.

Every agent's state splits into the type mean-field plus a relative part,
x = xbar[m] + xrel; the relative parts of a type always sum to zero.  The
cost and the dynamics both decompose along that split, which is what the
planner and the learner exploit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "TypeParams",
    "SystemSpec",
    "GlobalState",
    "DecomposedState",
    "decompose",
    "step",
    "per_step_cost",
    "per_step_cost_split",
]


def _as_matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    out = np.atleast_2d(np.asarray(value, dtype=float))
    if out.shape != (rows, cols):
        raise ValueError(f"{name} must have shape ({rows}, {cols}), got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} has non-finite entries")
    out = out.copy()
    out.flags.writeable = False
    return out


def _check_spd(mat: np.ndarray, name: str) -> None:
    if not np.allclose(mat, mat.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite") from None


@dataclass(frozen=True)
class TypeParams:
    """Dynamics and cost matrices of one agent type.

    A: d_x x d_x, B: d_x x d_u, D: d_x x (|M| d_x), E: d_x x (|M| d_u),
    Q: d_x x d_x, R: d_u x d_u.  Q and R must be symmetric positive
    definite.
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    E: np.ndarray
    Q: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class SystemSpec:
    """Immutable description of the true system.

    Construction validates the cost-matrix positivity assumptions and that
    both the mean-field pair (A_mf, B_mf) and every per-type pair (A, B)
    are stabilizable (verified by Riccati convergence), so downstream code
    can assume a planning solution exists.  Instances are safe to share
    across concurrently running trajectories.
    """

    num_types: int
    agents_per_type: int
    d_x: int
    d_u: int
    per_type: tuple[TypeParams, ...]
    Q_bar: np.ndarray
    R_bar: np.ndarray
    sigma_w2: float
    sigma_v2: float
    sigma_v02: float
    x0_sigma2: float = 0.0

    def __post_init__(self):
        M, n, dx, du = self.num_types, self.agents_per_type, self.d_x, self.d_u
        if min(M, n, dx, du) < 1:
            raise ValueError("num_types, agents_per_type, d_x, d_u must be >= 1")
        if len(self.per_type) != M:
            raise ValueError(f"expected {M} TypeParams, got {len(self.per_type)}")
        if min(self.sigma_w2, self.sigma_v2, self.sigma_v02, self.x0_sigma2) < 0:
            raise ValueError("noise variances must be nonnegative")

        checked = []
        for m, tp in enumerate(self.per_type):
            tp = TypeParams(
                A=_as_matrix(tp.A, dx, dx, f"A[{m}]"),
                B=_as_matrix(tp.B, dx, du, f"B[{m}]"),
                D=_as_matrix(tp.D, dx, M * dx, f"D[{m}]"),
                E=_as_matrix(tp.E, dx, M * du, f"E[{m}]"),
                Q=_as_matrix(tp.Q, dx, dx, f"Q[{m}]"),
                R=_as_matrix(tp.R, du, du, f"R[{m}]"),
            )
            _check_spd(tp.Q, f"Q[{m}]")
            _check_spd(tp.R, f"R[{m}]")
            checked.append(tp)
        object.__setattr__(self, "per_type", tuple(checked))
        object.__setattr__(
            self, "Q_bar", _as_matrix(self.Q_bar, M * dx, M * dx, "Q_bar")
        )
        object.__setattr__(
            self, "R_bar", _as_matrix(self.R_bar, M * du, M * du, "R_bar")
        )
        _check_spd(self.Q_mf, "diag(Q) + Q_bar")
        _check_spd(self.R_mf, "diag(R) + R_bar")

        # Stabilizability of the mean-field pair and of every per-type
        # pair, via Riccati convergence (raises NotStabilizable).
        from .planning import assemble_mf, assemble_rel, solve_dare

        mf = assemble_mf(self)
        solve_dare(mf.A, mf.B, self.Q_mf, self.R_mf)
        for m in range(M):
            rel = assemble_rel(self, m)
            solve_dare(rel.A, rel.B, self.per_type[m].Q, self.per_type[m].R)

    # -- derived quantities ------------------------------------------------

    @cached_property
    def Q_mf(self) -> np.ndarray:
        """blockdiag(Q^1..Q^M) + Q_bar, the mean-field state cost weight."""
        out = np.zeros_like(self.Q_bar)
        dx = self.d_x
        for m, tp in enumerate(self.per_type):
            out[m * dx:(m + 1) * dx, m * dx:(m + 1) * dx] = tp.Q
        return out + self.Q_bar

    @cached_property
    def R_mf(self) -> np.ndarray:
        """blockdiag(R^1..R^M) + R_bar, the mean-field control cost weight."""
        out = np.zeros_like(self.R_bar)
        du = self.d_u
        for m, tp in enumerate(self.per_type):
            out[m * du:(m + 1) * du, m * du:(m + 1) * du] = tp.R
        return out + self.R_bar

    @property
    def sigma_breve2(self) -> float:
        """Per-coordinate variance of a relative-state disturbance, (1 - 1/n) sigma_w2."""
        return (1.0 - 1.0 / self.agents_per_type) * self.sigma_w2

    @property
    def sigma_bar2(self) -> float:
        """Per-coordinate variance of the mean-field disturbance, sigma_w2/n + sigma_v2 + sigma_v02."""
        return self.sigma_w2 / self.agents_per_type + self.sigma_v2 + self.sigma_v02

    def mf_noise_cov(self) -> np.ndarray:
        """Exact covariance of the stacked mean-field disturbance wbar + v + v0.

        The global channel v0 hits every type block, so for |M| > 1 the
        covariance carries cross-type blocks sigma_v02 * I; the per-type
        blocks are (sigma_w2/n + sigma_v2 + sigma_v02) * I.
        """
        M, dx = self.num_types, self.d_x
        per_block = self.sigma_w2 / self.agents_per_type + self.sigma_v2
        cov = per_block * np.eye(M * dx)
        cov += self.sigma_v02 * np.kron(np.ones((M, M)), np.eye(dx))
        return cov


@dataclass
class GlobalState:
    """All agents' states at one time index: x has shape (|M|, n, d_x)."""

    x: np.ndarray
    t: int = 1


@dataclass
class DecomposedState:
    """Mean-field / relative split of a global state.

    mf is the stacked per-type mean vector of length |M| d_x; rel has shape
    (|M|, n, d_x) and each type slice sums to (numerically) zero over
    agents.
    """

    mf: np.ndarray
    rel: np.ndarray


def _check_state(state: GlobalState, spec: SystemSpec) -> np.ndarray:
    x = np.asarray(state.x, dtype=float)
    want = (spec.num_types, spec.agents_per_type, spec.d_x)
    if x.shape != want:
        raise ValueError(f"state must have shape {want}, got {x.shape}")
    return x


def _check_controls(controls, spec: SystemSpec) -> np.ndarray:
    u = np.asarray(controls, dtype=float)
    want = (spec.num_types, spec.agents_per_type, spec.d_u)
    if u.shape != want:
        raise ValueError(f"controls must have shape {want}, got {u.shape}")
    return u


def decompose(state: GlobalState, spec: SystemSpec) -> DecomposedState:
    """Split the global state into the stacked type means and relative parts."""
    x = _check_state(state, spec)
    means = x.mean(axis=1)                      # (M, d_x)
    rel = x - means[:, None, :]
    return DecomposedState(mf=means.reshape(-1), rel=rel)


def _advance(x: np.ndarray, u: np.ndarray, xbar: np.ndarray, ubar: np.ndarray,
             spec: SystemSpec, rng: np.random.Generator) -> np.ndarray:
    """Dynamics update given precomputed stacked means (hot path)."""
    M, n, dx = x.shape
    v0 = np.sqrt(spec.sigma_v02) * rng.standard_normal(dx)
    v = np.sqrt(spec.sigma_v2) * rng.standard_normal((M, dx))
    w = np.sqrt(spec.sigma_w2) * rng.standard_normal((M, n, dx))

    x_next = np.empty_like(x)
    for m, tp in enumerate(spec.per_type):
        drift = tp.D @ xbar + tp.E @ ubar + v[m] + v0    # shared within type
        x_next[m] = x[m] @ tp.A.T + u[m] @ tp.B.T + w[m] + drift
    return x_next


def step(
    state: GlobalState,
    controls,
    spec: SystemSpec,
    rng: np.random.Generator,
) -> GlobalState:
    """Advance every agent one step under the true dynamics.

    Noise is drawn from `rng` in a fixed order so trajectories are
    reproducible from the seed alone: first the global channel (d_x
    values), then the per-type channels in type order, then the per-agent
    channels in (type, agent) order.  All channels are drawn even when
    their variance is zero, so the stream position is config-independent.
    """
    x = _check_state(state, spec)
    u = _check_controls(controls, spec)
    xbar = x.mean(axis=1).reshape(-1)           # (M d_x,)
    ubar = u.mean(axis=1).reshape(-1)           # (M d_u,)
    return GlobalState(x=_advance(x, u, xbar, ubar, spec, rng), t=state.t + 1)


def _stage_costs(x: np.ndarray, u: np.ndarray, xbar2: np.ndarray,
                 ubar2: np.ndarray, spec: SystemSpec
                 ) -> tuple[float, float, np.ndarray]:
    """(direct cost, mean-field part, per-agent relative parts).

    xbar2/ubar2 are the per-type means with shape (M, d) so both the
    direct evaluation and the split reuse one pass over the data.
    """
    n = spec.agents_per_type
    xb = xbar2.reshape(-1)
    ub = ubar2.reshape(-1)
    direct = float(xb @ spec.Q_bar @ xb + ub @ spec.R_bar @ ub)
    mf_cost = float(xb @ spec.Q_mf @ xb + ub @ spec.R_mf @ ub)
    rel_costs = np.empty((spec.num_types, n))
    for m, tp in enumerate(spec.per_type):
        direct += (float(np.einsum("id,de,ie->", x[m], tp.Q, x[m]))
                   + float(np.einsum("id,de,ie->", u[m], tp.R, u[m]))) / n
        xr = x[m] - xbar2[m]
        ur = u[m] - ubar2[m]
        rel_costs[m] = np.einsum("id,de,ie->i", xr, tp.Q, xr)
        rel_costs[m] += np.einsum("id,de,ie->i", ur, tp.R, ur)
    return direct, mf_cost, rel_costs


def per_step_cost(state: GlobalState, controls, spec: SystemSpec) -> float:
    """Quadratic stage cost: mean-field coupling plus per-type agent averages."""
    x = _check_state(state, spec)
    u = _check_controls(controls, spec)
    return _stage_costs(x, u, x.mean(axis=1), u.mean(axis=1), spec)[0]


def per_step_cost_split(
    state: GlobalState, controls, spec: SystemSpec
) -> tuple[float, np.ndarray]:
    """Stage cost split into the mean-field part and per-agent relative parts.

    Returns (mf_cost, rel_costs) with rel_costs of shape (|M|, n); the
    total stage cost equals mf_cost + sum_m mean_i rel_costs[m, i].
    """
    x = _check_state(state, spec)
    u = _check_controls(controls, spec)
    _, mf_cost, rel_costs = _stage_costs(x, u, x.mean(axis=1), u.mean(axis=1),
                                         spec)
    return mf_cost, rel_costs
