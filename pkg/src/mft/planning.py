"""Riccati planning for mean-field teams.

Solves the |M|+1 discrete algebraic Riccati equations that decouple the
team problem: one per-type "relative" equation with the local matrices
(A, B, Q, R) and one "mean-field" equation with the assembled pair
(A_mf, B_mf) = (blockdiag(A) + stack(D), blockdiag(B) + stack(E)) and the
combined cost weights.  The optimal team policy applies the relative gain
to each agent's deviation from its type mean and the (block row of the)
mean-field gain to the stacked type means; the optimal long-run average
cost is a trace formula in the two Riccati solutions and the disturbance
covariances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotStabilizable
from .model import SystemSpec

__all__ = [
    "GainPair",
    "ThetaMF",
    "ThetaRel",
    "PlanResult",
    "StabilitySet",
    "solve_dare",
    "assemble_mf",
    "assemble_rel",
    "plan",
    "optimal_avg_cost",
    "gain_for",
    "in_stability_set",
    "split_theta",
]

DARE_TOL = 1e-10
DARE_MAX_ITER = 100_000
_DIVERGE_LIMIT = 1e120


@dataclass(frozen=True)
class GainPair:
    """Stabilizing Riccati solution S and feedback gain L for one LQ subproblem.

    avg_cost_coeff is trace(S) (the per-unit-variance average cost);
    closed_loop_norm is the induced 2-norm of A + B L; residual is the
    final fixed-point residual of the Riccati iteration.
    """

    S: np.ndarray
    L: np.ndarray
    avg_cost_coeff: float
    closed_loop_norm: float
    residual: float


def _solve_dare_scalar(a: float, b: float, q: float, r: float,
                       tol: float, max_iter: int) -> tuple[float, float, float]:
    """Plain-float fixed point for 1x1 systems (hot path during sampling)."""
    s = q
    for _ in range(max_iter):
        g = r + b * b * s
        s_next = a * a * s - (a * s * b) ** 2 / g + q
        resid = abs(s_next - s)
        s = s_next
        if resid <= tol:
            l = -(b * s * a) / (r + b * b * s)
            return s, l, resid
        if not np.isfinite(s) or abs(s) > _DIVERGE_LIMIT:
            break
    raise NotStabilizable(
        f"scalar Riccati iteration did not converge (a={a}, b={b})"
    )


def solve_dare(A, B, Q, R, tol: float = DARE_TOL,
               max_iter: int = DARE_MAX_ITER) -> GainPair:
    """Fixed-point iteration for the DARE, started from S = Q.

    Iterates S <- A'SA - A'SB (R + B'SB)^-1 B'SA + Q until the max-abs
    residual drops below `tol`.  Returns the stabilizing solution with its
    gain L = -(B'SB + R)^-1 B'SA; raises NotStabilizable if the iteration
    diverges or fails to converge within `max_iter` steps.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))

    if A.shape == (1, 1) and B.shape == (1, 1):
        s, l, resid = _solve_dare_scalar(
            A[0, 0], B[0, 0], Q[0, 0], R[0, 0], tol, max_iter
        )
        S = np.array([[s]])
        L = np.array([[l]])
        return GainPair(S=S, L=L, avg_cost_coeff=s,
                        closed_loop_norm=abs(A[0, 0] + B[0, 0] * l),
                        residual=resid)

    S = Q.copy()
    resid = np.inf
    for _ in range(max_iter):
        SB = S @ B
        G = R + B.T @ SB
        K = np.linalg.solve(G, SB.T @ A)        # (R + B'SB)^-1 B'SA
        S_next = A.T @ S @ A - (A.T @ SB) @ K + Q
        S_next = 0.5 * (S_next + S_next.T)
        resid = float(np.max(np.abs(S_next - S)))
        S = S_next
        if resid <= tol:
            SB = S @ B
            L = -np.linalg.solve(R + B.T @ SB, SB.T @ A)
            cl = A + B @ L
            return GainPair(
                S=S,
                L=L,
                avg_cost_coeff=float(np.trace(S)),
                closed_loop_norm=float(np.linalg.norm(cl, 2)),
                residual=resid,
            )
        if not np.all(np.isfinite(S)) or np.max(np.abs(S)) > _DIVERGE_LIMIT:
            break
    raise NotStabilizable(
        f"Riccati iteration did not converge after {max_iter} steps "
        f"(last residual {resid:.3g})"
    )


def _check_theta(theta: np.ndarray, d_state: int) -> None:
    if theta.ndim != 2 or theta.shape[1] != d_state:
        raise ValueError(f"parameter must have {d_state} columns, "
                         f"got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter has non-finite entries")


@dataclass(frozen=True)
class ThetaMF:
    """Stacked mean-field dynamics parameter, theta' = [A_mf, B_mf].

    theta has shape (|M|(d_x+d_u), |M| d_x): the first |M| d_x rows are
    A_mf', the rest are B_mf'.
    """

    theta: np.ndarray
    d_state: int

    def __post_init__(self):
        _check_theta(self.theta, self.d_state)

    @property
    def A(self) -> np.ndarray:
        return self.theta[: self.d_state].T

    @property
    def B(self) -> np.ndarray:
        return self.theta[self.d_state:].T


@dataclass(frozen=True)
class ThetaRel:
    """Per-type relative dynamics parameter, theta' = [A, B]."""

    theta: np.ndarray
    d_state: int

    def __post_init__(self):
        _check_theta(self.theta, self.d_state)

    @property
    def A(self) -> np.ndarray:
        return self.theta[: self.d_state].T

    @property
    def B(self) -> np.ndarray:
        return self.theta[self.d_state:].T


def split_theta(theta: np.ndarray, d_state: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a stacked parameter with theta' = [A, B] into (A, B)."""
    theta = np.asarray(theta, dtype=float)
    return theta[:d_state].T, theta[d_state:].T


def assemble_mf(spec: SystemSpec) -> ThetaMF:
    """Mean-field pair: A_mf = blockdiag(A^m) + vstack(D^m), same for B with E."""
    M, dx, du = spec.num_types, spec.d_x, spec.d_u
    A_mf = np.vstack([tp.D for tp in spec.per_type])
    B_mf = np.vstack([tp.E for tp in spec.per_type])
    for m, tp in enumerate(spec.per_type):
        A_mf[m * dx:(m + 1) * dx, m * dx:(m + 1) * dx] += tp.A
        B_mf[m * dx:(m + 1) * dx, m * du:(m + 1) * du] += tp.B
    theta = np.vstack([A_mf.T, B_mf.T])
    return ThetaMF(theta=theta, d_state=M * dx)


def assemble_rel(spec: SystemSpec, m: int) -> ThetaRel:
    """Relative-system parameter of type m: theta' = [A^m, B^m]."""
    tp = spec.per_type[m]
    theta = np.vstack([tp.A.T, tp.B.T])
    return ThetaRel(theta=theta, d_state=spec.d_x)


@dataclass(frozen=True)
class PlanResult:
    """Solved gains for the mean-field system and each relative system."""

    mf: GainPair
    rel: tuple[GainPair, ...]

    def mf_gain_block(self, m: int, d_u: int) -> np.ndarray:
        """Block row m of the mean-field gain (the part applied by type m)."""
        return self.mf.L[m * d_u:(m + 1) * d_u, :]


def plan(spec: SystemSpec) -> PlanResult:
    """Solve the |M|+1 Riccati equations of the team problem."""
    rel = tuple(
        solve_dare(tp.A, tp.B, tp.Q, tp.R) for tp in spec.per_type
    )
    mf_theta = assemble_mf(spec)
    mf = solve_dare(mf_theta.A, mf_theta.B, spec.Q_mf, spec.R_mf)
    return PlanResult(mf=mf, rel=rel)


def optimal_avg_cost(spec: SystemSpec, gains: PlanResult | None = None) -> float:
    """Optimal long-run average cost of the true system.

    J = sum_m sigma_breve2 * tr(S_rel^m) + tr(W_mf @ S_mf), with W_mf the
    exact covariance of the stacked mean-field disturbance (the global
    noise channel correlates type blocks; for |M| = 1 this reduces to
    sigma_bar2 * tr(S_mf)).
    """
    if gains is None:
        gains = plan(spec)
    j = spec.sigma_breve2 * sum(gp.avg_cost_coeff for gp in gains.rel)
    j += float(np.trace(spec.mf_noise_cov() @ gains.mf.S))
    return j


@dataclass(frozen=True)
class StabilitySet:
    """Compact parameter set used to truncate posterior sampling.

    A candidate theta (theta' = [A, B]) is admitted by solving the
    Riccati equation for its own (A, B) with the fixed cost weights
    (Q, R) and testing the gain L(theta) it induces:

    - anchored set (anchor_A/anchor_B given, the form the benchmark
      experiments use): the candidate's gain must stabilize the anchor
      pair, ||anchor_A + anchor_B L(theta)|| <= delta;
    - self test (no anchor): the candidate's own closed loop must
      satisfy ||A + B L(theta)|| <= delta.

    Candidates whose Riccati iteration fails are outside the set either
    way.  delta is normally in (0, 1) but larger values are allowed (some
    experiments deliberately relax it).  radius optionally records a box
    description; it is informational only.
    """

    kind: str
    delta: float
    Q: np.ndarray
    R: np.ndarray
    d_state: int
    anchor_A: np.ndarray | None = None
    anchor_B: np.ndarray | None = None
    radius: float | None = None
    dare_tol: float = DARE_TOL
    dare_max_iter: int = DARE_MAX_ITER


def gain_for(theta: np.ndarray, sset: StabilitySet) -> GainPair | None:
    """Riccati gain of a candidate parameter, or None if not stabilizable."""
    A, B = split_theta(theta, sset.d_state)
    try:
        return solve_dare(A, B, sset.Q, sset.R,
                          tol=sset.dare_tol, max_iter=sset.dare_max_iter)
    except NotStabilizable:
        return None


def gain_in_set(gp: GainPair, sset: StabilitySet) -> bool:
    """Membership test given an already-solved candidate gain."""
    if sset.anchor_A is None:
        return gp.closed_loop_norm <= sset.delta
    cl = sset.anchor_A + sset.anchor_B @ gp.L
    return float(np.linalg.norm(cl, 2)) <= sset.delta


def in_stability_set(theta: np.ndarray, sset: StabilitySet) -> bool:
    """Whether a candidate belongs to the truncation set."""
    gp = gain_for(theta, sset)
    return gp is not None and gain_in_set(gp, sset)
