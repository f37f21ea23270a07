"""Gaussian column posteriors for the unknown dynamics, truncated sampling,
and the agent-selection rule feeding the relative posterior.

Each unknown parameter theta (theta' = [A, B]) gets a conjugate Gaussian
posterior that is independent across the columns of theta with one shared
covariance: observing x_next = theta' z + noise updates every column mean
with the same rank-one correction and shrinks the shared covariance by

    Sigma_inv <- Sigma_inv + z z' / noise_var.

Sigma, its inverse, and log det Sigma are maintained together through the
matched rank-one update/downdate pair; the determinant enters the episode
logic through its log to avoid under/overflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log

import numpy as np

from .planning import GainPair, StabilitySet, gain_for, gain_in_set

__all__ = [
    "Regressor",
    "ColumnPosterior",
    "SelectionScheme",
    "SampleOutcome",
    "sample_truncated",
    "select_agent",
]

_REFACTOR_EVERY = 1000  # periodic re-inversion guards against drift


@dataclass
class Regressor:
    """One regression observation: x_next = theta' z + noise."""

    z: np.ndarray
    x_next: np.ndarray


@dataclass
class ColumnPosterior:
    """Column-Gaussian posterior over a (p x n_cols) parameter matrix.

    mu has shape (p, n_cols) (column ell of mu is the mean of column ell
    of theta); Sigma is the p x p covariance shared by all columns.
    noise_var is the known regression noise variance; trunc is the compact
    set that sampling is restricted to.
    """

    mu: np.ndarray
    Sigma: np.ndarray
    Sigma_inv: np.ndarray
    log_det: float
    noise_var: float
    trunc: StabilitySet
    update_count: int = 0

    @classmethod
    def from_prior(cls, mean: np.ndarray, cov: np.ndarray, noise_var: float,
                   trunc: StabilitySet) -> "ColumnPosterior":
        mu = np.array(mean, dtype=float)
        Sigma = np.array(cov, dtype=float)
        p = Sigma.shape[0]
        if Sigma.shape != (p, p) or mu.shape[0] != p:
            raise ValueError("prior mean/covariance shapes are inconsistent")
        sign, log_det = np.linalg.slogdet(Sigma)
        if sign <= 0:
            raise ValueError("prior covariance must be positive definite")
        Sigma_inv = np.linalg.inv(Sigma)
        Sigma_inv = 0.5 * (Sigma_inv + Sigma_inv.T)
        return cls(mu=mu, Sigma=Sigma, Sigma_inv=Sigma_inv,
                   log_det=float(log_det), noise_var=float(noise_var),
                   trunc=trunc)

    @property
    def p(self) -> int:
        return self.Sigma.shape[0]

    @property
    def n_cols(self) -> int:
        return self.mu.shape[1]

    def copy(self) -> "ColumnPosterior":
        return ColumnPosterior(
            mu=self.mu.copy(), Sigma=self.Sigma.copy(),
            Sigma_inv=self.Sigma_inv.copy(), log_det=self.log_det,
            noise_var=self.noise_var, trunc=self.trunc,
            update_count=self.update_count,
        )

    def update(self, reg: Regressor) -> "ColumnPosterior":
        """Absorb one observation in place (rank-one update); returns self.

        A zero regressor is a legal no-op.  The column means move by the
        shared innovation weight Sigma z / (noise_var + z' Sigma z); the
        covariance shrinks by the matched Sherman-Morrison downdate.
        """
        z = np.asarray(reg.z, dtype=float)
        x_next = np.asarray(reg.x_next, dtype=float)
        if z.shape != (self.p,):
            raise ValueError(f"regressor must have shape ({self.p},), got {z.shape}")
        if x_next.shape != (self.n_cols,):
            raise ValueError(
                f"observation must have shape ({self.n_cols},), got {x_next.shape}"
            )
        if not z.any():
            return self
        if self.noise_var <= 0.0:
            raise ValueError("noise_var must be positive for a nonzero regressor")

        Sz = self.Sigma @ z
        denom = self.noise_var + float(z @ Sz)
        if not denom > 0.0:
            # Extreme regressors (states near the divergence guard) can
            # push the downdated Sigma off positive definiteness; the
            # precision matrix accumulates exactly, so rebuild from it.
            self._refactor()
            Sz = self.Sigma @ z
            denom = self.noise_var + float(z @ Sz)
            if not denom > 0.0:
                raise FloatingPointError("posterior covariance is not "
                                         "positive definite")
        self.mu += np.outer(Sz, x_next - self.mu.T @ z) / denom
        self.Sigma -= np.outer(Sz, Sz) / denom
        self.Sigma = 0.5 * (self.Sigma + self.Sigma.T)
        # outer(z, z) is exactly symmetric, so Sigma_inv stays symmetric.
        self.Sigma_inv += np.outer(z, z) / self.noise_var
        self.log_det += log(self.noise_var / denom)
        self.update_count += 1
        if self.update_count % _REFACTOR_EVERY == 0:
            self._refactor()
        return self

    def _refactor(self) -> None:
        # Sigma_inv accumulates exactly; rebuild Sigma and log_det from it.
        self.Sigma = np.linalg.inv(self.Sigma_inv)
        self.Sigma = 0.5 * (self.Sigma + self.Sigma.T)
        sign, log_det_inv = np.linalg.slogdet(self.Sigma_inv)
        if sign <= 0:
            raise FloatingPointError("posterior precision lost positive definiteness")
        self.log_det = -float(log_det_inv)


@dataclass(frozen=True)
class SampleOutcome:
    """Result of one truncated-sampling call.

    gain is the Riccati gain of the returned parameter when one could be
    computed (it is reusable by the caller; None only in the degenerate
    fallback where not even a stabilizing fallback parameter exists).
    fallback marks that rejection sampling was abandoned after
    max_attempts and a deterministic substitute was returned.
    """

    theta: np.ndarray
    gain: GainPair | None
    attempts: int
    fallback: bool


def sample_truncated(
    post: ColumnPosterior,
    rng: np.random.Generator,
    max_attempts: int = 1000,
    last_accepted: np.ndarray | None = None,
) -> SampleOutcome:
    """Draw theta from the posterior restricted to the truncation set.

    Columns are drawn independently from N(mu(ell), Sigma) and the
    assembled candidate is accepted iff it lies in the truncation set
    (rejection sampling).  After max_attempts rejections the posterior
    mean is returned if it lies in the set, else `last_accepted` (the
    caller's most recent accepted sample), else the mean regardless; such
    outcomes are flagged so callers can count them as diagnostics, never
    as errors.
    """
    chol = np.linalg.cholesky(post.Sigma)
    for attempt in range(1, max_attempts + 1):
        theta = post.mu + chol @ rng.standard_normal(post.mu.shape)
        gp = gain_for(theta, post.trunc)
        if gp is not None and gain_in_set(gp, post.trunc):
            return SampleOutcome(theta=theta, gain=gp, attempts=attempt,
                                 fallback=False)

    mean = post.mu.copy()
    gp = gain_for(mean, post.trunc)
    if gp is not None and gain_in_set(gp, post.trunc):
        return SampleOutcome(theta=mean, gain=gp, attempts=max_attempts,
                             fallback=True)
    if last_accepted is not None:
        return SampleOutcome(theta=np.array(last_accepted, dtype=float),
                             gain=gain_for(last_accepted, post.trunc),
                             attempts=max_attempts, fallback=True)
    return SampleOutcome(theta=mean, gain=gp, attempts=max_attempts,
                         fallback=True)


@dataclass(frozen=True)
class SelectionScheme:
    """Which agent's relative transition updates the type posterior.

    kind is one of "max_quad" (posterior-weighted quadratic form
    maximizer, the default rule), "fixed" (always agent `index`),
    "random" (uniform draw each step), or "all" (every agent, applied in
    index order).
    """

    kind: str = "max_quad"
    index: int = 0

    KINDS = ("max_quad", "fixed", "random", "all")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown selection scheme {self.kind!r}")
        if self.index < 0:
            raise ValueError("fixed agent index must be nonnegative")

    @classmethod
    def parse(cls, text: str) -> "SelectionScheme":
        """Parse "max_quad" | "fixed[:i]" | "random" | "all"."""
        text = text.strip()
        if text.startswith("fixed"):
            _, _, idx = text.partition(":")
            return cls(kind="fixed", index=int(idx) if idx else 0)
        return cls(kind=text)

    def __str__(self) -> str:
        if self.kind == "fixed":
            return f"fixed:{self.index}"
        return self.kind


def select_agent(
    scheme: SelectionScheme,
    relatives: np.ndarray,
    Sigma: np.ndarray,
    rng: np.random.Generator,
) -> int | None:
    """Pick the agent whose transition updates the posterior next step.

    relatives holds one regressor per agent, shape (n, p).  Returns an
    agent index, or None meaning "all agents" (the caller then applies one
    update per agent in index order).  Ties in the quadratic-form rule
    break toward the lowest index.
    """
    z = np.asarray(relatives, dtype=float)
    n = z.shape[0]
    if n == 0:
        raise ValueError("relatives must be nonempty")
    if n == 1:
        # A single candidate needs no draw; all single-agent schemes then
        # consume the same random stream and produce identical updates.
        return None if scheme.kind == "all" else 0
    if scheme.kind == "max_quad":
        forms = np.einsum("ip,pq,iq->i", z, Sigma, z)
        return int(np.argmax(forms))
    if scheme.kind == "fixed":
        if scheme.index >= n:
            raise ValueError(f"fixed agent index {scheme.index} out of range [0, {n})")
        return scheme.index
    if scheme.kind == "random":
        return int(rng.integers(n))
    return None  # "all"
