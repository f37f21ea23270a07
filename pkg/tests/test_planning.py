import time
from dataclasses import replace
from math import sqrt

import numpy as np
import pytest
import scipy.linalg

from mft.errors import NotStabilizable
from mft.model import GlobalState, per_step_cost
from mft.planning import (
    StabilitySet,
    assemble_mf,
    assemble_rel,
    in_stability_set,
    optimal_avg_cost,
    plan,
    solve_dare,
)
from mft.tsde import joint_noise_cov, joint_system_matrices, run_policy
from mft.tsde import Policy

from conftest import make_paper_system, make_two_type_system, make_vector_system


def scalar_dare_root(a, b, q, r):
    """Independent oracle: the scalar DARE reduces to a quadratic in S."""
    if b == 0.0:
        return q / (1.0 - a * a)  # Lyapunov closed form, |a| < 1
    # b^2 S^2 + (r - a^2 r - q b^2) S - q r = 0, positive root
    c2 = b * b
    c1 = r - a * a * r - q * b * b
    c0 = -q * r
    return (-c1 + sqrt(c1 * c1 - 4 * c2 * c0)) / (2 * c2)


def finite_horizon_backward(A, B, Q, R, steps):
    """Independent oracle: backward dynamic-programming recursion."""
    S = Q.copy()
    for _ in range(steps):
        G = R + B.T @ S @ B
        S = A.T @ S @ A - A.T @ S @ B @ np.linalg.solve(G, B.T @ S @ A) + Q
    return S


class TestSolveDare:
    def test_paper_relative_scalar(self):
        t0 = time.perf_counter()
        gp = solve_dare([[1.0]], [[0.3]], [[1.0]], [[1.0]])
        oracle = scalar_dare_root(1.0, 0.3, 1.0, 1.0)
        assert oracle == pytest.approx(3.8706247360, abs=1e-8)
        assert gp.S[0, 0] == pytest.approx(oracle, abs=1e-8)
        assert gp.L[0, 0] == pytest.approx(-0.8611874208, abs=1e-7)
        assert time.perf_counter() - t0 < 1.0

    def test_paper_mean_field_scalar(self):
        gp = solve_dare([[1.5]], [[0.5]], [[2.0]], [[1.5]])
        oracle = (9.5 + sqrt(138.25)) / 2
        assert oracle == pytest.approx(10.6289880082, abs=1e-8)
        assert gp.S[0, 0] == pytest.approx(oracle, abs=1e-8)

    def test_quadratic_example(self):
        # A=1.5, B=0.5, Q=2, R=1.5 reduces to S^2 - 9.5 S - 12 = 0.
        gp = solve_dare([[1.5]], [[0.5]], [[2.0]], [[1.5]])
        assert gp.S[0, 0] == pytest.approx(scalar_dare_root(1.5, 0.5, 2.0, 1.5),
                                           abs=1e-8)

    def test_stable_uncontrolled_lyapunov(self):
        gp = solve_dare([[0.5]], [[0.0]], [[1.0]], [[1.0]])
        assert gp.S[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-10)
        assert gp.L[0, 0] == 0.0

    def test_vector_case_against_backward_recursion(self, vector_spec):
        tp = vector_spec.per_type[0]
        t0 = time.perf_counter()
        gp = solve_dare(tp.A, tp.B, tp.Q, tp.R)
        oracle = finite_horizon_backward(tp.A, tp.B, tp.Q, tp.R, 10_000)
        assert np.max(np.abs(gp.S - oracle)) < 1e-6
        scipy_S = scipy.linalg.solve_discrete_are(tp.A, tp.B, tp.Q, tp.R)
        assert np.max(np.abs(gp.S - scipy_S)) < 1e-6
        scipy_L = -np.linalg.solve(tp.R + tp.B.T @ scipy_S @ tp.B,
                                   tp.B.T @ scipy_S @ tp.A)
        assert np.max(np.abs(gp.L - scipy_L)) < 1e-6
        assert time.perf_counter() - t0 < 1.0

    def test_residual_invariant(self, vector_spec):
        tp = vector_spec.per_type[0]
        gp = solve_dare(tp.A, tp.B, tp.Q, tp.R)
        rhs = (tp.A.T @ gp.S @ tp.A
               - tp.A.T @ gp.S @ tp.B @ np.linalg.solve(
                   tp.R + tp.B.T @ gp.S @ tp.B, tp.B.T @ gp.S @ tp.A)
               + tp.Q)
        assert np.linalg.norm(gp.S - rhs) <= 1e-8 * (1 + np.linalg.norm(gp.S))

    def test_not_stabilizable(self):
        with pytest.raises(NotStabilizable):
            solve_dare([[2.0]], [[0.0]], [[1.0]], [[1.0]])
        with pytest.raises(NotStabilizable):
            solve_dare(np.diag([1.5, 0.5]), [[0.0], [1.0]], np.eye(2), [[1.0]])


class TestAssemble:
    def test_paper_scalars(self, paper_spec):
        mf = assemble_mf(paper_spec)
        assert mf.A == pytest.approx(np.array([[1.5]]))
        assert mf.B == pytest.approx(np.array([[0.5]]))

    def test_no_coupling_is_blockdiag(self):
        spec = make_two_type_system()
        zero = [tp for tp in spec.per_type]
        per_type = tuple(
            replace(tp, D=np.zeros((1, 2)), E=np.zeros((1, 2))) for tp in zero
        )
        spec = replace(spec, per_type=per_type)
        mf = assemble_mf(spec)
        A = np.zeros((2, 2))
        A[0, 0] = spec.per_type[0].A[0, 0]
        A[1, 1] = spec.per_type[1].A[0, 0]
        assert mf.A == pytest.approx(A)

    def test_two_type_structure(self):
        # All blocks equal scalars: A_mf = [[a+d, d], [d, a+d]].
        a, d = 0.7, 0.1
        from mft.model import SystemSpec, TypeParams
        tp = TypeParams(A=[[a]], B=[[0.4]], D=[[d, d]], E=[[0.0, 0.0]],
                        Q=[[1.0]], R=[[1.0]])
        spec = SystemSpec(2, 2, 1, 1, (tp, tp), np.eye(2) * 0.5,
                          np.eye(2) * 0.5, 1.0, 0.0, 0.0)
        mf = assemble_mf(spec)
        assert mf.A == pytest.approx(np.array([[a + d, d], [d, a + d]]))

    def test_rel_theta_shape(self, vector_spec):
        rel = assemble_rel(vector_spec, 0)
        assert rel.theta.shape == (3, 2)
        assert rel.A == pytest.approx(vector_spec.per_type[0].A)
        assert rel.B == pytest.approx(vector_spec.per_type[0].B)


class TestPlan:
    def test_paper_gains(self, paper_spec):
        gains = plan(paper_spec)
        # Oracle: scalar DARE quadratic roots plus the gain formula.
        s_rel = scalar_dare_root(1.0, 0.3, 1.0, 1.0)
        s_mf = scalar_dare_root(1.5, 0.5, 2.0, 1.5)
        l_rel = -(0.3 * s_rel * 1.0) / (1.0 + 0.09 * s_rel)
        l_mf = -(0.5 * s_mf * 1.5) / (1.5 + 0.25 * s_mf)
        assert gains.rel[0].L[0, 0] == pytest.approx(l_rel, abs=1e-8)
        assert gains.mf.L[0, 0] == pytest.approx(l_mf, abs=1e-8)
        assert l_rel == pytest.approx(-0.8611874208, abs=1e-8)
        assert l_mf == pytest.approx(-1.9175528907, abs=1e-8)

    def test_decoupled_degenerate_case(self):
        spec = make_paper_system(Q_bar=0.0, R_bar=0.0)
        per_type = (replace(spec.per_type[0], D=np.zeros((1, 1)),
                            E=np.zeros((1, 1))),)
        spec = replace(spec, per_type=per_type)
        gains = plan(spec)
        assert gains.mf.L == pytest.approx(gains.rel[0].L, abs=1e-10)
        assert gains.mf.S == pytest.approx(gains.rel[0].S, abs=1e-10)

    @pytest.mark.parametrize("maker", [make_paper_system, make_two_type_system])
    def test_closed_loop_norms_below_one_scalar_systems(self, maker):
        gains = plan(maker())
        assert gains.mf.closed_loop_norm < 1.0
        for gp in gains.rel:
            assert gp.closed_loop_norm < 1.0

    @pytest.mark.parametrize("maker", [make_paper_system, make_two_type_system,
                                       make_vector_system])
    def test_closed_loop_spectral_radius_below_one(self, maker):
        # The stabilizing Riccati solution guarantees spectral radius < 1;
        # the induced 2-norm can exceed 1 for non-normal closed loops (it
        # coincides with the spectral radius in the scalar cases).
        spec = maker()
        gains = plan(spec)
        mf = assemble_mf(spec)
        cl = mf.A + mf.B @ gains.mf.L
        assert np.max(np.abs(np.linalg.eigvals(cl))) < 1.0
        for m, gp in enumerate(gains.rel):
            tp = spec.per_type[m]
            cl = tp.A + tp.B @ gp.L
            assert np.max(np.abs(np.linalg.eigvals(cl))) < 1.0

    def test_gain_continuity(self):
        base = solve_dare([[1.0]], [[0.3]], [[1.0]], [[1.0]])
        bumped = solve_dare([[1.0 + 1e-6]], [[0.3]], [[1.0]], [[1.0]])
        dl = abs(bumped.L[0, 0] - base.L[0, 0])
        assert 0.0 < dl < 1e-4


class TestOptimalAvgCost:
    def test_paper_value(self, paper_spec):
        j = optimal_avg_cost(paper_spec)
        # sigma_breve2 = 0.5, sigma_bar2 = 1.5 at n=2.
        s_rel = scalar_dare_root(1.0, 0.3, 1.0, 1.0)
        s_mf = scalar_dare_root(1.5, 0.5, 2.0, 1.5)
        assert j == pytest.approx(0.5 * s_rel + 1.5 * s_mf, abs=1e-8)
        assert j == pytest.approx(17.8787944, abs=1e-4)

    def test_noiseless_zero(self):
        spec = make_paper_system(sigma_w2=0.0, sigma_v2=0.0, sigma_v02=0.0)
        assert optimal_avg_cost(spec) == pytest.approx(0.0, abs=1e-12)

    def test_limits_in_population_size(self):
        values = {}
        for n in (1, 10, 100, 1000):
            spec = make_paper_system(n=n, sigma_v2=0.7, sigma_v02=0.3)
            values[n] = (spec.sigma_breve2, spec.sigma_bar2)
        breves = [values[n][0] for n in (1, 10, 100, 1000)]
        bars = [values[n][1] for n in (1, 10, 100, 1000)]
        assert breves == sorted(breves)                  # monotone up to sigma_w2
        assert bars == sorted(bars, reverse=True)        # monotone down
        assert breves[-1] == pytest.approx(1.0, abs=2e-3)
        assert bars[-1] == pytest.approx(1.0, abs=2e-3)

    def test_long_run_simulation_oracle(self, paper_spec):
        # Independent oracle: time-average cost under the optimal gains.
        j = optimal_avg_cost(paper_spec)
        horizon = 200_000
        result = run_policy(Policy(kind="optimal"), paper_spec, horizon,
                            seed=123, record_stride=horizon)
        avg = result.records[-1].cum_cost / horizon
        assert avg == pytest.approx(j, rel=0.02)

    def test_two_type_common_noise_coupling(self, two_type_spec):
        # J with the exact cross-type covariance differs from the
        # block-diagonal evaluation exactly by the off-diagonal part.
        gains = plan(two_type_spec)
        j = optimal_avg_cost(two_type_spec, gains)
        w_diag = np.diag(np.diag(two_type_spec.mf_noise_cov()))
        j_blockdiag = (two_type_spec.sigma_breve2
                       * sum(g.avg_cost_coeff for g in gains.rel)
                       + float(np.trace(w_diag @ gains.mf.S)))
        off = two_type_spec.mf_noise_cov() - w_diag
        assert j - j_blockdiag == pytest.approx(float(np.trace(off @ gains.mf.S)))


class TestStabilitySet:
    def rel_set(self, spec, delta=0.99):
        tp = spec.per_type[0]
        return StabilitySet(kind="rel", delta=delta, Q=tp.Q, R=tp.R,
                            d_state=spec.d_x)

    def test_true_relative_parameter_inside(self, paper_spec):
        theta = assemble_rel(paper_spec, 0).theta
        assert in_stability_set(theta, self.rel_set(paper_spec))
        # closed loop 1 + 0.3 * (-0.86119) = 0.74164 <= 0.99

    def test_unstabilizable_candidate_outside(self, paper_spec):
        theta = np.array([[2.0], [0.0]])
        assert not in_stability_set(theta, self.rel_set(paper_spec))

    def test_true_mean_field_parameter_inside(self, paper_spec):
        theta = assemble_mf(paper_spec).theta
        sset = StabilitySet(kind="mf", delta=0.99, Q=paper_spec.Q_mf,
                            R=paper_spec.R_mf, d_state=1)
        assert in_stability_set(theta, sset)
        # closed loop 1.5 + 0.5 * (-1.91755) = 0.54122 <= 0.99

    def test_delta_gates_membership(self, paper_spec):
        theta = assemble_rel(paper_spec, 0).theta
        assert not in_stability_set(theta, self.rel_set(paper_spec, delta=0.5))


class TestTheorem1Equivalence:
    @pytest.mark.parametrize("n", [2, 3])
    def test_joint_gain_and_cost_match_structured_solution(self, n):
        t0 = time.perf_counter()
        spec = make_paper_system(n=n, sigma_w2=1.0, sigma_v2=0.6, sigma_v02=0.4)
        A, B, Q, R = joint_system_matrices(spec)

        S_joint = scipy.linalg.solve_discrete_are(A, B, Q, R)
        L_joint = -np.linalg.solve(R + B.T @ S_joint @ B, B.T @ S_joint @ A)
        own = solve_dare(A, B, Q, R)
        assert np.max(np.abs(own.S - S_joint)) < 1e-8
        assert np.max(np.abs(own.L - L_joint)) < 1e-8

        gains = plan(spec)
        l_rel = gains.rel[0].L[0, 0]
        l_mf = gains.mf.L[0, 0]
        ones = np.ones((n, n)) / n
        L_structured = l_rel * (np.eye(n) - ones) + l_mf * ones
        assert np.max(np.abs(L_joint - L_structured)) < 1e-6

        W = joint_noise_cov(spec)
        j_joint = float(np.trace(W @ S_joint))
        assert j_joint == pytest.approx(optimal_avg_cost(spec, gains), abs=1e-6)
        assert time.perf_counter() - t0 < 1.0

    def test_joint_cost_matrix_matches_model_cost(self):
        spec = make_paper_system(n=2)
        _, _, Q, R = joint_system_matrices(spec)
        x = np.array([1.0, 3.0])
        st = GlobalState(x=x.reshape(1, 2, 1))
        assert float(x @ Q @ x) == pytest.approx(
            per_step_cost(st, np.zeros((1, 2, 1)), spec))

    def test_joint_dynamics_example(self):
        spec = make_paper_system(n=2)
        A, _, _, _ = joint_system_matrices(spec)
        assert A == pytest.approx(np.array([[1.25, 0.25], [0.25, 1.25]]))
