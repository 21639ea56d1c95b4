import numpy as np
import pytest
from hypothesis import given, strategies as st

from hyperflow.analysis import (
    ConvergenceError,
    StabilityCertificate,
    connectivity_eigenvalue,
    dissipation_constant,
    entropy,
    entropy_gradient,
    entropy_rate_chain_rule,
    entropy_rate_closed_form,
    equilibrium_from_tgdb,
    equilibrium_newton,
    iss_constants,
    iss_envelope,
    iss_envelope_check,
    kernel_lower_bound,
    predicted_shift,
    reduced_jacobian,
    sensitivity_first_order,
    spectral_gap,
    tangent_basis,
)
from hyperflow.dynamics import (
    StructuredKernel,
    encode_matrix_direction,
    encode_structured_kernel,
    jacobian,
    vector_field,
)
from hyperflow.hypergraph import (
    DisconnectedSupportError,
    HyperEdgeEntry,
    HyperTensorSet,
    StructuralError,
    support_graph,
)
from hyperflow.integrator import Trajectory

from oracles import interior_state, random_tgdb_system

seeds = st.integers(0, 2 ** 32 - 1)


def complete_kernel(n, s, alpha=0.0):
    return StructuredKernel(s * (np.ones((n, n)) - np.eye(n)), alpha)


def nonuniqueness():
    return HyperTensorSet(3, [HyperEdgeEntry(1, 0, 1, (), 1.0), HyperEdgeEntry(1, 1, 0, (), 1.0)])


class TestEntropy:
    @given(st.integers(2, 8), seeds)
    def test_nonnegative_and_zero_at_reference(self, n, seed):
        rng = np.random.default_rng(seed)
        v = interior_state(n, rng)
        assert entropy(v, v) == 0.0
        assert entropy(interior_state(n, rng), v) >= 0.0

    def test_gradient_vanishes_at_reference(self):
        v = np.array([0.2, 0.3, 0.5])
        np.testing.assert_array_equal(entropy_gradient(v, v), 0.0)

    @given(st.integers(2, 10), seeds)
    def test_closed_form_matches_chain_rule(self, n, seed):
        rng = np.random.default_rng(seed)
        ts, v = random_tgdb_system(n, rng)
        x = interior_state(n, rng)
        closed = entropy_rate_closed_form(ts, x, v)
        assert closed <= 0.0
        assert closed == pytest.approx(entropy_rate_chain_rule(ts, x, v), abs=1e-12)


class TestEquilibria:
    def test_two_node_example(self):
        ts = HyperTensorSet(2, [HyperEdgeEntry(1, 0, 1, (), 2.0), HyperEdgeEntry(1, 1, 0, (), 1.0)])
        np.testing.assert_allclose(np.asarray(equilibrium_from_tgdb(ts)), [2 / 3, 1 / 3], atol=1e-15)

    def test_nonuniqueness_rejected(self):
        with pytest.raises(DisconnectedSupportError, match="strongly connected"):
            equilibrium_from_tgdb(nonuniqueness())

    def test_inconsistent_cycle(self):
        # ratios 2, 2, 2 around a 3-cycle cannot all hold
        es = []
        for i in range(3):
            k = (i + 1) % 3
            es += [HyperEdgeEntry(1, i, k, (), 2.0), HyperEdgeEntry(1, k, i, (), 1.0)]
        with pytest.raises(StructuralError, match="inconsistent"):
            equilibrium_from_tgdb(HyperTensorSet(3, es))

    @given(st.integers(2, 8), seeds)
    def test_newton_agrees_with_ratio_solver(self, n, seed):
        rng = np.random.default_rng(seed)
        ts, v = random_tgdb_system(n, rng)
        a = np.asarray(equilibrium_from_tgdb(ts))
        b = np.asarray(equilibrium_newton(ts, interior_state(n, rng)))
        np.testing.assert_allclose(a, v, atol=1e-13)
        assert np.abs(a - b).max() <= 1e-10

    def test_newton_reports_iterations(self):
        ts = encode_structured_kernel(complete_kernel(4, 1.0))
        x, info = equilibrium_newton(ts, [0.1, 0.2, 0.3, 0.4], full_output=True)
        assert info["iterations"] == len(info["steps"]) >= 1
        np.testing.assert_allclose(np.asarray(x), 0.25, atol=1e-12)

    def test_uphill_start_falls_back_to_continuation(self):
        # at this start the reduced Jacobian is positive, so plain Newton walks away from the root
        rng = np.random.default_rng(10110)
        ts, v = random_tgdb_system(2, rng)
        x0 = interior_state(2, rng)
        assert reduced_jacobian(ts, x0)[0, 0] > 0
        x, info = equilibrium_newton(ts, x0, full_output=True)
        assert info["continuation"]
        np.testing.assert_allclose(np.asarray(x), v, atol=1e-12)

    def test_newton_fails_on_singular_problem(self):
        with pytest.raises(ConvergenceError):
            equilibrium_newton(nonuniqueness(), [0.2, 0.3, 0.5])


class TestSpectral:
    def test_tangent_basis(self):
        tb = tangent_basis(5)
        np.testing.assert_allclose(tb.U.T @ tb.U, np.eye(4), atol=1e-14)
        np.testing.assert_allclose(tb.U.sum(axis=0), 0, atol=1e-14)
        np.testing.assert_allclose(tb.U @ tb.U.T, tb.P, atol=1e-14)

    @pytest.mark.parametrize("n", [2, 4, 7])
    @pytest.mark.parametrize("s", [0.3, 1.5])
    def test_complete_graph_gap(self, n, s):
        ts = encode_structured_kernel(complete_kernel(n, s))
        gap, spectrum = spectral_gap(ts, np.full(n, 1 / n))
        assert gap == pytest.approx(n * s, abs=1e-10)
        np.testing.assert_allclose(spectrum.real, -n * s, atol=1e-10)

    @given(st.integers(2, 8), seeds)
    def test_symmetric_pairwise_gap_is_algebraic_connectivity(self, n, seed):
        # constant symmetric rates give f = -(D - S) x, so c_gap is the Fiedler value of D - S
        rng = np.random.default_rng(seed)
        S = np.triu(rng.uniform(0.1, 2.0, (n, n)), 1)
        S = S + S.T
        ts = encode_structured_kernel(StructuredKernel(S))
        gap, _ = spectral_gap(ts, np.full(n, 1 / n))
        fiedler = np.linalg.eigvalsh(np.diag(S.sum(axis=1)) - S)[1]
        assert gap == pytest.approx(fiedler, rel=1e-10)

    def test_nonuniqueness_spectrum(self):
        gap, spectrum = spectral_gap(nonuniqueness(), np.full(3, 1 / 3))
        np.testing.assert_allclose(np.sort(spectrum.real), [-2.0, 0.0], atol=1e-14)
        assert gap == pytest.approx(0.0, abs=1e-14)

    def test_gap_requires_equilibrium(self):
        with pytest.raises(ValueError, match="not an equilibrium"):
            spectral_gap(encode_structured_kernel(complete_kernel(3, 1.0)), [0.2, 0.3, 0.5])

    @given(st.integers(2, 7), seeds)
    def test_balanced_systems_have_stable_spectrum(self, n, seed):
        ts, v = random_tgdb_system(n, np.random.default_rng(seed))
        gap, spectrum = spectral_gap(ts, v)
        assert gap > 0
        # the reduced Jacobian is similar to a symmetric matrix, so the spectrum is real
        assert np.abs(spectrum.imag).max() <= 1e-8 * max(1.0, np.abs(spectrum).max())


class TestDissipationConstant:
    def test_two_node_values(self):
        # K_2 with v = (1/2, 1/2): lambda_star = 2 and c = q_bar = s
        sk = complete_kernel(2, 1.0)
        cert = dissipation_constant(encode_structured_kernel(sk), [0.5, 0.5], kernel=sk)
        assert cert.lambda_star == pytest.approx(2.0, abs=1e-14)
        assert cert.q_bar == 1.0 and not cert.q_bar_sampled
        assert cert.c == pytest.approx(1.0, abs=1e-14)

    def test_path_connectivity_eigenvalue(self):
        # path on 3 nodes, uniform v: eigenvalues of the Laplacian on 1-perp are 1 and 3
        ts = HyperTensorSet(3, [HyperEdgeEntry(1, 0, 1, (), 1.0), HyperEdgeEntry(1, 1, 0, (), 1.0),
                                HyperEdgeEntry(1, 1, 2, (), 1.0), HyperEdgeEntry(1, 2, 1, (), 1.0)])
        assert connectivity_eigenvalue(support_graph(ts), np.full(3, 1 / 3)) == pytest.approx(1.0, abs=1e-14)

    def test_analytic_and_sampled_kernel_bounds(self):
        sk = complete_kernel(4, 1.0, alpha=0.8)
        ts = encode_structured_kernel(sk)
        g = support_graph(ts)
        exact, sampled_flag = kernel_lower_bound(ts, g, sk)
        estimate, flag = kernel_lower_bound(ts, g, samples=256)
        assert exact == pytest.approx(1.0 + 0.8 / 4) and not sampled_flag
        assert flag and exact <= estimate <= exact * 1.05

    @given(st.integers(2, 7), seeds)
    def test_quadratic_dissipation_bound(self, n, seed):
        # order-1 kernels are constant, so the sampled lower bound is exact
        rng = np.random.default_rng(seed)
        ts, v = random_tgdb_system(n, rng, max_order=1)
        cert = dissipation_constant(ts, v, samples=16)
        assert cert.c > 0
        for _ in range(5):
            x = interior_state(n, rng, low=0.01)
            assert entropy_rate_closed_form(ts, x, v) <= -cert.c * np.sum((x - v) ** 2) + 1e-14


class TestSensitivity:
    def base(self, n=5, seed=0):
        rng = np.random.default_rng(seed)
        S = rng.uniform(0.5, 1.5, (n, n))
        S = np.triu(S, 1) + np.triu(S, 1).T
        dS = rng.normal(size=(n, n))
        np.fill_diagonal(dS, 0)
        dS /= np.linalg.norm(dS)
        return encode_structured_kernel(StructuredKernel(S, 0.8)), encode_matrix_direction(dS, 0.8)

    def test_first_order_is_tangent_and_linear(self):
        ts, d = self.base()
        v = np.full(5, 0.2)
        p1 = predicted_shift(ts, v, d)
        assert abs(p1.sum()) <= 1e-15
        np.testing.assert_allclose(predicted_shift(ts, v, d.scaled(0.5)), 0.5 * p1, atol=1e-16)
        # the prediction solves the linearized equilibrium equation J dv + df = 0 on 1-perp
        tb = tangent_basis(5)
        np.testing.assert_allclose(tb.P @ (jacobian(ts, v) @ p1 + vector_field(d, v)), 0, atol=1e-14)

    def test_remainder_is_quadratic(self):
        ts, d = self.base()
        gaps = [sensitivity_first_order(ts, d.scaled(eps)).first_order_gap for eps in (0.02, 0.01)]
        assert 3.0 <= gaps[0] / gaps[1] <= 5.0

    def test_bound_gain_dominates(self):
        ts, d = self.base()
        rep = sensitivity_first_order(ts, d.scaled(0.01))
        assert np.linalg.norm(rep.predicted_shift) <= rep.bound_gain * rep.delta_norm * (1 + 1e-12)

    def test_zero_direction(self):
        ts, _ = self.base()
        rep = sensitivity_first_order(ts, HyperTensorSet(5, direction=True))
        assert rep.first_order_gap == 0.0


class TestIss:
    def cert(self, c=2.0, n=8):
        return StabilityCertificate(v=np.full(n, 1 / n), c_gap=1.0, c=c, v_min=1 / n, v_max=1 / n,
                                    q_bar=1.0, lambda_star=1.0, tgdb_holds=True)

    def test_closed_form_constants(self):
        n = 8
        ts = encode_structured_kernel(complete_kernel(n, 1.0))
        k = iss_constants(ts, np.full(n, 1 / n), self.cert())
        # theta = 1/16: kappa = 16, M = 8, eta = c / 16
        assert (k.theta, k.kappa, k.m_lo, k.M_hi) == (1 / 16, 16.0, 0.5, 8.0)
        assert k.C2 == pytest.approx(256 / 2.0) and k.eta == pytest.approx(2.0 / 16)
        assert k.C1 == pytest.approx(256 * k.L_A ** 2 / 2.0)

    def test_theta_validated(self):
        ts = encode_structured_kernel(complete_kernel(4, 1.0))
        with pytest.raises(ValueError, match="theta"):
            iss_constants(ts, np.full(4, 0.25), self.cert(n=4), theta=0.3)

    def test_envelope_shape(self):
        ts = encode_structured_kernel(complete_kernel(4, 1.0))
        k = iss_constants(ts, np.full(4, 0.25), self.cert(n=4))
        env = iss_envelope(k, [0.0, 1e6], 0.3, 0.0, 0.0)
        assert env[0] == pytest.approx(0.3) and env[1] == pytest.approx(0.0, abs=1e-300)

    def test_check_counts_violations_and_exclusions(self):
        ts = encode_structured_kernel(complete_kernel(4, 1.0))
        k = iss_constants(ts, np.full(4, 0.25), self.cert(n=4))
        states = np.array([[0.01, 0.33, 0.33, 0.33], [0.25] * 4, [0.2, 0.3, 0.25, 0.25]])
        traj = Trajectory(times=np.array([0.0, 1.0, 2.0]), states=states, mass_residual=np.zeros(3),
                          entropy=np.array([1.0, 0.0, 0.5]), entropy_rate=np.zeros(3),
                          distance=np.zeros(3), field_norm=np.zeros(3))
        check = iss_envelope_check(traj, k, 0.0, 0.0)
        assert check.excluded == 1 and check.violations == 1
