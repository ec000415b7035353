import numpy as np
from django.test import SimpleTestCase

from cqed_app.exceptions import CalibrationError, SteadyStateError
from cqed_app.hilbert import SystemParams, derived_params, liouvillian
from cqed_app.steady_state import (
    DensityOperator,
    calibrate_drive,
    converge_nmax,
    solve,
    steady_state,
)

FIG5 = dict(g=38.0, kappa=8.7, gamma=3.0, Gamma_bw=100.0, r=0.5)


# Test class for the master-equation steady state
class SteadyStateTests(SimpleTestCase):
    # Test case: Without drive the system relaxes to vacuum and ground
    def test_undriven_vacuum(self):
        solution = solve(SystemParams(epsilon=0.0, n_max=3, **FIG5))
        self.assertAlmostEqual(solution.rho.matrix[0, 0].real, 1.0, places=10)
        self.assertAlmostEqual(solution.moments.n_bar, 0.0, places=10)

    # Test case: The solution is a valid density operator
    def test_density_operator_properties(self):
        solution = solve(SystemParams(epsilon=10.0, N=2, n_max=6, **FIG5))
        rho = solution.rho
        self.assertAlmostEqual(rho.trace.real, 1.0, places=10)
        self.assertLess(rho.hermiticity_defect, 1e-10)
        self.assertGreaterEqual(rho.min_eigenvalue, -1e-8)
        L = liouvillian(solution.params, solution.space)
        self.assertLess(np.max(np.abs(L @ rho.matrix.reshape(-1, order="F"))), 1e-10)

    # Test case: Dense and sparse routes give the same state
    def test_dense_and_sparse_agree(self):
        params = SystemParams(epsilon=6.0, n_max=5, **FIG5)
        dense = solve(params, method="dense")
        sparse = solve(params, method="sparse")
        np.testing.assert_allclose(dense.rho.matrix, sparse.rho.matrix, atol=1e-10)

    # Test case: Weak drive reproduces lambda = epsilon / (kappa (1 + 2C))
    def test_weak_drive_field(self):
        params = SystemParams(epsilon=0.01, n_max=3, **FIG5)
        moments = solve(params).moments
        C = derived_params(params).C
        self.assertAlmostEqual(moments.lam.real / (0.01 / (8.7 * (1.0 + 2.0 * C))), 1.0, places=3)
        self.assertLess(abs(moments.lam.imag), 1e-12)
        self.assertGreaterEqual(moments.n_inc, 0.0)
        self.assertAlmostEqual(moments.F, 2.0 * params.angular.kappa * moments.n_bar)

    # Test case: A zero generator has a degenerate null space
    def test_degenerate_null_space(self):
        with self.assertRaises(SteadyStateError):
            steady_state(np.zeros((16, 16), dtype=complex))

    # Test case: Dominant state of a pure density operator is that state
    def test_dominant_state_of_pure_state(self):
        psi = np.array([0.6, 0.8j, 0.0, 0.0])
        rho = DensityOperator(np.outer(psi, psi.conj()))
        self.assertAlmostEqual(rho.purity, 1.0)
        overlap = abs(np.vdot(psi, rho.dominant_state()))
        self.assertAlmostEqual(overlap, 1.0)

    # Test case: Validation catches a negative eigenvalue
    def test_negative_density_operator(self):
        with self.assertRaises(SteadyStateError):
            DensityOperator(np.diag([1.1, -0.1]).astype(complex)).validate()


# Test class for drive calibration and truncation sweeps
class CalibrationTests(SimpleTestCase):
    # Test case: The calibrated drive reaches the requested X
    def test_calibrate_drive(self):
        params = SystemParams(n_max=3, **FIG5)
        epsilon = calibrate_drive(params, 2.99e-4)
        X = solve(params.replace(epsilon=epsilon)).moments.X
        self.assertAlmostEqual(X / 2.99e-4, 1.0, places=6)

    # Test case: An X beyond what the truncation can hold is an error
    def test_unreachable_target(self):
        with self.assertRaises(CalibrationError):
            calibrate_drive(SystemParams(n_max=2, **FIG5), 1e6)

    # Test case: Weak drive converges at the smallest truncation
    def test_converge_nmax_weak_drive(self):
        self.assertEqual(converge_nmax(SystemParams(epsilon=0.01, **FIG5)), 2)

    # Test case: Stronger drive needs a larger truncation
    def test_converge_nmax_strong_drive(self):
        n_max = converge_nmax(SystemParams(epsilon=8.7, g=5.0, kappa=8.7, gamma=3.0))
        self.assertGreater(n_max, 2)
