import math

import numpy as np
from django.test import SimpleTestCase

from cqed_app.correlator import (
    StartClickSet,
    average_conditioned_field,
    average_current,
    collect_batch_starts,
    collect_starts,
    expected_shot_noise,
    h_from_current,
    shot_noise_check,
    symmetrize,
    symmetrize_and_transform,
    symmetry_defect,
    trajectory_tau_grid,
)
from cqed_app.exceptions import CorrelatorError
from cqed_app.hilbert import SystemParams
from cqed_app.qrt import CorrelationSeries, default_nu_grid
from cqed_app.trajectory import EventKind, TrajectoryEvent, TrajectoryMode, TrajectoryRecord

FIG5 = dict(g=38.0, kappa=8.7, gamma=3.0, Gamma_bw=100.0, r=0.5)
DT_S = 0.01


def make_record(click_times, spont_times=(), current=None, cond_field=None, params=None):
    times = np.arange(101) * DT_S
    events = [TrajectoryEvent(EventKind.CAVITY, t) for t in click_times]
    events += [TrajectoryEvent(EventKind.SPONT, t, atom=1) for t in spont_times]
    events.sort(key=lambda event: event.time)
    return TrajectoryRecord(
        index=0,
        seed=0,
        params=params or SystemParams(**FIG5),
        mode=TrajectoryMode.HOMODYNE,
        dt=DT_S / 10,
        dt_s=DT_S,
        current=times.copy() if current is None else current,
        cond_field=np.full(101, 0.5) if cond_field is None else cond_field,
        events=events,
    )


# Test class for start-click collection and window averaging
class StartClickTests(SimpleTestCase):
    def setUp(self):
        self.record = make_record([0.05, 0.3, 0.5, 0.95], spont_times=[0.4])

    # Test case: Only cavity clicks with full context on both sides are starts
    def test_collect_starts(self):
        starts = collect_starts(self.record, 0.1)
        np.testing.assert_allclose(starts.times, [0.3, 0.5])
        self.assertEqual(starts.N_s, 2)

    # Test case: A record without usable clicks is an error
    def test_no_starts(self):
        with self.assertRaises(CorrelatorError):
            collect_starts(make_record([0.02], spont_times=[0.5]), 0.1)

    # Test case: Batch starts come in record order and can be capped
    def test_batch_starts(self):
        records = [self.record, make_record([0.2, 0.7])]
        starts = collect_batch_starts(records, 0.1)
        np.testing.assert_array_equal(starts.record, [0, 0, 1, 1])
        np.testing.assert_allclose(starts.times, [0.3, 0.5, 0.2, 0.7])
        capped = collect_batch_starts(records, 0.1, limit=3)
        np.testing.assert_array_equal(capped.record, [0, 0, 1])
        with self.assertRaises(CorrelatorError):
            collect_batch_starts(records, 0.6)

    # Test case: Subsampling keeps the selected starts
    def test_subsample(self):
        starts = StartClickSet(record=np.array([0, 0, 1]), times=np.array([0.2, 0.4, 0.3]))
        kept = starts.subsample([True, False, True])
        np.testing.assert_allclose(kept.times, [0.2, 0.3])
        self.assertEqual(kept.N_s, 2)

    # Test case: Tau grid sits on the sampling grid and is symmetric
    def test_tau_grid(self):
        tau = trajectory_tau_grid(DT_S, 0.1)
        self.assertEqual(len(tau), 21)
        np.testing.assert_allclose(tau, -tau[::-1])
        self.assertAlmostEqual(tau[-1], 0.1)

    # Test case: Averaging a ramp around two clicks gives the midpoint ramp
    def test_average_current(self):
        starts = collect_starts(self.record, 0.1)
        H = average_current([self.record], starts, trajectory_tau_grid(DT_S, 0.1))
        np.testing.assert_allclose(H.values, 0.4 + H.tau, atol=1e-12)
        np.testing.assert_allclose(H.stderr, 0.1, atol=1e-9)
        self.assertEqual(H.N_s, 2)

    # Test case: One start has no spread to estimate
    def test_single_start_stderr(self):
        starts = collect_starts(make_record([0.5]), 0.1)
        H = average_current([make_record([0.5])], starts, trajectory_tau_grid(DT_S, 0.1))
        self.assertTrue(np.all(np.isnan(H.stderr)))

    # Test case: A window longer than the record context is refused
    def test_window_outside_record(self):
        starts = collect_starts(self.record, 0.1)
        with self.assertRaises(CorrelatorError):
            average_current([self.record], starts, trajectory_tau_grid(DT_S, 0.4))

    # Test case: Conditioned field is reported relative to lambda
    def test_average_conditioned_field(self):
        starts = collect_starts(self.record, 0.1)
        tau = trajectory_tau_grid(DT_S, 0.1)
        averaged = average_conditioned_field([self.record], starts, tau, lam=0.25)
        np.testing.assert_allclose(averaged.values, 2.0)
        with self.assertRaises(CorrelatorError):
            average_conditioned_field([self.record], starts, tau, lam=0.0)


# Test class for the conversion to h and its spectrum
class CurrentToCorrelationTests(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams(**FIG5)
        self.lam = 0.02
        self.scale = self.lam * math.sqrt(8.0 * self.params.angular.kappa * (1.0 - self.params.r))

    def averaged(self, record):
        starts = collect_starts(record, 0.3)
        return average_current([record], starts, trajectory_tau_grid(DT_S, 0.3))

    # Test case: h is the averaged current over lambda sqrt(8 kappa (1 - r))
    def test_h_from_current(self):
        H = self.averaged(make_record([0.4, 0.5]))
        with self.assertLogs("cqed_app.correlator", level="WARNING"):
            h = h_from_current(H, self.lam, self.params)
        np.testing.assert_allclose(h.h, H.values / self.scale)
        np.testing.assert_allclose(h.stderr, H.stderr / self.scale)
        self.assertEqual(h.source, "trajectory")

    # Test case: h needs a positive lambda and light on the homodyne detector
    def test_h_from_current_errors(self):
        H = self.averaged(make_record([0.4, 0.5]))
        with self.assertRaises(CorrelatorError):
            h_from_current(H, 0.0, self.params)
        with self.assertRaises(CorrelatorError):
            h_from_current(H, self.lam, self.params.replace(r=1.0))

    # Test case: A current sitting at its mean level carries no correlation
    def test_constant_current_null_spectrum(self):
        record = make_record([0.4, 0.5], current=np.full(101, self.scale))
        h = h_from_current(self.averaged(record), self.lam, self.params.replace(Gamma_bw=5000.0))
        np.testing.assert_array_equal(h.h, 1.0)
        spec = symmetrize_and_transform(h, F=2.0, nu_grid=default_nu_grid(10.0, 11))
        np.testing.assert_array_equal(spec.S, 0.0)

    # Test case: Symmetrization removes the odd part of h
    def test_symmetrize(self):
        tau = np.linspace(-1.0, 1.0, 21)
        h = CorrelationSeries(tau=tau, h=1.0 + tau, source="trajectory", lam=0.1, n_inc=0.0, stderr=np.full(21, 0.2))
        self.assertAlmostEqual(symmetry_defect(h), 2.0)
        even = symmetrize(h)
        np.testing.assert_allclose(even.h, 1.0, atol=1e-12)
        np.testing.assert_allclose(even.stderr, 0.2)
        self.assertAlmostEqual(symmetry_defect(even), 0.0)


# Test class for the residual detector shot noise
class ShotNoiseTests(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams(**FIG5)
        self.rates = self.params.angular

    # Test case: Expected amplitude Gamma / (16 eta N_s kappa (1 - r) lambda^2)
    def test_expected_shot_noise(self):
        noise = expected_shot_noise(self.params, 0.01, 1000, eta=0.8)
        expected = self.rates.Gamma_bw / (16.0 * 0.8 * 1000 * self.rates.kappa * 0.5 * 1e-4)
        self.assertAlmostEqual(noise.amplitude / expected, 1.0)
        self.assertEqual(noise.rate, self.rates.Gamma_bw)

    # Test case: Shot noise is undefined without homodyne light or starts
    def test_expected_shot_noise_errors(self):
        with self.assertRaises(CorrelatorError):
            expected_shot_noise(self.params.replace(r=1.0), 0.01, 1000)
        with self.assertRaises(CorrelatorError):
            expected_shot_noise(self.params, 0.01, 0)

    # Test case: Noiseless h has no residual noise
    def test_noiseless_band(self):
        tau = np.arange(501) * 1e-3
        h = CorrelationSeries.mirrored(tau, np.ones_like(tau), source="trajectory", lam=0.1, n_inc=0.0)
        fit = shot_noise_check(h, self.params, 100)
        self.assertEqual(fit.amplitude, 0.0)
        self.assertTrue(math.isnan(fit.rate))
        self.assertEqual(fit.expected_rate, self.rates.Gamma_bw)

    # Test case: A band too short to hold the detector correlation is refused
    def test_short_band(self):
        tau = np.arange(321) * 1e-3
        h = CorrelationSeries.mirrored(tau, np.ones_like(tau), source="trajectory", lam=0.1, n_inc=0.0)
        with self.assertRaises(CorrelatorError):
            shot_noise_check(h, self.params, 100)

    # Test case: Exponentially correlated noise is fitted back to its rate and variance
    def test_fit_recovers_noise(self):
        Gamma = self.rates.Gamma_bw
        dtau = 1.0 / (10.0 * Gamma)
        m = int(5.0 / dtau)
        tau = np.arange(-m, m + 1) * dtau
        rho, variance = math.exp(-Gamma * dtau), 4e-3
        rng = np.random.default_rng(0)
        kicks = rng.normal(scale=math.sqrt(variance * (1.0 - rho**2)), size=len(tau))
        noise = np.empty(len(tau))
        noise[0] = rng.normal(scale=math.sqrt(variance))
        for k in range(1, len(tau)):
            noise[k] = rho * noise[k - 1] + kicks[k]
        h = CorrelationSeries(tau=tau, h=1.0 + noise, source="trajectory", lam=0.1, n_inc=0.0)
        fit = shot_noise_check(h, self.params, 100)
        self.assertLess(abs(fit.rate / Gamma - 1.0), 0.15)
        self.assertLess(abs(fit.amplitude / variance - 1.0), 0.15)
        self.assertAlmostEqual(fit.sigma, math.sqrt(fit.amplitude))
