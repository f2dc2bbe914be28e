import io
import math

import numpy as np
import pytest
from conftest import GENERATORS, random_trajectory
from hypothesis import given, settings
from hypothesis import strategies as st

from geoqsl import dynamics, linalg, metric
from geoqsl.dynamics import Schedule
from geoqsl.errors import InvalidState, ParseError, PSDViolation

SX = np.array([[0, 1], [1, 0]], dtype=complex)


@pytest.mark.parametrize("kind", GENERATORS)
def test_generators_emit_valid_states(kind):
    g = np.random.default_rng(5)
    for _ in range(20):
        traj = random_trajectory(kind, g)
        linalg.as_density(traj.states, trace_tol=1e-12, psd_tol=1e-10)
        tr = np.trace(traj.derivs, axis1=1, axis2=2)
        assert np.max(np.abs(tr)) < 1e-10


@pytest.mark.parametrize("kind", GENERATORS)
def test_analytic_derivative_consistent_with_states(kind):
    traj = random_trajectory(kind, np.random.default_rng(11), m=16)
    errs = []
    for m in (200, 400):
        t = np.linspace(0.0, traj.tau, m + 1)
        states, _ = traj.at(t)
        mid = 0.5 * (t[1:] + t[:-1])
        _, d = traj.at(mid)
        fd = np.diff(states, axis=0) / np.diff(t)[:, None, None]
        errs.append(np.max(np.linalg.norm(fd - d, axis=(1, 2))))
    assert errs[1] < errs[0] / 3.5 or errs[1] < 1e-10


class TestSchedule:
    def test_linear(self):
        s = Schedule.linear(2.0, 1.0, 0.0)
        assert float(s(1.0)) == 0.5 and float(s.deriv(np.array(1.0))) == -0.5
        assert s.direction() == -1

    def test_cosine_endpoints(self):
        s = Schedule.cosine(1.0, 1.0, 0.25)
        assert float(s(0.0)) == 1.0
        assert float(s(1.0)) == pytest.approx(0.25, abs=1e-15)

    def test_non_monotone_rejected(self):
        with pytest.raises(ValueError, match="monotone"):
            Schedule.custom(np.sin, np.cos, 2 * math.pi)


class TestDepolarize:
    def test_constant_weight(self, rng):
        rho0 = linalg.random_density(3, rng)
        traj = dynamics.depolarize(rho0, Schedule.linear(1.0, 1.0, 1.0), 1.0, 8)
        np.testing.assert_allclose(traj.states, np.broadcast_to(rho0, traj.states.shape), atol=1e-15)
        assert np.all(traj.derivs == 0)

    def test_reaches_maximally_mixed(self, rng):
        traj = dynamics.depolarize(linalg.random_density(4, rng), Schedule.linear(1.0), 1.0, 8)
        np.testing.assert_allclose(traj.final, np.eye(4) / 4, atol=1e-15)

    def test_purity_profile(self, rng):
        rho0 = linalg.random_density(3, rng)
        p0 = metric.purity(rho0)
        sched = Schedule.cosine(1.5, 1.0, 0.1)
        traj = dynamics.depolarize(rho0, sched, 1.5, 32)
        p = metric.purity(traj.states)
        np.testing.assert_allclose(p, 1 / 3 + sched(traj.times) ** 2 * (p0 - 1 / 3), atol=1e-14)
        assert np.all(np.diff(p) <= 1e-15)

    def test_rejects_increasing(self, rng):
        with pytest.raises(ValueError):
            dynamics.depolarize(linalg.random_density(2, rng), Schedule.linear(1.0, 0.5, 1.0), 1.0)

    def test_rejects_out_of_range(self, rng):
        with pytest.raises(ValueError):
            dynamics.depolarize(linalg.random_density(2, rng), Schedule.linear(1.0, 1.0, -0.5), 1.0)


class TestGeodesic:
    def test_zero_schedule(self, rng):
        rho0 = linalg.random_density(2, rng)
        traj = dynamics.geodesic(rho0, Schedule.linear(1.0, 0.0, 0.0), 1.0, 8)
        assert np.all(traj.states == rho0)

    def test_matches_depolarize_bitwise(self, rng):
        rho0 = linalg.random_density(3, rng)
        a = dynamics.geodesic(rho0, Schedule.linear(2.0, 0.0, -1.0), 2.0, 64)
        b = dynamics.depolarize(rho0, Schedule.linear(2.0, 1.0, 0.0), 2.0, 64)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.derivs, b.derivs)

    def test_passes_through_maximally_mixed(self, rng):
        traj = dynamics.geodesic(linalg.random_density(2, rng, rank=1), Schedule.linear(1.0, 0.0, -1.0), 1.0, 4)
        np.testing.assert_allclose(traj.final, np.eye(2) / 2, atol=1e-15)

    def test_past_the_cone_names_time(self):
        rho0 = np.diag([0.7, 0.3])
        with pytest.raises(PSDViolation) as err:
            dynamics.geodesic(rho0, Schedule.linear(1.0, 0.0, 2.0), 1.0, 100)
        # eigenvalue 0.3 + b (0.3 - 0.5) hits zero at b = 1.5, t = 0.75
        assert err.value.time == pytest.approx(0.76, abs=1e-12)

    def test_must_start_at_zero(self, rng):
        with pytest.raises(ValueError):
            dynamics.geodesic(linalg.random_density(2, rng), Schedule.linear(1.0, 0.2, 0.0), 1.0)


class TestQubitUnitary:
    def test_full_flip(self):
        traj = dynamics.qubit_mixture_unitary(1.0, 0.3, math.pi / 2, 8)
        np.testing.assert_allclose(traj.final, np.diag([0.0, 1.0]), atol=1e-15)

    @given(st.floats(0.51, 1.0), st.floats(0, 2 * math.pi), st.floats(0.1, 3.0))
    @settings(max_examples=40)
    def test_purity_constant_and_no_drift(self, lam, phi, tau):
        traj = dynamics.qubit_mixture_unitary(lam, phi, tau, 16)
        np.testing.assert_allclose(metric.purity(traj.states), lam**2 + (1 - lam) ** 2, atol=1e-14)
        x = np.einsum("kij,kji->k", traj.states, traj.derivs).real
        assert np.max(np.abs(x)) < 1e-14

    def test_rejects_maximally_mixed(self):
        with pytest.raises(ValueError):
            dynamics.qubit_mixture_unitary(0.5, 0.0, 1.0)


class TestComposite:
    def test_zero_hamiltonian(self, rng):
        rs = linalg.random_density(2, rng)
        traj = dynamics.composite_unitary(rs, linalg.random_density(2, rng), np.zeros((4, 4)), 1.0, 8)
        np.testing.assert_allclose(traj.states, np.broadcast_to(rs, traj.states.shape), atol=1e-15)
        assert np.max(np.abs(traj.derivs)) == 0

    def test_local_hamiltonian_preserves_purity(self, rng):
        h = linalg.kron(linalg.random_hermitian(2, rng), np.eye(2))
        traj = dynamics.composite_unitary(linalg.random_density(2, rng), linalg.random_density(2, rng), h, 2.0, 32)
        p = metric.purity(traj.states)
        np.testing.assert_allclose(p, p[0], atol=1e-13)

    def test_matches_brute_force_propagation(self, rng):
        from scipy.linalg import expm

        rs, re = linalg.random_density(2, rng), linalg.random_density(2, rng)
        for h in (linalg.random_diag_hamiltonian(4, rng), linalg.random_hermitian(4, rng)):
            traj = dynamics.composite_unitary(rs, re, h, 1.0, 8)
            for t, rho in zip(traj.times, traj.states):
                u = expm(-1j * h * t)
                full = u @ np.kron(rs, re) @ u.conj().T
                np.testing.assert_allclose(rho, np.einsum("aebe->ab", full.reshape(2, 2, 2, 2)), atol=1e-12)

    def test_reduced_purity_range(self, rng):
        traj = dynamics.composite_unitary(
            linalg.random_density(2, rng), linalg.random_density(2, rng), linalg.random_diag_hamiltonian(4, rng), 1.0
        )
        p = metric.purity(traj.states)
        assert np.all((p >= 0.5 - 1e-15) & (p <= 1 + 1e-15))
        np.testing.assert_allclose(np.trace(traj.states, axis1=1, axis2=2).real, 1.0, atol=1e-14)

    def test_dimension_check(self, rng):
        with pytest.raises(ValueError):
            dynamics.composite_unitary(linalg.random_density(2, rng), linalg.random_density(2, rng), np.eye(3), 1.0)


class TestFromSamples:
    def test_constant(self, rng):
        rho = linalg.random_density(3, rng)
        traj = dynamics.from_samples(np.linspace(0, 1, 5), np.stack([rho] * 5))
        assert np.max(np.abs(traj.derivs)) < 1e-15

    def test_second_order(self, rng):
        ref = dynamics.depolarize(linalg.random_density(3, rng), Schedule.cosine(1.0, 1.0, 0.2), 1.0, 8)
        errs = []
        for m in (64, 128):
            t = np.linspace(0, 1, m + 1)
            states, derivs = ref.at(t)
            fd = dynamics.from_samples(t, states)
            errs.append(np.max(np.linalg.norm(fd.derivs - derivs, axis=(1, 2))))
        assert errs[0] / errs[1] > 3.5

    def test_two_samples_rejected(self, rng):
        with pytest.raises(ValueError):
            dynamics.from_samples([0.0, 1.0], np.stack([np.eye(2) / 2] * 2))

    def test_invalid_sample_named(self):
        states = np.stack([np.eye(2) / 2, np.diag([1.2, -0.2]), np.eye(2) / 2])
        with pytest.raises(InvalidState, match="sample 1"):
            dynamics.from_samples([0.0, 0.5, 1.0], states)

    def test_non_increasing_times(self):
        with pytest.raises(ValueError):
            dynamics.from_samples([0.0, 0.5, 0.5], np.stack([np.eye(2) / 2] * 3))


class TestTrajectoryText:
    def test_round_trip(self, rng):
        traj = random_trajectory("composite", rng, m=10)
        buf = io.StringIO()
        dynamics.write_trajectory(traj, buf)
        back = dynamics.read_trajectory(buf.getvalue())
        np.testing.assert_array_equal(back.states, traj.states)
        np.testing.assert_array_equal(back.times, traj.times)
        assert back.provenance == dynamics.FINITE_DIFFERENCE

    def test_malformed_header(self):
        with pytest.raises(ParseError, match="line 1"):
            dynamics.read_trajectory("3 2\n")

    def test_bad_time_line(self):
        text = "2 1 1\n0\n1\n1 0\nbad\n"
        with pytest.raises(ParseError, match="line 5"):
            dynamics.read_trajectory(text)

    def test_truncated(self):
        with pytest.raises(ParseError, match="expected 3 samples"):
            dynamics.read_trajectory("2 1 1\n0\n1\n1 0\n")

    def test_tau_mismatch(self):
        text = "2 1 5\n0\n1\n1 0\n0.5\n1\n1 0\n1\n1\n1 0\n"
        with pytest.raises(ParseError, match="disagrees"):
            dynamics.read_trajectory(text)

    def test_resample(self, rng):
        traj = random_trajectory("depolarize", rng, m=8)
        fine = traj.resample(32)
        assert fine.grid_size == 32 and fine.tau == pytest.approx(traj.tau)
