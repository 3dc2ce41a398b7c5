import math

import numpy as np
import pytest
from scipy import integrate, special

from opdickman import core, measures, stats
from opdickman.core import DickmanDistribution, LevyWedge

EULER = 0.5772156649015329
SPHERE2 = measures.UniformSphere(2)
AXIS_ATOMS = measures.Atoms(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.5, 0.5]))


def gd(theta):
    return DickmanDistribution(np.array([[1.0 / theta]]), measures.delta([1.0]))


def gd_log_cf_closed(theta, z):
    # theta * int_0^1 (e^{izu} - 1) du/u = theta (Ci|z| - gamma - log|z| + i Si(z))
    si, ci = special.sici(np.abs(z))
    return theta * (ci - EULER - np.log(np.abs(z)) + 1j * np.sign(z) * si)


class TestSampler:
    def test_gd1_mean(self):
        x = gd(1.0).sample(100_000, seed=1).data
        assert x.shape == (100_000, 1)
        assert abs(x.mean() - 1.0) < 0.01

    def test_empty(self):
        b = gd(1.0).sample(0, seed=0)
        assert len(b) == 0 and b.data.shape == (0, 1)

    def test_gamma_moments(self):
        dist = DickmanDistribution(np.array([[0.5]]), measures.ExponentialRadial(1.0))
        x = dist.sample(100_000, seed=2).data[:, 0]
        assert abs(x.mean() - 2.0) < 0.02
        assert abs(x.var() - 2.0) < 0.05

    def test_reproducible(self):
        dist = DickmanDistribution(np.array([[1.0, -1.0], [1.0, 1.0]]), SPHERE2)
        a = dist.sample(300, seed=42).data
        b = dist.sample(300, seed=42).data
        assert np.array_equal(a, b)
        assert not np.array_equal(a, dist.sample(300, seed=43).data)

    def test_truncation_warning(self):
        with pytest.warns(core.TruncationWarning):
            b = gd(1.0).sample(200, seed=0, n_max=3)
        assert b.cap_hits > 0
        assert b.term_counts.max() <= 3

    def test_scaling_of_amplitude(self):
        # X is linear in the jump sizes, so the same seed scales exactly
        Q = np.array([[1.0, 1.0], [0.0, 2.0]])
        a = DickmanDistribution(Q, measures.delta([1.0, 0.5])).sample(200, seed=3).data
        b = DickmanDistribution(Q, measures.delta([3.0, 1.5])).sample(200, seed=3).data
        np.testing.assert_allclose(b, 3 * a, rtol=1e-12)

    def test_rotation_invariance(self):
        dist = DickmanDistribution(np.eye(2), SPHERE2)
        x = dist.sample(2000, seed=4).data
        c, s = math.cos(1.1), math.sin(1.1)
        y = dist.sample(2000, seed=5).data @ np.array([[c, -s], [s, c]]).T
        assert stats.energy_test(x, y, seed=0).p_value > 0.01

    def test_detects_wrong_operator(self):
        x = gd(1.0).sample(2000, seed=6).data
        y = gd(2.0).sample(2000, seed=7).data
        assert stats.energy_test(x, y, seed=0).p_value < 0.01


class TestLogCF:
    def test_zero(self):
        assert core.log_cf(gd(1.0), np.zeros(1)) == 0
        dist = DickmanDistribution(np.eye(2), SPHERE2)
        assert core.log_cf(dist, np.zeros((1, 2)))[0] == 0

    @pytest.mark.parametrize("theta", [0.5, 1.0, 2.0, 3.7])
    def test_univariate_closed_form(self, theta):
        z = np.array([-12.0, -3.0, -0.25, 0.01, 0.5, 2.0, 7.5, 30.0])
        got = core.log_cf(gd(theta), z[:, None])
        np.testing.assert_allclose(got, gd_log_cf_closed(theta, z), atol=1e-9)

    def test_usphere_d2_against_scipy(self):
        dist = DickmanDistribution(np.eye(2), SPHERE2)
        zs = np.array([[0.3, 0.1], [2.0, -1.0], [0.0, 6.0]])
        for z in zs:
            r = np.linalg.norm(z)
            ref, _ = integrate.quad(lambda s: (special.j0(s * r) - 1) / s, 0, 1,
                                    epsabs=1e-13, limit=200)
            assert core.log_cf(dist, z) == pytest.approx(ref, abs=1e-9)

    def test_diag_atoms_against_scipy(self):
        # diag(1,2): s^Q w = (s w1, s^2 w2) for each atom
        dist = DickmanDistribution(np.diag([1.0, 2.0]), AXIS_ATOMS)
        z = np.array([1.3, -2.2])

        def f(s, part):
            v = 0.5 * (np.exp(1j * s * z[0]) + np.exp(1j * s * s * z[1])) - 1
            return getattr(v, part) / s

        ref = (integrate.quad(f, 0, 1, args=("real",), epsabs=1e-13)[0]
               + 1j * integrate.quad(f, 0, 1, args=("imag",), epsabs=1e-13)[0])
        assert core.log_cf(dist, z) == pytest.approx(ref, abs=1e-9)

    def test_conjugate_symmetry(self):
        dist = DickmanDistribution(np.array([[1.0, -1.0], [1.0, 1.0]]), AXIS_ATOMS)
        z = core.standard_grid(2)
        np.testing.assert_allclose(core.log_cf(dist, -z), np.conj(core.log_cf(dist, z)), atol=1e-10)

    def test_euler_field_identity(self):
        # d/dh log psi(e^{hQ^T} z) at h = 0 equals nu_hat(z) - 1
        dist = DickmanDistribution(np.array([[1.0, 0.5], [-0.3, 1.5]]), AXIS_ATOMS)
        h = 1e-4
        for z in core.standard_grid(2)[::6]:
            plus = dist.Q.exp_neg(-h, transpose=True) @ z
            minus = dist.Q.exp_neg(h, transpose=True) @ z
            deriv = (core.log_cf(dist, plus, 1e-12) - core.log_cf(dist, minus, 1e-12)) / (2 * h)
            assert abs(deriv - (dist.nu.cf(z[None, :])[0] - 1)) < 1e-6

    def test_empirical_agreement(self):
        dist = DickmanDistribution(np.array([[1.0, 1.0], [0.0, 1.0]]), measures.VonMises(0.3, 2.0))
        grid = core.standard_grid(2)
        x = dist.sample(50_000, seed=8)
        d = stats.cf_distance(stats.empirical_cf(x, grid), core.cf_grid(dist, grid))
        assert d < 0.03


class TestMoments:
    def test_scalar_mean(self):
        w = np.array([1.0, -2.0])
        dist = DickmanDistribution(np.eye(2) / 3.0, measures.delta(w))
        np.testing.assert_allclose(core.mean(dist), 3.0 * w)

    def test_symmetric_mean(self):
        np.testing.assert_allclose(core.mean(DickmanDistribution(np.eye(2), SPHERE2)), 0, atol=1e-15)

    def test_diag_mean(self):
        dist = DickmanDistribution(np.diag([1.0, 2.0]), measures.delta([1.0, 1.0]))
        np.testing.assert_allclose(core.mean(dist), [1.0, 0.5])

    @pytest.mark.parametrize("theta", [0.5, 1.0, 4.0])
    def test_dickman_variance(self, theta):
        assert core.covariance(gd(theta))[0, 0] == pytest.approx(theta / 2)

    def test_diag_covariance(self):
        a = np.array([1.0, 3.0])
        dist = DickmanDistribution(np.diag(a), AXIS_ATOMS)
        B = np.diag([0.5, 0.5])
        np.testing.assert_allclose(core.covariance(dist), B / (a[:, None] + a[None, :]))

    def test_usphere_covariance(self):
        np.testing.assert_allclose(core.covariance(DickmanDistribution(np.eye(2), SPHERE2)),
                                   np.eye(2) / 4, atol=1e-15)

    def test_monte_carlo(self):
        dist = DickmanDistribution(np.array([[1.0, -1.0], [1.0, 1.0]]), measures.delta([1.0, 0.0]))
        x = dist.sample(100_000, seed=9).data
        m, se = stats.mean_with_se(x)
        assert np.all(np.abs(m - core.mean(dist)) <= 4 * se)
        C, cse = stats.covariance_with_se(x)
        assert np.all(np.abs(C - core.covariance(dist)) <= 4 * cse)


class TestWedge:
    dist = DickmanDistribution(np.eye(2), SPHERE2)

    def test_large_t(self):
        for t in (1.0, 3.0):
            w = LevyWedge(t, axis=np.array([1.0, 0.0]), half_angle=math.pi)
            assert core.levy_wedge_mass(self.dist, w) == 0.0

    def test_half_circle(self):
        w = LevyWedge(math.exp(-1), axis=np.array([0.0, 1.0]), half_angle=math.pi / 2)
        assert core.levy_wedge_mass(self.dist, w) == pytest.approx(0.5)

    def test_full_support(self):
        w = LevyWedge(math.exp(-2), axis=np.array([1.0, 0.0]), half_angle=math.pi)
        assert core.levy_wedge_mass(self.dist, w) == pytest.approx(2.0)

    def test_atoms(self):
        dist = DickmanDistribution(np.diag([1.0, 2.0]), AXIS_ATOMS)
        w = LevyWedge(0.1, directions=np.array([[1.0, 0.0]]))
        assert core.levy_wedge_mass(dist, w) == pytest.approx(0.5 * math.log(10))

    def test_monte_carlo_count(self):
        # jumps of the perpetuity with |jump| > t form a Poisson count of mean M(A_t)
        t = 0.2
        w = LevyWedge(t, axis=np.array([1.0, 0.0]), half_angle=math.pi / 4)
        expected = core.levy_wedge_mass(self.dist, w)
        rng = np.random.default_rng(10)
        counts = []
        for _ in range(20_000):
            s, c = 1.0, 0
            while True:
                s *= rng.random()
                if s <= t:
                    break
                phi = rng.uniform(-math.pi, math.pi)
                c += abs(phi) <= math.pi / 4
            counts.append(c)
        counts = np.array(counts)
        assert abs(counts.mean() - expected) < 4 * counts.std() / math.sqrt(len(counts))

    def test_bad_wedge(self):
        with pytest.raises(ValueError):
            LevyWedge(0.0, axis=np.array([1.0, 0.0]), half_angle=1.0)
        with pytest.raises(ValueError):
            LevyWedge(0.5)


class TestSelfDecomposability:
    dist = DickmanDistribution(np.diag([1.0, 2.0]), AXIS_ATOMS)
    grid = core.standard_grid(2)

    def test_small_t(self):
        v = core.selfdecomp_factor_logcf(self.dist, 1e-8, self.grid)
        assert np.all(np.abs(v) <= 1e-7 * (1 + np.linalg.norm(self.grid, axis=1)))

    def test_large_t(self):
        v = core.selfdecomp_factor_logcf(self.dist, 50.0, self.grid)
        np.testing.assert_allclose(v, core.log_cf(self.dist, self.grid), atol=1e-6)

    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_factorization(self, t):
        tol = core.DEFAULT_TOL
        shifted = self.grid @ self.dist.Q.exp_neg(t, transpose=True).T
        r = (core.log_cf(self.dist, self.grid) - core.log_cf(self.dist, shifted)
             - core.selfdecomp_factor_logcf(self.dist, t, self.grid))
        assert np.abs(r).max() < 2 * tol

    def test_rejects_nonpositive_t(self):
        with pytest.raises(ValueError):
            core.selfdecomp_factor_logcf(self.dist, 0.0, self.grid)


class TestClosure:
    def test_convolve_dickman(self):
        out = core.convolve(gd(1.5), gd(2.5))
        assert out.Q.entries[0, 0] == pytest.approx(1 / 4.0)
        z = np.linspace(0.5, 5, 7)[:, None]
        np.testing.assert_allclose(core.log_cf(out, z), gd_log_cf_closed(4.0, z[:, 0]), atol=1e-9)

    def test_convolve_same(self):
        Q = np.array([[1.0, 1.0], [0.0, 2.0]])
        d1 = DickmanDistribution(Q, SPHERE2)
        out = core.convolve(d1, d1)
        np.testing.assert_allclose(out.Q.entries, Q / 2, rtol=1e-14)
        z = core.standard_grid(2)
        np.testing.assert_allclose(core.log_cf(out, z), 2 * core.log_cf(d1, z), atol=1e-9)

    def test_convolve_cf_product(self):
        Q = np.array([[1.0, -0.5], [0.5, 1.0]])
        d1 = DickmanDistribution(Q, AXIS_ATOMS)
        d2 = DickmanDistribution(Q / 3, measures.delta([0.0, -1.0]))
        z = core.standard_grid(2)
        out = core.convolve(d1, d2)
        np.testing.assert_allclose(core.log_cf(out, z), core.log_cf(d1, z) + core.log_cf(d2, z),
                                   atol=1e-9)

    def test_convolve_not_proportional(self):
        with pytest.raises(core.ClosureNotApplicable):
            core.convolve(DickmanDistribution(np.eye(2), SPHERE2),
                          DickmanDistribution(np.diag([1.0, 2.0]), SPHERE2))

    def test_reduce_noop(self):
        dist = DickmanDistribution(2.0 * np.eye(2), AXIS_ATOMS)
        red = core.reduce_to_scalar(dist)
        assert red.Q.scalar == pytest.approx(2.0)
        np.testing.assert_allclose(red.nu.probs, AXIS_ATOMS.probs)

    def test_reduce_diag(self):
        dist = DickmanDistribution(np.diag([1.0, 2.0]), AXIS_ATOMS)
        red = core.reduce_to_scalar(dist)
        assert red.Q.scalar == pytest.approx(4.0 / 3.0, rel=1e-14)
        np.testing.assert_allclose(red.nu.probs, [2 / 3, 1 / 3], rtol=1e-14)
        z = core.standard_grid(2)
        np.testing.assert_allclose(core.log_cf(red, z), core.log_cf(dist, z), atol=2e-9)

    def test_reduce_rejects(self):
        dist = DickmanDistribution(np.diag([1.0, 2.0]), measures.delta([1.0, 1.0]))
        with pytest.raises(core.NotEigenspaceSupported):
            core.reduce_to_scalar(dist)
        with pytest.raises(core.NotEigenspaceSupported):
            core.reduce_to_scalar(DickmanDistribution(np.eye(2), SPHERE2))

    def test_decomposition(self):
        dist = DickmanDistribution(0.5 * np.eye(2), AXIS_ATOMS)
        parts = core.finite_atom_decomposition(dist)
        assert len(parts) == 2
        np.testing.assert_allclose(parts[0][0], [1, 0])
        np.testing.assert_allclose(parts[1][0], [0, 1])
        assert parts[0][1] == pytest.approx(1.0) and parts[1][1] == pytest.approx(1.0)
        single = core.finite_atom_decomposition(gd(3.0))
        assert single[0][1] == pytest.approx(3.0)

    def test_decomposition_sampler(self):
        dist = DickmanDistribution(0.5 * np.eye(2), AXIS_ATOMS)
        x = dist.sample(3000, seed=11).data
        y = core.sample_by_decomposition(dist, 3000, seed=12)
        assert stats.energy_test(x, y, seed=1).p_value > 0.01

    def test_decomposition_rejects(self):
        with pytest.raises(ValueError):
            core.finite_atom_decomposition(DickmanDistribution(np.diag([1.0, 2.0]), AXIS_ATOMS))


class TestDrift:
    def test_dickman(self):
        assert core.drift(gd(1.0))[0] == pytest.approx(1.0, abs=1e-9)

    def test_long_jump(self):
        # |s * 2| <= 1 for s <= 1/2: int_0^{1/2} 2 ds = 1
        dist = DickmanDistribution(np.array([[1.0]]), measures.delta([2.0]))
        assert core.drift(dist)[0] == pytest.approx(1.0, abs=1e-9)

    def test_diag(self):
        dist = DickmanDistribution(np.diag([1.0, 2.0]), AXIS_ATOMS)
        np.testing.assert_allclose(core.drift(dist), [0.5, 0.25], atol=1e-9)


def test_fixed_point_image():
    dist = DickmanDistribution(np.array([[1.0, -1.0], [1.0, 1.0]]), SPHERE2)
    x = dist.sample(3000, seed=13).data
    y = core.fixed_point_image(dist, dist.sample(3000, seed=14).data, np.random.default_rng(15))
    assert stats.energy_test(x, y, seed=2).p_value > 0.01


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        DickmanDistribution(np.eye(3), SPHERE2)
