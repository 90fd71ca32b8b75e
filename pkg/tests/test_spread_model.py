import math

import numpy as np
import pytest

from isac.scene import steering_vector
from isac.spread_model import (
    char_uniform,
    d_diag,
    d_tilde_diag,
    j_approx,
    j_exact,
    phi_matrix,
    phi_tilde_matrix,
    psd_project,
)


def response_matrix(x):
    """A(x) = a(x) a^H(x) for a sin-domain argument x, entrywise phase ramp."""
    n = response_matrix.n
    idx = np.arange(n)
    return np.exp(1j * np.pi * (idx[:, None] - idx[None, :]) * x)


def linearized_sin_draws(theta, sigma_theta, count, rng):
    """Uniform perturbation draws mapped through the small-angle expansion."""
    hw = math.sqrt(3.0) * sigma_theta
    t = rng.uniform(-hw, hw, count)
    return np.sin(theta) + t * np.cos(theta), t


def mc_mean_response(theta, sigma_theta, n, count, rng):
    """Monte Carlo estimate of E[A] under the linearized angle model."""
    s, _ = linearized_sin_draws(theta, sigma_theta, count, rng)
    idx = np.arange(n)
    diff = idx[:, None] - idx[None, :]
    # E[exp(j*pi*diff*s)] evaluated per entry
    return np.exp(1j * np.pi * diff[None, :, :] * s[:, None, None]).mean(axis=0)


def mc_mean_sandwich(theta, sigma_theta, r_x, count, rng):
    """Monte Carlo estimate of E[A R A^H] under the linearized angle model."""
    n = r_x.shape[0]
    s, _ = linearized_sin_draws(theta, sigma_theta, count, rng)
    offsets = np.arange(n) - (n - 1) / 2.0
    a = np.exp(1j * np.pi * np.outer(offsets, s))  # n x count
    # A R A^H = (a^H R a) a a^H for rank-one A = a a^H
    w = np.einsum("ic,ij,jc->c", a.conj(), r_x, a)
    return (a * w) @ a.conj().T / count


def random_psd(n, rng):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return g @ g.conj().T / n


class TestCharUniform:
    def test_at_zero(self):
        assert char_uniform(0.0, 123.0) == 1.0

    def test_zero_half_width(self):
        assert char_uniform(7.3, 0.0) == 1.0

    def test_zero_at_pi(self):
        assert abs(char_uniform(np.pi, 1.0)) < 1e-15

    def test_matches_sinc_on_array(self):
        t = np.linspace(-5, 5, 101)
        vals = char_uniform(t, 0.7)
        assert np.allclose(vals, np.sinc(t * 0.7 / np.pi))


class TestPhiMatrix:
    def test_zero_spread_all_ones(self):
        assert np.allclose(phi_matrix(0.3, 0.0, 5), np.ones((5, 5)))

    def test_endfire_all_ones(self):
        assert np.allclose(phi_matrix(np.pi / 2, np.deg2rad(5.0), 5), np.ones((5, 5)))

    def test_first_offdiagonal_null(self):
        # half-width 1 rad at broadside puts the first off-diagonal at sinc(pi)
        sigma = 1.0 / math.sqrt(3.0)
        phi = phi_matrix(0.0, sigma, 4)
        assert abs(phi[1, 0]) < 1e-15

    @pytest.mark.parametrize("theta", np.deg2rad([0.0, 30.0, 60.0, 80.0]))
    @pytest.mark.parametrize("sigma", np.deg2rad([0.0, 1.0, 5.0, 10.0, 15.0]))
    def test_structure(self, theta, sigma):
        n = 8
        phi = phi_matrix(theta, sigma, n)
        assert np.isrealobj(phi)
        assert np.allclose(phi, phi.T)
        assert np.allclose(np.diag(phi), 1.0)
        # Toeplitz: constant diagonals
        for k in range(1, n):
            band = np.diagonal(phi, offset=k)
            assert np.allclose(band, band[0])
        assert np.linalg.eigvalsh(phi).min() >= -1e-10


class TestPhiTildeMatrix:
    def test_zero_spread_all_ones(self):
        assert np.allclose(phi_tilde_matrix(0.4, 0.0, 3), np.ones((9, 9)))

    @pytest.mark.parametrize("theta", [0.0, 0.5])
    @pytest.mark.parametrize("sigma", np.deg2rad([1.0, 7.0]))
    def test_unit_diagonal_symmetric_psd(self, theta, sigma):
        m = phi_tilde_matrix(theta, sigma, 4)
        assert np.allclose(np.diag(m), 1.0)
        assert np.allclose(m, m.T)
        assert np.linalg.eigvalsh(m).min() >= -1e-10

    def test_monte_carlo_oracle(self):
        # independent expectation oracle for the Kronecker index algebra
        n, sigma = 2, np.deg2rad(3.0)
        response_matrix.n = n
        hw = math.sqrt(3.0) * sigma
        rng = np.random.default_rng(100)
        acc = np.zeros((n * n, n * n), dtype=complex)
        total = 10**6
        chunk = 10**5
        for _ in range(total // chunk):
            t = rng.uniform(-hw, hw, chunk)
            idx = np.arange(n)
            diff = idx[:, None] - idx[None, :]
            a_stack = np.exp(1j * np.pi * diff[None, :, :] * t[:, None, None])
            k = np.einsum("cij,ckl->cikjl", a_stack.conj(), a_stack)
            acc += k.reshape(chunk, n * n, n * n).sum(axis=0)
        mc = acc / total
        built = phi_tilde_matrix(0.0, sigma, n)
        assert np.max(np.abs(mc - built)) <= 1e-3


class TestDiagonalMaps:
    def test_d_broadside_identity(self):
        assert np.allclose(d_diag(0.0, 4), np.eye(4))

    @pytest.mark.parametrize("theta", [0.3, -0.9])
    def test_d_unitary(self, theta):
        d = d_diag(theta, 5)
        assert np.allclose(d @ d.conj().T, np.eye(5))

    def test_d_applied_to_ones_is_steering(self):
        theta = 0.7
        assert np.allclose(d_diag(theta, 6) @ np.ones(6), steering_vector(theta, 6))

    def test_d_tilde_broadside_identity(self):
        assert np.allclose(d_tilde_diag(0.0, 3), np.eye(9))

    def test_d_tilde_unitary_and_matches_kron(self):
        theta = 0.5
        d = d_tilde_diag(theta, 4)
        assert np.allclose(d @ d.conj().T, np.eye(16))
        a = steering_vector(theta, 4)
        assert np.allclose(np.diag(d), np.kron(a.conj(), a))


class TestJExact:
    def test_zero_spread_isotropic_input(self):
        n, p_b = 6, 2.5
        r_x = (p_b / n) * np.eye(n)
        theta = 0.6
        j = j_exact(theta, 0.0, r_x)
        a = steering_vector(theta, n)
        assert np.allclose(j, p_b * np.outer(a, a.conj()))

    def test_zero_spread_general_input_matches_sandwich(self):
        n = 5
        r_x = random_psd(n, np.random.default_rng(200))
        theta = -0.4
        a = steering_vector(theta, n)
        big_a = np.outer(a, a.conj())
        assert np.allclose(j_exact(theta, 0.0, r_x), big_a @ r_x @ big_a.conj().T)

    def test_hermitian(self):
        r_x = random_psd(8, np.random.default_rng(201))
        j = j_exact(np.deg2rad(30.0), np.deg2rad(5.0), r_x)
        assert np.linalg.norm(j - j.conj().T) <= 1e-10 * np.linalg.norm(j)

    def test_monte_carlo_oracle_identity_input(self):
        n = 8
        theta, sigma = np.deg2rad(30.0), np.deg2rad(5.0)
        j = j_exact(theta, sigma, np.eye(n))
        mc = mc_mean_sandwich(theta, sigma, np.eye(n), 10**5, np.random.default_rng(202))
        assert np.linalg.norm(j - mc) / np.linalg.norm(mc) <= 1e-2

    def test_monte_carlo_oracle_random_input(self):
        n = 6
        rng = np.random.default_rng(203)
        r_x = random_psd(n, rng)
        theta, sigma = np.deg2rad(-20.0), np.deg2rad(7.0)
        j = j_exact(theta, sigma, r_x)
        mc = mc_mean_sandwich(theta, sigma, r_x, 2 * 10**5, rng)
        assert np.linalg.norm(j - mc) / np.linalg.norm(mc) <= 1e-2

    def test_isotropic_input_reduces_to_scaled_j_approx(self):
        # for R_X = c*I the sandwich expectation collapses to c*n*E[A]
        n, c = 7, 0.37
        theta, sigma = 0.5, np.deg2rad(6.0)
        j = j_exact(theta, sigma, c * np.eye(n))
        assert np.allclose(j, c * n * j_approx(theta, sigma, n), atol=1e-10)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            j_exact(0.0, 0.0, np.ones((3, 4)))


class TestJApprox:
    def test_zero_spread_rank_one(self):
        theta = 0.4
        a = steering_vector(theta, 6)
        j = j_approx(theta, 0.0, 6)
        assert np.allclose(j, np.outer(a, a.conj()))
        assert np.linalg.matrix_rank(j) == 1

    def test_endfire_spread_has_no_effect(self):
        # cos(theta) = 0 nulls the spread: the kernel collapses to the
        # rank-one response and every entry has unit modulus
        j = j_approx(np.pi / 2, np.deg2rad(8.0), 5)
        a = steering_vector(np.pi / 2, 5)
        assert np.allclose(j, np.outer(a, a.conj()))
        assert np.allclose(np.abs(j), 1.0)

    def test_monte_carlo_oracle(self):
        n = 8
        theta, sigma = np.deg2rad(30.0), np.deg2rad(5.0)
        j = j_approx(theta, sigma, n)
        mc = mc_mean_response(theta, sigma, n, 10**5, np.random.default_rng(204))
        assert np.linalg.norm(j - mc) / np.linalg.norm(mc) <= 1e-2

    @pytest.mark.parametrize("sigma_deg", [0.0, 2.0, 5.0, 10.0])
    def test_unit_diagonal_psd_bounded_spectrum(self, sigma_deg):
        n = 8
        j = j_approx(0.7, np.deg2rad(sigma_deg), n)
        assert np.allclose(np.diag(j), 1.0)
        w = np.linalg.eigvalsh(j)
        assert w.min() >= -1e-10
        assert w.max() <= n + 1e-10
        assert np.isclose(w.sum(), n)

    def test_effective_rank_nondecreasing_in_spread(self):
        n = 8
        prs = []
        for sigma_deg in range(0, 11):
            w = np.linalg.eigvalsh(j_approx(np.deg2rad(20.0), np.deg2rad(sigma_deg), n))
            w = np.maximum(w, 0.0)
            prs.append(w.sum() ** 2 / (w**2).sum())
        assert all(b >= a - 1e-9 for a, b in zip(prs, prs[1:]))


class TestPsdProject:
    def test_leaves_psd_untouched(self):
        r = random_psd(5, np.random.default_rng(205))
        assert np.allclose(psd_project(r), r, atol=1e-12)

    def test_clips_negative_eigenvalue(self):
        h = np.diag([1.0, -0.5])
        out = psd_project(h)
        assert np.allclose(out, np.diag([1.0, 0.0]))
