import math

import numpy as np
import pytest

from isac.scene import (
    SPEED_OF_LIGHT,
    ArrayConfig,
    ClusterTarget,
    DownlinkUser,
    OfdmConfig,
    RayRealization,
    ScenarioConfig,
    downlink_channel,
    draw_reflection_coeffs,
    radar_channel,
    sample_rays,
    simulate_frame,
    steering_vector,
    transmit_symbols,
)


def make_cfg(
    n=4,
    p=64,
    delta_f=120e3,
    targets=(),
    users=(),
    tx_power=1.0,
    noise_var=0.0,
    seed=0,
):
    cp = 5.86e-7
    return ScenarioConfig(
        array=ArrayConfig(n_tx=n, n_rx=n),
        ofdm=OfdmConfig(
            n_subcarriers=p,
            subcarrier_spacing_hz=delta_f,
            symbol_time_s=1.0 / delta_f - cp,
            cp_time_s=cp,
        ),
        targets=tuple(targets),
        users=tuple(users),
        tx_power=tx_power,
        rx_noise_var=noise_var,
        rng_seed=seed,
    )


def point_target(angle_rad, distance_m, n_rays=1, coeffs=None):
    return ClusterTarget(
        mean_angle_rad=angle_rad,
        angle_spread_rad=0.0,
        mean_distance_m=distance_m,
        range_spread_m=0.0,
        n_rays=n_rays,
        reflection_coeffs=coeffs,
    )


class TestSteeringVector:
    def test_broadside_is_all_ones(self):
        assert np.allclose(steering_vector(0.0, 4), np.ones(4))

    def test_endfire_two_elements(self):
        assert np.allclose(steering_vector(np.pi / 2, 2), [-1j, 1j])

    def test_thirty_degrees_three_elements(self):
        assert np.allclose(steering_vector(np.pi / 6, 3), [-1j, 1.0, 1j])

    @pytest.mark.parametrize("theta", [-1.2, -0.3, 0.0, 0.7, 1.5])
    @pytest.mark.parametrize("n", [1, 2, 7, 16])
    def test_unit_modulus_and_conjugate_symmetry(self, theta, n):
        a = steering_vector(theta, n)
        assert np.allclose(np.abs(a), 1.0)
        assert np.allclose(steering_vector(-theta, n), a.conj())


class TestSampleRays:
    def test_degenerate_spreads_collapse_to_means(self):
        t = point_target(0.3, 40.0, n_rays=10)
        rays = sample_rays(t, np.random.default_rng(0))
        assert np.all(rays.angles_rad == 0.3)
        assert np.all(rays.distances_m == 40.0)

    def test_sample_mean_within_clt_bound(self):
        n = 10**6
        t = ClusterTarget(0.5, np.deg2rad(5.0), 40.0, 2.0, n)
        rays = sample_rays(t, np.random.default_rng(1))
        bound = 3.0 * t.angle_half_width_rad / math.sqrt(3.0 * n)
        assert abs(rays.angles_rad.mean() - 0.5) <= bound
        bound_d = 3.0 * t.range_half_width_m / math.sqrt(3.0 * n)
        assert abs(rays.distances_m.mean() - 40.0) <= bound_d

    def test_sample_variance_matches_spread(self):
        n = 10**6
        sigma = np.deg2rad(5.0)
        t = ClusterTarget(0.5, sigma, 40.0, 2.0, n)
        rays = sample_rays(t, np.random.default_rng(2))
        assert abs(rays.angles_rad.var() / sigma**2 - 1.0) <= 0.01
        assert abs(rays.distances_m.var() / 2.0**2 - 1.0) <= 0.01

    def test_angles_and_distances_uncorrelated(self):
        t = ClusterTarget(0.0, np.deg2rad(5.0), 40.0, 2.0, 10**5)
        rays = sample_rays(t, np.random.default_rng(3))
        corr = np.corrcoef(rays.angles_rad, rays.distances_m)[0, 1]
        assert abs(corr) < 0.02

    def test_support_validation(self):
        with pytest.raises(ValueError):
            ClusterTarget(np.deg2rad(89.0), np.deg2rad(5.0), 40.0, 0.0, 1)
        with pytest.raises(ValueError):
            ClusterTarget(0.0, 0.0, 1.0, 2.0, 1)


class TestRadarChannel:
    def test_single_ray_dc_subcarrier(self):
        cfg = make_cfg(n=4)
        rays = RayRealization(np.array([0.4]), np.array([30.0]))
        h = radar_channel([rays], [np.array([1.0 + 0j])], 0, cfg)
        a = steering_vector(0.4, 4)
        assert np.allclose(h, 4.0 * np.outer(a, a.conj()))  # sqrt(16/1) = 4

    def test_broadside_ray_gives_constant_matrix(self):
        cfg = make_cfg(n=4)
        rays = RayRealization(np.array([0.0]), np.array([30.0]))
        p = 5
        h = radar_channel([rays], [np.array([1.0 + 0j])], p, cfg)
        omega = np.exp(
            -2j
            * np.pi
            * p
            * cfg.ofdm.subcarrier_spacing_hz
            * 2.0
            * 30.0
            / SPEED_OF_LIGHT
        )
        assert np.allclose(h, 4.0 * omega * np.ones((4, 4)))

    def test_adjacent_subcarrier_ratio_is_delay_phase(self):
        cfg = make_cfg(n=4)
        d = 55.0
        rays = RayRealization(np.array([0.7]), np.array([d]))
        coeffs = [np.array([0.5 - 0.2j])]
        h3 = radar_channel([rays], coeffs, 3, cfg)
        h4 = radar_channel([rays], coeffs, 4, cfg)
        expected = np.exp(
            -2j
            * np.pi
            * cfg.ofdm.subcarrier_spacing_hz
            * 2.0
            * d
            / SPEED_OF_LIGHT
        )
        assert np.allclose(h4 / h3, expected)

    def test_hermitian_at_dc_with_real_coeffs(self):
        cfg = make_cfg(n=6)
        rng = np.random.default_rng(4)
        t = ClusterTarget(0.2, np.deg2rad(4.0), 40.0, 1.0, 20)
        rays = sample_rays(t, rng)
        h = radar_channel([rays], [np.ones(20, dtype=complex)], 0, cfg)
        assert np.allclose(h, h.conj().T)

    def test_degenerate_cluster_collapses_to_rank_one(self):
        cfg = make_cfg(n=4)
        n_rays = 7
        t = point_target(0.3, 45.0, n_rays=n_rays)
        rays = sample_rays(t, np.random.default_rng(5))
        alpha = np.random.default_rng(6).standard_normal(n_rays) + 0.5j
        p = 9
        h = radar_channel([rays], [alpha], p, cfg)
        a = steering_vector(0.3, 4)
        omega = np.exp(
            -2j
            * np.pi
            * p
            * cfg.ofdm.subcarrier_spacing_hz
            * 2.0
            * 45.0
            / SPEED_OF_LIGHT
        )
        kappa = 16.0 / n_rays
        expected = math.sqrt(kappa) * alpha.sum() * omega * np.outer(a, a.conj())
        assert np.allclose(h, expected)

    def test_mismatched_coeffs_rejected(self):
        cfg = make_cfg(n=4)
        rays = RayRealization(np.array([0.0, 0.1]), np.array([30.0, 31.0]))
        with pytest.raises(ValueError):
            radar_channel([rays], [np.array([1.0 + 0j])], 0, cfg)


class TestDownlinkChannel:
    def test_broadside_user(self):
        u = DownlinkUser(0.0, 1.0 + 0j, 1e-12)
        assert np.allclose(downlink_channel(u, 4), 2.0 * np.ones(4))

    @pytest.mark.parametrize("beta,phi", [(0.3 + 0.4j, 0.5), (2.0, -1.0)])
    def test_norm(self, beta, phi):
        u = DownlinkUser(phi, beta, 1e-12)
        h = downlink_channel(u, 8)
        assert np.isclose(np.linalg.norm(h), 8.0 * abs(beta))

    def test_zero_coeff_gives_zero_vector(self):
        u = DownlinkUser(0.3, 0.0 + 0j, 1e-12)
        assert np.allclose(downlink_channel(u, 5), 0.0)


class TestTransmitSymbols:
    def test_sample_covariance_near_identity(self):
        s = transmit_symbols(2, 6, 10**5, np.random.default_rng(7))
        r = s @ s.conj().T / s.shape[1]
        err = np.linalg.norm(r - np.eye(6)) / np.linalg.norm(np.eye(6))
        assert err <= 0.02

    def test_user_and_probe_rows_uncorrelated(self):
        s = transmit_symbols(3, 6, 10**5, np.random.default_rng(8))
        cross = s[:3] @ s[3:].conj().T / s.shape[1]
        assert np.max(np.abs(cross)) < 0.02

    def test_all_streams_are_users(self):
        s = transmit_symbols(4, 4, 100, np.random.default_rng(9))
        assert s.shape == (4, 100)
        assert np.all(np.abs(s) > 0)


class TestSimulateFrame:
    def test_noiseless_matches_explicit_channel(self):
        # replicate the documented draw order with a second generator and
        # check rx column p equals H_p @ x_p exactly
        target = ClusterTarget(0.4, np.deg2rad(3.0), 40.0, 1.5, 12)
        cfg = make_cfg(n=4, p=16, targets=[target], noise_var=0.0)
        v = np.eye(4, dtype=complex) * math.sqrt(cfg.tx_power / 4)
        frame = simulate_frame(cfg, v, np.random.default_rng(11))

        rng = np.random.default_rng(11)
        rays = sample_rays(target, rng)
        coeffs = draw_reflection_coeffs(target.n_rays, rng)
        symbols = transmit_symbols(0, 4, 16, rng)
        x = v @ symbols
        assert np.allclose(frame.tx_symbols, symbols)
        assert np.allclose(frame.tx_signal, x)
        for p in (0, 7, 15):
            h = radar_channel([rays], [coeffs], p, cfg)
            assert np.allclose(frame.rx[:, p], h @ x[:, p], rtol=1e-10, atol=1e-12)

    def test_zero_targets_pure_noise_covariance(self):
        noise_var = 0.5
        cfg = make_cfg(n=4, p=1000, noise_var=noise_var)
        v = np.eye(4, dtype=complex) * math.sqrt(cfg.tx_power / 4)
        rng = np.random.default_rng(12)
        cols = []
        for _ in range(10):  # 10^4 snapshots total
            cols.append(simulate_frame(cfg, v, rng).rx)
        y = np.hstack(cols)
        r = y @ y.conj().T / y.shape[1]
        target = noise_var * np.eye(4)
        err = np.linalg.norm(r - target) / np.linalg.norm(target)
        assert err <= 0.05

    def test_point_target_covariance_matches_second_order_model(self):
        noise_var = 0.1
        target = point_target(0.5, 40.0, n_rays=1, coeffs=np.array([1.0 + 0j]))
        cfg = make_cfg(n=4, p=1000, targets=[target], noise_var=noise_var)
        v = np.eye(4, dtype=complex) * math.sqrt(cfg.tx_power / 4)
        rng = np.random.default_rng(13)
        cols = [simulate_frame(cfg, v, rng).rx for _ in range(10)]
        y = np.hstack(cols)
        r = y @ y.conj().T / y.shape[1]
        a = steering_vector(0.5, 4)
        big_a = np.outer(a, a.conj())
        r_x = v @ v.conj().T
        kappa = 16.0
        expected = kappa * big_a @ r_x @ big_a.conj().T + noise_var * np.eye(4)
        err = np.linalg.norm(r - expected) / np.linalg.norm(expected)
        assert err <= 0.03

    def test_power_budget_enforced(self):
        cfg = make_cfg(n=4, tx_power=1.0)
        with pytest.raises(ValueError):
            simulate_frame(cfg, np.eye(4, dtype=complex), np.random.default_rng(0))

    def test_fixed_seed_reproducible(self):
        target = ClusterTarget(0.4, np.deg2rad(3.0), 40.0, 1.5, 12)
        cfg = make_cfg(n=4, p=32, targets=[target], noise_var=0.2)
        v = np.eye(4, dtype=complex) * 0.5
        f1 = simulate_frame(cfg, v, np.random.default_rng(42))
        f2 = simulate_frame(cfg, v, np.random.default_rng(42))
        assert np.array_equal(f1.rx, f2.rx)
        assert np.array_equal(f1.tx_signal, f2.tx_signal)


class TestScenarioValidation:
    def test_too_many_users_rejected(self):
        users = [DownlinkUser(0.1 * i, 1.0 + 0j, 1e-12) for i in range(5)]
        with pytest.raises(ValueError):
            make_cfg(n=4, users=users)

    def test_unambiguous_range_enforced(self):
        far = point_target(0.0, SPEED_OF_LIGHT / (2 * 120e3) + 10.0)
        with pytest.raises(ValueError):
            make_cfg(n=4, targets=[far])

    def test_kappa_accessor(self):
        cfg = make_cfg(n=4, targets=[point_target(0.0, 40.0, n_rays=8)])
        assert cfg.kappa(0) == 2.0

    def test_ofdm_spacing_invariant(self):
        with pytest.raises(ValueError):
            OfdmConfig(64, 120e3, 1e-5, 1e-6)
