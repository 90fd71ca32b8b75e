"""Scene generation: arrays, cluster-of-rays targets, OFDM channels, received frames.

Conventions used throughout the package:

* Angles are radians internally; degrees appear only at the config/CSV boundary.
* The base station uses a half-wavelength uniform linear array with a phase
  center in the middle of the aperture, so element m of the response to a
  plane wave from direction theta is ``exp(j*pi*(m - (n-1)/2)*sin(theta))``.
* A cluster target is a bundle of rays whose angles and distances are i.i.d.
  uniform around the cluster mean; a spread ``sigma`` corresponds to a
  uniform half-width ``sqrt(3)*sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact

_HALF_PI = math.pi / 2.0


@dataclass(frozen=True)
class ArrayConfig:
    """Colocated transmit/receive ULA sizes. Equal counts keep all the
    second-order kernels square, which the estimators rely on."""

    n_tx: int
    n_rx: int

    def __post_init__(self):
        if self.n_tx < 1:
            raise ValueError("n_tx must be a positive integer")
        if self.n_rx < 1:
            raise ValueError("n_rx must be a positive integer")
        if self.n_tx != self.n_rx:
            raise ValueError("n_tx and n_rx must be equal")


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM numerology. The subcarrier spacing is tied to the total symbol
    duration (useful part plus cyclic prefix)."""

    n_subcarriers: int
    subcarrier_spacing_hz: float
    symbol_time_s: float
    cp_time_s: float

    def __post_init__(self):
        if self.n_subcarriers < 1:
            raise ValueError("n_subcarriers must be a positive integer")
        if self.subcarrier_spacing_hz <= 0:
            raise ValueError("subcarrier_spacing_hz must be positive")
        if self.symbol_time_s <= 0:
            raise ValueError("symbol_time_s must be positive")
        if self.cp_time_s < 0:
            raise ValueError("cp_time_s must be nonnegative")
        expected = 1.0 / (self.symbol_time_s + self.cp_time_s)
        if abs(expected - self.subcarrier_spacing_hz) > 1e-9 * expected:
            raise ValueError(
                "subcarrier_spacing_hz must equal 1/(symbol_time_s + cp_time_s)"
            )

    @property
    def unambiguous_range_m(self) -> float:
        """Largest one-way distance whose round-trip phase ramp does not alias."""
        return SPEED_OF_LIGHT / (2.0 * self.subcarrier_spacing_hz)


@dataclass(frozen=True, eq=False)
class ClusterTarget:
    """Spread target: rays drawn uniformly around a mean direction/distance.

    ``reflection_coeffs`` may be left as None, in which case unit-modulus
    random-phase coefficients are drawn once per simulated frame.  Unit
    modulus keeps the aggregate channel power deterministic, which makes
    SNR sweeps exact.
    """

    mean_angle_rad: float
    angle_spread_rad: float
    mean_distance_m: float
    range_spread_m: float
    n_rays: int
    reflection_coeffs: np.ndarray | None = None

    def __post_init__(self):
        if not (-_HALF_PI < self.mean_angle_rad < _HALF_PI):
            raise ValueError("mean_angle_rad must lie in (-pi/2, pi/2)")
        if self.angle_spread_rad < 0:
            raise ValueError("angle_spread_rad must be nonnegative")
        if self.mean_distance_m <= 0:
            raise ValueError("mean_distance_m must be positive")
        if self.range_spread_m < 0:
            raise ValueError("range_spread_m must be nonnegative")
        if self.n_rays < 1:
            raise ValueError("n_rays must be a positive integer")
        if (
            self.mean_angle_rad - self.angle_half_width_rad <= -_HALF_PI
            or self.mean_angle_rad + self.angle_half_width_rad >= _HALF_PI
        ):
            raise ValueError("angular support must stay inside (-pi/2, pi/2)")
        if self.mean_distance_m - self.range_half_width_m <= 0:
            raise ValueError("range support must stay strictly positive")
        if self.reflection_coeffs is not None:
            coeffs = np.asarray(self.reflection_coeffs, dtype=complex)
            if coeffs.shape != (self.n_rays,):
                raise ValueError("reflection_coeffs must have length n_rays")
            object.__setattr__(self, "reflection_coeffs", coeffs)

    @property
    def angle_half_width_rad(self) -> float:
        """Half-width of the uniform angle law: sqrt(3) times the spread."""
        return math.sqrt(3.0) * self.angle_spread_rad

    @property
    def range_half_width_m(self) -> float:
        return math.sqrt(3.0) * self.range_spread_m


@dataclass(frozen=True, eq=False)
class RayRealization:
    """One draw of per-ray angles and distances for a cluster."""

    angles_rad: np.ndarray
    distances_m: np.ndarray

    def __post_init__(self):
        angles = np.asarray(self.angles_rad, dtype=float)
        dists = np.asarray(self.distances_m, dtype=float)
        if angles.shape != dists.shape or angles.ndim != 1:
            raise ValueError("angles_rad and distances_m must be equal-length vectors")
        object.__setattr__(self, "angles_rad", angles)
        object.__setattr__(self, "distances_m", dists)

    @property
    def n_rays(self) -> int:
        return self.angles_rad.size

    def delays_s(self) -> np.ndarray:
        """Round-trip delays 2*d/c of every ray."""
        return 2.0 * self.distances_m / SPEED_OF_LIGHT

    def subcarrier_phase(self, subcarrier_index: int, delta_f_hz: float) -> np.ndarray:
        """Per-ray phase rotation exp(-j*2*pi*p*df*tau) on subcarrier p."""
        return np.exp(-2j * np.pi * subcarrier_index * delta_f_hz * self.delays_s())


@dataclass(frozen=True)
class DownlinkUser:
    """Single-antenna downlink user with a line-of-sight channel."""

    angle_rad: float
    channel_coeff: complex
    noise_var: float
    rate_threshold_bps_hz: float = 0.0

    def __post_init__(self):
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")
        if self.rate_threshold_bps_hz < 0:
            raise ValueError("rate_threshold_bps_hz must be nonnegative")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Single source of truth for one simulation run.

    ``eta`` (range-profile threshold) and ``chi`` (signal-energy fraction for
    the rank test) ride along here so that a scenario file fully determines a
    run.
    """

    array: ArrayConfig
    ofdm: OfdmConfig
    targets: tuple[ClusterTarget, ...]
    users: tuple[DownlinkUser, ...]
    tx_power: float
    rx_noise_var: float
    rng_seed: int = 0
    eta: float = 0.40
    chi: float = 0.99

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "users", tuple(self.users))
        if self.tx_power <= 0:
            raise ValueError("tx_power must be positive")
        # zero is allowed so noiseless diagnostic runs can be configured
        if self.rx_noise_var < 0:
            raise ValueError("rx_noise_var must be nonnegative")
        if len(self.users) > self.array.n_tx:
            raise ValueError("number of users must not exceed n_tx")
        if not (0.0 < self.eta <= 1.0):
            raise ValueError("eta must lie in (0, 1]")
        if not (0.0 < self.chi <= 1.0):
            raise ValueError("chi must lie in (0, 1]")
        max_range = self.ofdm.unambiguous_range_m
        for i, t in enumerate(self.targets):
            if t.mean_distance_m + t.range_half_width_m >= max_range:
                raise ValueError(
                    f"target {i} exceeds the unambiguous range {max_range:.1f} m"
                )

    @property
    def n_users(self) -> int:
        return len(self.users)

    def kappa(self, target_index: int = 0) -> float:
        """Channel gain scale n_tx*n_rx/n_rays of one target."""
        t = self.targets[target_index]
        return self.array.n_tx * self.array.n_rx / t.n_rays


@dataclass(frozen=True, eq=False)
class ReceivedFrame:
    """Per-subcarrier receive snapshots plus the transmit side that produced them.

    Columns index subcarriers: ``rx[:, p]`` is the receive snapshot,
    ``tx_symbols[:, p]`` the stream symbols and ``tx_signal[:, p]`` the
    beamformed antenna signal on subcarrier p.
    """

    rx: np.ndarray
    tx_symbols: np.ndarray
    tx_signal: np.ndarray

    def __post_init__(self):
        if not (
            self.rx.shape[1] == self.tx_symbols.shape[1] == self.tx_signal.shape[1]
        ):
            raise ValueError("rx, tx_symbols and tx_signal must share a column count")

    @property
    def n_subcarriers(self) -> int:
        return self.rx.shape[1]


def steering_vector(angle_rad: float, n: int) -> np.ndarray:
    """Array response of an n-element half-wavelength ULA toward ``angle_rad``.

    Element m equals exp(j*pi*(m - (n-1)/2)*sin(angle_rad)); every entry has
    unit modulus and the phase ramp is centered on the aperture midpoint.
    """
    offsets = np.arange(n) - (n - 1) / 2.0
    return np.exp(1j * np.pi * offsets * np.sin(angle_rad))


def _steering_matrix(angles_rad: np.ndarray, n: int) -> np.ndarray:
    """Stack of steering vectors, one column per angle."""
    offsets = np.arange(n) - (n - 1) / 2.0
    return np.exp(1j * np.pi * np.outer(offsets, np.sin(angles_rad)))


def sample_rays(target: ClusterTarget, rng: np.random.Generator) -> RayRealization:
    """Draw one i.i.d. uniform realization of the ray angles and distances."""
    ht = target.angle_half_width_rad
    hd = target.range_half_width_m
    angles = rng.uniform(
        target.mean_angle_rad - ht, target.mean_angle_rad + ht, target.n_rays
    )
    dists = rng.uniform(
        target.mean_distance_m - hd, target.mean_distance_m + hd, target.n_rays
    )
    return RayRealization(angles, dists)


def draw_reflection_coeffs(n_rays: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-modulus reflection coefficients with i.i.d. uniform phase."""
    return np.exp(2j * np.pi * rng.uniform(0.0, 1.0, n_rays))


def radar_channel(
    rays_per_target: list[RayRealization],
    coeffs: list[np.ndarray],
    subcarrier_index: int,
    cfg: ScenarioConfig,
) -> np.ndarray:
    """Monostatic radar channel on one subcarrier.

    Sums sqrt(kappa)*alpha*omega^p*a(theta)a^H(theta) over every ray of every
    target, where omega^p carries the round-trip delay phase of the ray.

    Parameters
    ----------
    rays_per_target : list of RayRealization, one per target.
    coeffs : list of complex vectors, reflection coefficients per target.
    subcarrier_index : subcarrier p in [0, n_subcarriers).
    cfg : scenario (supplies array sizes, subcarrier spacing, ray counts).
    """
    if len(rays_per_target) != len(coeffs):
        raise ValueError("rays_per_target and coeffs must have equal length")
    if not 0 <= subcarrier_index < cfg.ofdm.n_subcarriers:
        raise ValueError("subcarrier_index out of range")
    m, n = cfg.array.n_rx, cfg.array.n_tx
    h = np.zeros((m, n), dtype=complex)
    for rays, alpha in zip(rays_per_target, coeffs):
        alpha = np.asarray(alpha, dtype=complex)
        if alpha.shape != (rays.n_rays,):
            raise ValueError("coefficient vector length must match the ray count")
        kappa = cfg.array.n_tx * cfg.array.n_rx / rays.n_rays
        omega = rays.subcarrier_phase(subcarrier_index, cfg.ofdm.subcarrier_spacing_hz)
        a = _steering_matrix(rays.angles_rad, n)
        h += math.sqrt(kappa) * (a * (alpha * omega)) @ a.conj().T
    return h


def downlink_channel(user: DownlinkUser, n_tx: int) -> np.ndarray:
    """Conjugated (row-form) downlink channel h^H of one user.

    The norm is n_tx*|channel_coeff|: a sqrt(n_tx) array gain on top of the
    unit-modulus steering entries.
    """
    if n_tx < 1:
        raise ValueError("n_tx must be a positive integer")
    return (
        math.sqrt(n_tx)
        * user.channel_coeff
        * steering_vector(user.angle_rad, n_tx).conj()
    )


def transmit_symbols(
    n_users: int, n_tx: int, n_subcarriers: int, rng: np.random.Generator
) -> np.ndarray:
    """Unit-power stream symbols, one row per stream, one column per subcarrier.

    All entries are i.i.d. circular complex Gaussian CN(0, 1), so streams are
    zero-mean, unit-variance and mutually uncorrelated.  Rows 0..n_users-1
    carry user data; the remaining rows are synthetic probing streams.
    """
    if n_users > n_tx:
        raise ValueError("n_users must not exceed n_tx")
    re = rng.standard_normal((n_tx, n_subcarriers))
    im = rng.standard_normal((n_tx, n_subcarriers))
    return (re + 1j * im) / math.sqrt(2.0)


def simulate_frame(
    cfg: ScenarioConfig, beamformer: np.ndarray, rng: np.random.Generator
) -> ReceivedFrame:
    """Simulate one OFDM frame through a fresh ray realization.

    Rays (and, when a target carries no fixed coefficients, reflection
    coefficients) are drawn once per frame and held constant across the
    subcarriers of that frame.  Draw order from ``rng``: per-target rays,
    per-target coefficients where unset, stream symbols, receive noise.

    Raises ValueError if the beamformer exceeds the transmit power budget.
    """
    v = np.asarray(beamformer, dtype=complex)
    n = cfg.array.n_tx
    if v.shape != (n, n):
        raise ValueError("beamformer must be n_tx x n_tx")
    power = float(np.linalg.norm(v) ** 2)
    if power > cfg.tx_power * (1.0 + 1e-9) + 1e-12:
        raise ValueError(
            f"beamformer power {power:.6g} exceeds budget {cfg.tx_power:.6g}"
        )

    p_count = cfg.ofdm.n_subcarriers
    delta_f = cfg.ofdm.subcarrier_spacing_hz
    m = cfg.array.n_rx

    rays = [sample_rays(t, rng) for t in cfg.targets]
    coeffs = [
        t.reflection_coeffs
        if t.reflection_coeffs is not None
        else draw_reflection_coeffs(t.n_rays, rng)
        for t in cfg.targets
    ]

    symbols = transmit_symbols(cfg.n_users, n, p_count, rng)
    x = v @ symbols

    rx = np.zeros((m, p_count), dtype=complex)
    p_idx = np.arange(p_count)
    for ray, alpha in zip(rays, coeffs):
        kappa = cfg.array.n_tx * cfg.array.n_rx / ray.n_rays
        # omega[r, p] = exp(-j*2*pi*p*df*tau_r)
        omega = np.exp(-2j * np.pi * np.outer(ray.delays_s(), p_idx * delta_f))
        a = _steering_matrix(ray.angles_rad, n)
        rx += math.sqrt(kappa) * (a @ (alpha[:, None] * omega * (a.conj().T @ x)))

    if cfg.rx_noise_var > 0:
        scale = math.sqrt(cfg.rx_noise_var / 2.0)
        rx = rx + scale * (
            rng.standard_normal((m, p_count)) + 1j * rng.standard_normal((m, p_count))
        )
    return ReceivedFrame(rx=rx, tx_symbols=symbols, tx_signal=x)
