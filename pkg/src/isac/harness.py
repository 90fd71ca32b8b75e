"""Scenario files, Monte Carlo trials, parameter sweeps and CSV emission.

A scenario file is UTF-8 ``key = value`` text (``#`` starts a comment).
Every key is optional; omitted keys fall back to the built-in default
scenario (16x16 array, 792 subcarriers at 480 kHz spacing, one spread target
at 50 deg / 5 deg / 40 m / 2 m with 100 rays, three users at -10/-30/-50 deg
and 25/30/35 m, -90 dBm noise floors, eta = 0.40, chi = 0.99).

Recognized keys::

    n_tx, n_rx, n_subcarriers          array / OFDM sizes (int)
    subcarrier_spacing_hz, cp_time_s   OFDM numerology (symbol time derived)
    tx_power_w                         transmit power budget
    noise_dbm                          base-station noise floor
    snr_db                             optional: overrides noise_dbm through
                                       the scenario SNR = kappa*||alpha||^2*
                                       P_b/sigma_b^2
    seed                               base RNG seed
    eta, chi                           range threshold / rank energy fraction
    grid_theta_min_deg, grid_theta_max_deg, grid_theta_step_deg
    grid_sigma_max_deg, grid_sigma_step_deg
    targetN.angle_deg, targetN.angle_spread_deg, targetN.distance_m,
    targetN.range_spread_m, targetN.n_rays          (N = 1, 2, ...)
    userN.angle_deg, userN.distance_m, userN.noise_dbm, userN.rate_bps_hz

User channel coefficients follow the abstract 1/distance amplitude
convention.  Angles are degrees in files and CSVs, radians internally.

A sweep file uses the same syntax with keys ``parameter`` (one of snr_db,
sigma_theta_deg, eta, chi, rate_threshold), ``values`` (comma-separated,
strictly increasing), ``trials`` and ``estimators`` (comma-separated subset
of tms, tms_approx, cms, cms_approx).

All CSV output is comma-separated with a header row, ``.`` decimal points,
LF line endings and 17 significant digits, so (scenario, seed) reproduces
every emitted file byte for byte.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .angle_est import (
    AngleEstimate,
    SearchGrid,
    SpreadSpectrum,
    cms_spectrum,
    estimate_angles,
    sample_covariance,
    tms_approx_spectrum,
    tms_spectrum,
)
from .beamform import BeamformerSolution, radar_objective, solve_beamformer
from .range_est import RangeEstimate, estimate_range
from .scene import (
    ArrayConfig,
    ClusterTarget,
    DownlinkUser,
    OfdmConfig,
    ScenarioConfig,
    simulate_frame,
)

logger = logging.getLogger(__name__)

ESTIMATORS = ("tms", "tms_approx", "cms", "cms_approx")

SWEEP_PARAMETERS = ("snr_db", "sigma_theta_deg", "eta", "chi", "rate_threshold")

DEFAULT_ESTIMATOR = "tms_approx"

_DBM_TO_WATT = lambda dbm: 10.0 ** ((dbm - 30.0) / 10.0)  # noqa: E731

_DEFAULTS = {
    "n_tx": 16,
    "n_rx": 16,
    "n_subcarriers": 792,
    "subcarrier_spacing_hz": 480e3,
    "cp_time_s": 1.465e-7,
    "tx_power_w": 1.0,
    "noise_dbm": -90.0,
    "seed": 0,
    "eta": 0.40,
    "chi": 0.99,
    "grid_theta_min_deg": -90.0,
    "grid_theta_max_deg": 90.0,
    "grid_theta_step_deg": 0.1,
    "grid_sigma_max_deg": 10.0,
    "grid_sigma_step_deg": 0.1,
}

_DEFAULT_TARGET = {
    "angle_deg": 50.0,
    "angle_spread_deg": 5.0,
    "distance_m": 40.0,
    "range_spread_m": 2.0,
    "n_rays": 100,
}

_DEFAULT_USERS = (
    {"angle_deg": -10.0, "distance_m": 25.0, "noise_dbm": -90.0, "rate_bps_hz": 0.001},
    {"angle_deg": -30.0, "distance_m": 30.0, "noise_dbm": -90.0, "rate_bps_hz": 0.001},
    {"angle_deg": -50.0, "distance_m": 35.0, "noise_dbm": -90.0, "rate_bps_hz": 0.001},
)


@dataclass(frozen=True, eq=False)
class RunSetup:
    """Everything a scenario file determines: the scenario plus search grid."""

    scenario: ScenarioConfig
    grid: SearchGrid


@dataclass(frozen=True, eq=False)
class SweepSpec:
    swept_parameter: str
    values: np.ndarray
    trials_per_point: int
    estimators: tuple[str, ...]

    def __post_init__(self):
        if self.swept_parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"unknown sweep parameter '{self.swept_parameter}'")
        values = np.asarray(self.values, dtype=float)
        if values.size and np.any(np.diff(values) <= 0):
            raise ValueError("sweep values must be strictly increasing")
        object.__setattr__(self, "values", values)
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be at least 1")
        ests = tuple(canonical_estimator(e) for e in self.estimators)
        if not ests:
            raise ValueError("at least one estimator is required")
        object.__setattr__(self, "estimators", ests)


@dataclass(frozen=True)
class RmseRow:
    sweep_parameter: str
    sweep_value: float
    estimator: str
    parameter: str  # theta | sigma_theta | d | sigma_d
    rmse: float
    n_trials: int


@dataclass(frozen=True, eq=False)
class RmseTable:
    rows: tuple[RmseRow, ...]

    def lookup(self, sweep_value: float, estimator: str, parameter: str) -> RmseRow:
        for row in self.rows:
            if (
                np.isclose(row.sweep_value, sweep_value)
                and row.estimator == estimator
                and row.parameter == parameter
            ):
                return row
        raise KeyError((sweep_value, estimator, parameter))


@dataclass(frozen=True, eq=False)
class TrialResult:
    seed: int
    angles: dict[str, AngleEstimate]
    ranges: list[RangeEstimate]
    range_estimator: str
    beamformer: BeamformerSolution | None


def canonical_estimator(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    if key not in ESTIMATORS:
        raise ValueError(f"unknown estimator '{name}'")
    return key


def channel_power_scale(cfg: ScenarioConfig, target_index: int = 0) -> float:
    """kappa * ||alpha||^2 of one target; n_rays when coefficients are drawn
    unit-modulus per frame."""
    t = cfg.targets[target_index]
    if t.reflection_coeffs is not None:
        alpha_sq = float(np.sum(np.abs(t.reflection_coeffs) ** 2))
    else:
        alpha_sq = float(t.n_rays)
    return cfg.kappa(target_index) * alpha_sq


def noise_var_for_snr(cfg: ScenarioConfig, snr_db: float) -> float:
    """Receive noise variance that realizes a target scenario SNR."""
    return channel_power_scale(cfg) * cfg.tx_power / 10.0 ** (snr_db / 10.0)


def isotropic_beamformer(cfg: ScenarioConfig) -> np.ndarray:
    """Power-budget-saturating identity beamformer used for sensing probes."""
    n = cfg.array.n_tx
    return math.sqrt(cfg.tx_power / n) * np.eye(n, dtype=complex)


# ---------------------------------------------------------------------------
# scenario files


def _parse_kv_text(text: str) -> dict[str, tuple[str, int]]:
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got '{raw.strip()}'")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        entries[key] = (value.strip(), lineno)
    return entries


def _take(entries, key, cast, default):
    if key not in entries:
        return default
    value, lineno = entries.pop(key)
    try:
        return cast(value)
    except ValueError as exc:
        raise ValueError(f"line {lineno}: field '{key}': {exc}") from None


def _collect_indexed(entries, prefix):
    """Pull 'prefixN.field' keys into {N: {field: raw}} and drop them."""
    found: dict[int, dict[str, str]] = {}
    for key in list(entries):
        head, _, tail = key.partition(".")
        if not tail or not head.startswith(prefix):
            continue
        index_text = head[len(prefix):]
        if not index_text.isdigit():
            continue
        raw, _ = entries.pop(key)
        found.setdefault(int(index_text), {})[tail] = raw
    return [found[i] for i in sorted(found)]


def _build_target(fields: dict[str, str]) -> ClusterTarget:
    merged = dict(_DEFAULT_TARGET)
    for name, raw in fields.items():
        if name not in merged:
            raise ValueError(f"unknown target field '{name}'")
        merged[name] = raw
    return ClusterTarget(
        mean_angle_rad=math.radians(float(merged["angle_deg"])),
        angle_spread_rad=math.radians(float(merged["angle_spread_deg"])),
        mean_distance_m=float(merged["distance_m"]),
        range_spread_m=float(merged["range_spread_m"]),
        n_rays=int(merged["n_rays"]),
    )


def _build_user(fields: dict[str, str]) -> DownlinkUser:
    merged = dict(_DEFAULT_USERS[1])  # middle user as the template
    for name, raw in fields.items():
        if name not in merged:
            raise ValueError(f"unknown user field '{name}'")
        merged[name] = raw
    distance = float(merged["distance_m"])
    if distance <= 0:
        raise ValueError("user distance_m must be positive")
    return DownlinkUser(
        angle_rad=math.radians(float(merged["angle_deg"])),
        channel_coeff=1.0 / distance,
        noise_var=_DBM_TO_WATT(float(merged["noise_dbm"])),
        rate_threshold_bps_hz=float(merged["rate_bps_hz"]),
    )


def load_run(path) -> RunSetup:
    """Parse a scenario file into a validated scenario plus search grid."""
    text = Path(path).read_text(encoding="utf-8")
    entries = _parse_kv_text(text)

    scalars = dict(_DEFAULTS)
    for key, default in _DEFAULTS.items():
        scalars[key] = _take(entries, key, type(default), default)
    snr_db = _take(entries, "snr_db", float, None)

    target_fields = _collect_indexed(entries, "target")
    user_fields = _collect_indexed(entries, "user")
    if entries:
        key, (_, lineno) = next(iter(entries.items()))
        raise ValueError(f"line {lineno}: unknown field '{key}'")

    targets = (
        tuple(_build_target(f) for f in target_fields)
        if target_fields
        else (_build_target({}),)
    )
    if user_fields:
        users = tuple(_build_user(f) for f in user_fields)
    else:
        users = tuple(
            _build_user({k: str(v) for k, v in u.items()}) for u in _DEFAULT_USERS
        )

    delta_f = scalars["subcarrier_spacing_hz"]
    cp_time = scalars["cp_time_s"]
    ofdm = OfdmConfig(
        n_subcarriers=scalars["n_subcarriers"],
        subcarrier_spacing_hz=delta_f,
        symbol_time_s=1.0 / delta_f - cp_time,
        cp_time_s=cp_time,
    )
    scenario = ScenarioConfig(
        array=ArrayConfig(n_tx=scalars["n_tx"], n_rx=scalars["n_rx"]),
        ofdm=ofdm,
        targets=targets,
        users=users,
        tx_power=scalars["tx_power_w"],
        rx_noise_var=_DBM_TO_WATT(scalars["noise_dbm"]),
        rng_seed=scalars["seed"],
        eta=scalars["eta"],
        chi=scalars["chi"],
    )
    if snr_db is not None:
        scenario = dataclasses.replace(
            scenario, rx_noise_var=noise_var_for_snr(scenario, snr_db)
        )
    grid = SearchGrid.from_degrees(
        scalars["grid_theta_min_deg"],
        scalars["grid_theta_max_deg"],
        scalars["grid_theta_step_deg"],
        scalars["grid_sigma_max_deg"],
        scalars["grid_sigma_step_deg"],
    )
    return RunSetup(scenario=scenario, grid=grid)


def load_scenario(path) -> ScenarioConfig:
    """Scenario part of a run file (defaults fill every omitted key)."""
    return load_run(path).scenario


def load_sweep(path) -> SweepSpec:
    """Parse a sweep file."""
    entries = _parse_kv_text(Path(path).read_text(encoding="utf-8"))
    parameter = _take(entries, "parameter", str, None)
    if parameter is None:
        raise ValueError("sweep file must set 'parameter'")
    values_raw = _take(entries, "values", str, "")
    values = [float(v) for v in values_raw.split(",") if v.strip()]
    trials = _take(entries, "trials", int, 1)
    est_raw = _take(entries, "estimators", str, DEFAULT_ESTIMATOR)
    estimators = tuple(e.strip() for e in est_raw.split(",") if e.strip())
    if entries:
        key, (_, lineno) = next(iter(entries.items()))
        raise ValueError(f"line {lineno}: unknown field '{key}'")
    return SweepSpec(
        swept_parameter=parameter.strip(),
        values=np.asarray(values, dtype=float),
        trials_per_point=trials,
        estimators=estimators,
    )


# ---------------------------------------------------------------------------
# trials


def compute_spectrum(
    name: str,
    r_hat,
    cfg: ScenarioConfig,
    beamformer: np.ndarray,
    grid: SearchGrid,
) -> SpreadSpectrum:
    """Dispatch one named estimator's pseudo-spectrum."""
    name = canonical_estimator(name)
    noise_var = cfg.rx_noise_var
    r_x = beamformer @ beamformer.conj().T
    if name == "tms":
        return tms_spectrum(r_hat, noise_var, cfg, beamformer, grid, cfg.chi)
    if name == "tms_approx":
        return tms_approx_spectrum(r_hat, noise_var, r_x, grid, cfg.chi)
    if name == "cms":
        return cms_spectrum(r_hat, noise_var, r_x, grid, cfg.chi, variant="exact")
    return cms_spectrum(r_hat, noise_var, r_x, grid, cfg.chi, variant="approx")


def run_trial(
    cfg: ScenarioConfig,
    estimators,
    rng_seed: int,
    grid: SearchGrid | None = None,
    n_frames: int = 1,
    sensing_beamformer: np.ndarray | None = None,
    solve: bool = True,
    solver_tolerance: float = 1e-8,
) -> TrialResult:
    """One full pipeline pass under a fresh seeded random source.

    Frames -> sample covariance -> every requested angle estimator -> range
    estimates (angles from tms_approx when requested, otherwise the first
    estimator) -> beamformer on those same angle estimates.  Deterministic
    given (cfg, rng_seed).
    """
    names = [canonical_estimator(e) for e in estimators]
    if not names:
        raise ValueError("at least one estimator is required")
    grid = grid if grid is not None else SearchGrid.default()
    v0 = (
        np.asarray(sensing_beamformer, dtype=complex)
        if sensing_beamformer is not None
        else isotropic_beamformer(cfg)
    )
    rng = np.random.default_rng(rng_seed)
    frames = [simulate_frame(cfg, v0, rng) for _ in range(n_frames)]
    r_hat = sample_covariance(frames)

    n_targets = len(cfg.targets)
    angles: dict[str, AngleEstimate] = {}
    for name in names:
        spectrum = compute_spectrum(name, r_hat, cfg, v0, grid)
        angles[name] = estimate_angles(spectrum, n_targets)

    range_estimator = DEFAULT_ESTIMATOR if DEFAULT_ESTIMATOR in names else names[0]
    ranges = estimate_range(frames[0], angles[range_estimator], cfg, cfg.eta)

    beam = None
    if solve:
        objective = radar_objective(angles[range_estimator], cfg.array.n_tx)
        beam = solve_beamformer(
            objective,
            cfg.users,
            cfg.tx_power,
            tolerance=solver_tolerance,
            noise_var=cfg.rx_noise_var,
        )
    return TrialResult(
        seed=rng_seed,
        angles=angles,
        ranges=ranges,
        range_estimator=range_estimator,
        beamformer=beam,
    )


def _match_targets(estimate: AngleEstimate, cfg: ScenarioConfig) -> list[int]:
    """Greedy strongest-peak-first assignment of estimates to true targets."""
    unused = list(range(len(cfg.targets)))
    assignment = []
    for theta in estimate.theta_rad:
        k = min(unused, key=lambda i: abs(cfg.targets[i].mean_angle_rad - theta))
        assignment.append(k)
        unused.remove(k)
    return assignment


def _apply_sweep_value(
    cfg: ScenarioConfig, parameter: str, value: float
) -> ScenarioConfig:
    if parameter == "snr_db":
        return dataclasses.replace(cfg, rx_noise_var=noise_var_for_snr(cfg, value))
    if parameter == "sigma_theta_deg":
        targets = list(cfg.targets)
        targets[0] = dataclasses.replace(
            targets[0], angle_spread_rad=math.radians(value)
        )
        return dataclasses.replace(cfg, targets=tuple(targets))
    if parameter == "eta":
        return dataclasses.replace(cfg, eta=value)
    if parameter == "chi":
        return dataclasses.replace(cfg, chi=value)
    if parameter == "rate_threshold":
        users = tuple(
            dataclasses.replace(u, rate_threshold_bps_hz=value) for u in cfg.users
        )
        return dataclasses.replace(cfg, users=users)
    raise ValueError(f"unknown sweep parameter '{parameter}'")


def run_sweep(
    cfg: ScenarioConfig,
    spec: SweepSpec,
    grid: SearchGrid | None = None,
    n_frames: int = 1,
) -> RmseTable:
    """Monte Carlo RMSE table over one swept parameter.

    Trials at each point use seeds cfg.rng_seed .. cfg.rng_seed + trials - 1.
    Failed trials (an estimator finding no separated peaks at low SNR, for
    instance) are excluded from the averages and counted in the log.
    """
    rows: list[RmseRow] = []
    for value in spec.values:
        cfg_point = _apply_sweep_value(cfg, spec.swept_parameter, float(value))
        sq_errors: dict[tuple[str, str], list[float]] = {}
        failures = 0
        for t in range(spec.trials_per_point):
            seed = cfg.rng_seed + t
            try:
                result = run_trial(
                    cfg_point,
                    spec.estimators,
                    seed,
                    grid=grid,
                    n_frames=n_frames,
                    solve=False,
                )
            except ValueError as exc:
                failures += 1
                logger.warning(
                    "trial seed %d at %s=%.6g failed: %s",
                    seed,
                    spec.swept_parameter,
                    value,
                    exc,
                )
                continue
            for name, est in result.angles.items():
                assignment = _match_targets(est, cfg_point)
                for peak, k in enumerate(assignment):
                    truth = cfg_point.targets[k]
                    err_t = math.degrees(est.theta_rad[peak] - truth.mean_angle_rad)
                    err_s = math.degrees(
                        est.sigma_theta_rad[peak] - truth.angle_spread_rad
                    )
                    sq_errors.setdefault((name, "theta"), []).append(err_t**2)
                    sq_errors.setdefault((name, "sigma_theta"), []).append(err_s**2)
            assignment = _match_targets(result.angles[result.range_estimator], cfg_point)
            for peak, k in enumerate(assignment):
                truth = cfg_point.targets[k]
                r_est = result.ranges[peak]
                err_d = r_est.mean_distance_m - truth.mean_distance_m
                err_sd = r_est.range_spread_m - truth.range_spread_m
                key = result.range_estimator
                sq_errors.setdefault((key, "d"), []).append(err_d**2)
                sq_errors.setdefault((key, "sigma_d"), []).append(err_sd**2)
        if failures:
            logger.warning(
                "%d/%d trials failed at %s=%.6g",
                failures,
                spec.trials_per_point,
                spec.swept_parameter,
                value,
            )
        for (name, parameter), errs in sorted(sq_errors.items()):
            rows.append(
                RmseRow(
                    sweep_parameter=spec.swept_parameter,
                    sweep_value=float(value),
                    estimator=name,
                    parameter=parameter,
                    rmse=math.sqrt(sum(errs) / len(errs)),
                    n_trials=len(errs),
                )
            )
    return RmseTable(rows=tuple(rows))


# ---------------------------------------------------------------------------
# CSV emission


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row))
            fh.write("\n")


def emit_rmse_table(table: RmseTable, path) -> None:
    _write_csv(
        path,
        ["sweep_parameter", "sweep_value", "estimator", "parameter", "rmse", "n_trials"],
        (
            (r.sweep_parameter, r.sweep_value, r.estimator, r.parameter, r.rmse, r.n_trials)
            for r in table.rows
        ),
    )


def emit_spectrum(spectrum: SpreadSpectrum, path) -> None:
    """Long-form spectrum CSV: theta_deg, sigma_theta_deg, value."""

    def rows():
        for i, theta in enumerate(spectrum.theta_grid):
            for j, sigma in enumerate(spectrum.sigma_grid):
                yield (
                    math.degrees(theta),
                    math.degrees(sigma),
                    spectrum.values[i, j],
                )

    _write_csv(path, ["theta_deg", "sigma_theta_deg", "value"], rows())


def emit_beampattern(theta_rad: np.ndarray, power: np.ndarray, path, rate=None) -> None:
    """Beampattern CSV: (theta_deg, power), prefixed with the rate floor when
    several patterns share one file."""
    if rate is None:
        rows = ((math.degrees(t), p) for t, p in zip(theta_rad, power))
        _write_csv(path, ["theta_deg", "power"], rows)
    else:
        rows = ((rate, math.degrees(t), p) for t, p in zip(theta_rad, power))
        _write_csv(path, ["rate_bps_hz", "theta_deg", "power"], rows)


def emit_trials(results: list[TrialResult], cfg: ScenarioConfig, path) -> None:
    """Per-trial estimate CSV for `isac run`."""

    def rows():
        for res in results:
            for name, est in res.angles.items():
                assignment = _match_targets(est, cfg)
                for peak, k in enumerate(assignment):
                    if name == res.range_estimator:
                        d = res.ranges[peak].mean_distance_m
                        sd = res.ranges[peak].range_spread_m
                    else:
                        d, sd = float("nan"), float("nan")
                    beam = res.beamformer
                    yield (
                        res.seed,
                        name,
                        k,
                        math.degrees(est.theta_rad[peak]),
                        math.degrees(est.sigma_theta_rad[peak]),
                        d,
                        sd,
                        beam.radar_snr if beam is not None else float("nan"),
                        beam.solver_status if beam is not None else "skipped",
                    )

    _write_csv(
        path,
        [
            "seed",
            "estimator",
            "target",
            "theta_deg",
            "sigma_theta_deg",
            "d_m",
            "sigma_d_m",
            "radar_snr",
            "solver_status",
        ],
        rows(),
    )


def emit_outputs(obj, path, **kwargs) -> None:
    """Type-dispatched emitter for the supported output artifacts."""
    if isinstance(obj, RmseTable):
        emit_rmse_table(obj, path)
    elif isinstance(obj, SpreadSpectrum):
        emit_spectrum(obj, path)
    elif isinstance(obj, tuple) and len(obj) == 2:
        emit_beampattern(obj[0], obj[1], path, **kwargs)
    else:
        raise TypeError(f"no emitter for {type(obj).__name__}")
