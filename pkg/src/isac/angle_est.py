"""Direction and angular-spread estimation from receive covariance matrices.

Four pseudo-spectra over a (theta, sigma_theta) grid are provided.  All of
them project a parametric model of the spread-target covariance onto the
measured noise subspace and invert the residual:

* ``tms_spectrum``        -- model subspace truncated to the strongest q
  eigenvectors of the exact kernel ``j_exact(theta, sigma, R_X)``;
* ``tms_approx_spectrum`` -- same truncation applied to the precomputable
  kernel ``j_approx R_X j_approx^H``;
* ``cms_spectrum``        -- untruncated baseline: the Frobenius-normalized
  full model matrix is projected instead of its leading eigenvectors (this
  is the variant whose trailing-eigenvector residual biases the peak).

The rank q is chosen on the measured covariance as the smallest eigen-count
holding a fraction ``chi`` of the denoised signal energy, and the same q is
used for the model-side truncation.

Model kernels over a grid are expensive, so eigenvector/matrix stacks are
cached per (variant, grid, transmit covariance) and shared across trials;
grids too large to cache are streamed in chunks.
"""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .scene import ScenarioConfig
from .spread_model import j_approx, j_exact

# regularizer keeping spectra finite at exact noise-subspace annihilation
EPS_REG = 1e-12

# non-maximum suppression window around an accepted spectral peak
_PEAK_WINDOW_RAD = np.deg2rad(3.0)

# kernel stacks larger than this are streamed instead of cached
_CACHE_MAX_BYTES = 1 << 29  # 512 MiB per entry (matrices + eigenvectors)
_CACHE_MAX_ENTRIES = 4

_CHUNK = 4096  # grid nodes per streamed block


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Hermitian-symmetrized sample covariance and its snapshot count."""

    r_y: np.ndarray
    n_snapshots: int


@dataclass(frozen=True, eq=False)
class SubspaceSplit:
    """Orthonormal signal/noise bases with descending eigenvalues."""

    signal_basis: np.ndarray
    noise_basis: np.ndarray
    eigenvalues: np.ndarray
    rank: int


@dataclass(frozen=True, eq=False)
class SearchGrid:
    """Discretized search region for (theta, sigma_theta), radians."""

    theta_rad: np.ndarray
    sigma_theta_rad: np.ndarray

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta_rad, dtype=float))
        sigma = np.atleast_1d(np.asarray(self.sigma_theta_rad, dtype=float))
        if theta.size == 0 or sigma.size == 0:
            raise ValueError("search grid must be nonempty")
        object.__setattr__(self, "theta_rad", theta)
        object.__setattr__(self, "sigma_theta_rad", sigma)

    @classmethod
    def default(cls) -> "SearchGrid":
        """Full-range grid: theta -90..90 deg, sigma 0..10 deg, 0.1 deg steps."""
        return cls.from_degrees(-90.0, 90.0, 0.1, 10.0, 0.1)

    @classmethod
    def from_degrees(
        cls,
        theta_min_deg: float,
        theta_max_deg: float,
        theta_step_deg: float,
        sigma_max_deg: float,
        sigma_step_deg: float,
        sigma_min_deg: float = 0.0,
    ) -> "SearchGrid":
        theta = np.deg2rad(
            np.arange(theta_min_deg, theta_max_deg + 0.5 * theta_step_deg, theta_step_deg)
        )
        sigma = np.deg2rad(
            np.arange(sigma_min_deg, sigma_max_deg + 0.5 * sigma_step_deg, sigma_step_deg)
        )
        return cls(theta, sigma)

    @property
    def n_nodes(self) -> int:
        return self.theta_rad.size * self.sigma_theta_rad.size


@dataclass(frozen=True, eq=False)
class SpreadSpectrum:
    """Pseudo-spectrum values over a (theta, sigma_theta) grid.

    ``values[i, j]`` corresponds to ``theta_grid[i]``, ``sigma_grid[j]``;
    all values are strictly positive and finite.
    """

    theta_grid: np.ndarray
    sigma_grid: np.ndarray
    values: np.ndarray

    def argmax(self) -> tuple[float, float]:
        """Grid node of the global maximum, as (theta, sigma_theta) radians."""
        i, j = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return float(self.theta_grid[i]), float(self.sigma_grid[j])


@dataclass(frozen=True, eq=False)
class AngleEstimate:
    """Per-target (theta, sigma_theta) estimates, strongest peak first."""

    theta_rad: np.ndarray
    sigma_theta_rad: np.ndarray

    @property
    def n_targets(self) -> int:
        return self.theta_rad.size


def sample_covariance(frames) -> CovarianceEstimate:
    """Average y y^H over every subcarrier of every frame, then symmetrize."""
    frames = list(frames)
    if not frames:
        raise ValueError("at least one frame is required")
    m = frames[0].rx.shape[0]
    acc = np.zeros((m, m), dtype=complex)
    total = 0
    for frame in frames:
        acc += frame.rx @ frame.rx.conj().T
        total += frame.rx.shape[1]
    r = acc / total
    r = 0.5 * (r + r.conj().T)
    return CovarianceEstimate(r_y=r, n_snapshots=total)


def denoise(r: CovarianceEstimate, noise_var: float) -> np.ndarray:
    """Remove a known noise floor: eigenvalues of R - sigma^2 I floored at 0."""
    w, v = np.linalg.eigh(r.r_y)
    w = np.maximum(w - noise_var, 0.0)
    return (v * w) @ v.conj().T


def select_rank(eigenvalues, chi: float) -> int:
    """Smallest q whose leading eigenvalues hold a fraction chi of the energy.

    ``eigenvalues`` must be nonnegative and sorted descending.  With chi = 1
    this returns the index of the last strictly positive eigenvalue.
    """
    ev = np.asarray(eigenvalues, dtype=float)
    cum = np.cumsum(ev)
    total = cum[-1] if cum.size else 0.0
    if total <= 0.0:
        raise ValueError("eigenvalue spectrum is identically zero")
    q = int(np.searchsorted(cum, chi * total, side="left")) + 1
    return min(q, ev.size)


def subspace_split(matrix: np.ndarray, q: int) -> SubspaceSplit:
    """Split a Hermitian matrix into rank-q signal and complement noise bases."""
    m = matrix.shape[0]
    if not 1 <= q < m:
        raise ValueError(f"q must satisfy 1 <= q < {m}")
    w, v = np.linalg.eigh(matrix)
    w = w[::-1]
    v = v[:, ::-1]
    return SubspaceSplit(
        signal_basis=v[:, :q], noise_basis=v[:, q:], eigenvalues=w, rank=q
    )


def _measured_split(r_hat: CovarianceEstimate, noise_var: float, chi: float):
    """Rank via the energy test on the denoised covariance, plus its split."""
    clean = denoise(r_hat, noise_var)
    w = np.linalg.eigvalsh(clean)[::-1]
    q = select_rank(w, chi)
    m = clean.shape[0]
    if q >= m:
        raise ValueError("signal rank leaves no noise subspace")
    return subspace_split(clean, q)


# ---------------------------------------------------------------------------
# model-kernel stacks over a grid, with caching


def _fingerprint(*arrays) -> str:
    h = hashlib.sha1()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


class _KernelStack:
    """Model matrices and their descending eigenvectors for a block of nodes."""

    __slots__ = ("mats", "sq_norms", "eigvecs")

    def __init__(self, mats: np.ndarray):
        self.mats = mats
        self.sq_norms = np.einsum("cij,cij->c", mats, mats.conj()).real
        w, v = np.linalg.eigh(mats)
        self.eigvecs = v[:, :, ::-1]


_stack_cache: OrderedDict[tuple, list] = OrderedDict()


def _build_block(kind: str, nodes: np.ndarray, r_x: np.ndarray, n: int) -> _KernelStack:
    mats = np.empty((nodes.shape[0], n, n), dtype=complex)
    if kind == "exact":
        for i, (theta, sigma) in enumerate(nodes):
            mats[i] = j_exact(theta, sigma, r_x)
    elif kind == "approx":
        for i, (theta, sigma) in enumerate(nodes):
            ja = j_approx(theta, sigma, n)
            mats[i] = ja @ r_x @ ja.conj().T
    else:  # pragma: no cover - internal
        raise ValueError(kind)
    return _KernelStack(mats)


def _kernel_blocks(kind: str, grid: SearchGrid, r_x: np.ndarray, n: int):
    """Yield _KernelStack blocks covering the grid in theta-major node order.

    Small grids are cached across calls keyed by (kind, n, grid, R_X
    fingerprint); oversized grids are rebuilt and streamed chunk by chunk.
    """
    nodes = np.stack(
        np.meshgrid(grid.theta_rad, grid.sigma_theta_rad, indexing="ij"), axis=-1
    ).reshape(-1, 2)
    est_bytes = nodes.shape[0] * n * n * 16 * 2
    cacheable = est_bytes <= _CACHE_MAX_BYTES
    key = (kind, n, _fingerprint(grid.theta_rad, grid.sigma_theta_rad, r_x))
    if cacheable and key in _stack_cache:
        _stack_cache.move_to_end(key)
        yield from _stack_cache[key]
        return
    blocks = []
    for start in range(0, nodes.shape[0], _CHUNK):
        block = _build_block(kind, nodes[start : start + _CHUNK], r_x, n)
        if cacheable:
            blocks.append(block)
        yield block
    if cacheable:
        _stack_cache[key] = blocks
        while len(_stack_cache) > _CACHE_MAX_ENTRIES:
            _stack_cache.popitem(last=False)


def clear_kernel_cache():
    """Drop all cached model-kernel stacks (mainly for tests)."""
    _stack_cache.clear()


# ---------------------------------------------------------------------------
# spectra


def _assemble(grid: SearchGrid, flat: np.ndarray) -> SpreadSpectrum:
    values = flat.reshape(grid.theta_rad.size, grid.sigma_theta_rad.size)
    return SpreadSpectrum(
        theta_grid=grid.theta_rad, sigma_grid=grid.sigma_theta_rad, values=values
    )


def _subspace_spectrum(
    kind: str,
    truncated: bool,
    r_hat: CovarianceEstimate,
    noise_var: float,
    r_x: np.ndarray,
    grid: SearchGrid,
    chi: float,
) -> SpreadSpectrum:
    split = _measured_split(r_hat, noise_var, chi)
    e_n_h = split.noise_basis.conj().T  # (m - q) x m
    q = split.rank
    n = r_x.shape[0]
    out = np.empty(grid.n_nodes)
    pos = 0
    for block in _kernel_blocks(kind, grid, r_x, n):
        count = block.mats.shape[0]
        if truncated:
            proj = np.einsum("rm,cmq->crq", e_n_h, block.eigvecs[:, :, :q])
            res = np.einsum("crq,crq->c", proj, proj.conj()).real
        else:
            proj = np.einsum("rm,cmn->crn", e_n_h, block.mats)
            res = np.einsum("crn,crn->c", proj, proj.conj()).real
            res = res / np.maximum(block.sq_norms, EPS_REG)
        out[pos : pos + count] = 1.0 / (res + EPS_REG)
        pos += count
    return _assemble(grid, out)


def tms_spectrum(
    r_hat: CovarianceEstimate,
    noise_var: float,
    cfg: ScenarioConfig,
    beamformer: np.ndarray,
    grid: SearchGrid,
    chi: float,
) -> SpreadSpectrum:
    """Truncated spread-MUSIC spectrum driven by the exact kernel.

    The model signal subspace at each grid node is the leading-q eigenvectors
    of ``j_exact(theta, sigma, R_X)`` with ``R_X = V V^H``; the value at a
    node is ``1 / (||E_n^H E_s(theta, sigma)||_F^2 + eps)``.
    """
    v = np.asarray(beamformer, dtype=complex)
    if v.shape != (cfg.array.n_tx, cfg.array.n_tx):
        raise ValueError("beamformer must be n_tx x n_tx")
    r_x = v @ v.conj().T
    return _subspace_spectrum("exact", True, r_hat, noise_var, r_x, grid, chi)


def tms_approx_spectrum(
    r_hat: CovarianceEstimate,
    noise_var: float,
    r_x: np.ndarray,
    grid: SearchGrid,
    chi: float,
) -> SpreadSpectrum:
    """Truncated spectrum from the precomputable kernel J_app R_X J_app^H."""
    return _subspace_spectrum(
        "approx", True, r_hat, noise_var, np.asarray(r_x, dtype=complex), grid, chi
    )


def cms_spectrum(
    r_hat: CovarianceEstimate,
    noise_var: float,
    r_x: np.ndarray,
    grid: SearchGrid,
    chi: float,
    variant: str = "exact",
) -> SpreadSpectrum:
    """Untruncated baseline spectrum (full normalized model matrix).

    ``variant='exact'`` projects J/||J||_F, ``variant='approx'`` projects the
    normalized J_app R_X J_app^H.  The measured-side rank test still fixes
    the noise basis, but the model side keeps every eigen-component, which is
    what makes this estimator biased.
    """
    if variant not in ("exact", "approx"):
        raise ValueError("variant must be 'exact' or 'approx'")
    return _subspace_spectrum(
        variant, False, r_hat, noise_var, np.asarray(r_x, dtype=complex), grid, chi
    )


def estimate_angles(spectrum: SpreadSpectrum, n_targets: int) -> AngleEstimate:
    """Extract the n_targets strongest local maxima of a spectrum.

    A node is a local maximum when it strictly dominates its existing
    neighbors (8-connectivity).  Accepted peaks suppress further peaks within
    +-3 degrees in theta.  Raises ValueError when the surface does not carry
    enough local maxima (for instance when it is flat).
    """
    if n_targets < 1:
        raise ValueError("n_targets must be at least 1")
    vals = spectrum.values
    padded = np.full((vals.shape[0] + 2, vals.shape[1] + 2), -np.inf)
    padded[1:-1, 1:-1] = vals
    is_peak = np.ones_like(vals, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            neighbor = padded[1 + di : 1 + di + vals.shape[0], 1 + dj : 1 + dj + vals.shape[1]]
            is_peak &= vals > neighbor
    peak_idx = np.argwhere(is_peak)
    if peak_idx.shape[0] == 0:
        raise ValueError("spectrum has no local maxima")
    order = np.argsort(vals[peak_idx[:, 0], peak_idx[:, 1]])[::-1]
    thetas, sigmas = [], []
    for k in order:
        i, j = peak_idx[k]
        theta = spectrum.theta_grid[i]
        if any(abs(theta - t) <= _PEAK_WINDOW_RAD for t in thetas):
            continue
        thetas.append(float(theta))
        sigmas.append(float(spectrum.sigma_grid[j]))
        if len(thetas) == n_targets:
            break
    if len(thetas) < n_targets:
        raise ValueError(
            f"found {len(thetas)} separated peaks, needed {n_targets}"
        )
    return AngleEstimate(
        theta_rad=np.array(thetas), sigma_theta_rad=np.array(sigmas)
    )
