"""Closed-form second-order kernels of an angularly spread target.

For a ray bundle with small perturbations ``t`` around a mean direction
``theta``, ``sin(theta + t) ~ sin(theta) + t*cos(theta)``, so the rank-one
response matrix factors as

    A(sin(theta + t)) ~ D(sin theta) A(t*cos theta) D^H(sin theta),

with ``A(x) = a(x) a^H(x)`` (entries ``exp(j*pi*(m - n)*x)``) and ``D`` the
diagonal of the steering vector.  Expectations over ``t`` then reduce to the
characteristic function of the perturbation law evaluated at integer
multiples of ``pi*cos(theta)``:

* ``phi_matrix``       -- E[A], an n x n real Toeplitz matrix;
* ``phi_tilde_matrix`` -- E[A* (x) A] (Kronecker), n^2 x n^2, which gives the
  exact expected covariance ``j_exact`` through the vec identity
  vec(A R A^H) = (A* (x) A) vec(R) with column-major vec;
* ``j_approx``         -- D E[A] D^H, the transmit-covariance-free kernel.

Both Phi builders accept the characteristic function as a parameter; the
uniform law (``char_uniform``) is the one shipped.
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache

import numpy as np

from .scene import steering_vector

logger = logging.getLogger(__name__)

# |t*half_width| below this is treated as the removable sinc singularity
_SINC_GUARD = 1e-12

# eigenvalues more negative than this trip a warning before PSD clipping
_CLIP_WARN = -1e-8


def char_uniform(t, half_width: float):
    """Characteristic function of a zero-mean uniform law on [-hw, +hw].

    Returns sin(t*hw)/(t*hw), with the value 1 filled in whenever
    |t*hw| < 1e-12.  Accepts scalars or arrays in ``t``.
    """
    x = np.asarray(t, dtype=float) * float(half_width)
    small = np.abs(x) < _SINC_GUARD
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0, np.sin(safe) / safe)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=16)
def _pair_offsets(n: int) -> np.ndarray:
    """Integer offsets m - n' for an n x n response matrix."""
    idx = np.arange(n)
    out = idx[:, None] - idx[None, :]
    out.setflags(write=False)
    return out


@lru_cache(maxsize=16)
def _kron_offsets(n: int) -> np.ndarray:
    """Integer phase offsets of A*(x) (x) A(x) at Kronecker index pairs.

    Row r = l*n + m of the Kronecker product pairs row l of A* with row m of
    A; entry (r, c) with c = l'*n + m' carries exp(j*pi*((m-m') - (l-l'))*x),
    so the offset table is (m - m') - (l - l').
    """
    idx = np.arange(n * n)
    l = idx // n
    m = idx % n
    out = (m[:, None] - m[None, :]) - (l[:, None] - l[None, :])
    out.setflags(write=False)
    return out


def phi_matrix(theta: float, sigma_theta: float, n: int, char_fn=char_uniform):
    """Expected response matrix E[A] of a spread source, entrywise.

    Entry (m, n') is the characteristic function at pi*(m - n')*cos(theta)
    with half-width sqrt(3)*sigma_theta: real, symmetric Toeplitz, unit
    diagonal, and positive semidefinite.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    rho = math.pi * math.cos(theta)
    half_width = math.sqrt(3.0) * sigma_theta
    offsets = _pair_offsets(n)
    # offsets take few distinct values; evaluate once per value
    vals = char_fn(rho * np.arange(-(n - 1), n), half_width)
    return np.asarray(vals)[offsets + (n - 1)]


def phi_tilde_matrix(theta: float, sigma_theta: float, n: int, char_fn=char_uniform):
    """Expected Kronecker square E[A* (x) A] of a spread source (n^2 x n^2)."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    rho = math.pi * math.cos(theta)
    half_width = math.sqrt(3.0) * sigma_theta
    offsets = _kron_offsets(n)
    vals = char_fn(rho * np.arange(-2 * (n - 1), 2 * n - 1), half_width)
    return np.asarray(vals)[offsets + 2 * (n - 1)]


def d_diag(theta: float, n: int) -> np.ndarray:
    """Unitary diagonal matrix diag(a(sin theta))."""
    return np.diag(steering_vector(theta, n))


def d_tilde_diag(theta: float, n: int) -> np.ndarray:
    """Unitary diagonal matrix diag(a*(sin theta) (x) a(sin theta))."""
    a = steering_vector(theta, n)
    return np.diag(np.kron(a.conj(), a))


def j_exact(
    theta: float, sigma_theta: float, r_x: np.ndarray, char_fn=char_uniform
) -> np.ndarray:
    """Exact expected covariance kernel E[A R_X A^H] of a spread source.

    Evaluated in closed form as unvec(D~ Phi~ D~^H vec(R_X)) with column-major
    vec.  Hermitian PSD whenever ``r_x`` is Hermitian PSD.
    """
    r_x = np.asarray(r_x, dtype=complex)
    if r_x.ndim != 2 or r_x.shape[0] != r_x.shape[1]:
        raise ValueError("r_x must be a square matrix")
    n = r_x.shape[0]
    a = steering_vector(theta, n)
    d_t = np.kron(a.conj(), a)  # diagonal of D~
    phi_t = phi_tilde_matrix(theta, sigma_theta, n, char_fn)
    vec_j = d_t * (phi_t @ (d_t.conj() * r_x.reshape(-1, order="F")))
    return vec_j.reshape((n, n), order="F")


def j_approx(
    theta: float, sigma_theta: float, n: int, char_fn=char_uniform
) -> np.ndarray:
    """Transmit-independent kernel D(sin theta) E[A] D^H(sin theta).

    Hermitian PSD with unit diagonal; for zero spread it reduces to the
    rank-one a(sin theta) a^H(sin theta).
    """
    a = steering_vector(theta, n)
    return np.outer(a, a.conj()) * phi_matrix(theta, sigma_theta, n, char_fn)


def psd_project(h: np.ndarray, warn_below: float = _CLIP_WARN) -> np.ndarray:
    """Clip the eigenvalues of a nominally PSD Hermitian matrix at zero.

    Logs a warning when a clipped eigenvalue falls below ``warn_below``,
    which indicates more than numerical asymmetry.
    """
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    if w.size and w[0] < warn_below:
        logger.warning("PSD clip removed eigenvalue %.3e", w[0])
    w = np.maximum(w, 0.0)
    return (v * w) @ v.conj().T
