"""Complex linear-algebra plumbing shared by the simulator.

All routines work in complex128. The DFT is unitary in both directions.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a matrix that must be Hermitian positive definite is not."""


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a triangular factor has a zero on its diagonal."""


def dft(v: np.ndarray, inverse: bool = False, axis: int = -1) -> np.ndarray:
    """Unitary N-point DFT (or its inverse) along ``axis``.

    ``dft(v)`` equals ``F_N @ v`` with ``F_N[k, n] = exp(-2j*pi*k*n/N)/sqrt(N)``.
    """
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim == 0 or v.shape[axis] == 0:
        raise ValueError("dft needs a non-empty input")
    if inverse:
        return np.fft.ifft(v, axis=axis, norm="ortho")
    return np.fft.fft(v, axis=axis, norm="ortho")


def dft_matrix(n: int) -> np.ndarray:
    """Explicit unitary DFT matrix ``F_n``; used by the brute-force oracles."""
    if n < 1:
        raise ValueError("n must be positive")
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def cholesky_lower(r: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Lower Cholesky factor ``C`` with ``C @ C^H = R``.

    Raises
    ------
    FactorizationError
        If ``R`` is not square, not Hermitian, or not positive definite.
    """
    r = np.asarray(r, dtype=np.complex128)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise FactorizationError(f"expected a square matrix, got shape {r.shape}")
    if not np.allclose(r, r.conj().T, atol=atol, rtol=0):
        raise FactorizationError("matrix is not Hermitian")
    try:
        c = np.linalg.cholesky(r)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"matrix is not positive definite: {exc}") from exc
    # LAPACK accepts semidefinite inputs whose last pivot rounds to a tiny positive value
    d = np.real(np.diag(c))
    if np.any(d <= np.sqrt(atol) * max(1.0, float(np.max(np.abs(np.diag(r)))))):
        raise FactorizationError("matrix is numerically singular")
    return c


def invert_lower_triangular(c: np.ndarray) -> np.ndarray:
    """Inverse of a lower-triangular matrix by forward substitution on ``I``."""
    c = np.asarray(c, dtype=np.complex128)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {c.shape}")
    if np.any(np.diag(c) == 0):
        raise SingularMatrixError("zero on the diagonal of a triangular factor")
    eye = np.eye(c.shape[0], dtype=np.complex128)
    return scipy.linalg.solve_triangular(c, eye, lower=True)


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the stream identified by ``(seed, *keys)``.

    Streams for different key tuples are statistically independent, so a
    frame's samples depend only on its own index and never on scheduling.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


def sample_complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric CN(0, variance) samples."""
    if variance < 0:
        raise ValueError("variance must be non-negative")
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
