"""Seeded generators for the experiment inputs.

Randomness comes from numpy's Philox counter-based bit generator keyed by
``seed + (stream << 64)``. Only its raw 64-bit output is used, and the
conversion to floats is done here, so matrices are stable across
platforms and numpy releases:

* uniform in [0, 1): ``(x >> 11) * 2**-53``
* open uniform in (0, 1): ``((x >> 11) + 0.5) * 2**-53``
* standard normal: inverse normal CDF of the open uniform
"""

from __future__ import annotations

import logging
import warnings
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.special import ndtri
from threadpoolctl import threadpool_limits

log = logging.getLogger(__name__)

SINGULAR_PIVOT = 1e-300
_TWO_M53 = 2.0 ** -53


class SingularMatrixError(ValueError):
    pass


def raw_stream(seed: int, stream: int, count: int) -> np.ndarray:
    if not (0 <= seed < 2 ** 64 and 0 <= stream < 2 ** 64):
        raise ValueError("seed and stream must be 64-bit unsigned integers")
    bitgen = np.random.Philox(key=seed + (stream << 64))
    return bitgen.random_raw(count).astype(np.uint64)


def _unit(raw: np.ndarray) -> np.ndarray:
    return (raw >> np.uint64(11)).astype(np.float64) * _TWO_M53


def _open_unit(raw: np.ndarray) -> np.ndarray:
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def uniform(shape, seed: int, stream: int = 0, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    n = int(np.prod(shape))
    return low + (high - low) * _unit(raw_stream(seed, stream, n)).reshape(shape)


def normal(shape, seed: int, stream: int = 0) -> np.ndarray:
    n = int(np.prod(shape))
    return ndtri(_open_unit(raw_stream(seed, stream, n))).reshape(shape)


def gen_phi_matrix(m: int, n: int, phi: float, seed: int, stream: int = 0) -> np.ndarray:
    """Entries uniform(-0.5, 0.5) * exp(phi * normal(0, 1)).

    Even raw draws feed the uniform factor, odd draws the normal one.
    """
    if not np.isfinite(phi) or phi < 0:
        raise ValueError("phi must be finite and non-negative")
    raw = raw_stream(seed, stream, 2 * m * n)
    u = _unit(raw[0::2]) - 0.5
    z = ndtri(_open_unit(raw[1::2]))
    return (u * np.exp(phi * z)).reshape(m, n)


class LuSolution(NamedTuple):
    x: np.ndarray
    residual: float


def lu_solve(a, b) -> LuSolution:
    """Solve A X = B by LU with partial pivoting.

    ``residual`` is max|A X - B|. A pivot of magnitude <= 1e-300 is treated
    as singular.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("A must be square")
    if b.shape[0] != a.shape[0]:
        raise ValueError("B is not conformable with A")
    # LAPACK runs single-threaded here: the factorisation is small, and
    # scipy's bundled OpenBLAS crashes in getrs when oversubscribed
    with threadpool_limits(limits=1), warnings.catch_warnings():
        # singularity is reported below through the pivot check
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
        if (np.abs(np.diag(lu)) <= SINGULAR_PIVOT).any():
            raise SingularMatrixError("zero pivot encountered")
        x = scipy.linalg.lu_solve((lu, piv), b)
    resid = float(np.abs(a @ x - b).max()) if b.size else 0.0
    return LuSolution(x, resid)


def gen_inverse_pair(n: int, seed: int, stream: int = 0, max_tries: int = 16):
    """A with N(0, 1) entries and its numerically solved right inverse."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for attempt in range(max_tries):
        a = normal((n, n), seed, stream + attempt)
        try:
            sol = lu_solve(a, np.eye(n))
        except SingularMatrixError:
            log.warning("singular A for seed=%d stream=%d, regenerating", seed, stream + attempt)
            continue
        return a, sol.x
    raise SingularMatrixError(f"no nonsingular matrix after {max_tries} streams")


def haar_unitary(dim: int, seed: int, stream: int = 0) -> np.ndarray:
    """Haar-distributed unitary from the QR of a complex Ginibre matrix.

    Householder QR (LAPACK) followed by the phase fix Q @ diag(R_ii/|R_ii|).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    z = normal((2, dim, dim), seed, stream)
    g = (z[0] + 1j * z[1]) / np.sqrt(2.0)
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    q = q * (d / np.abs(d))[None, :]
    err = np.abs(q @ q.conj().T - np.eye(dim)).max()
    if err > 1e-12:
        raise ArithmeticError(f"QR produced a non-unitary matrix (error {err:.2e})")
    return q
