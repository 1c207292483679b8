"""Birkhoff factorization gamma = g_minus g_plus^{-1} on the unit circle.

g_plus extends holomorphically over the unit disc (modes >= 0), g_minus over
its complement including infinity (modes <= 0) with g_minus(infinity) = I.
The factorization is computed as one dense block-Toeplitz solve: requiring
modes 1..N of gamma g_plus to vanish and mode 0 to equal the identity gives
a square system of size n(N+1) whose unknowns are the g_plus coefficients;
g_minus is then the nonpositive part of gamma g_plus.  Loops off the big
cell (nontrivial partial indices) make the system singular and are reported
as BigCellError.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loops import DEFAULT_SAMPLES, MatrixLoop, _fast_len

FACTOR_TOL = 1e-9
COND_LIMIT = 1e12


class BigCellError(RuntimeError):
    """Loop is (numerically) outside the big cell of the Birkhoff decomposition."""


@dataclass
class BirkhoffFactors:
    g_minus: MatrixLoop
    g_plus: MatrixLoop
    residual: float
    condition: float


def toeplitz_matrix(gamma: MatrixLoop) -> np.ndarray:
    """Dense system matrix; block (m, j) holds gamma's mode m - j."""
    return _toeplitz_batch(gamma.coeffs[None], gamma.order, gamma.n)[0]


def _toeplitz_batch(coeffs: np.ndarray, order: int, n: int) -> np.ndarray:
    idx = np.arange(order + 1)[:, None] - np.arange(order + 1)[None, :] + order
    blocks = coeffs[:, idx]                      # (B, m, j, n, n)
    blocks = blocks.transpose(0, 1, 3, 2, 4)     # (B, m, n, j, n)
    b = coeffs.shape[0]
    return blocks.reshape(b, n * (order + 1), n * (order + 1))


def _rhs(order: int, n: int) -> np.ndarray:
    rhs = np.zeros((n * (order + 1), n), dtype=complex)
    rhs[:n, :n] = np.eye(n)
    return rhs


def factorize_batch(coeffs: np.ndarray, sample_count: int = DEFAULT_SAMPLES,
                    tol: float = FACTOR_TOL, chunk: int = 512):
    """Factor a stack of loops given as (B, 2N+1, n, n) coefficient arrays.

    Returns (g_minus_coeffs (B, 2N+1, n, n), g_plus_coeffs, residuals, ok).
    Nodes whose system is singular or whose reconstruction residual exceeds
    tol are flagged ok = False instead of raising; the coefficient entries
    for failed nodes are zero.
    """
    b, nmodes, n, _ = coeffs.shape
    order = (nmodes - 1) // 2
    g_minus = np.zeros_like(coeffs)
    g_plus = np.zeros_like(coeffs)
    residuals = np.full(b, np.inf)
    ok = np.zeros(b, dtype=bool)
    rhs = _rhs(order, n)
    for start in range(0, b, chunk):
        sl = slice(start, min(start + chunk, b))
        cs = coeffs[sl]
        t = _toeplitz_batch(cs, order, n)
        try:
            sol = np.linalg.solve(t, np.broadcast_to(rhs, (len(cs),) + rhs.shape))
            good = np.ones(len(cs), dtype=bool)
        except np.linalg.LinAlgError:
            sol = np.zeros((len(cs),) + rhs.shape, dtype=complex)
            good = np.zeros(len(cs), dtype=bool)
            for j in range(len(cs)):
                try:
                    sol[j] = np.linalg.solve(t[j], rhs)
                    good[j] = True
                except np.linalg.LinAlgError:
                    pass
        plus = sol.reshape(len(cs), order + 1, n, n)
        gm, gp, res = _assemble(cs, plus, order, n, sample_count)
        bad = ~np.isfinite(res)
        res[bad] = np.inf
        good &= ~bad
        good &= res <= tol
        g_minus[sl][good] = gm[good]
        g_plus[sl][good] = gp[good]
        residuals[sl] = res
        ok[sl] = good
    return g_minus, g_plus, residuals, ok


def _assemble(coeffs, plus, order, n, sample_count):
    """Normalize the factors and measure sup |gamma - g_minus g_plus^{-1}|."""
    b = len(coeffs)
    m = _fast_len(max(sample_count, 4 * order + 2))
    ks = np.arange(-order, order + 1)
    spec = np.zeros((b, m, n, n), dtype=complex)
    spec[:, ks % m] = coeffs
    gamma_vals = np.fft.ifft(spec, axis=1) * m

    spec_p = np.zeros((b, m, n, n), dtype=complex)
    spec_p[:, np.arange(order + 1) % m] = plus
    plus_vals = np.fft.ifft(spec_p, axis=1) * m

    prod_vals = gamma_vals @ plus_vals
    prod_spec = np.fft.fft(prod_vals, axis=1) / m
    minus = prod_spec[:, ks[ks <= 0] % m]        # modes -order..0, ascending k

    # normalize: right-multiply both factors so that g_minus mode 0 is
    # exactly the identity; the twist constant is itself mode 0
    mode0 = minus[:, -1]
    with np.errstate(all="ignore"):
        try:
            twist = np.linalg.inv(mode0)
        except np.linalg.LinAlgError:
            twist = np.stack([np.linalg.pinv(x) for x in mode0])
    minus = minus @ twist[:, None]
    plus = plus @ twist[:, None]
    minus[:, -1] = np.eye(n)

    gm = np.zeros((b, 2 * order + 1, n, n), dtype=complex)
    gm[:, :order + 1] = minus
    gp = np.zeros_like(gm)
    gp[:, order:] = plus

    spec_p[:, np.arange(order + 1) % m] = plus
    plus_vals = np.fft.ifft(spec_p, axis=1) * m
    spec_m = np.zeros_like(spec_p)
    spec_m[:, ks[ks <= 0] % m] = minus
    minus_vals = np.fft.ifft(spec_m, axis=1) * m
    with np.errstate(all="ignore"):
        try:
            recon = minus_vals @ np.linalg.inv(plus_vals)
        except np.linalg.LinAlgError:
            recon = np.full_like(minus_vals, np.nan)
    res = np.abs(recon - gamma_vals).max(axis=(1, 2, 3))
    return gm, gp, res


def factorize(gamma: MatrixLoop, tol: float = FACTOR_TOL,
              cond_limit: float = COND_LIMIT) -> BirkhoffFactors:
    """Factor a single loop, with a condition estimate of the Toeplitz system.

    Raises BigCellError when the system condition exceeds cond_limit or the
    reconstruction residual exceeds tol.
    """
    t = toeplitz_matrix(gamma)
    condition = float(np.linalg.cond(t))
    if not np.isfinite(condition) or condition > cond_limit:
        raise BigCellError(f"Toeplitz condition {condition:.3e} exceeds {cond_limit:.1e}")
    gm, gp, res, ok = factorize_batch(gamma.coeffs[None], gamma.sample_count, tol=tol)
    if not ok[0]:
        raise BigCellError(f"reconstruction residual {res[0]:.3e} exceeds tol {tol:.1e}")
    g_minus = MatrixLoop(gm[0], gamma.sample_count, unimodular=gamma.unimodular)
    g_plus = MatrixLoop(gp[0], gamma.sample_count, unimodular=gamma.unimodular)
    return BirkhoffFactors(g_minus, g_plus, float(res[0]), condition)


def negative_part_expansion(factors: BirkhoffFactors, count: int) -> list[np.ndarray]:
    """Coefficients P^i of g_minus = sum_i P^i lambda^{-i}; P^0 = identity."""
    return [factors.g_minus.coeff(-i).copy() for i in range(count + 1)]
