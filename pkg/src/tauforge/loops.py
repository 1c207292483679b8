"""Truncated matrix-valued Fourier series on the unit circle.

A loop is the trigonometric polynomial f(lambda) = sum_{k=-N}^{N} c_k lambda^k
with lambda = exp(i theta), stored by its coefficient stack c_k (each an n x n
complex matrix) together with a fixed sample grid theta_j = 2 pi j / M.
Products are dealiased by zero-padding to an exact grid; nothing is ever
smoothed or filtered, so every operation is exact up to rounding except where
an explicit truncation with a tail-mass check is requested.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.linalg

DEFAULT_ORDER = 32
DEFAULT_SAMPLES = 256
TAIL_THRESHOLD = 1e-8


class TailMassError(RuntimeError):
    """Raised when discarded or high-mode coefficient mass exceeds the threshold."""


class SingularLoopError(RuntimeError):
    """Raised when a pointwise inverse meets a sample matrix with cond > limit."""


def _fast_len(m: int) -> int:
    # next power of two; keeps numpy's FFT on its fastest path
    return 1 << (int(m) - 1).bit_length()


class MatrixLoop:
    """Matrix-valued loop with modes -order..order on a fixed circle grid."""

    def __init__(self, coeffs, sample_count: int | None = None,
                 unimodular: bool = False):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None, None]
        if coeffs.ndim != 3 or coeffs.shape[1] != coeffs.shape[2]:
            raise ValueError(f"coefficient stack must be (2N+1, n, n), got {coeffs.shape}")
        if coeffs.shape[0] % 2 != 1:
            raise ValueError("coefficient stack must cover modes -N..N")
        self.coeffs = coeffs
        self.order = (coeffs.shape[0] - 1) // 2
        self.n = coeffs.shape[1]
        minimum = 4 * self.order + 2
        if sample_count is None:
            sample_count = max(DEFAULT_SAMPLES, _fast_len(minimum))
        if sample_count < minimum:
            raise ValueError(f"sample_count {sample_count} < 4N+2 = {minimum}")
        self.sample_count = int(sample_count)
        self.unimodular = bool(unimodular)

    # -- constructors -------------------------------------------------

    @classmethod
    def identity(cls, n: int = 2, order: int = DEFAULT_ORDER,
                 sample_count: int | None = None) -> "MatrixLoop":
        coeffs = np.zeros((2 * order + 1, n, n), dtype=complex)
        coeffs[order] = np.eye(n)
        return cls(coeffs, sample_count, unimodular=True)

    @classmethod
    def from_modes(cls, modes: dict, n: int = 2, order: int = DEFAULT_ORDER,
                   sample_count: int | None = None, **kw) -> "MatrixLoop":
        """Build a loop from a {mode: matrix} dict; unspecified modes are zero."""
        coeffs = np.zeros((2 * order + 1, n, n), dtype=complex)
        for k, block in modes.items():
            if abs(k) > order:
                raise ValueError(f"mode {k} outside -{order}..{order}")
            coeffs[k + order] = np.asarray(block, dtype=complex)
        return cls(coeffs, sample_count, **kw)

    @classmethod
    def from_samples(cls, samples, order: int, tail_tol: float | None = None,
                     **kw) -> "MatrixLoop":
        """Recover coefficients from values on the equispaced grid.

        The sample count must resolve the requested order (M >= 4N+2); mass in
        the discarded alias bins beyond +-order is checked against tail_tol
        when given and raises TailMassError if exceeded.
        """
        samples = np.asarray(samples, dtype=complex)
        m = samples.shape[0]
        spec = np.fft.fft(samples, axis=0) / m
        ks = np.arange(-order, order + 1)
        coeffs = spec[ks % m]
        if tail_tol is not None:
            norms = np.linalg.norm(spec.reshape(m, -1), axis=1)
            kept = np.zeros(m, dtype=bool)
            kept[ks % m] = True
            total = norms.sum()
            dropped = norms[~kept].sum()
            if total > 0 and dropped / total > tail_tol:
                raise TailMassError(
                    f"discarded alias mass {dropped / total:.3e} exceeds {tail_tol:.1e}")
        return cls(coeffs, m, **kw)

    @classmethod
    def from_function(cls, fn, n: int = 2, order: int = DEFAULT_ORDER,
                      sample_count: int | None = None,
                      tail_tol: float | None = TAIL_THRESHOLD, **kw) -> "MatrixLoop":
        """Sample fn(lambda_array) -> (M, n, n) on the circle and transform."""
        m = sample_count or max(DEFAULT_SAMPLES, _fast_len(4 * order + 2))
        lam = np.exp(2j * np.pi * np.arange(m) / m)
        vals = np.asarray(fn(lam), dtype=complex)
        if vals.shape != (m, n, n):
            raise ValueError(f"function returned {vals.shape}, expected {(m, n, n)}")
        return cls.from_samples(vals, order, tail_tol=tail_tol, **kw)

    # -- basic access -------------------------------------------------

    def coeff(self, k: int):
        if abs(k) > self.order:
            return np.zeros((self.n, self.n), dtype=complex)
        return self.coeffs[k + self.order]

    def eval(self, theta):
        """Evaluate sum c_k e^{ik theta} at arbitrary angles."""
        theta = np.asarray(theta, dtype=float)
        ks = np.arange(-self.order, self.order + 1)
        phases = np.exp(1j * np.outer(theta.ravel(), ks))
        vals = np.tensordot(phases, self.coeffs, axes=(1, 0))
        return vals.reshape(theta.shape + (self.n, self.n))

    def eval_point(self, z: complex):
        """Evaluate the Laurent polynomial at a point off the circle."""
        ks = np.arange(-self.order, self.order + 1)
        return np.tensordot(np.asarray(z) ** ks, self.coeffs, axes=(0, 0))

    def samples(self, sample_count: int | None = None):
        """Values on the grid theta_j = 2 pi j / M, exact via zero-padded FFT."""
        m = sample_count or self.sample_count
        if m < 2 * self.order + 1:
            raise ValueError("sample grid cannot resolve the loop")
        spec = np.zeros((m, self.n, self.n), dtype=complex)
        ks = np.arange(-self.order, self.order + 1)
        np.add.at(spec, ks % m, self.coeffs)
        return np.fft.ifft(spec, axis=0) * m

    def sup_norm(self) -> float:
        return float(np.abs(self.samples()).max())

    def tail_mass(self) -> float:
        """Relative coefficient mass above mode |k| = order/2 (smoothness proxy)."""
        norms = np.linalg.norm(self.coeffs.reshape(len(self.coeffs), -1), axis=1)
        total = norms.sum()
        if total == 0:
            return 0.0
        ks = np.abs(np.arange(-self.order, self.order + 1))
        return float(norms[ks > self.order / 2].sum() / total)

    def unimodular_defect(self) -> float:
        return float(np.abs(np.linalg.det(self.samples()) - 1.0).max())

    # -- structural operations ----------------------------------------

    def truncate(self, order: int, tail_tol: float | None = TAIL_THRESHOLD) -> "MatrixLoop":
        """Keep modes -order..order; dropped mass is checked, never filtered."""
        if order >= self.order:
            coeffs = np.zeros((2 * order + 1, self.n, self.n), dtype=complex)
            coeffs[order - self.order:order + self.order + 1] = self.coeffs
            return type(self)(coeffs, max(self.sample_count, 4 * order + 2),
                              unimodular=self.unimodular)
        norms = np.linalg.norm(self.coeffs.reshape(len(self.coeffs), -1), axis=1)
        ks = np.abs(np.arange(-self.order, self.order + 1))
        total = norms.sum()
        dropped = norms[ks > order].sum()
        if tail_tol is not None and total > 0 and dropped / total > tail_tol:
            raise TailMassError(
                f"truncation to order {order} drops {dropped / total:.3e} of the mass")
        sl = slice(self.order - order, self.order + order + 1)
        return type(self)(self.coeffs[sl].copy(), self.sample_count,
                          unimodular=self.unimodular)

    def project(self, part: str) -> "MatrixLoop":
        """Keep one mode range; complementary parts sum to the original."""
        ks = np.arange(-self.order, self.order + 1)
        keep = {
            "strictly_positive": ks >= 1,
            "nonnegative": ks >= 0,
            "strictly_negative": ks <= -1,
            "nonpositive": ks <= 0,
        }.get(part)
        if keep is None:
            raise ValueError(f"unknown projection {part!r}")
        coeffs = np.where(keep[:, None, None], self.coeffs, 0.0)
        return type(self)(coeffs, self.sample_count)

    def derivative_theta(self) -> "MatrixLoop":
        ks = np.arange(-self.order, self.order + 1)
        return type(self)(1j * ks[:, None, None] * self.coeffs, self.sample_count)

    def derivative_lambda(self) -> "MatrixLoop":
        """d/dlambda; mode k goes to k c_k at mode k-1 (range grows by one)."""
        new_order = self.order + 1
        coeffs = np.zeros((2 * new_order + 1, self.n, self.n), dtype=complex)
        ks = np.arange(-self.order, self.order + 1)
        coeffs[ks - 1 + new_order] = ks[:, None, None] * self.coeffs
        return type(self)(coeffs)

    def trace(self) -> "ScalarLoop":
        return ScalarLoop(np.trace(self.coeffs, axis1=1, axis2=2),
                          self.sample_count)

    def scaled(self, factor: complex) -> "MatrixLoop":
        return type(self)(self.coeffs * factor, self.sample_count)

    def __matmul__(self, other):
        return multiply(self, other)

    def __add__(self, other):
        order = max(self.order, other.order)
        a, b = self.truncate(order), other.truncate(order)
        cls = ScalarLoop if isinstance(self, ScalarLoop) and isinstance(other, ScalarLoop) \
            else MatrixLoop
        return cls(a.coeffs + b.coeffs, max(a.sample_count, b.sample_count))

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def __repr__(self):
        return (f"{type(self).__name__}(n={self.n}, order={self.order}, "
                f"sample_count={self.sample_count})")

    # -- serialization ------------------------------------------------

    def to_record(self) -> dict:
        entries = []
        for idx in np.argwhere(self.coeffs != 0):
            k, r, c = idx
            z = self.coeffs[k, r, c]
            entries.append([int(k) - self.order, int(r), int(c), z.real, z.imag])
        return {"n": self.n, "N": self.order, "coeffs": entries,
                "sample_count": self.sample_count}

    @classmethod
    def from_record(cls, record: dict) -> "MatrixLoop":
        n, order = int(record["n"]), int(record["N"])
        coeffs = np.zeros((2 * order + 1, n, n), dtype=complex)
        for k, r, c, re, im in record["coeffs"]:
            coeffs[int(k) + order, int(r), int(c)] = complex(re, im)
        return cls(coeffs, record.get("sample_count"))

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def from_json(cls, text: str) -> "MatrixLoop":
        return cls.from_record(json.loads(text))


class ScalarLoop(MatrixLoop):
    """Scalar loop (n = 1); eval returns plain numbers, not 1x1 matrices."""

    def __init__(self, coeffs, sample_count: int | None = None,
                 real_on_circle: bool = False, **kw):
        super().__init__(coeffs, sample_count, **kw)
        if self.n != 1:
            raise ValueError("ScalarLoop requires n = 1")
        self.real_on_circle = bool(real_on_circle)

    @classmethod
    def from_modes(cls, modes: dict, n: int = 1, order: int = DEFAULT_ORDER,
                   sample_count: int | None = None, **kw) -> "ScalarLoop":
        wrapped = {k: np.atleast_2d(np.asarray(v, dtype=complex))
                   for k, v in modes.items()}
        return super().from_modes(wrapped, n=1, order=order,
                                  sample_count=sample_count, **kw)

    def eval(self, theta):
        return super().eval(theta)[..., 0, 0]

    def eval_point(self, z: complex):
        return super().eval_point(z)[0, 0]

    def samples(self, sample_count: int | None = None):
        return super().samples(sample_count)[..., 0, 0]

    def imag_defect(self) -> float:
        return float(np.abs(self.samples().imag).max())

    @classmethod
    def from_scalar_function(cls, fn, order: int = DEFAULT_ORDER,
                             sample_count: int | None = None,
                             tail_tol: float | None = TAIL_THRESHOLD,
                             **kw) -> "ScalarLoop":
        m = sample_count or max(DEFAULT_SAMPLES, _fast_len(4 * order + 2))
        lam = np.exp(2j * np.pi * np.arange(m) / m)
        vals = np.asarray(fn(lam), dtype=complex)[:, None, None]
        return cls.from_samples(vals, order, tail_tol=tail_tol, **kw)


def monomial(k: int, block, order: int | None = None,
             sample_count: int | None = None) -> MatrixLoop:
    """Single-mode loop block * lambda^k."""
    block = np.atleast_2d(np.asarray(block, dtype=complex))
    order = order if order is not None else max(abs(k), 1)
    cls = ScalarLoop if block.shape == (1, 1) else MatrixLoop
    return cls.from_modes({k: block}, n=block.shape[0], order=order,
                          sample_count=sample_count)


# -- pointwise algebra ---------------------------------------------------

def multiply(a: MatrixLoop, b: MatrixLoop, out_order: int | None = None,
             tail_tol: float | None = TAIL_THRESHOLD) -> MatrixLoop:
    """Dealiased product; exact at truncation order_a + order_b.

    Scalar factors broadcast against matrix factors.  With out_order the
    exact result is re-truncated under a tail-mass check.
    """
    exact_order = a.order + b.order
    m = _fast_len(max(2 * exact_order + 1, 4 * exact_order + 2))
    sa = MatrixLoop.samples(a, m)
    sb = MatrixLoop.samples(b, m)
    if a.n == 1 and b.n > 1:
        prod = sa[:, 0, 0][:, None, None] * sb
    elif b.n == 1 and a.n > 1:
        prod = sa * sb[:, 0, 0][:, None, None]
    else:
        prod = sa @ sb
    cls = ScalarLoop if prod.shape[1] == 1 else MatrixLoop
    result = cls.from_samples(prod, exact_order)
    result.sample_count = max(result.sample_count, DEFAULT_SAMPLES)
    result.unimodular = a.unimodular and b.unimodular and a.n == b.n
    if out_order is not None and out_order < exact_order:
        result = result.truncate(out_order, tail_tol)
    return result


def inverse(a: MatrixLoop, cond_max: float = 1e10,
            out_order: int | None = None) -> MatrixLoop:
    """Pointwise inverse transformed back at the loop's own truncation.

    Raises SingularLoopError when any sample matrix has 2-norm condition
    above cond_max.  The result is the order-N best effort; the round-trip
    guarantee multiply(a, inverse(a)) ~ identity holds for loops whose
    inverse has geometrically decaying coefficients.
    """
    vals = MatrixLoop.samples(a)
    if a.n == 1:
        mags = np.abs(vals[:, 0, 0])
        cond = mags.max() / max(mags.min(), np.finfo(float).tiny)
        if cond > cond_max:
            raise SingularLoopError(f"scalar loop condition {cond:.3e} > {cond_max:.1e}")
        inv_vals = 1.0 / vals
    else:
        svals = np.linalg.svd(vals, compute_uv=False)
        cond = float((svals[:, 0] / np.maximum(svals[:, -1], np.finfo(float).tiny)).max())
        if cond > cond_max:
            raise SingularLoopError(f"sample condition {cond:.3e} > {cond_max:.1e}")
        inv_vals = np.linalg.inv(vals)
    out = type(a).from_samples(inv_vals, a.order if out_order is None else out_order)
    out.unimodular = a.unimodular
    return out


def adjugate_inverse(a: MatrixLoop) -> MatrixLoop:
    """Exact coefficient-level inverse for 2x2 loops with det = 1.

    The adjugate of a unimodular 2x2 matrix is its inverse, and taking the
    adjugate only permutes and negates coefficients, so no sampling or
    truncation enters.
    """
    if a.n != 2:
        raise ValueError("adjugate inverse is a 2x2 shortcut")
    c = a.coeffs
    out = np.empty_like(c)
    out[:, 0, 0] = c[:, 1, 1]
    out[:, 1, 1] = c[:, 0, 0]
    out[:, 0, 1] = -c[:, 0, 1]
    out[:, 1, 0] = -c[:, 1, 0]
    return MatrixLoop(out, a.sample_count, unimodular=a.unimodular)


def exp_pointwise(a: MatrixLoop, tail_tol: float | None = TAIL_THRESHOLD) -> MatrixLoop:
    """Pointwise matrix exponential, recovered at the input's truncation.

    Samples are exponentiated by eigendecomposition; samples whose
    eigenbasis reconstructs poorly (defective or ill conditioned) fall back
    to scaling-and-squaring.  Raises TailMassError when exp spreads the
    spectrum past what order N can hold.
    """
    vals = MatrixLoop.samples(a)
    if a.n == 1:
        exp_vals = np.exp(vals)
    else:
        w, v = np.linalg.eig(vals)
        try:
            vinv = np.linalg.inv(v)
            exp_vals = v @ (np.exp(w)[..., None] * vinv)
            recon = v @ (w[..., None] * vinv)
            bad = np.abs(recon - vals).max(axis=(1, 2)) > 1e-12 * (1 + np.abs(vals).max())
        except np.linalg.LinAlgError:
            exp_vals = np.empty_like(vals)
            bad = np.ones(len(vals), dtype=bool)
        for j in np.nonzero(bad)[0]:
            exp_vals[j] = scipy.linalg.expm(vals[j])
    out = type(a).from_samples(exp_vals, a.order, tail_tol=tail_tol)
    # det(exp u) = exp(tr u): traceless input gives a unimodular loop
    if a.n > 1 and np.abs(np.trace(a.coeffs, axis1=1, axis2=2)).max() < 1e-13:
        out.unimodular = True
    return out


def contour_integral_dlambda(f: MatrixLoop):
    """Counterclockwise integral over |lambda| = 1 of f dlambda.

    Equals 2 pi i times the mode -1 coefficient; the orientation is frozen
    by the tau-function identity tests.
    """
    value = 2j * np.pi * f.coeff(-1)
    if f.n == 1:
        return complex(value[0, 0])
    return value


def mean_theta(f: MatrixLoop):
    """(1/2 pi) integral of f dtheta = mode-0 coefficient."""
    value = f.coeff(0)
    if f.n == 1:
        return complex(value[0, 0])
    return value


def commutator(a: MatrixLoop, b: MatrixLoop) -> MatrixLoop:
    return multiply(a, b) - multiply(b, a)


# -- random smooth loops (shared by tests, selftest, CLI) ----------------

def random_tangent(rng: np.random.Generator, n: int = 2, band: int = 8,
                   amplitude: float = 0.5, decay: float = 0.25,
                   order: int = DEFAULT_ORDER, sample_count: int | None = None,
                   antihermitian: bool = False, traceless: bool = True) -> MatrixLoop:
    """Random smooth loop with geometrically decaying band-limited modes.

    The decay keeps exp of the result inside the default tail-mass budget
    at order 32.
    """
    coeffs = np.zeros((2 * order + 1, n, n), dtype=complex)
    for k in range(-band, band + 1):
        block = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        coeffs[k + order] = block * decay ** abs(k)
    if antihermitian:
        # enforce u(theta)^* = -u(theta): c_{-k} = -c_k^H
        for k in range(1, band + 1):
            coeffs[-k + order] = -coeffs[k + order].conj().T
        coeffs[order] = 0.5 * (coeffs[order] - coeffs[order].conj().T)
    if traceless:
        idx = np.arange(n)
        tr = np.trace(coeffs, axis1=1, axis2=2) / n
        coeffs[:, idx, idx] -= tr[:, None]
    loop = MatrixLoop(coeffs, sample_count)
    scale = amplitude / max(loop.sup_norm(), np.finfo(float).tiny)
    return MatrixLoop(coeffs * scale, sample_count)


def random_unimodular_loop(rng: np.random.Generator, **kw) -> MatrixLoop:
    """exp of a random smooth traceless tangent; unimodular by construction."""
    return exp_pointwise(random_tangent(rng, **kw))
