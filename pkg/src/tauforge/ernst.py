"""Ernst pipeline: Weyl-class metrics, d log tau in closed form, tau fields.

A solution is carried as an axisymmetric potential psi(r, z) with analytic
first and second derivatives; the induced metric block is

    J(r, z) = diag(r e^psi, -r e^{-psi}),        det J = -r^2.

The field equations reduce to harmonicity of psi, and the log tau
derivatives are closed-form expressions in the first derivatives of J:

    d/dwbar log tau = -(i r / 2) tr((J^-1 dJ/dwbar)^2),
    d/dw    log tau = +(i r / 2) tr((J^-1 dJ/dw)^2),

with w = z + i r.  residue_check re-derives these values through the
rational frame coefficient of the rotational symmetry: the contour
integral collapses to the residue at the frame pole, and the Lax
substitution replaces the frame derivative with r J^-1 dJ, so both
routes must agree to roundoff.  log tau itself is path-integrated from
the base point (r, z) = (1, 0), first along z = 0, then along z.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quadrature import refine_path_cells
from .twistor import ernst_frame

BASE_POINT = (1.0, 0.0)


@dataclass(frozen=True)
class ErnstSolution:
    """Weyl potential with analytic derivatives; see the module docstring."""

    label: str
    psi: Callable
    psi_r: Callable
    psi_z: Callable
    psi_rr: Callable
    psi_zz: Callable

    def metric_block(self, r, z):
        """J(r, z) as a stacked 2x2 diagonal matrix."""
        r = np.asarray(r, dtype=float)
        p = self.psi(r, np.asarray(z, dtype=float))
        out = np.zeros(np.broadcast(r, p).shape + (2, 2))
        out[..., 0, 0] = r * np.exp(p)
        out[..., 1, 1] = -r * np.exp(-p)
        return out


def _zeros_like_pair(r, z):
    return np.zeros(np.broadcast(np.asarray(r), np.asarray(z)).shape)


def flat() -> ErnstSolution:
    z0 = _zeros_like_pair
    return ErnstSolution("flat", psi=z0, psi_r=z0, psi_z=z0,
                         psi_rr=z0, psi_zz=z0)


def kasner(a: float) -> ErnstSolution:
    """psi = a log r; harmonic for every a."""
    return ErnstSolution(
        f"kasner({a:g})",
        psi=lambda r, z: a * np.log(r) + _zeros_like_pair(r, z),
        psi_r=lambda r, z: a / r + _zeros_like_pair(r, z),
        psi_z=_zeros_like_pair,
        psi_rr=lambda r, z: -a / r ** 2 + _zeros_like_pair(r, z),
        psi_zz=_zeros_like_pair)


def point_source(strength: float = 1.0, z0: float = 0.0) -> ErnstSolution:
    """psi = strength / sqrt(r^2 + (z - z0)^2), the axis monopole."""

    def rad(r, z):
        return np.sqrt(r ** 2 + (z - z0) ** 2)

    return ErnstSolution(
        f"point_source({strength:g})",
        psi=lambda r, z: strength / rad(r, z),
        psi_r=lambda r, z: -strength * r / rad(r, z) ** 3,
        psi_z=lambda r, z: -strength * (z - z0) / rad(r, z) ** 3,
        psi_rr=lambda r, z: strength * (3 * r ** 2 / rad(r, z) ** 5
                                        - 1.0 / rad(r, z) ** 3),
        psi_zz=lambda r, z: strength * (3 * (z - z0) ** 2 / rad(r, z) ** 5
                                        - 1.0 / rad(r, z) ** 3))


def non_solution() -> ErnstSolution:
    """psi = r, deliberately non-harmonic; sensitivity control."""
    return ErnstSolution(
        "non_solution",
        psi=lambda r, z: r + _zeros_like_pair(r, z),
        psi_r=lambda r, z: 1.0 + _zeros_like_pair(r, z),
        psi_z=_zeros_like_pair,
        psi_rr=_zeros_like_pair,
        psi_zz=_zeros_like_pair)


# -- pointwise evaluations ----------------------------------------------


def field_residual(sol: ErnstSolution, r, z) -> float:
    """Norm of (1/r) d_r(r J^-1 d_r J) + d_z(J^-1 d_z J).

    For diagonal J the matrix is diag(L, -L) with L the axisymmetric
    Laplacian of psi; the entries are assembled from the analytic
    derivatives without cancelling terms by hand.
    """
    lap = sol.psi_rr(r, z) + sol.psi_r(r, z) / np.asarray(r) + sol.psi_zz(r, z)
    lap = np.asarray(lap)
    mat = np.zeros(lap.shape + (2, 2))
    mat[..., 0, 0] = lap
    mat[..., 1, 1] = -lap
    return float(np.linalg.norm(mat)) if lap.ndim == 0 else \
        np.linalg.norm(mat, axis=(-2, -1))


def _trace_square(sol: ErnstSolution, r, z, direction: str):
    """tr((J^-1 dJ)^2) for d = d/dw or d/dwbar at (r, z)."""
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    pr = sol.psi_r(r, z)
    pz = sol.psi_z(r, z)
    s = {"wbar": 1j, "w": -1j}[direction]
    # diagonal entries of J^-1 dJ = d log(diagonal)
    d_top = 0.5 * (pz + s * (1.0 / r + pr))
    d_bot = 0.5 * (-pz + s * (1.0 / r - pr))
    return d_top ** 2 + d_bot ** 2


def dlogtau(sol: ErnstSolution, r, z, direction: str = "wbar"):
    """Closed-form d log tau in the w or wbar direction."""
    if direction not in ("w", "wbar"):
        raise ValueError("direction must be 'w' or 'wbar'")
    sign = {"wbar": -1.0, "w": 1.0}[direction]
    val = sign * 0.5j * np.asarray(r, dtype=float) \
        * _trace_square(sol, r, z, direction)
    return complex(val) if val.ndim == 0 else val


def residue_check(sol: ErnstSolution, r, z) -> float:
    """Route mismatch between dlogtau and the explicit residue evaluation.

    The contour form of the variation carries the rational frame
    coefficient; its only singularity in the relevant region is the
    simple frame pole, so the integral is 2 pi i times one residue.  The
    Lax substitution turns the frame derivative into r J^-1 dJ, whose
    conjugation-invariant trace square drops the unknown frame factor.
    """
    worst = 0.0
    for direction in ("wbar", "w"):
        direct = dlogtau(sol, r, z, direction)
        coeff, pole = ernst_frame(float(r), direction)
        res = coeff.residue(pole)
        route = (1j / (4 * np.pi)) * (2j * np.pi) * res \
            * float(r) ** 2 * _trace_square(sol, r, z, direction)
        worst = max(worst, abs(direct - route))
    return worst


def _d_r_logtau(sol, r, z):
    return 1j * (dlogtau(sol, r, z, "w") - dlogtau(sol, r, z, "wbar"))


def _d_z_logtau(sol, r, z):
    return dlogtau(sol, r, z, "w") + dlogtau(sol, r, z, "wbar")


# -- path-integrated fields ---------------------------------------------


@dataclass
class ErnstTauField:
    """Grid data over (r, z); arrays indexed [ir, iz]; log_tau real."""

    rs: np.ndarray
    zs: np.ndarray
    log_tau: np.ndarray
    dlogtau_w: np.ndarray
    dlogtau_wbar: np.ndarray


def _cumulative_from_anchor(breaks, cell_values, anchor: float):
    """Antiderivative at the breakpoints, zero at the anchor breakpoint."""
    n_cols = cell_values.shape[0]
    cum = np.zeros((n_cols, len(breaks)), dtype=complex)
    cum[:, 1:] = np.cumsum(cell_values, axis=1)
    idx = int(np.argmin(np.abs(breaks - anchor)))
    return cum - cum[:, idx][:, None]


def _validated_axes(rs, zs):
    rs = np.asarray(rs, dtype=float)
    zs = np.asarray(zs, dtype=float)
    if len(rs) < 2 or len(zs) < 2:
        raise ValueError("grid needs at least 2 nodes per axis")
    if not (np.all(np.diff(rs) > 0) and np.all(np.diff(zs) > 0)):
        raise ValueError("grid axes must be strictly increasing")
    if rs[0] <= 0:
        raise ValueError("grid must stay in the r > 0 half plane")
    return rs, zs


def logtau_field(sol: ErnstSolution, rs, zs,
                 tol_path: float = 1e-9) -> ErnstTauField:
    """Path-integrate d log tau from (1, 0): first in r at z = 0, then in z."""
    rs, zs = _validated_axes(rs, zs)
    r0, z0 = BASE_POINT

    r_breaks = np.union1d(rs, [r0])
    r_cells = np.column_stack([r_breaks[:-1], r_breaks[1:]])
    # closed-form integrands are cheap, so deep refinement is affordable
    vals_r, _, _ = refine_path_cells(
        lambda pts, cols: _d_r_logtau(sol, pts, np.zeros_like(pts)),
        r_cells, 1, tol_path, max_level=14)
    cum_r = _cumulative_from_anchor(r_breaks, vals_r, r0)[0]
    base_r = cum_r[np.searchsorted(r_breaks, rs)]

    z_breaks = np.union1d(zs, [z0])
    z_cells = np.column_stack([z_breaks[:-1], z_breaks[1:]])
    vals_z, _, _ = refine_path_cells(
        lambda pts, cols: _d_z_logtau(sol, rs[cols], pts),
        z_cells, len(rs), tol_path, max_level=14)
    cum_z = _cumulative_from_anchor(z_breaks, vals_z, z0)
    log_tau = base_r[:, None] + cum_z[:, np.searchsorted(z_breaks, zs)]

    if np.abs(log_tau.imag).max() > 1e-9:
        raise ValueError("log tau came out non-real for a real metric block")

    gr, gz = np.meshgrid(rs, zs, indexing="ij")
    return ErnstTauField(
        rs=rs, zs=zs, log_tau=log_tau.real,
        dlogtau_w=dlogtau(sol, gr, gz, "w"),
        dlogtau_wbar=dlogtau(sol, gr, gz, "wbar"))


def rectangle_loop_integral(sol: ErnstSolution, rspan, zspan,
                            order: int = 24) -> complex:
    """Loop integral of d log tau around an axis-aligned rectangle.

    Closed for genuine solutions; an independent Gauss-Legendre rule per
    edge keeps the check decoupled from the path-refinement machinery.
    """
    ra, rb = map(float, rspan)
    za, zb = map(float, zspan)
    nodes, weights = np.polynomial.legendre.leggauss(order)

    def edge(fn, a, b, fixed, along_r):
        pts = 0.5 * (a + b) + 0.5 * (b - a) * nodes
        fixed_arr = np.full_like(pts, fixed)
        if along_r:
            vals = fn(sol, pts, fixed_arr)
        else:
            vals = fn(sol, fixed_arr, pts)
        return 0.5 * (b - a) * np.dot(weights, vals)

    total = edge(_d_r_logtau, ra, rb, za, True)
    total += edge(_d_z_logtau, za, zb, rb, False)
    total += edge(_d_r_logtau, rb, ra, zb, True)
    total += edge(_d_z_logtau, zb, za, ra, False)
    return complex(total)


# -- conformal factor ----------------------------------------------------


@dataclass
class ConformalFactorReport:
    """Constancy data for the two candidate tau / conformal-factor links."""

    candidate1: np.ndarray
    candidate2: np.ndarray
    candidate1_std: float
    candidate2_std: float
    constant_candidate: str


def _gl_cumulative(fn, breaks, anchor, order: int = 16):
    """Composite Gauss-Legendre antiderivative over the break intervals.

    fn(points) -> (n_cols, len(points)) integrand values.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    a = breaks[:-1]
    b = breaks[1:]
    half = 0.5 * (b - a)
    pts = (0.5 * (a + b)[:, None] + half[:, None] * nodes[None, :]).ravel()
    vals = np.asarray(fn(pts), dtype=complex).reshape(-1, len(a), order)
    cells = (vals * weights[None, None, :]).sum(axis=2) * half[None, :]
    return _cumulative_from_anchor(breaks, cells, anchor)


def conformal_factor_check(sol: ErnstSolution, rs, zs) -> ConformalFactorReport:
    """Integrate the conformal-factor equation and compare it to log tau.

    The displayed equation for log(r Omega^2) has the same Wirtinger
    derivatives as log tau, so candidate 1 = log tau - log(r Omega^2)
    should be grid-constant; candidate 2 = log tau + log(r^2 Omega) is
    reported alongside for comparison.  Both integrations run over the
    same axis paths but with independent quadrature.
    """
    rs, zs = _validated_axes(rs, zs)
    field = logtau_field(sol, rs, zs)
    r0, z0 = BASE_POINT

    # log(r Omega^2), normalized to 0 at the base point
    r_breaks = np.union1d(rs, [r0])
    cum_r = _gl_cumulative(
        lambda pts: _d_r_logtau(sol, pts, np.zeros_like(pts))[None, :],
        r_breaks, r0)[0]
    base_r = cum_r[np.searchsorted(r_breaks, rs)]
    z_breaks = np.union1d(zs, [z0])

    def zfn(pts):
        # pts is the flattened (cell x node) line, shared by every column
        return np.stack([_d_z_logtau(sol, np.full_like(pts, rv), pts)
                         for rv in rs])

    cum_z = _gl_cumulative(zfn, z_breaks, z0)
    log_romega2 = (base_r[:, None]
                   + cum_z[:, np.searchsorted(z_breaks, zs)]).real

    log_r = np.log(rs)[:, None]
    candidate1 = field.log_tau - log_romega2
    candidate2 = field.log_tau + 1.5 * log_r + 0.5 * log_romega2
    std1 = float(candidate1.std())
    std2 = float(candidate2.std())
    which = ("log_tau - log(r Omega^2)" if std1 <= std2
             else "log_tau + log(r^2 Omega)")
    return ConformalFactorReport(
        candidate1=candidate1, candidate2=candidate2,
        candidate1_std=std1, candidate2_std=std2,
        constant_candidate=which)
