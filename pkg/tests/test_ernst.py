"""Ernst pipeline: solution presets, d log tau routes, tau fields."""

import numpy as np
import pytest

from tauforge import ernst
from tauforge.twistor import ernst_frame

POINTS = [(0.3, -0.4), (1.0, 0.0), (2.7, 1.1)]
KASNER_SWEEP = [0.0, 0.3, 0.7, 1.2]


@pytest.fixture(scope="module")
def axes():
    return np.linspace(0.5, 2.0, 16), np.linspace(-0.5, 0.5, 11)


@pytest.fixture(scope="module")
def source():
    return ernst.point_source(0.8, -1.5)


def shear_solution():
    """psi = r z: non-harmonic with a z-dependence, so d log tau is not
    closed; the curl of the 1-form works out to r z exactly."""

    def zeros(r, z):
        return np.zeros(np.broadcast(np.asarray(r), np.asarray(z)).shape)

    return ernst.ErnstSolution(
        "shear",
        psi=lambda r, z: np.asarray(r) * np.asarray(z),
        psi_r=lambda r, z: np.asarray(z) + 0.0 * np.asarray(r),
        psi_z=lambda r, z: np.asarray(r) + 0.0 * np.asarray(z),
        psi_rr=zeros, psi_zz=zeros)


class TestSolutions:
    def test_metric_block_diagonal_and_determinant(self, source):
        for sol in (ernst.kasner(0.7), source):
            for r, z in POINTS:
                j = sol.metric_block(r, z)
                assert j[0, 1] == 0.0 and j[1, 0] == 0.0
                assert abs(np.linalg.det(j) + r ** 2) < 1e-12 * r ** 2

    def test_flat_residual_is_exactly_zero(self):
        sol = ernst.flat()
        for r, z in POINTS:
            assert ernst.field_residual(sol, r, z) == 0.0

    def test_kasner_residual_cancels(self):
        for a in KASNER_SWEEP:
            sol = ernst.kasner(a)
            for r, z in POINTS:
                assert ernst.field_residual(sol, r, z) < 1e-12

    def test_point_source_is_harmonic(self, source):
        for r, z in POINTS:
            assert ernst.field_residual(source, r, z) < 1e-10

    def test_non_solution_is_detected(self):
        sol = ernst.non_solution()
        for r, z in POINTS:
            # residual is sqrt(2)/r for psi = r
            assert ernst.field_residual(sol, r, z) > 0.5

    def test_field_residual_vectorizes(self, source):
        rs = np.array([0.5, 1.0, 1.5])
        zs = np.array([0.0, 0.2, -0.3])
        batch = ernst.field_residual(source, rs, zs)
        single = [ernst.field_residual(source, r, z) for r, z in zip(rs, zs)]
        assert np.allclose(batch, single, rtol=0, atol=1e-15)


class TestDlogtau:
    def test_flat_value(self):
        sol = ernst.flat()
        for r in (0.5, 1.0, 2.0):
            expected = -(1j * r / 2) * 2 * (1j / (2 * r)) ** 2
            assert abs(ernst.dlogtau(sol, r, 0.3, "wbar") - expected) < 1e-15

    def test_kasner_radial_and_axial_derivatives(self):
        for a in KASNER_SWEEP:
            sol = ernst.kasner(a)
            for r, z in POINTS:
                dw = ernst.dlogtau(sol, r, z, "w")
                dwb = ernst.dlogtau(sol, r, z, "wbar")
                d_r = 1j * (dw - dwb)
                assert abs(d_r - (1 + a ** 2) / (2 * r)) < 1e-10
                assert abs(dw + dwb) < 1e-12

    def test_conjugation_symmetry(self, source):
        for sol in (ernst.kasner(0.7), source, ernst.non_solution()):
            for r, z in POINTS:
                dw = ernst.dlogtau(sol, r, z, "w")
                dwb = ernst.dlogtau(sol, r, z, "wbar")
                assert abs(dw - np.conj(dwb)) < 1e-12

    def test_direction_validated(self):
        with pytest.raises(ValueError):
            ernst.dlogtau(ernst.flat(), 1.0, 0.0, "x")

    def test_matches_symbolic_pipeline(self, source):
        sympy = pytest.importorskip("sympy")
        r, z = sympy.symbols("r z", positive=True)
        cases = [
            (ernst.kasner(0.7), sympy.Rational(7, 10) * sympy.log(r)),
            (source, sympy.Rational(4, 5)
             / sympy.sqrt(r ** 2 + (z + sympy.Rational(3, 2)) ** 2)),
        ]
        for sol, psi in cases:
            j_top = r * sympy.exp(psi)
            j_bot = -r * sympy.exp(-psi)
            for direction, s in (("w", -1), ("wbar", 1)):
                def wirt(f):
                    return (sympy.diff(f, z) + s * sympy.I * sympy.diff(f, r)) / 2
                trace_sq = (wirt(j_top) / j_top) ** 2 + (wirt(j_bot) / j_bot) ** 2
                sign = 1 if direction == "w" else -1
                fn = sympy.lambdify((r, z), sign * sympy.I * r / 2 * trace_sq)
                for rv, zv in ((0.6, -0.3), (1.3, 0.2), (2.1, 0.9)):
                    got = ernst.dlogtau(sol, rv, zv, direction)
                    assert abs(got - complex(fn(rv, zv))) < 1e-12

    def test_kasner_closed_form_symbolic(self):
        sympy = pytest.importorskip("sympy")
        r, z, a = sympy.symbols("r z a", positive=True)
        psi = a * sympy.log(r)
        j_top = r * sympy.exp(psi)
        j_bot = -r * sympy.exp(-psi)

        def dlog(f, s):
            d = (sympy.diff(f, z) + s * sympy.I * sympy.diff(f, r)) / 2
            return d / f

        t_w = dlog(j_top, -1) ** 2 + dlog(j_bot, -1) ** 2
        t_wb = dlog(j_top, 1) ** 2 + dlog(j_bot, 1) ** 2
        d_w = sympy.I * r / 2 * t_w
        d_wb = -sympy.I * r / 2 * t_wb
        radial = sympy.I * (d_w - d_wb)
        assert sympy.simplify(radial - (1 + a ** 2) / (2 * r)) == 0
        assert sympy.simplify(d_w + d_wb) == 0


class TestResidueRoute:
    def test_frame_residue_value(self):
        for r in (0.5, 2.0):
            coeff, pole = ernst_frame(r, "wbar")
            assert pole == 1j
            assert abs(coeff.residue(pole) - 1j / r) < 1e-14

    def test_route_agreement(self, source):
        for sol in (ernst.flat(), ernst.kasner(0.7), source):
            for r, z in POINTS:
                assert ernst.residue_check(sol, r, z) < 1e-12


class TestTauField:
    def test_kasner_closed_form(self, axes):
        rs, zs = axes
        for a in KASNER_SWEEP:
            field = ernst.logtau_field(ernst.kasner(a), rs, zs)
            closed = ((1 + a ** 2) / 2) * np.log(rs)[:, None]
            assert np.abs(field.log_tau - closed).max() < 1e-8

    def test_base_point_normalization(self):
        rs = np.linspace(0.5, 2.0, 4)  # contains 1.0
        zs = np.linspace(-0.5, 0.5, 3)
        field = ernst.logtau_field(ernst.kasner(0.7), rs, zs)
        assert field.log_tau[1, 1] == 0.0

    def test_flat_equals_kasner_zero(self, axes):
        rs, zs = axes
        flat_field = ernst.logtau_field(ernst.flat(), rs, zs)
        kas_field = ernst.logtau_field(ernst.kasner(0.0), rs, zs)
        assert np.array_equal(flat_field.log_tau, kas_field.log_tau)

    def test_field_is_real_valued(self, axes, source):
        rs, zs = axes
        field = ernst.logtau_field(source, rs, zs)
        assert field.log_tau.dtype == np.float64
        assert field.dlogtau_w.shape == (len(rs), len(zs))
        assert np.abs(field.dlogtau_w - np.conj(field.dlogtau_wbar)).max() < 1e-12

    def test_grid_validation(self):
        sol = ernst.flat()
        with pytest.raises(ValueError):
            ernst.logtau_field(sol, [-0.5, 0.5], [0.0, 1.0])
        with pytest.raises(ValueError):
            ernst.logtau_field(sol, [1.0, 0.5], [0.0, 1.0])
        with pytest.raises(ValueError):
            ernst.logtau_field(sol, [1.0], [0.0, 1.0])


class TestClosedness:
    RECTANGLES = [((1.0, 1.5), (0.0, 0.5)), ((0.6, 2.1), (-0.8, 0.9))]

    def test_solutions_have_closed_loops(self, source):
        for sol in (ernst.kasner(0.7), source):
            for rspan, zspan in self.RECTANGLES:
                assert abs(ernst.rectangle_loop_integral(sol, rspan, zspan)) < 1e-8

    def test_shear_loop_matches_green_oracle(self):
        sol = shear_solution()
        loop = ernst.rectangle_loop_integral(sol, (1.0, 1.5), (0.0, 0.5))
        # curl of the 1-form is r z; integrate over the rectangle
        expected = ((1.5 ** 2 - 1.0 ** 2) / 2) * (0.5 ** 2 / 2)
        assert abs(loop - expected) < 1e-9
        assert abs(loop) > 1e-2

    def test_shear_fails_field_equations(self):
        sol = shear_solution()
        assert ernst.field_residual(sol, 1.2, 0.4) > 0.1


class TestConformalFactor:
    def test_constant_candidate_identified(self, axes, source):
        rs, zs = axes
        for sol in (ernst.kasner(0.0), ernst.kasner(0.7), source):
            report = ernst.conformal_factor_check(sol, rs, zs)
            assert report.candidate1_std < 1e-8
            assert report.candidate2_std > 1e-2
            assert report.constant_candidate == "log_tau - log(r Omega^2)"

    def test_kasner_zero_anchor(self, axes):
        rs, zs = axes
        sol = ernst.kasner(0.0)
        report = ernst.conformal_factor_check(sol, rs, zs)
        field = ernst.logtau_field(sol, rs, zs)
        log_romega2 = field.log_tau - report.candidate1
        assert np.abs(log_romega2 - 0.5 * np.log(rs)[:, None]).max() < 1e-8
