import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import families
from gaussian_channels import mastereq as me
from gaussian_channels import oracle
from gaussian_channels.core import GaussianState
from gaussian_channels.kernels import (
    FormI,
    FormII,
    GaussianForm,
    InvalidDomain,
    SigmaCoefficients,
)
from gaussian_channels.mastereq import (
    CoefficientTrajectory,
    GridTooCoarse,
    Liouvillian,
    NoMasterEquation,
    QbmParams,
)

TIMES = np.linspace(0.0, 1.0, 11)


def form1_traj(fn, times=TIMES):
    """FormI trajectory from ``fn(t) -> (coeff dict, A)``; e3 follows from TP."""

    def make(t):
        kw, A = fn(t)
        kw.setdefault("e1", 1.0)
        kw.setdefault("e2", 1.0)
        kw["e3"] = kw["e2"] ** 2 / (4 * kw["e1"])
        return FormI(SigmaCoefficients(**kw), A, 1.0)

    return CoefficientTrajectory.from_function(times, make)


def form2_traj(fn, times=TIMES):
    """FormII trajectory from ``fn(t) -> (coeff dict, A, B)`` with beta = gamma = 1."""

    def make(t):
        kw, A, B = fn(t)
        return FormII(SigmaCoefficients(**kw), A, 1.0, 1.0, 1.0 / B)

    return CoefficientTrajectory.from_function(times, make)


class TestTrajectory:
    def test_non_uniform(self):
        k = FormII(SigmaCoefficients(), 1, 1, 1, 1)
        with pytest.raises(ValueError):
            CoefficientTrajectory([0, 1, 3], [k] * 3)

    def test_mixed_forms(self):
        k2 = FormII(SigmaCoefficients(), 1, 1, 1, 1)
        k1 = FormI(SigmaCoefficients(e1=1.0), 1, 1)
        with pytest.raises(ValueError):
            CoefficientTrajectory([0, 1], [k1, k2])

    def test_rejects_non_tp(self):
        k = FormI(SigmaCoefficients(e1=1.0, e2=1.0, e3=1.0), 1, 1)
        with pytest.raises(InvalidDomain):
            CoefficientTrajectory([0, 1], [k, k])

    def test_derived_columns(self):
        traj = CoefficientTrajectory.from_function(families.times(0.1), families.form2)
        t = traj.times
        np.testing.assert_allclose(traj.A, np.exp(0.3 * t))
        np.testing.assert_allclose(traj.B, np.exp(0.2 * t))
        np.testing.assert_allclose(traj.c, 0.7 * np.exp(0.3 * t))
        assert traj.index(t[3]) == 3
        with pytest.raises(ValueError):
            traj.index(t[3] + 0.05)


class TestExistence:
    def test_proportional(self):
        for kappa in (-2.0, 0.0, 3.5):
            traj = form1_traj(lambda t: ({"c1": kappa * math.exp(t)}, math.exp(t)))
            assert me.existence_check(traj)

    def test_zero_c(self):
        assert me.existence_check(form1_traj(lambda t: ({}, 1 + t)))

    def test_not_proportional(self):
        assert not me.existence_check(form1_traj(lambda t: ({"c1": t}, math.exp(t))))

    def test_c2_enters_through_a(self):
        # c = c1 + A c2 = A when c1 = A (1 - c2)
        traj = form1_traj(lambda t: ({"c1": 0.5 * math.exp(t), "c2": 0.5}, math.exp(t)))
        assert me.existence_check(traj)

    def test_a_zero(self):
        traj = form1_traj(lambda t: ({}, t))
        with pytest.raises(InvalidDomain):
            me.existence_check(traj)

    def test_generator_requires_existence(self):
        traj = form1_traj(lambda t: ({"c1": t}, math.exp(t)))
        with pytest.raises(NoMasterEquation):
            me.liouvillian(traj, 0.5)
        me.liouvillian(traj, 0.5, require_existence=False)


class TestLiouvillianForm1:
    def test_static(self):
        traj = form1_traj(lambda t: ({"a1": 1.0, "b1": 0.3, "b2": 0.4, "c1": 0.2}, 2.0))
        L = me.liouvillian_form1(traj, 0.5)
        for name, v in L.coefficients().items():
            assert v == pytest.approx(0, abs=1e-12), name

    def test_exponential_e(self):
        traj = form1_traj(lambda t: ({"e1": math.exp(2 * t), "e2": math.exp(t)}, 1.0))
        c = me.liouvillian_form1(traj, 0.5).coefficients()
        # second-order differences of exponentials at dt = 0.1
        assert c["Lc"] == pytest.approx(1.0, abs=5e-2)
        assert c["Lc"] == c["Yrr"]

    def test_exponential_a(self):
        traj = form1_traj(lambda t: ({}, math.exp(t)))
        assert me.liouvillian_form1(traj, 0.5).coefficients()["Yxx"] == pytest.approx(1, abs=1e-2)

    def test_derivative_order(self):
        errs = []
        for dt in (0.02, 0.01, 0.005):
            traj = form1_traj(
                lambda t: ({"e1": math.exp(2 * t), "e2": math.exp(t)}, math.exp(t)),
                times=families.times(dt),
            )
            c = me.liouvillian_form1(traj, families.T0).coefficients()
            errs.append(max(abs(c["Lc"] - 1), abs(c["Yxx"] - 1)))
        orders = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all(orders >= 1.9)

    def test_endpoint_one_sided(self):
        traj = form1_traj(lambda t: ({}, math.exp(t)))
        assert me.liouvillian_form1(traj, 0.0).coefficients()["Yxx"] == pytest.approx(1, abs=1e-2)

    def test_singular_endpoint(self):
        # e2 -> 0 makes det T = -e2 A / (2 e1) vanish: class A2
        traj = form1_traj(lambda t: ({"e2": 1 - t}, 1.0))
        me.liouvillian_form1(traj, 0.5)
        with pytest.raises(InvalidDomain):
            me.liouvillian_form1(traj, 1.0)

    def test_symmetric(self):
        traj = CoefficientTrajectory.from_function(families.times(1e-3), families.form1)
        L = me.liouvillian(traj, families.T0)
        np.testing.assert_array_equal(L.X, L.X.T)
        np.testing.assert_array_equal(L.Z, L.Z.T)


class TestLiouvillianForm2:
    def test_static(self):
        traj = form2_traj(lambda t: ({"a1": 1.0, "b1": 0.4}, 2.0, 3.0))
        for name, v in me.liouvillian_form2(traj, 0.5).coefficients().items():
            assert v == pytest.approx(0, abs=1e-12), name

    def test_zxr_constant_lambda(self):
        traj = form2_traj(lambda t: ({"b1": 0.3, "b2": 0.0, "b3": 0.0}, math.exp(t), math.exp(t)))
        L = me.liouvillian_form2(traj, 0.5).coefficients()
        # lambda = b1 = 0.3; Zxr = -i lambda (gA + gB) / 2
        assert L["Zxr"] == pytest.approx(-0.3j, abs=1e-2)

    def test_zxx_linear_a1(self):
        traj = form2_traj(lambda t: ({"a1": t}, 1.0, 1.0))
        assert me.liouvillian_form2(traj, 0.5).coefficients()["Zxx"] == pytest.approx(-1, abs=1e-12)

    def test_structure(self):
        traj = form2_traj(lambda t: ({"a1": t}, math.exp(t), math.exp(2 * t)))
        c = me.liouvillian_form2(traj, 0.5).coefficients()
        for name in ("Xxx", "Xxr", "Xrr", "Yxr", "Yrx", "Zrr"):
            assert c[name] == 0
        assert c["Lc"] == c["Yrr"] == pytest.approx(2, abs=5e-2)
        assert c["Yxx"] == pytest.approx(1, abs=1e-2)

    def test_singular(self):
        traj = form2_traj(lambda t: ({}, 1 - t, 1.0))
        with pytest.raises(InvalidDomain):
            me.liouvillian_form2(traj, 1.0, require_existence=False)

    def test_gaussian_form_has_no_generator(self):
        traj = CoefficientTrajectory([0, 1, 2], [GaussianForm(SigmaCoefficients(b3=1.0, b2=1.0))] * 3)
        with pytest.raises(InvalidDomain):
            me.liouvillian(traj, 1.0)


class TestLiouvillianType:
    def test_round_trip(self):
        L = Liouvillian.from_coefficients(Lc=1.0, Xxr=2j, Yrx=0.5, Zxx=-1.0)
        c = L.coefficients()
        assert len(c) == 11
        assert Liouvillian.from_coefficients(**c).coefficients() == c
        assert L.to_dict()["Xxr"] == [0.0, 2.0]

    def test_symmetry_enforced(self):
        with pytest.raises(ValueError):
            Liouvillian(0, np.array([[0, 1], [0, 0]]), np.zeros((2, 2)), np.zeros((2, 2)))


def gaussian_grid(n=201, L=6.0):
    s = GaussianState([[0.8, 0.2], [0.2, 0.6]], [0.3, -0.4])
    g = oracle.PositionGrid(n, L)
    return s, g, oracle.sample_state(s, g)


def analytic_dx(s, g):
    """``d rho/dx`` of the closed form, using the exponent's linear x-coefficient."""
    v11 = s.sigma[0, 0]
    s2 = s.sigma[1, 1] - s.sigma[0, 1] ** 2 / v11
    slope = s.sigma[0, 1] / v11
    x, r = g.x[:, None], g.r[None, :]
    mu = s.mean[1] + slope * (r - s.mean[0])
    return (-s2 * x - 1j * mu) * oracle.state_to_position(s, x, r)


class TestApplyLiouvillian:
    def test_zero(self):
        _, _, d = gaussian_grid()
        assert np.all(me.apply_liouvillian(Liouvillian.from_coefficients(), d).values == 0)

    def test_zxx_pointwise(self):
        _, g, d = gaussian_grid()
        out = me.apply_liouvillian(Liouvillian.from_coefficients(Zxx=0.7), d)
        np.testing.assert_allclose(out.values, 0.7 * g.x[:, None] ** 2 * d.values, rtol=0, atol=1e-15)

    def test_lc_scales(self):
        _, _, d = gaussian_grid()
        out = me.apply_liouvillian(Liouvillian.from_coefficients(Lc=2 - 1j), d)
        np.testing.assert_allclose(out.values, (2 - 1j) * d.values)

    def test_yxx_matches_analytic(self):
        s, g, d = gaussian_grid(401)
        out = me.apply_liouvillian(Liouvillian.from_coefficients(Yxx=1.0), d).values
        expected = g.x[:, None] * analytic_dx(s, g)
        assert np.abs(out - expected).max() <= 1e-3 * np.abs(expected).max()

    def test_second_order_in_h(self):
        errs = []
        for n in (101, 201, 401):
            s, g, d = gaussian_grid(n)
            out = me.apply_liouvillian(Liouvillian.from_coefficients(Yxx=1.0), d).values
            exp = g.x[:, None] * analytic_dx(s, g)
            errs.append(np.abs(out - exp).max())
        assert math.log2(errs[0] / errs[1]) >= 1.9
        assert math.log2(errs[1] / errs[2]) >= 1.9

    def test_xrr_is_second_derivative(self):
        g = oracle.PositionGrid(201, 4.0)
        r = g.r[None, :] * np.ones((g.n, 1))
        d = oracle.DensityGrid(g, np.exp(-r * r).astype(complex))
        out = me.apply_liouvillian(Liouvillian.from_coefficients(Xrr=1.0), d).values
        np.testing.assert_allclose(out, (4 * r * r - 2) * np.exp(-r * r), atol=2e-3)

    def test_coarse_warning(self):
        s = GaussianState([[0.01, 0.0], [0.0, 25.0]])
        d = oracle.sample_state(s, oracle.PositionGrid(11, 5.0))
        with pytest.warns(GridTooCoarse):
            me.apply_liouvillian(Liouvillian.from_coefficients(Lc=1.0), d)


def traj_of(family, dt=1e-3, shift=False):
    return CoefficientTrajectory.from_function(families.times(dt), lambda t: family(t, shift))


@pytest.mark.slow
class TestVerifyMasterEquation:
    @pytest.mark.parametrize("family", [families.form1, families.form2])
    def test_converges(self, family):
        coarse = me.verify_master_equation(traj_of(family), families.STATE, families.T0)
        assert coarse.passed and coarse.existence
        fine = me.verify_master_equation(
            traj_of(family, 5e-4), families.STATE, families.T0, grid=coarse.grid.refined()
        )
        assert math.log2(coarse.residual / fine.residual) >= 1.9

    @pytest.mark.parametrize("family", [families.form1, families.form2])
    def test_negative_control(self, family):
        good = me.verify_master_equation(traj_of(family), families.STATE, families.T0)
        bad = me.verify_master_equation(
            traj_of(family, shift=True), families.STATE, families.T0, require_existence=False
        )
        assert not bad.existence and not bad.passed
        assert bad.residual >= 10 * good.residual

    def test_static_form2(self):
        k = FormII(SigmaCoefficients(a1=0.2, b1=0.3, b2=0.1, c1=0.4), 1.5, 1.0, 1.0, 0.8)
        traj = CoefficientTrajectory(families.times(1e-3), [k] * 5)
        rep = me.verify_master_equation(traj, families.STATE, families.T0)
        assert rep.residual <= 1e-9

    def test_uncorrected_form2_lc_fails(self):
        # Lc = 0 breaks trace preservation when B varies
        traj = traj_of(families.form2)
        L = me.liouvillian(traj, families.T0)
        uncorrected = dataclasses.replace(L, Lc=0.0)
        good = me.verify_master_equation(traj, families.STATE, families.T0)
        bad = me.verify_master_equation(traj, families.STATE, families.T0, generator=uncorrected)
        assert bad.residual >= 10 * good.residual

    def test_uncorrected_form2_zxx_fails(self):
        traj = traj_of(families.form2)
        L = me.liouvillian(traj, families.T0)
        A = traj.A[traj.index(families.T0)]
        c = L.coefficients()
        # a bare -A^2 term in place of -A^2 da3/dt (da3/dt = 0 here)
        uncorrected = Liouvillian.from_coefficients(**{**c, "Zxx": c["Zxx"] - A * A})
        good = me.verify_master_equation(traj, families.STATE, families.T0)
        bad = me.verify_master_equation(traj, families.STATE, families.T0, generator=uncorrected)
        assert bad.residual >= 10 * good.residual

    def test_uncorrected_form1_zxr_fails(self):
        traj = traj_of(families.form1)
        i = traj.index(families.T0)
        L = me.liouvillian(traj, families.T0)
        c = L.coefficients()
        _, l1, l2, _ = me._lambdas(traj)
        e1, e2 = traj.column("e1"), traj.column("e2")
        g = np.gradient(e2, traj.dt)[i] / e2[i] - np.gradient(e1, traj.dt)[i] / e1[i]
        # last term with lambda2 in place of lambda1
        zxr = c["Zxr"] + 0.5j * (l2[i] - l1[i]) * g
        uncorrected = Liouvillian.from_coefficients(**{**c, "Zxr": zxr})
        good = me.verify_master_equation(traj, families.STATE, families.T0)
        bad = me.verify_master_equation(traj, families.STATE, families.T0, generator=uncorrected)
        assert bad.residual >= 10 * good.residual

    def test_boundary_time(self):
        with pytest.raises(ValueError):
            me.verify_master_equation(traj_of(families.form2), families.STATE, families.times(1e-3)[0])


class TestQbm:
    P = QbmParams(damping=1.0, frequency=2.0, amplitude=1.0)

    def test_params(self):
        with pytest.raises(ValueError):
            QbmParams(damping=0.0, frequency=1.0)

    def test_det_envelope(self):
        traj = me.qbm_trajectory(self.P, 20.0, 2000)
        scan = me.singular_time_scan(traj, 0.0)
        dets = np.array([np.linalg.det(me.to_affine(k).T) for k in traj.kernels])
        env = me.qbm_det_envelope(self.P, traj.times)
        assert np.abs(dets - env).max() <= 1e-12
        assert np.all(np.diff(env) < 0)
        assert len(scan.times) == 0

    @given(
        st.floats(0.1, 3.0), st.floats(0.5, 5.0), st.floats(0.2, 4.0)
    )
    def test_det_matches_any_params(self, damping, frequency, amplitude):
        p = QbmParams(damping, frequency, amplitude)
        traj = me.qbm_trajectory(p, 10.0, 200)
        for t, k in zip(traj.times, traj.kernels):
            k_b3 = k.coeffs.b3
            if abs(k_b3) < 1e-8:
                continue
            det = np.linalg.det(me.to_affine(k).T)
            assert det == pytest.approx(amplitude * frequency**2 * math.exp(-damping * t), rel=1e-9)

    def test_b2_zeros(self):
        traj = me.qbm_trajectory(self.P, 20.0, 2000)
        zeros = me.b2_zeros(traj)
        k = np.arange(1, len(zeros) + 1)
        assert len(zeros) == int(20.0 * self.P.frequency / math.pi)
        assert np.abs(zeros - k * math.pi / self.P.frequency).max() <= traj.dt
        # nearest sample to each zero has the smallest |b2| in its neighbourhood
        b2 = np.abs(traj.column("b2"))
        for z in zeros:
            i = int(np.argmin(np.abs(traj.times - z)))
            assert b2[i] <= b2[max(i - 1, 0)] and b2[i] <= b2[min(i + 1, len(b2) - 1)]

    def test_small_damping_flat(self):
        p = QbmParams(damping=1e-12, frequency=2.0)
        env = me.qbm_det_envelope(p, me.qbm_trajectory(p, 20.0, 200).times)
        np.testing.assert_allclose(env, 4.0, rtol=1e-10)

    def test_b3_vanishes_at_zeros_too(self):
        # the zeros of b2 and b3 coincide, so det stays finite there
        traj = me.qbm_trajectory(self.P, 5.0, 500)
        assert np.all(np.isfinite([np.linalg.det(me.to_affine(k).T) for k in traj.kernels]))

    def test_samples(self):
        with pytest.raises(ValueError):
            me.qbm_trajectory(self.P, 1.0, 1)


class TestSingularScan:
    def test_tail_flagged(self):
        p = QbmParams(damping=1.0, frequency=1.0)
        traj = me.qbm_trajectory(p, 20.0, 2000)
        threshold = 1e-6
        scan = me.singular_time_scan(traj, threshold)
        cut = -math.log(threshold)
        assert len(scan.times) > 0
        assert np.all(scan.times > cut - traj.dt)
        assert np.all(traj.times[traj.times > cut + traj.dt] >= scan.times[0])
        assert {f["tag"] for f in scan.to_dict()["flagged"]} == {"approach to A2"}
        assert scan.notes

    def test_threshold_zero(self):
        traj = me.qbm_trajectory(QbmParams(1.0, 1.0), 20.0, 200)
        assert len(me.singular_time_scan(traj, 0.0).times) == 0

    def test_never_small(self):
        k = GaussianForm(SigmaCoefficients(b2=1.0, b3=1.0))
        traj = CoefficientTrajectory([0.0, 1.0, 2.0], [k] * 3)
        scan = me.singular_time_scan(traj, 1e-3)
        assert len(scan.times) == 0 and len(scan.divergent) == 0

    def test_requires_gaussian_form(self):
        traj = form1_traj(lambda t: ({}, 1.0))
        with pytest.raises(InvalidDomain):
            me.singular_time_scan(traj, 1e-3)
