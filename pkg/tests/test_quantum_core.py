import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qskr import quantum_core as qc
from qskr.errors import DomainError, NonPhysicalStateError


def numeric_spectrum(v_a, noise):
    """Symplectic eigenvalues from the spectrum of i Omega Sigma."""
    sigma = qc.covariance_block(v_a, noise).matrix()
    ev = np.abs(np.linalg.eigvals(1j * qc.OMEGA @ sigma))
    return np.sort(ev)[::-1][::2]


def numeric_lambda_het(v_a, noise):
    """sqrt(det) of the user's block conditioned on heterodyne at the receiver."""
    blk = qc.covariance_block(v_a, noise)
    eye = np.eye(2)
    cond = blk.v_a * eye - blk.gamma @ np.linalg.inv((blk.b_k + 1.0) * eye) @ blk.gamma.T
    return math.sqrt(np.linalg.det(cond))


def mp_h(x):
    with mpmath.workdps(50):
        x = mpmath.mpf(x)
        return float((x + 1) / 2 * mpmath.log((x + 1) / 2, 2)
                     - (x - 1) / 2 * mpmath.log((x - 1) / 2, 2))


class TestEntropy:
    def test_vacuum_is_zero(self):
        assert qc.entropy_h(1.0) == 0.0

    def test_matches_high_precision_value(self):
        assert qc.entropy_h(10.0) == pytest.approx(mp_h(10), rel=1e-14)
        assert qc.entropy_h(10.0) == pytest.approx(3.7622113960, abs=1e-10)

    def test_exact_value_at_three(self):
        assert qc.entropy_h(3.0) == 2.0

    @pytest.mark.parametrize("x", [1.0 + 1e-9, 1.5, 3.0, 1e3, 1e8])
    def test_against_mpmath(self, x):
        assert qc.entropy_h(x) == pytest.approx(mp_h(x), rel=1e-12, abs=1e-15)

    def test_rejects_sub_vacuum(self):
        with pytest.raises(DomainError):
            qc.entropy_h(0.999)
        with pytest.raises(DomainError):
            qc.entropy_h(np.array([2.0, 0.5]))

    def test_vectorised(self):
        xs = np.array([1.0, 2.0, 5.0])
        np.testing.assert_allclose(qc.entropy_h(xs), [qc.entropy_h(x) for x in xs])

    @given(st.floats(1.0, 1e6), st.floats(1e-6, 10.0))
    def test_increasing(self, x, dx):
        assert qc.entropy_h(x + dx) >= qc.entropy_h(x)

    @pytest.mark.parametrize("x", [1.5, 4.0, 100.0])
    def test_derivative_matches_finite_difference(self, x):
        step = 1e-6 * x
        fd = (qc.entropy_h(x + step) - qc.entropy_h(x - step)) / (2 * step)
        assert qc.entropy_h_prime(x) == pytest.approx(fd, rel=1e-7)

    def test_derivative_infinite_at_vacuum(self):
        assert qc.entropy_h_prime(1.0) == math.inf

    def test_asymptotic_form_converges(self):
        gaps = [qc.entropy_h(x) - qc.entropy_h_asym(x) for x in (10.0, 100.0, 1000.0)]
        assert abs(gaps[2]) < abs(gaps[1]) < abs(gaps[0])
        assert abs(gaps[2]) < 1e-6

    def test_clamped_entropy(self):
        np.testing.assert_array_equal(qc.clamped_entropy([0.3, 1.0]), [0.0, 0.0])


class TestLinkNoise:
    def test_build_and_floor(self):
        n = qc.LinkNoise.build(10.0, 0.5, 0.1, 0.16, 2.0)
        assert n.b_k == pytest.approx(0.5 * 10 + 0.5 * 0.1 + 0.16 + 2.0)
        assert n.b_at(10.0) == pytest.approx(n.b_k)
        assert n.floor == pytest.approx(0.05 + 0.16 + 2.0)

    @pytest.mark.parametrize("kw", [{"t_k": 1.5}, {"w_k": -0.1}, {"delta_det_sq": -1.0}])
    def test_validation(self, kw):
        args = dict(b_k=1.0, v_interference=0.0, w_k=0.1, delta_det_sq=0.16, t_k=0.5)
        args.update(kw)
        with pytest.raises(DomainError):
            qc.LinkNoise(**args)


class TestSpectrum:
    @pytest.mark.parametrize("v,t,w,d2,vi", [
        (1.0, 0.5, 0.1, 0.16, 0.0),
        (10.0, 0.9, 0.05, 0.16, 3.0),
        (1e4, 0.2, 0.2, 0.16, 1e3),
        (2.5, 1.0, 0.1, 0.0, 0.0),
    ])
    def test_closed_form_matches_eigendecomposition(self, v, t, w, d2, vi):
        noise = qc.LinkNoise.build(v, t, w, d2, vi)
        spec = qc.symplectic_spectrum(v, noise)
        np.testing.assert_allclose([spec.lambda1, spec.lambda2], numeric_spectrum(v, noise),
                                   rtol=1e-9)
        assert spec.lambda_het == pytest.approx(numeric_lambda_het(v, noise), rel=1e-9)

    @settings(max_examples=200)
    @given(st.floats(1.0, 1e5), st.floats(0.01, 1.0), st.floats(1.0, 3.0),
           st.floats(0.0, 1.0), st.floats(0.0, 100.0))
    def test_eigenvalues_physical_for_thermal_eve(self, v, t, w, d2, vi):
        """With ``W >= 1`` (a thermal or vacuum ancilla) the state is physical."""
        noise = qc.LinkNoise.build(v, t, w, d2, vi)
        spec = qc.symplectic_spectrum(v, noise)
        assert spec.lambda1 >= spec.lambda2 * (1 - 1e-12)
        assert spec.lambda2 >= 1.0 - 1e-7
        assert spec.lambda_het >= 1.0 - 1e-7

    def test_rejects_sub_vacuum_modulation(self):
        noise = qc.LinkNoise.build(2.0, 0.5, 0.1, 0.16)
        with pytest.raises(DomainError):
            qc.symplectic_spectrum(0.5, noise)

    def test_sub_vacuum_eigenvalue_for_weak_additive_noise(self):
        # W < 1 is an additive variance, not a thermal ancilla: l2 can drop below 1
        noise = qc.LinkNoise.build(1.0, 0.5, 0.0, 0.0)
        assert qc.symplectic_spectrum(1.0, noise).lambda2 == pytest.approx(0.5)

    @pytest.mark.parametrize("v,t,w,d2,vi", [(10.0, 0.3, 0.1, 0.16, 2.0), (1e3, 0.8, 0.2, 0.16, 0.0)])
    def test_characteristic_identities(self, v, t, w, d2, vi):
        noise = qc.LinkNoise.build(v, t, w, d2, vi)
        s = qc.symplectic_spectrum(v, noise)
        a, b = qc.characteristic_coefficients(v, noise)
        assert s.lambda1**2 + s.lambda2**2 == pytest.approx(a, rel=1e-9)
        assert (s.lambda1 * s.lambda2) ** 2 == pytest.approx(b, rel=1e-9)

    def test_full_precision_at_large_modulation(self, rng):
        """Against the textbook quadratic solved at 80 digits, up to ``V = 1e12``.

        The naive float64 forms cancel ``V^2`` terms and lose up to 1e-6
        relative accuracy here, or report a spurious negative discriminant.
        """
        worst = 0.0
        with mpmath.workdps(80):
            for _ in range(2000):
                v = float(10 ** rng.uniform(0, 12))
                t = float(rng.choice([0.0, 1.0, rng.uniform(0, 1)]))
                w, d2 = float(rng.uniform(0, 0.3)), float(rng.uniform(0, 0.3))
                vi = float(rng.choice([0.0, 10 ** rng.uniform(-2, 9)]))
                s = qc.symplectic_spectrum(v, qc.LinkNoise.build(v, t, w, d2, vi))
                V, T = mpmath.mpf(v), mpmath.mpf(t)
                c = mpmath.mpf(d2) + mpmath.mpf(vi)
                b = T * V + (1 - T) * w + c
                a_coef = V**2 * (1 - 2 * T) + 2 * T + b**2
                b_coef = (T + (1 - T) * V * w + V * c) ** 2
                l1 = mpmath.sqrt((a_coef + mpmath.sqrt(a_coef**2 - 4 * b_coef)) / 2)
                ref = (l1, mpmath.sqrt(b_coef) / l1, V - T * (V**2 - 1) / (b + 1))
                got = (s.lambda1, s.lambda2, s.lambda_het)
                worst = max(worst, *(float(abs(g / r - 1)) for g, r in zip(got, ref)))
        assert worst < 4e-15

    def test_no_spurious_negative_discriminant(self):
        # lossless link with a huge variance and no interference
        noise = qc.LinkNoise.build(2e8, 1.0, 0.1, 0.16)
        s = qc.symplectic_spectrum(2e8, noise)
        assert s.lambda1 * s.lambda2 == pytest.approx(1 + 2e8 * 0.16, rel=1e-15)

    @pytest.mark.parametrize("v,t", [(10.0, 0.5), (1e3, 0.9), (1e6, 0.1)])
    def test_asymptotic_first_eigenvalue_offset(self, v, t):
        """``l~1^2`` exceeds ``l1^2 + l2^2`` by exactly ``2 T (V^2 - 1)``."""
        noise = qc.LinkNoise.build(v, t, 0.1, 0.16, 3.0)
        s = qc.symplectic_spectrum(v, noise)
        a = qc.symplectic_spectrum_asym(v, noise)
        assert a.lambda1**2 - (s.lambda1**2 + s.lambda2**2) == pytest.approx(
            2 * t * (v * v - 1), rel=1e-9)

    def test_asymptotic_first_eigenvalue_close_only_for_small_loss_fraction(self):
        noise = qc.LinkNoise.build(1e3, 1e-4, 0.1, 0.16)
        ratio = (qc.symplectic_spectrum_asym(1e3, noise).lambda1
                 / qc.symplectic_spectrum(1e3, noise).lambda1)
        assert ratio == pytest.approx(1.0, rel=1e-3)
        noise = qc.LinkNoise.build(1e3, 0.5, 0.1, 0.16)
        ratio = (qc.symplectic_spectrum_asym(1e3, noise).lambda1
                 / qc.symplectic_spectrum(1e3, noise).lambda1)
        assert ratio > 2.0

    def test_asymptotic_forms(self):
        noise = qc.LinkNoise.build(100.0, 0.5, 0.1, 0.16, 20.0)
        s = qc.symplectic_spectrum_asym(100.0, noise)
        b = noise.b_k
        assert s.lambda1 == pytest.approx(math.hypot(100.0, b))
        assert s.lambda2 == pytest.approx(100.0 * 20.16 / math.hypot(100.0, b))
        assert s.lambda_het == pytest.approx(100.0 - 0.5 * 1e4 / b)


class TestHolevo:
    def test_chi_is_sum_of_terms(self):
        noise = qc.LinkNoise.build(50.0, 0.7, 0.1, 0.16, 4.0)
        terms = qc.holevo_terms_explicit(50.0, noise)
        assert terms.chi == pytest.approx(terms.s1 + terms.s2 - terms.s_het)
        assert qc.holevo_explicit(50.0, noise) == terms.chi
        assert terms.clamped == ()

    def test_noiseless_lossless_link_leaks_nothing(self):
        noise = qc.LinkNoise.build(30.0, 1.0, 0.0, 0.0)
        assert qc.holevo_explicit(30.0, noise) == pytest.approx(0.0, abs=1e-9)

    def test_asymptotic_clamps_and_flags(self):
        # no interference: l2 tends to delta^2 / sqrt(1 + T^2) < 1
        noise = qc.LinkNoise.build(1e4, 0.5, 0.1, 0.16)
        terms = qc.holevo_terms_asym(1e4, noise)
        assert "lambda2" in terms.clamped
        assert terms.s2 == 0.0

    def test_strict_mode_raises_on_sub_vacuum(self):
        with pytest.raises(NonPhysicalStateError):
            qc._checked_entropy(0.5, "lambda2", True, [])
        clamped = []
        assert qc._checked_entropy(1.0 - 1e-12, "lambda2", True, clamped) == 0.0
        assert clamped == []

    def test_log_v_prefactor_adds_log_v(self):
        noise = qc.LinkNoise.build(64.0, 0.5, 0.1, 0.16, 8.0)
        plain = qc.holevo_asym(64.0, noise)
        assert qc.holevo_asym(64.0, noise, log_v_prefactor=True) == pytest.approx(plain + 6.0)

    def test_first_term_in_log_space(self):
        assert qc.asym_first_term(3.0, 4.0) == pytest.approx(math.log2(math.e / 2 * 5.0))


class TestLimits:
    def test_asymptotic_entropy_values(self):
        assert qc.entropy_h_asym(2.0 / math.e) == pytest.approx(0.0, abs=1e-15)
        assert qc.entropy_h_asym(2.0) == pytest.approx(math.log2(math.e))
        assert abs(qc.entropy_h_asym(10.0) - qc.entropy_h(10.0)) < 0.005
        with pytest.raises(DomainError):
            qc.entropy_h_asym(0.0)

    def test_decoupled_link_spectrum(self):
        noise = qc.LinkNoise.build(5.0, 0.0, 0.1, 0.16, 2.0)
        s = qc.symplectic_spectrum(5.0, noise)
        assert (s.lambda1, s.lambda2) == pytest.approx((5.0, noise.b_k), rel=1e-12)

    def test_vacuum_modulation_spectrum(self):
        noise = qc.LinkNoise.build(1.0, 0.4, 2.0, 0.5, 1.0)
        s = qc.symplectic_spectrum(1.0, noise)
        assert sorted([s.lambda1, s.lambda2]) == pytest.approx(sorted([noise.b_k, 1.0]), rel=1e-12)

    def test_asymptotic_decoupled_and_noiseless_limits(self):
        noise = qc.LinkNoise.build(100.0, 0.0, 0.1, 0.16)
        assert qc.symplectic_spectrum_asym(100.0, noise).lambda_het == 100.0
        noise = qc.LinkNoise.build(100.0, 0.5, 0.1, 0.0, 0.0)
        assert qc.symplectic_spectrum_asym(100.0, noise).lambda2 == 0.0
        assert "lambda2" in qc.holevo_terms_asym(100.0, noise).clamped

    def test_eve_decoupled_leaks_nothing(self):
        noise = qc.LinkNoise.build(50.0, 1e-12, 0.0, 1.0)
        assert abs(qc.holevo_explicit(50.0, noise)) < 1e-6

    def test_asymptotic_first_and_third_terms_cancel(self):
        noise = qc.LinkNoise.build(1e6, 0.0, 0.0, 1.0)
        t = qc.holevo_terms_asym(1e6, noise)
        assert abs(t.s1 - t.s_het) < 1e-6

    def test_asymptotic_matches_hand_assembly(self):
        v, t = 1e4, 9e-4
        noise = qc.LinkNoise.build(v, t, 0.0, 1.0)  # b = 9 + 1 = 10
        assert noise.b_k == pytest.approx(10.0)
        lam1 = math.hypot(v, 10.0)
        lam2 = v * 1.0 / lam1
        lam_het = v - t * v * v / 10.0
        expect = qc.entropy_h_asym(lam1) + qc.clamped_entropy(lam2) - qc.entropy_h(lam_het)
        assert qc.holevo_asym(v, noise) == pytest.approx(expect, rel=1e-12)

    @settings(max_examples=300)
    @given(st.floats(1.0, 1e6), st.floats(0.01, 1.0), st.floats(1.0, 3.0),
           st.floats(0.0, 1.0), st.floats(0.0, 100.0))
    def test_leakage_nonnegative(self, v, t, w, d2, vi):
        noise = qc.LinkNoise.build(v, t, w, d2, vi)
        assert qc.holevo_explicit(v, noise) >= -1e-9

    def test_asymptotic_gap_shrinks_with_modulation(self):
        gaps = []
        for v in (1e3, 1e4, 1e5):
            noise = qc.LinkNoise.build(v, 0.6, 0.1, 0.16, 0.3 * v)
            ex = qc.holevo_explicit(v, noise)
            gaps.append(abs(qc.holevo_asym(v, noise) - ex) / ex)
        assert gaps[0] > gaps[1] > gaps[2]

    @pytest.mark.parametrize("x", [1.5, 2.0, 10.0, 1e4])
    def test_entropy_concave(self, x):
        e = 1e-3 * x
        second = qc.entropy_h(x + e) - 2 * qc.entropy_h(x) + qc.entropy_h(x - e)
        assert second < 0.0

    def test_first_term_curvature(self):
        """``log2 |(V, b(V))|`` is convex well below ``b`` and concave from ``b`` upward."""
        t, floor = 0.5, 200.0

        def f(v):
            return qc.asym_first_term(v, t * v + floor)

        def second(v):
            e = 1e-3 * v
            return f(v + e) - 2 * f(v) + f(v - e)

        assert second(2.0) > 0.0
        for v in np.linspace(400.0, 4000.0, 10):  # b >= 400 there, so v <= b up to 400
            assert second(v) < 0.0
