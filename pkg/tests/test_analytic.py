"""Tests for closed-form Haar, BGUE, trace-distance and black-hole predictions."""

import math

import numpy as np
import pytest
import scipy.integrate

from qfitime.analytic import (
    TD_INFINITE,
    bgue_coefficients,
    bgue_curves,
    bgue_f,
    bgue_g,
    bh_page_fraction,
    bh_radiation_qfi,
    cfi_saturation,
    finite_temperature_fa,
    haar_saturation_fa,
    holevo_fidelity,
    holevo_prediction,
    make_bgue_spec,
    outcome_cdf,
    outcome_density,
    page_entropy,
    sampled_trace_distance,
    trace_distance_full,
    trace_distance_sub,
    trace_distance_sub_limit,
)
from qfitime.fisher import subsystem_cfi, subsystem_qfi
from qfitime.hilbert import haar_state
from qfitime.models import build_mixed_field_ising, split_hamiltonian
from qfitime.types import BlackHoleSpec, SeededRng, SubsystemPartition


def _make_split(n: int, n_A: int):
    part = SubsystemPartition.contiguous(n, n_A)
    return split_hamiltonian(build_mixed_field_ising(n), part), part


class TestPage:
    def test_two_qubits(self):
        assert page_entropy(2, 2) == pytest.approx(1.0 / 3.0)

    def test_symmetric(self):
        assert page_entropy(4, 32) == pytest.approx(page_entropy(32, 4))

    def test_below_maximum(self):
        assert page_entropy(8, 64) < math.log(8)


class TestHaarSaturation:
    def test_requires_split(self):
        with pytest.raises(ValueError, match="split"):
            haar_saturation_fa(build_mixed_field_ising(4))

    def test_rejects_larger_side_as_S(self):
        hb, _ = _make_split(6, 4)
        with pytest.raises(ValueError, match="larger subsystem"):
            haar_saturation_fa(hb, side_S="A")

    def test_flat_plus_nonflat(self):
        hb, _ = _make_split(8, 3)
        sat = haar_saturation_fa(hb)
        assert sat.side_S == "A"
        assert sat.F_S_flat + sat.F_S_nonflat == pytest.approx(sat.F_S)
        assert sat.F_B_flat + sat.F_B_nonflat == pytest.approx(sat.F_B)
        assert sat.for_side("A") == sat.F_S_pred
        assert sat.for_side("Abar") == sat.F_B_pred
        assert sat.c_constant > 0

    def test_larger_side_monte_carlo(self):
        hb, part = _make_split(10, 7)
        sat = haar_saturation_fa(hb)
        assert sat.side_S == "Abar"
        values = [
            subsystem_qfi(haar_state(10, SeededRng(21).stream(k)), hb, part).F_A
            for k in range(30)
        ]
        assert np.mean(values) == pytest.approx(sat.F_B, rel=0.15)

    def test_finite_temperature_branches(self):
        assert finite_temperature_fa(1.0, 3.0, 2.0) == pytest.approx(4.0 * math.exp(-2.0))
        assert finite_temperature_fa(3.0, 1.0, 2.0) == 8.0
        with pytest.raises(ValueError, match="variance"):
            finite_temperature_fa(1.0, 1.0, -1.0)


class TestCfiSaturation:
    def test_full_system_monte_carlo(self):
        hb = build_mixed_field_ising(7)
        full = SubsystemPartition.contiguous(7, 7)
        pred = cfi_saturation(hb, SubsystemPartition.contiguous(7, 3)).full
        values = [
            subsystem_cfi(haar_state(7, SeededRng(5).stream(k)), hb, full) for k in range(50)
        ]
        assert np.mean(values) == pytest.approx(pred, rel=0.1)

    def test_kappa(self):
        hb = build_mixed_field_ising(6)
        sat = cfi_saturation(hb, SubsystemPartition.contiguous(6, 4))
        assert sat.d_keep == 16
        assert sat.d_other == 4
        assert sat.kappa == pytest.approx(sat.subsystem * 4 / 6)


class TestTraceDistance:
    def test_full_values(self):
        assert trace_distance_full(1) == 0.0
        assert trace_distance_full(2) == pytest.approx(0.5)
        assert trace_distance_full(math.inf) == TD_INFINITE
        assert trace_distance_full(2**20) == pytest.approx(TD_INFINITE, rel=1e-5)

    def test_sub_reduces_to_full(self):
        for d in (2, 16, 1024):
            assert trace_distance_sub(d, 1) == pytest.approx(trace_distance_full(d))
        assert trace_distance_sub(math.inf, 1) == pytest.approx(2 / math.e)

    def test_sub_edge_cases(self):
        assert trace_distance_sub(8, 8) == 0.0
        with pytest.raises(ValueError, match="exceeds"):
            trace_distance_sub(8, 16)

    def test_large_complement_limit(self):
        k = 2**12
        assert trace_distance_sub(math.inf, k) == pytest.approx(trace_distance_sub_limit(k), rel=1e-3)

    def test_sampled_mean(self):
        part = SubsystemPartition.contiguous(6, 4)
        samples = [sampled_trace_distance(haar_state(6, SeededRng(3).stream(k)), part) for k in range(400)]
        assert np.mean(samples) == pytest.approx(trace_distance_sub(64, 4), rel=0.05)

    def test_outcome_density(self):
        assert outcome_density(0.25, 16) == pytest.approx(15 * 0.75**14)
        total, _ = scipy.integrate.quad(lambda x: outcome_density(x, 32, 4), 0, 1)
        assert total == pytest.approx(1.0)
        assert outcome_cdf(1.0, 32, 4) == pytest.approx(1.0)

    def test_outcome_law_rejects_full_complement(self):
        with pytest.raises(ValueError, match="need 1 <= d_Abar < d"):
            outcome_density(0.5, 8, 8)


class TestHolevo:
    def test_prediction(self):
        assert holevo_prediction(3, 10) == 1.0
        assert holevo_prediction(5, 10) == 1.0
        assert holevo_prediction(7, 10) == pytest.approx(0.3)

    def test_full_system_is_orthogonal(self):
        hb = build_mixed_field_ising(4)
        psi = haar_state(4, SeededRng(1))
        measured, predicted = holevo_fidelity(psi, hb, SubsystemPartition.contiguous(4, 4))
        assert measured == pytest.approx(0.0, abs=1e-6)
        assert predicted == 0.0

    def test_small_region_is_nearly_one(self):
        hb = build_mixed_field_ising(10)
        psi = haar_state(10, SeededRng(2))
        measured, predicted = holevo_fidelity(psi, hb, SubsystemPartition.contiguous(10, 2))
        assert predicted == 1.0
        assert measured == pytest.approx(1.0, abs=0.1)


class TestBgue:
    def test_initial_values(self):
        f0 = bgue_f(8, 0.0)
        assert f0.shape == (8,)
        assert np.allclose(f0, np.eye(8)[0])

    def test_grid_shape(self):
        assert bgue_f(16, np.linspace(0, 5, 11)).shape == (8, 11)

    def test_rejects_small_bath(self):
        with pytest.raises(ValueError, match="d_B must be > 2"):
            bgue_coefficients(2)

    def test_spec_projector(self):
        spec = make_bgue_spec(2, build_mixed_field_ising(6), SeededRng(0))
        assert spec.n_B == 4
        assert np.trace(spec.P_B).real == pytest.approx(4.0)
        assert np.allclose(spec.P_B @ spec.P_B, spec.P_B)

    def test_spec_needs_second_bath(self):
        with pytest.raises(ValueError, match="n - 2 n_S >= 1"):
            make_bgue_spec(3, build_mixed_field_ising(6), SeededRng(0))

    def test_curve_identities(self):
        spec = make_bgue_spec(2, build_mixed_field_ising(7), SeededRng(4))
        t = np.linspace(0, 30, 61)
        curves = bgue_curves(spec, t)
        g = bgue_g(spec)
        assert np.allclose(curves.F_B, curves.F_S + curves.F_rot)
        assert np.allclose(curves.F_S, 2 * curves.F_S_plus - 2 * curves.F_S_minus)
        assert curves.H2[0] == pytest.approx(g[2] / spec.d_S**2)
        assert curves.H2[-1] == pytest.approx(g[1] / 2**7, rel=1e-9)


class TestBlackHole:
    def test_page_fraction(self):
        spec = BlackHoleSpec(M0=10.0, G_N=1.0, entropy_ratio=1.0)
        assert bh_page_fraction(spec) == pytest.approx(1 - 0.5**1.5)

    def test_regimes_switch_at_page_time(self):
        spec = BlackHoleSpec(M0=10.0, G_N=1.0)
        t_page = bh_page_fraction(spec) * spec.t_total
        before = bh_radiation_qfi(spec, 0.98 * t_page)
        after = bh_radiation_qfi(spec, 1.02 * t_page)
        assert before.regime == "pre-page"
        assert before.F_R is None
        assert before.suppression_exponent > 0
        assert after.regime == "post-page"
        assert after.F_R == pytest.approx(after.variance)

    def test_post_page_value_at_one_e_fold(self):
        # variance factor log(1/(1-x)) is 1 at x = 1 - 1/e, past the Page fraction ~0.539
        spec = BlackHoleSpec(M0=10.0, G_N=0.5, alpha=2.0)
        assert bh_page_fraction(spec) == pytest.approx(0.539, abs=1e-3)
        point = bh_radiation_qfi(spec, (1 - math.exp(-1)) * spec.t_total)
        assert point.regime == "post-page"
        assert point.F_R == pytest.approx(spec.alpha / spec.G_N)

    def test_reversible_ratio_is_still_pre_page_at_one_e_fold(self):
        spec = BlackHoleSpec(M0=10.0, G_N=0.5, alpha=2.0, entropy_ratio=1.0)
        assert bh_page_fraction(spec) == pytest.approx(0.646, abs=1e-3)
        point = bh_radiation_qfi(spec, (1 - math.exp(-1)) * spec.t_total)
        assert point.regime == "pre-page"
        assert point.F_R is None

    def test_initial_point(self):
        point = bh_radiation_qfi(BlackHoleSpec(M0=2.0, G_N=1.0), 0.0)
        assert point.M == pytest.approx(2.0)
        assert point.variance == 0.0
        assert point.log_F_R == float("-inf")
        assert point.T_H == pytest.approx(1 / (16 * math.pi))

    def test_rejects_time_past_evaporation(self):
        spec = BlackHoleSpec(M0=1.0, G_N=1.0)
        with pytest.raises(ValueError, match="t must be in"):
            bh_radiation_qfi(spec, spec.t_total)
