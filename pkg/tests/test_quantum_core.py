"""States, Born-rule statistics and the CHSH combination."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ces.quantum_core import (
    CHSH_SETTINGS_A,
    CHSH_SETTINGS_B,
    SIGMA_X,
    SIGMA_X_MINUS_Y,
    SIGMA_X_PLUS_Y,
    SIGMA_Y,
    TIME_BASIS,
    DensityMatrix,
    DomainError,
    ElementStateKind,
    EmptySampleError,
    MeasurementSetting,
    chsh,
    correlation,
    correlation_exact,
    correlation_from_counts,
    element_state,
    fringe_curve,
    outcome_probabilities,
    sample_outcome,
    sample_outcomes,
)

TSIRELSON = 2.0 * math.sqrt(2.0)


def random_density_matrix(seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


class TestDensityMatrix:
    """Validation of Hermiticity, trace and positivity."""

    def test_accepts_element_states(self):
        for kind in ElementStateKind:
            rho = element_state(kind, 0.9)
            assert np.isclose(np.trace(rho.entries).real, 1.0)

    def test_rejects_non_hermitian(self):
        m = np.eye(4) / 4
        m = m.astype(complex)
        m[0, 1] = 0.1j
        with pytest.raises(DomainError):
            DensityMatrix(m)

    def test_rejects_wrong_trace(self):
        with pytest.raises(DomainError):
            DensityMatrix(np.eye(4) / 2)

    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(DomainError):
            DensityMatrix(np.diag([0.75, 0.5, -0.25, 0.0]))

    def test_rejects_wrong_shape(self):
        with pytest.raises(DomainError):
            DensityMatrix(np.eye(2) / 2)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_random_states_are_positive(self, seed):
        rho = DensityMatrix(random_density_matrix(seed))
        assert np.linalg.eigvalsh(rho.entries).min() > -1e-10


class TestElementStates:
    def test_visibility_out_of_range(self):
        with pytest.raises(DomainError):
            element_state(ElementStateKind.PHI_PLUS, 1.2)
        with pytest.raises(DomainError):
            element_state(ElementStateKind.PHI_MINUS, -0.1)

    def test_mixed_state_is_diagonal(self):
        rho = element_state(ElementStateKind.MIXED_R).entries
        assert np.allclose(rho, np.diag([0.5, 0, 0, 0.5]))

    def test_trit_mapping(self):
        assert ElementStateKind.from_trit(0) is ElementStateKind.PHI_PLUS
        assert ElementStateKind.from_trit(1) is ElementStateKind.PHI_MINUS
        assert ElementStateKind.from_trit(2) is ElementStateKind.MIXED_R

    @given(st.floats(0.0, 1.0))
    @settings(max_examples=30, deadline=None)
    def test_werner_states_are_valid(self, v):
        for kind in (ElementStateKind.PHI_PLUS, ElementStateKind.PHI_MINUS):
            rho = element_state(kind, v).entries
            assert np.linalg.eigvalsh(rho).min() > -1e-12


class TestMeasurementSetting:
    def test_angle_normalised(self):
        assert math.isclose(MeasurementSetting(-math.pi / 4).angle, 7 * math.pi / 4)
        assert MeasurementSetting(2 * math.pi).angle == 0.0

    def test_milliradians(self):
        assert SIGMA_Y.milliradians == 1571
        # the peak tag, not the angle, marks time-basis records
        assert TIME_BASIS.milliradians == 0
        assert TIME_BASIS.label() == "Z"

    def test_labels(self):
        assert [s.label() for s in (SIGMA_X, SIGMA_Y, SIGMA_X_PLUS_Y, SIGMA_X_MINUS_Y)] == [
            "X", "Y", "X+Y", "X-Y",
        ]

    def test_projectors_resolve_identity(self):
        for s in (SIGMA_X, SIGMA_Y, SIGMA_X_PLUS_Y, TIME_BASIS):
            for conj in (False, True):
                p, m = s.projectors(conj)
                assert np.allclose(p + m, np.eye(2))
                assert np.allclose(p @ p, p)


class TestBornRule:
    """Probability tables against hand-computed values."""

    def test_phi_plus_chsh_combination(self):
        # cos^2(pi/8)/2 and sin^2(pi/8)/2
        probs = outcome_probabilities(element_state(0), SIGMA_X, SIGMA_X_PLUS_Y)
        hi, lo = math.cos(math.pi / 8) ** 2 / 2, math.sin(math.pi / 8) ** 2 / 2
        assert np.allclose(probs, [hi, lo, lo, hi])
        assert math.isclose(hi, 0.4267766952966369)

    def test_mixed_state_in_phase_basis_is_uniform(self):
        probs = outcome_probabilities(element_state(2), SIGMA_X, SIGMA_Y)
        assert np.allclose(probs, 0.25)

    def test_time_basis_correlated_for_all_states(self):
        for kind in ElementStateKind:
            probs = outcome_probabilities(element_state(kind, 0.961), TIME_BASIS, TIME_BASIS)
            if kind is ElementStateKind.MIXED_R:
                assert np.allclose(probs, [0.5, 0, 0, 0.5])
            else:
                # Werner noise puts (1 - V)/4 on each anticorrelated outcome
                assert math.isclose(probs[1], 0.039 / 4, abs_tol=1e-12)

    @given(st.integers(0, 2**32 - 1), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
    @settings(max_examples=50, deadline=None)
    def test_probabilities_sum_to_one(self, seed, ta, tb):
        probs = outcome_probabilities(random_density_matrix(seed), MeasurementSetting(ta), MeasurementSetting(tb))
        assert probs.min() >= 0
        assert math.isclose(probs.sum(), 1.0, abs_tol=1e-12)

    @given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
    @settings(max_examples=50, deadline=None)
    def test_phi_plus_correlation_is_cosine_of_difference(self, ta, tb):
        e = correlation_exact(
            outcome_probabilities(element_state(0), MeasurementSetting(ta), MeasurementSetting(tb))
        ).E
        assert math.isclose(e, math.cos(ta - tb), abs_tol=1e-12)


class TestCorrelation:
    def test_counts_and_stderr(self):
        est = correlation_from_counts(40, 10, 10, 40)
        assert est.E == pytest.approx(0.6)
        assert est.stderr == pytest.approx(math.sqrt(0.64 / 100))
        assert est.total == 100

    def test_auto_detects_counts(self):
        assert correlation([3, 1, 1, 3]).stderr > 0
        assert correlation([0.3, 0.2, 0.2, 0.3]).stderr == 0.0

    def test_empty_counts_raise(self):
        with pytest.raises(EmptySampleError):
            correlation_from_counts(0, 0, 0, 0)

    def test_negative_inputs_raise(self):
        with pytest.raises(DomainError):
            correlation_from_counts(-1, 2, 3, 4)
        with pytest.raises(DomainError):
            correlation([0.5, 0.5, 0.5])


class TestChsh:
    def test_settings_are_the_standard_pairs(self):
        assert CHSH_SETTINGS_A == (SIGMA_X, SIGMA_Y)
        assert CHSH_SETTINGS_B == (SIGMA_X_PLUS_Y, SIGMA_X_MINUS_Y)

    def test_scales_linearly_with_visibility(self):
        assert chsh(element_state(0, 0.961)) == pytest.approx(TSIRELSON * 0.961, abs=1e-12)
        assert chsh(element_state(1, 0.5)) == pytest.approx(-TSIRELSON * 0.5, abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_tsirelson_bound(self, seed):
        assert abs(chsh(random_density_matrix(seed))) <= TSIRELSON + 1e-9


class TestSampling:
    def test_frequencies_match_probabilities(self, rng):
        probs = outcome_probabilities(element_state(0), SIGMA_X, SIGMA_X_PLUS_Y)
        n = 200_000
        idx = sample_outcomes(probs, rng, n)
        freq = np.bincount(idx, minlength=4) / n
        assert np.all(np.abs(freq - probs) < 5 * np.sqrt(probs * (1 - probs) / n))

    def test_rowwise_sampling(self, rng):
        table = np.array([[1.0, 0, 0, 0], [0, 0, 0, 1.0], [0, 1.0, 0, 0]])
        assert sample_outcomes(table, rng).tolist() == [0, 3, 1]

    def test_single_outcome_symbols(self, rng):
        a, b = sample_outcome(element_state(0), SIGMA_X, SIGMA_X, rng)
        assert a == b and a in "+-"


class TestFringes:
    def test_peak_value_at_reference_visibility(self):
        _, p = fringe_curve(0.961, 0.0, 8, port=1)
        assert p.max() == pytest.approx(0.49025, abs=1e-12)

    def test_ports_are_complementary(self):
        _, p1 = fringe_curve(0.961, 0.3, 101, port=1)
        _, p2 = fringe_curve(0.961, 0.3, 101, port=2)
        assert np.allclose(p1 + p2, 0.5, atol=1e-12)

    def test_visibility_from_extrema(self):
        _, p = fringe_curve(0.961, 0.0, 64)
        assert (p.max() - p.min()) / (p.max() + p.min()) == pytest.approx(0.961)

    def test_too_few_points(self):
        with pytest.raises(DomainError):
            fringe_curve(1.0, 0.0, 1)
