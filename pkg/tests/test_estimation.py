"""Tests for likelihood tables, MLE, Cramer-Rao checks and discrimination."""

import math

import numpy as np
import pytest

from qfitime.dynamics import evolve
from qfitime.estimation import (
    cramer_rao_experiment,
    discriminate_state,
    draw_samples,
    likelihood_table,
    mle,
    outcome_probabilities,
    sample_copies,
)
from qfitime.experiments import qubit_benchmark
from qfitime.hilbert import partial_trace, random_product_state
from qfitime.models import build_mixed_field_ising
from qfitime.types import DensityMatrix, LikelihoodTable, SampleSet, SeededRng, SubsystemPartition

QUBIT = SubsystemPartition(1, (0,))


def _make_qubit_table(points: int = 64) -> tuple:
    hb, psi0, basis = qubit_benchmark()
    table = likelihood_table(psi0, hb, QUBIT, basis, np.linspace(0, math.pi / 2, points))
    return hb, psi0, table


def _make_chain_table(n: int = 8, t_max: float = 12.0, points: int = 601) -> tuple:
    hb = build_mixed_field_ising(n)
    psi0 = random_product_state(n, SeededRng(11))
    part = SubsystemPartition.contiguous(n, n)
    table = likelihood_table(psi0, hb, part, None, np.linspace(0, t_max, points))
    return hb, psi0, part, table


class TestLikelihoodTable:
    def test_qubit_probabilities(self):
        _, _, table = _make_qubit_table()
        t = table.t_grid
        assert np.allclose(table.probabilities[0], np.cos(t) ** 2)
        assert np.allclose(table.probabilities.sum(axis=0), 1.0)
        assert table.basis_id == "custom"
        assert table.metadata["coarse_grid"] is False

    def test_subsystem_computational_basis(self):
        hb = build_mixed_field_ising(5)
        psi0 = random_product_state(5, SeededRng(1))
        part = SubsystemPartition.contiguous(5, 2)
        table = likelihood_table(psi0, hb, part, None, [0.0, 0.5, 1.0])
        rho = partial_trace(evolve(hb, psi0, 1.0), part)
        assert table.n_outcomes == 4
        assert np.allclose(table.probabilities[:, 2], np.real(np.diagonal(rho.elements)))
        assert table.basis_id == "computational"

    def test_subsystem_custom_basis(self):
        hb = build_mixed_field_ising(4)
        psi0 = random_product_state(4, SeededRng(2))
        part = SubsystemPartition.contiguous(4, 1)
        basis = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
        table = likelihood_table(psi0, hb, part, basis, [0.0, 0.7], basis_id="x")
        expected = outcome_probabilities(psi0, hb, part, basis, 0.7)
        assert np.allclose(table.probabilities[:, 1], expected)
        assert table.basis_id == "x"

    def test_coarse_grid_flagged(self):
        hb, psi0, basis = qubit_benchmark()
        table = likelihood_table(psi0, hb, QUBIT, basis, [0.0, 0.5, 1.0])
        assert table.metadata["coarse_grid"] is True

    def test_rejects_short_grid(self):
        hb, psi0, basis = qubit_benchmark()
        with pytest.raises(ValueError, match="at least 2 points"):
            likelihood_table(psi0, hb, QUBIT, basis, [0.0])

    def test_rejects_unsorted_grid(self):
        hb, psi0, basis = qubit_benchmark()
        with pytest.raises(ValueError, match="strictly increasing"):
            likelihood_table(psi0, hb, QUBIT, basis, [0.0, 0.2, 0.1])

    def test_rejects_wrong_basis_shape(self):
        hb, psi0, _ = qubit_benchmark()
        with pytest.raises(ValueError, match="basis must be 2x2"):
            likelihood_table(psi0, hb, QUBIT, np.eye(4), [0.0, 0.1])


class TestMle:
    def test_qubit_recovers_t0(self):
        hb, psi0, table = _make_qubit_table()
        samples = draw_samples(psi0, hb, QUBIT, table, 0.4, 10_000, SeededRng(3))
        result = mle(samples, table)
        assert abs(result.t_est - 0.4) < 0.02
        assert result.score == pytest.approx((result.t_est - 0.4) ** 2)
        assert not result.degenerate
        assert any(abs(t - result.t_est) < 0.05 for t, _ in result.local_maxima)

    def test_search_range_restricts_estimate(self):
        hb, psi0, table = _make_qubit_table()
        samples = draw_samples(psi0, hb, QUBIT, table, 0.4, 2_000, SeededRng(4))
        result = mle(samples, table, search_range=(0.6, 1.2))
        assert 0.6 <= result.t_est <= 1.2
        assert result.t_est == pytest.approx(0.6, abs=0.03)

    def test_flat_likelihood_is_degenerate(self):
        hb, psi0, _ = qubit_benchmark()
        table = likelihood_table(psi0, hb, QUBIT, None, np.linspace(0, 1, 41))
        samples = draw_samples(psi0, hb, QUBIT, table, 0.5, 100, SeededRng(0))
        assert mle(samples, table).degenerate

    def test_rejects_impossible_outcome(self):
        table = LikelihoodTable(
            t_grid=np.array([0.0, 1.0, 2.0]),
            probabilities=np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]]),
        )
        with pytest.raises(ValueError, match="zero probability"):
            mle(SampleSet(outcomes=np.array([0, 1])), table)

    def test_rejects_out_of_range_outcome(self):
        _, _, table = _make_qubit_table()
        with pytest.raises(ValueError, match="outcome indices"):
            mle(SampleSet(outcomes=np.array([0, 2])), table)

    def test_rejects_empty_samples(self):
        _, _, table = _make_qubit_table()
        with pytest.raises(ValueError, match="nonempty"):
            mle(SampleSet(outcomes=np.array([], dtype=int)), table)

    def test_rejects_range_outside_grid(self):
        _, _, table = _make_qubit_table()
        with pytest.raises(ValueError, match="search range"):
            mle(SampleSet(outcomes=np.array([0])), table, search_range=(-1.0, 1.0))

    def test_chain_full_system(self):
        hb, psi0, part, table = _make_chain_table(n=9, t_max=20.0, points=801)
        hits = 0
        for r in range(5):
            samples = draw_samples(psi0, hb, part, table, 10.0, 50, SeededRng(8).stream(r))
            hits += abs(mle(samples, table).t_est - 10.0) < 0.2
        assert hits >= 4


class TestCramerRao:
    def test_qubit_variance_near_bound(self):
        hb, psi0, table = _make_qubit_table()
        (row,) = cramer_rao_experiment(psi0, hb, QUBIT, table, 0.4, [1000], 200, SeededRng(9))
        assert row.bound == pytest.approx(1 / 4000)
        assert 0.7 < row.ratio < 1.5
        assert abs(row.bias) < 0.01
        assert row.as_row()["N"] == 1000

    def test_zero_information_is_unbounded(self):
        hb, psi0, _ = qubit_benchmark()
        table = likelihood_table(psi0, hb, QUBIT, None, np.linspace(0, 1, 41))
        (row,) = cramer_rao_experiment(psi0, hb, QUBIT, table, 0.5, [20], 3, SeededRng(0))
        assert row.unbounded
        assert row.bound == math.inf
        assert math.isnan(row.ratio)
        assert row.degenerate_fraction == 1.0

    def test_rejects_single_repetition(self):
        hb, psi0, table = _make_qubit_table()
        with pytest.raises(ValueError, match="repetitions"):
            cramer_rao_experiment(psi0, hb, QUBIT, table, 0.4, [10], 1, SeededRng(0))

    def test_streams_reproducible(self):
        hb, psi0, table = _make_qubit_table()
        a = cramer_rao_experiment(psi0, hb, QUBIT, table, 0.4, [50], 5, SeededRng(1))
        b = cramer_rao_experiment(psi0, hb, QUBIT, table, 0.4, [50], 5, SeededRng(1))
        assert a[0].variance == b[0].variance


@pytest.fixture(scope="module")
def chain_table():
    return _make_chain_table()


class TestDiscrimination:
    def test_evolved_copies(self, chain_table):
        hb, psi0, part, table = chain_table
        rho = evolve(hb, psi0, 5.0).density_matrix()
        result = discriminate_state([rho], table, 100, 10, SeededRng(2))
        assert result.decision == "evolving"
        assert abs(result.details["center"] - 5.0) < 0.2
        assert result.confidence >= 0.5

    def test_maximally_mixed_copies(self, chain_table):
        table = chain_table[-1]
        rho = DensityMatrix.maximally_mixed(table.n_outcomes)
        result = discriminate_state([rho], table, 100, 10, SeededRng(3))
        assert result.decision == "equilibrium"
        assert result.robust_variance > result.predicted_variance

    def test_rejects_few_trials(self):
        _, _, table = _make_qubit_table()
        rho = DensityMatrix.maximally_mixed(2)
        with pytest.raises(ValueError, match="trials must be >= 3"):
            discriminate_state([rho], table, 10, 2, SeededRng(0))

    def test_sample_copies_dimension(self):
        _, _, table = _make_qubit_table()
        with pytest.raises(ValueError, match="does not match table"):
            sample_copies(DensityMatrix.maximally_mixed(4), table, 10, SeededRng(0))
