"""Seeded ensembles of initial states.

Every member draws from its own RNG stream, so member k is the same state
whatever the ensemble size or the order members are evaluated in.

Usage:
    from qfitime.ensembles import EnsembleBuilder

    states = (
        EnsembleBuilder(n_sites=8, seed=1234)
        .random_product(50)
        .haar(10)
        .build()
    )
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .hilbert import from_amplitude_matrix, haar_state, haar_unitary, random_product_state
from .types import HaarModelSpec, PureState, SeededRng, SubsystemPartition

logger = logging.getLogger(__name__)

KINDS = ("random_product", "haar", "flat_schmidt")


def flat_schmidt_state(
    partition: SubsystemPartition, rng: SeededRng, rank: int | None = None
) -> PureState:
    """sum_i sqrt(1/r) (V|i>)(U|i~>) with Haar V, U and r equal weights.

    rank defaults to the dimension of the smaller side.
    """
    d_S = min(partition.d_A, partition.d_Abar)
    r = d_S if rank is None else rank
    if not 1 <= r <= d_S:
        raise ValueError(f"rank must be 1..{d_S}, got {r}")
    gen = rng.generator()
    V = haar_unitary(partition.d_A, gen)[:, :r]
    U = haar_unitary(partition.d_Abar, gen)[:, :r]
    M = (V / np.sqrt(r)) @ U.T
    return PureState(partition.n_total, from_amplitude_matrix(M, partition))


def haar_model_matrix(spec: HaarModelSpec, rng: SeededRng) -> np.ndarray:
    """d_S x d_Sbar amplitudes of sum_i sqrt(p_i) (V|i>)(U|i~>) with Haar V, U.

    "wishart" draws p from the eigenvalues of Y Y^dagger for a complex
    Gaussian Y, which makes the state Haar distributed; "flat" sets p_i = 1/d_S.
    """
    gen = rng.generator()
    d_S, d_Sbar = spec.d_S, spec.d_Sbar
    if spec.spectrum == "flat":
        p = np.full(d_S, 1.0 / d_S)
    else:
        Y = gen.standard_normal((d_S, d_Sbar)) + 1j * gen.standard_normal((d_S, d_Sbar))
        p = np.clip(np.linalg.eigvalsh(Y @ Y.conj().T), 0.0, None)
        p /= p.sum()
    V = haar_unitary(d_S, gen)
    U = haar_unitary(d_Sbar, gen)[:, :d_S]
    return (V * np.sqrt(p)) @ U.T


@dataclass(frozen=True)
class EnsembleMember:
    """One initial state with the stream that produced it."""

    index: int
    kind: str
    state: PureState
    rng: SeededRng


class EnsembleBuilder:
    """Fluent builder for seeded initial-state ensembles."""

    def __init__(self, n_sites: int, seed: int = 0, stream_id: int = 0):
        if n_sites < 1:
            raise ValueError(f"n_sites must be >= 1, got {n_sites}")
        self._n = n_sites
        self._root = SeededRng(seed, stream_id)
        self._plan: list[tuple[str, dict]] = []

    def random_product(self, count: int) -> EnsembleBuilder:
        """Add `count` products of single-qubit Haar states."""
        return self._add("random_product", count)

    def haar(self, count: int) -> EnsembleBuilder:
        """Add `count` Haar-random global states."""
        return self._add("haar", count)

    def flat_schmidt(
        self, partition: SubsystemPartition, count: int, rank: int | None = None
    ) -> EnsembleBuilder:
        """Add `count` flat-spectrum states across `partition`."""
        if partition.n_total != self._n:
            raise ValueError(f"partition has {partition.n_total} sites, ensemble has {self._n}")
        return self._add("flat_schmidt", count, partition=partition, rank=rank)

    def _add(self, kind: str, count: int, **options) -> EnsembleBuilder:
        if count < 0:
            raise ValueError(f"count must be >= 0, got {count}")
        self._plan.extend((kind, options) for _ in range(count))
        return self

    def __len__(self) -> int:
        return len(self._plan)

    def members(self) -> list[EnsembleMember]:
        out = []
        for k, (kind, options) in enumerate(self._plan):
            rng = self._root.stream(k)
            if kind == "random_product":
                state = random_product_state(self._n, rng)
            elif kind == "haar":
                state = haar_state(self._n, rng)
            else:
                state = flat_schmidt_state(options["partition"], rng, options["rank"])
            out.append(EnsembleMember(k, kind, state, rng))
        logger.info("built ensemble of %d states on %d sites", len(out), self._n)
        return out

    def build(self) -> list[PureState]:
        return [m.state for m in self.members()]
