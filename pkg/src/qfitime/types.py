"""Types for states, Hamiltonians, Fisher reports and estimation runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

NORM_TOL = 1e-10
PSD_TOL = 1e-10


class NumericalError(RuntimeError):
    """A computation lost numerical control and was aborted."""


def _is_power_of_two(k: int) -> bool:
    return k > 0 and (k & (k - 1)) == 0


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector of n qubits. Site i has index stride 2^i."""

    n_sites: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.shape[0] != 2**self.n_sites:
            raise ValueError(
                f"amplitudes must have length 2^{self.n_sites}, got shape {amps.shape}"
            )
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValueError(f"state must be normalized, got squared norm {norm2:.12g}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes: np.ndarray) -> PureState:
        """Build from a raw vector, normalizing it and inferring n."""
        amps = np.asarray(amplitudes, dtype=complex)
        if not _is_power_of_two(amps.shape[0]):
            raise ValueError(f"length must be a power of two, got {amps.shape[0]}")
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("zero vector cannot be normalized")
        return cls(n_sites=int(amps.shape[0]).bit_length() - 1, amplitudes=amps / norm)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def expectation(self, op: np.ndarray) -> complex:
        return complex(np.vdot(self.amplitudes, op @ self.amplitudes))

    def density_matrix(self) -> DensityMatrix:
        return DensityMatrix(self.dim, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian unit-trace matrix. PSD is checked on demand by validate()."""

    dim: int
    elements: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.elements, dtype=complex)
        if m.shape != (self.dim, self.dim):
            raise ValueError(f"expected {self.dim}x{self.dim} matrix, got {m.shape}")
        herm_err = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if herm_err > NORM_TOL:
            raise ValueError(f"density matrix not Hermitian (max deviation {herm_err:.3g})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix trace must be 1, got {tr:.12g}")
        object.__setattr__(self, "elements", m)

    @classmethod
    def maximally_mixed(cls, dim: int) -> DensityMatrix:
        return cls(dim, np.eye(dim, dtype=complex) / dim)

    @property
    def n_sites(self) -> int:
        return int(self.dim).bit_length() - 1

    def validate(self) -> None:
        """Raise ValueError if any eigenvalue is below -PSD_TOL."""
        w = np.linalg.eigvalsh(self.elements)
        if w.size and w[0] < -PSD_TOL:
            raise ValueError(f"density matrix not PSD (min eigenvalue {w[0]:.3g})")

    def purity(self) -> float:
        return float(np.real(np.vdot(self.elements, self.elements)))


@dataclass(frozen=True)
class SubsystemPartition:
    """Bipartition of n_total sites into A = sites_A and its complement."""

    n_total: int
    sites_A: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.n_total < 1:
            raise ValueError(f"n_total must be >= 1, got {self.n_total}")
        sites = tuple(int(s) for s in self.sites_A)
        if len(set(sites)) != len(sites):
            raise ValueError(f"duplicate sites in {list(sites)}")
        for s in sites:
            if not 0 <= s < self.n_total:
                raise ValueError(f"site {s} out of range 0..{self.n_total - 1}")
        object.__setattr__(self, "sites_A", tuple(sorted(sites)))

    @classmethod
    def contiguous(cls, n_total: int, n_A: int, start: int = 0) -> SubsystemPartition:
        """A = sites start .. start+n_A-1 (wrapping around the ring)."""
        if not 0 <= n_A <= n_total:
            raise ValueError(f"n_A must be 0..{n_total}, got {n_A}")
        return cls(n_total, tuple((start + k) % n_total for k in range(n_A)))

    @property
    def sites_Abar(self) -> tuple[int, ...]:
        chosen = set(self.sites_A)
        return tuple(s for s in range(self.n_total) if s not in chosen)

    @property
    def n_A(self) -> int:
        return len(self.sites_A)

    @property
    def n_Abar(self) -> int:
        return self.n_total - self.n_A

    @property
    def d_A(self) -> int:
        return 2**self.n_A

    @property
    def d_Abar(self) -> int:
        return 2**self.n_Abar

    @property
    def is_full(self) -> bool:
        return self.n_A == self.n_total

    def complement(self) -> SubsystemPartition:
        return SubsystemPartition(self.n_total, self.sites_Abar)

    def sites(self, side: str) -> tuple[int, ...]:
        if side == "A":
            return self.sites_A
        if side == "Abar":
            return self.sites_Abar
        raise ValueError(f"side must be 'A' or 'Abar', got {side!r}")

    def dims(self, side: str) -> tuple[int, int]:
        """(d_keep, d_other) for the given side."""
        if side == "A":
            return self.d_A, self.d_Abar
        if side == "Abar":
            return self.d_Abar, self.d_A
        raise ValueError(f"side must be 'A' or 'Abar', got {side!r}")


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """Schmidt form sum_i sqrt(p_i) |i>_S |i~>_Sbar.

    vectors_S lives on the smaller factor (side_S), vectors_Sbar on the larger.
    """

    coefficients: np.ndarray
    vectors_S: np.ndarray
    vectors_Sbar: np.ndarray
    partition: SubsystemPartition
    side_S: str

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.coefficients > 1e-14))


@dataclass(frozen=True)
class SeededRng:
    """Deterministic generator keyed by (master_seed, stream_id, substream)."""

    master_seed: int
    stream_id: int = 0
    substream: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            self.master_seed, spawn_key=(self.stream_id, *self.substream)
        )
        return np.random.default_rng(seq)

    def stream(self, k: int) -> SeededRng:
        """Child stream, independent of this one and of its siblings."""
        return SeededRng(self.master_seed, self.stream_id, (*self.substream, int(k)))


@dataclass(frozen=True)
class PauliTerm:
    """coefficient * (product of Paulis on the listed sites)."""

    coefficient: float
    ops: tuple[tuple[int, str], ...]

    @property
    def support(self) -> frozenset[int]:
        return frozenset(site for site, _ in self.ops)

    @property
    def label(self) -> str:
        return "".join(f"{p}{s}" for s, p in self.ops)


@dataclass(frozen=True, eq=False)
class HamiltonianBundle:
    """Dense Hamiltonian with its Pauli term list and optional partition split.

    When a partition is set, H_A and H_Abar are local operators on the A and
    Abar factors (site order as in partial_trace) and H_int is full-dimension.
    """

    n_sites: int
    H: np.ndarray
    terms: tuple[PauliTerm, ...] = ()
    model: str = "custom"
    params: dict[str, Any] = field(default_factory=dict)
    partition: SubsystemPartition | None = None
    H_A: np.ndarray | None = None
    H_Abar: np.ndarray | None = None
    H_int: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """(eigenvalues ascending, eigenvectors as columns), computed once."""
        from .hilbert import hermitian_eig

        return hermitian_eig(self.H)

    @property
    def has_split(self) -> bool:
        return self.partition is not None and self.H_int is not None

    def local_block(self, side: str) -> np.ndarray:
        if not self.has_split:
            raise ValueError("Hamiltonian has no partition split")
        return self.H_A if side == "A" else self.H_Abar


@dataclass(frozen=True, eq=False)
class LindbladSpec:
    """Hamiltonian plus boundary jump operators with a common rate gamma."""

    H: HamiltonianBundle
    jump_operators: tuple[np.ndarray, ...]
    gamma: float = 1.0
    jump_sites: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")

    @property
    def dim(self) -> int:
        return self.H.dim


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States on an increasing time grid."""

    times: np.ndarray
    states: tuple[PureState | DensityMatrix, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        if len(t) != len(self.states):
            raise ValueError(f"{len(t)} times but {len(self.states)} states")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class DecayFit:
    """y ~ amplitude * exp(-rate * t) over fit_window."""

    rate: float
    amplitude: float
    fit_window: tuple[float, float]
    residual: float
    n_points: int = 0


@dataclass
class FisherReport:
    """Fisher quantities for one (state, time, partition)."""

    F_A: float
    F_plus: float
    F_minus: float
    F_ent: float
    F_rot: float
    f_comp: float = float("nan")
    F_eta: float = float("nan")
    rank_tolerance: float = 0.0
    sld: np.ndarray | None = None
    optimal_basis: np.ndarray | None = None

    @property
    def rot_fraction(self) -> float:
        return self.F_rot / self.F_A if self.F_A > 0 else 0.0

    def as_row(self) -> dict[str, float]:
        return {
            "F_A": self.F_A,
            "F_plus": self.F_plus,
            "F_minus": self.F_minus,
            "F_ent": self.F_ent,
            "F_rot": self.F_rot,
            "f_comp": self.f_comp,
            "F_eta": self.F_eta,
        }


@dataclass(frozen=True, eq=False)
class LikelihoodTable:
    """Born probabilities p_xi(t_k): rows are outcomes, columns grid times."""

    t_grid: np.ndarray
    probabilities: np.ndarray
    basis_id: str = "computational"
    interpolation: str = "pchip-log"
    basis: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def n_outcomes(self) -> int:
        return self.probabilities.shape[0]


@dataclass
class SampleSet:
    """Measurement outcomes. true_t0 is kept for scoring only."""

    outcomes: np.ndarray
    true_t0: float | None = None
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.outcomes)


@dataclass
class MleResult:
    t_est: float
    loglik_t: np.ndarray
    loglik: np.ndarray
    local_maxima: list[tuple[float, float]] = field(default_factory=list)
    score: float | None = None
    degenerate: bool = False

    @property
    def max_loglik(self) -> float:
        return float(np.max(self.loglik))


@dataclass(frozen=True)
class HaarModelSpec:
    """Dimensions of a Haar pure-state model, d_S <= d_Sbar."""

    d_S: int
    d_Sbar: int
    spectrum: str = "wishart"

    def __post_init__(self) -> None:
        if self.d_S > self.d_Sbar:
            raise ValueError(f"d_S must be <= d_Sbar, got {self.d_S} > {self.d_Sbar}")
        if self.spectrum not in ("wishart", "flat"):
            raise ValueError(f"spectrum must be 'wishart' or 'flat', got {self.spectrum!r}")


@dataclass(frozen=True, eq=False)
class BgueSpec:
    """S followed by B = B1 (n_S sites) + B2; P_B = 1_B1 x |phi0><phi0|_B2."""

    n_S: int
    n_B: int
    H: HamiltonianBundle
    P_B: np.ndarray

    @property
    def d_S(self) -> int:
        return 2**self.n_S

    @property
    def d_B(self) -> int:
        return 2**self.n_B


@dataclass(frozen=True)
class BlackHoleSpec:
    """Evaporating black hole in units with G_N explicit.

    entropy_ratio is the coarse-grained entropy carried by the radiation per
    unit of Bekenstein-Hawking entropy the hole loses. Emission into photons
    and gravitons gives about 1.48 (Page 2013, JCAP 09 028); 1.0 is the
    reversible limit. It sets the Page time: with 1.48 the radiation entropy
    overtakes the hole's at t/t_total ~ 0.539, with 1.0 at ~ 0.646.
    """

    M0: float
    G_N: float
    alpha: float = 1.0
    entropy_ratio: float = 1.48

    def __post_init__(self) -> None:
        if self.M0 <= 0:
            raise ValueError(f"M0 must be > 0, got {self.M0}")
        if self.G_N <= 0:
            raise ValueError(f"G_N must be > 0, got {self.G_N}")

    @property
    def t_total(self) -> float:
        return self.G_N**2 * self.M0**3
