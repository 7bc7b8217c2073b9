"""Hilbert-space primitives: partial traces, Schmidt form, eigensolver, sampling.

Site convention: site i has index stride 2^i, so site 0 is the least
significant bit. A local factor (A or Abar) numbers its own sites in
ascending global order with the same little-endian rule.

Usage:
    from qfitime.hilbert import haar_state, partial_trace, schmidt
    from qfitime.types import SeededRng, SubsystemPartition

    psi = haar_state(10, SeededRng(7))
    part = SubsystemPartition.contiguous(10, 3)
    rho_A = partial_trace(psi, part, keep="A")
    sd = schmidt(psi, part)
"""

from __future__ import annotations

import logging
from functools import lru_cache

import numpy as np
import scipy.linalg

from .types import (
    NORM_TOL,
    PSD_TOL,
    DensityMatrix,
    PureState,
    SampleSet,
    SchmidtDecomposition,
    SeededRng,
    SubsystemPartition,
)

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-8
NEGATIVE_PROB_TOL = 1e-10


@lru_cache(maxsize=256)
def local_permutation(partition: SubsystemPartition) -> np.ndarray:
    """Index map from (a * d_Abar + b) ordering to the global ordering.

    vec[perm] reshaped to (d_A, d_Abar) is the amplitude matrix M_ab.
    """
    n = partition.n_total
    # reshape([2]*n) puts site n-1-j on axis j; highest local site goes first
    axes_A = [n - 1 - s for s in reversed(partition.sites_A)]
    axes_Abar = [n - 1 - s for s in reversed(partition.sites_Abar)]
    perm = np.arange(2**n).reshape([2] * n).transpose(axes_A + axes_Abar).reshape(-1)
    perm.setflags(write=False)
    return perm


def _state_vector(state: PureState | np.ndarray) -> np.ndarray:
    if isinstance(state, PureState):
        return state.amplitudes
    return np.asarray(state, dtype=complex)


def _check_dim(dim: int, partition: SubsystemPartition) -> None:
    if dim != 2**partition.n_total:
        raise ValueError(
            f"dimension {dim} does not match partition of {partition.n_total} sites"
        )


def amplitude_matrix(
    state: PureState | np.ndarray, partition: SubsystemPartition, keep: str = "A"
) -> np.ndarray:
    """Reshape a state vector into the d_keep x d_other matrix M."""
    vec = _state_vector(state)
    _check_dim(vec.shape[0], partition)
    M = vec[local_permutation(partition)].reshape(partition.d_A, partition.d_Abar)
    if keep == "A":
        return M
    if keep == "Abar":
        return M.T
    raise ValueError(f"keep must be 'A' or 'Abar', got {keep!r}")


def from_amplitude_matrix(M: np.ndarray, partition: SubsystemPartition) -> np.ndarray:
    """Inverse of amplitude_matrix(keep='A')."""
    vec = np.empty(2**partition.n_total, dtype=complex)
    vec[local_permutation(partition)] = np.asarray(M).reshape(-1)
    return vec


def to_local_order(op: np.ndarray, partition: SubsystemPartition) -> np.ndarray:
    """Express a full operator in the A (x) Abar product ordering."""
    _check_dim(op.shape[0], partition)
    perm = local_permutation(partition)
    return op[np.ix_(perm, perm)]


def embed_local(op: np.ndarray, partition: SubsystemPartition, side: str = "A") -> np.ndarray:
    """Embed an operator on one factor as op (x) 1 at full dimension."""
    d_keep, d_other = partition.dims(side)
    if op.shape != (d_keep, d_keep):
        raise ValueError(f"expected {d_keep}x{d_keep} operator, got {op.shape}")
    if side == "A":
        local = np.kron(op, np.eye(d_other))
    else:
        local = np.kron(np.eye(d_other), op)
    perm = local_permutation(partition)
    full = np.empty_like(local, dtype=complex)
    full[np.ix_(perm, perm)] = local
    return full


def trace_out(op: np.ndarray, partition: SubsystemPartition, keep: str = "A") -> np.ndarray:
    """Partial trace of an arbitrary full-dimension operator (no normalization)."""
    local = to_local_order(np.asarray(op), partition)
    t = local.reshape(partition.d_A, partition.d_Abar, partition.d_A, partition.d_Abar)
    if keep == "A":
        return np.einsum("ajbj->ab", t)
    if keep == "Abar":
        return np.einsum("iaib->ab", t)
    raise ValueError(f"keep must be 'A' or 'Abar', got {keep!r}")


def partial_trace(
    obj: PureState | DensityMatrix, partition: SubsystemPartition, keep: str = "A"
) -> DensityMatrix:
    """Reduced density matrix on the kept side."""
    if isinstance(obj, PureState):
        M = amplitude_matrix(obj, partition, keep)
        rho = M @ M.conj().T
    else:
        rho = trace_out(obj.elements, partition, keep)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho.shape[0], rho / np.trace(rho).real)


def schmidt(state: PureState | np.ndarray, partition: SubsystemPartition) -> SchmidtDecomposition:
    """Schmidt decomposition from the SVD of the amplitude matrix."""
    vec = _state_vector(state)
    norm2 = float(np.vdot(vec, vec).real)
    if abs(norm2 - 1.0) > NORM_TOL:
        raise ValueError(f"state must be normalized, got squared norm {norm2:.12g}")
    M = amplitude_matrix(vec, partition, "A")
    U, s, Vh = scipy.linalg.svd(M, full_matrices=False)
    vecs_A, vecs_Abar = U, Vh.T
    if partition.d_A <= partition.d_Abar:
        return SchmidtDecomposition(s**2, vecs_A, vecs_Abar, partition, "A")
    return SchmidtDecomposition(s**2, vecs_Abar, vecs_A, partition, "Abar")


def reconstruct(decomp: SchmidtDecomposition) -> PureState:
    """sum_i sqrt(p_i) |i>_S |i~>_Sbar as a global state vector."""
    s = np.sqrt(np.clip(decomp.coefficients, 0.0, None))
    if decomp.side_S == "A":
        M = (decomp.vectors_S * s) @ decomp.vectors_Sbar.T
    else:
        M = (decomp.vectors_Sbar * s) @ decomp.vectors_S.T
    return PureState(decomp.partition.n_total, from_amplitude_matrix(M, decomp.partition))


def hermitian_eig(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues ascending and unitary eigenvectors of a Hermitian matrix.

    Rounding-level asymmetry is symmetrized away; anything above
    HERMITIAN_TOL relative to the largest entry is rejected.
    """
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if dev > HERMITIAN_TOL * scale:
        raise ValueError(f"matrix is not Hermitian: max |M - M^dagger| = {dev:.3g}")
    if dev > 0:
        logger.debug("symmetrizing matrix with Hermiticity error %.3g", dev)
    return scipy.linalg.eigh(0.5 * (m + m.conj().T))


def psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Square root of a positive semidefinite matrix; negative eigenvalues clip to 0."""
    w, V = hermitian_eig(matrix)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


def clamp_eigenvalues(w: np.ndarray) -> np.ndarray:
    """Set tiny negative eigenvalues in [-PSD_TOL, 0) to zero."""
    w = np.array(w, dtype=float)
    w[(w < 0) & (w >= -PSD_TOL)] = 0.0
    return w


def von_neumann_entropy(rho: DensityMatrix | np.ndarray) -> float:
    """-Tr rho log rho, natural log."""
    m = rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho)
    p = clamp_eigenvalues(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))


def entanglement_entropy(state: PureState | np.ndarray, partition: SubsystemPartition) -> float:
    """Von Neumann entropy of the Schmidt spectrum."""
    if partition.n_A == 0 or partition.n_Abar == 0:
        return 0.0
    s = scipy.linalg.svd(amplitude_matrix(state, partition), compute_uv=False)
    p = s**2
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))


def haar_state(n: int, rng: SeededRng) -> PureState:
    """Haar-random pure state from normalized complex Gaussian amplitudes."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    gen = rng.generator()
    d = 2**n
    z = gen.standard_normal(d) + 1j * gen.standard_normal(d)
    return PureState(n, z / np.linalg.norm(z))


def haar_unitary(d: int, rng: SeededRng | np.random.Generator) -> np.ndarray:
    """Haar unitary via QR of a Ginibre matrix with the phase fix on diag(R)."""
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    z = (gen.standard_normal((d, d)) + 1j * gen.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = scipy.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def random_product_state(n: int, rng: SeededRng) -> PureState:
    """Tensor product of independent single-qubit Haar states."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    gen = rng.generator()
    z = gen.standard_normal((n, 2)) + 1j * gen.standard_normal((n, 2))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    vec = np.ones(1, dtype=complex)
    for site in reversed(range(n)):
        vec = np.kron(vec, z[site])
    return PureState(n, vec / np.linalg.norm(vec))


def basis_probabilities(
    rho: PureState | DensityMatrix, basis: np.ndarray | None = None
) -> np.ndarray:
    """p_xi = <xi|rho|xi> for each basis column xi (raw, may carry tiny negatives)."""
    if isinstance(rho, PureState):
        amps = rho.amplitudes if basis is None else basis.conj().T @ rho.amplitudes
        return np.abs(amps) ** 2
    m = rho.elements
    if basis is None:
        return np.real(np.diagonal(m)).copy()
    if basis.shape[0] != m.shape[0]:
        raise ValueError(f"basis dimension {basis.shape[0]} does not match rho {m.shape[0]}")
    return np.real(np.einsum("ia,ij,ja->a", basis.conj(), m, basis))


def born_sample(
    rho: PureState | DensityMatrix,
    basis: np.ndarray | None,
    count: int,
    rng: SeededRng,
) -> SampleSet:
    """Draw count i.i.d. outcomes from p_xi = <xi|rho|xi>."""
    p = basis_probabilities(rho, basis)
    if p.min() < -NEGATIVE_PROB_TOL:
        raise ValueError(f"negative Born probability {p.min():.3g}: invalid density matrix")
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    outcomes = rng.generator().choice(len(p), size=count, p=p)
    return SampleSet(outcomes=outcomes, seed=rng.master_seed)
