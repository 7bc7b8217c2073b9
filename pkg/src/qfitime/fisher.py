"""Quantum and classical Fisher information for time estimation.

The subsystem QFI is evaluated in the Schmidt basis of the global pure
state: with M = U diag(s) Vh the amplitude matrix and N the amplitude
matrix of H|psi>, every matrix element of d(rho_A)/dt between reduced
eigenvectors comes from Q = U^dag N Vh^dag, and the null space of rho_A
only enters through the residual column norms of N. Nothing of size
d_A x d_A is diagonalized.

Usage:
    from qfitime.fisher import subsystem_qfi, cfi, qfi

    report = subsystem_qfi(psi_t, hb, partition)
    print(report.F_A, report.F_ent, report.F_rot)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .analytic import page_entropy
from .dynamics import apply_lindbladian, reduced_state_and_derivative
from .hilbert import (
    amplitude_matrix,
    clamp_eigenvalues,
    entanglement_entropy,
    hermitian_eig,
    psd_sqrt,
)
from .types import (
    DensityMatrix,
    FisherReport,
    HamiltonianBundle,
    LindbladSpec,
    NumericalError,
    PureState,
    SubsystemPartition,
    Trajectory,
)

logger = logging.getLogger(__name__)

RELATIVE_RANK_TOL = 1e-12
CFI_PROB_TOL = 1e-14
CFI_DERIV_TOL = 1e-10
MIN_VARIANCE = 1e-12


def _matrix(rho: DensityMatrix | np.ndarray) -> np.ndarray:
    return rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def _rank_tol(p: np.ndarray, tol: float | None) -> float:
    if tol is not None:
        if tol <= 0:
            raise ValueError(f"tol must be > 0, got {tol}")
        return tol
    pmax = float(np.max(p)) if p.size else 0.0
    if pmax <= 0:
        raise NumericalError("tolerance collapse: no positive eigenvalues")
    return RELATIVE_RANK_TOL * pmax


def energy_moments(psi: PureState, hb: HamiltonianBundle) -> tuple[float, float]:
    """(<H>, <H^2>) of a pure state."""
    hpsi = hb.H @ psi.amplitudes
    return float(np.vdot(psi.amplitudes, hpsi).real), float(np.vdot(hpsi, hpsi).real)


def energy_variance(psi: PureState, hb: HamiltonianBundle) -> float:
    mean, second = energy_moments(psi, hb)
    return max(second - mean**2, 0.0)


def qfi(
    rho: DensityMatrix | np.ndarray, drho: np.ndarray, tol: float | None = None
) -> tuple[float, np.ndarray]:
    """QFI and SLD from the eigendecomposition of rho.

    Pairs with p_i + p_j <= tol are dropped. The default tol is
    1e-12 * max(p).
    """
    p, V = hermitian_eig(_matrix(rho))
    p = clamp_eigenvalues(p)
    cutoff = _rank_tol(p, tol)
    D = V.conj().T @ np.asarray(drho) @ V
    psum = p[:, None] + p[None, :]
    keep = psum > cutoff
    w = np.zeros_like(psum)
    w[keep] = 2.0 / psum[keep]
    value = float(np.sum(w * np.abs(D) ** 2))
    sld = V @ (w * D) @ V.conj().T
    return value, 0.5 * (sld + sld.conj().T)


def root_fidelity(rho: DensityMatrix | np.ndarray, sigma: DensityMatrix | np.ndarray) -> float:
    """Tr sqrt(sqrt(rho) sigma sqrt(rho))."""
    r = psd_sqrt(_matrix(rho))
    inner = r @ _matrix(sigma) @ r
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))))


def bures_distance(rho: DensityMatrix | np.ndarray, sigma: DensityMatrix | np.ndarray) -> float:
    """sqrt(2) * sqrt(1 - Tr sqrt(sqrt(rho) sigma sqrt(rho)))."""
    fid = min(root_fidelity(rho, sigma), 1.0)
    return float(np.sqrt(2.0) * np.sqrt(max(1.0 - fid, 0.0)))


def bures_qfi_oracle(
    rho_of_t: Callable[[float], DensityMatrix | np.ndarray], t: float, h: float = 1e-3
) -> float:
    """4 d_B(rho(t-h), rho(t+h))^2 / (2h)^2, the finite-difference QFI."""
    d = bures_distance(rho_of_t(t - h), rho_of_t(t + h))
    return 4.0 * d**2 / (2.0 * h) ** 2


@dataclass
class _BlockSums:
    plus: float
    cross: float
    ent: float
    rot: float

    @property
    def total(self) -> float:
        return self.ent + self.rot


def _block_sums(
    s: np.ndarray, Q: np.ndarray, colnorm2: np.ndarray, tol: float, sign: float
) -> _BlockSums:
    """sum_jk w_jk |X_jk + sign * conj(X_kj)|^2 with X_jk = s_k Q_jk.

    sign=-1 gives the commutator (time) QFI, sign=+1 the anticommutator one.
    """
    p = s**2
    X = Q * s[None, :]
    Xt = X.T
    psum = p[:, None] + p[None, :]
    keep = psum > tol
    w = np.zeros_like(psum)
    w[keep] = 2.0 / psum[keep]
    support = p > tol
    both = support[:, None] & support[None, :]

    term = w * np.abs(X + sign * Xt.conj()) ** 2
    plus = float(np.sum(w * np.abs(X) ** 2))
    cross = float(np.real(np.sum(w * X * Xt)))
    ent = float(np.sum(term[both]))
    rot = float(np.sum(term[keep & ~both]))

    # null space of the kept side: X_wk = s_k <w|N|v_k>, X_kw = 0
    residual = np.clip(colnorm2 - np.sum(np.abs(Q) ** 2, axis=0), 0.0, None)
    null = float(np.sum(residual[support]))
    return _BlockSums(plus + 2.0 * null, cross, ent, rot + 4.0 * null)


def _schmidt_blocks(
    U: np.ndarray, s: np.ndarray, Vh: np.ndarray, N: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    NV = N @ Vh.conj().T
    return U.conj().T @ NV, np.sum(np.abs(NV) ** 2, axis=0)


def _svd(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return scipy.linalg.svd(M, full_matrices=False)


def _computational_cfi(M: np.ndarray, N: np.ndarray, strict: bool = False) -> float:
    p = np.sum(np.abs(M) ** 2, axis=1)
    dp = 2.0 * np.sum(np.imag(M.conj() * N), axis=1)
    return fisher_from_probabilities(p, dp, strict=strict)


def fisher_from_probabilities(
    p: np.ndarray,
    dp: np.ndarray,
    tol: float = CFI_PROB_TOL,
    dtol: float = CFI_DERIV_TOL,
    strict: bool = False,
) -> float:
    """sum (dp)^2 / p over outcomes with p > tol.

    An outcome with p <= tol but |dp| >= dtol is an ill-conditioned
    direction: logged, or raised as ValueError when strict.
    """
    p = np.asarray(p, dtype=float)
    dp = np.asarray(dp, dtype=float)
    small = p <= tol
    bad = small & (np.abs(dp) >= dtol)
    if np.any(bad):
        msg = f"{int(np.count_nonzero(bad))} ill-conditioned outcome(s) with p <= {tol:g}"
        if strict:
            raise ValueError(msg)
        logger.warning(msg)
    ok = ~small
    return float(np.sum(dp[ok] ** 2 / p[ok]))


def cfi(
    rho: DensityMatrix | np.ndarray,
    drho: np.ndarray,
    basis: np.ndarray | None = None,
    tol: float = CFI_PROB_TOL,
    strict: bool = False,
) -> float:
    """Classical Fisher information of p_xi = <xi|rho|xi> (default computational basis)."""
    m = _matrix(rho)
    d = np.asarray(drho)
    if basis is None:
        p = np.real(np.diagonal(m))
        dp = np.real(np.diagonal(d))
    else:
        if basis.shape[0] != m.shape[0]:
            raise ValueError(f"basis dimension {basis.shape[0]} does not match rho {m.shape[0]}")
        p = np.real(np.einsum("ia,ij,ja->a", basis.conj(), m, basis))
        dp = np.real(np.einsum("ia,ij,ja->a", basis.conj(), d, basis))
    if p.min() < -1e-10:
        raise ValueError(f"negative probability {p.min():.3g} in basis")
    return fisher_from_probabilities(np.clip(p, 0.0, None), dp, tol=tol, strict=strict)


def subsystem_cfi(
    psi: PureState,
    hb: HamiltonianBundle,
    partition: SubsystemPartition,
    basis: np.ndarray | None = None,
    keep: str = "A",
    strict: bool = False,
) -> float:
    """CFI of measuring the kept side of psi(t) in basis (default computational)."""
    hpsi = hb.H @ psi.amplitudes
    if basis is None:
        M = amplitude_matrix(psi, partition, keep)
        N = amplitude_matrix(hpsi, partition, keep)
        return _computational_cfi(M, N, strict=strict)
    if partition.is_full and keep == "A":
        a = basis.conj().T @ psi.amplitudes
        b = basis.conj().T @ hpsi
        p = np.abs(a) ** 2
        dp = 2.0 * np.imag(a.conj() * b)
        return fisher_from_probabilities(p, dp, strict=strict)
    rho, drho = reduced_state_and_derivative(psi, hb, partition, keep)
    return cfi(rho, drho, basis, strict=strict)


def subsystem_qfi(
    psi_t: PureState,
    hb: HamiltonianBundle,
    partition: SubsystemPartition,
    tol: float | None = None,
    with_sld: bool = False,
) -> FisherReport:
    """F_A with its +/- and ent/rot splits, f_comp and F_Abar(eta).

    F_plus and F_minus use H; F_eta is the conjugate-energy QFI of the
    complement, computed with H - <H>.
    """
    if psi_t.dim != hb.dim:
        raise ValueError(f"state dimension {psi_t.dim} does not match Hamiltonian {hb.dim}")
    hpsi = hb.H @ psi_t.amplitudes
    mean = float(np.vdot(psi_t.amplitudes, hpsi).real)
    var = float(np.vdot(hpsi, hpsi).real) - mean**2

    M = amplitude_matrix(psi_t, partition, "A")
    N = amplitude_matrix(hpsi, partition, "A")
    U, s, Vh = _svd(M)
    cutoff = _rank_tol(s**2, tol)

    Q, colnorm = _schmidt_blocks(U, s, Vh, N)
    sums = _block_sums(s, Q, colnorm, cutoff, sign=-1.0)

    F_eta = float("nan")
    if var > MIN_VARIANCE:
        Nbar = N - mean * M
        Qb, normb = _schmidt_blocks(Vh.T, s, U.T, Nbar.T)
        F_eta = _block_sums(s, Qb, normb, cutoff, sign=1.0).total / (4.0 * var**2)

    report = FisherReport(
        F_A=sums.total,
        F_plus=sums.plus,
        F_minus=sums.cross,
        F_ent=sums.ent,
        F_rot=sums.rot,
        f_comp=_computational_cfi(M, N),
        F_eta=F_eta,
        rank_tolerance=cutoff,
    )
    if with_sld:
        rho, drho = reduced_state_and_derivative(psi_t, hb, partition)
        _, report.sld = qfi(rho, drho, tol=cutoff)
    return report


def plus_minus(
    psi_t: PureState,
    hb: HamiltonianBundle,
    partition: SubsystemPartition,
    keep: str = "A",
    tol: float | None = None,
) -> tuple[float, float]:
    """(F_{keep,+}, Re F_{keep,-}) for either side of the cut."""
    hpsi = hb.H @ psi_t.amplitudes
    M = amplitude_matrix(psi_t, partition, keep)
    N = amplitude_matrix(hpsi, partition, keep)
    U, s, Vh = _svd(M)
    Q, colnorm = _schmidt_blocks(U, s, Vh, N)
    sums = _block_sums(s, Q, colnorm, _rank_tol(s**2, tol), sign=-1.0)
    return sums.plus, sums.cross


def conjugate_energy_qfi(
    psi_t: PureState,
    hb: HamiltonianBundle,
    partition: SubsystemPartition,
    tol: float | None = None,
    keep: str = "A",
) -> float:
    """QFI of the kept side for the flow conjugate to energy.

    The derivative is Tr_other{H - <H>, |psi><psi|} / (2 Var(H)); on the
    full system this is 1/Var(H) = 4/F(t).
    """
    hpsi = hb.H @ psi_t.amplitudes
    mean = float(np.vdot(psi_t.amplitudes, hpsi).real)
    var = float(np.vdot(hpsi, hpsi).real) - mean**2
    if var < MIN_VARIANCE:
        raise ValueError(f"energy variance {var:.3g} is zero; conjugate flow undefined")
    M = amplitude_matrix(psi_t, partition, keep)
    Nbar = amplitude_matrix(hpsi - mean * psi_t.amplitudes, partition, keep)
    U, s, Vh = _svd(M)
    Q, colnorm = _schmidt_blocks(U, s, Vh, Nbar)
    total = _block_sums(s, Q, colnorm, _rank_tol(s**2, tol), sign=1.0).total
    return total / (4.0 * var**2)


def uncertainty_relation(
    psi_t: PureState, hb: HamiltonianBundle, partition: SubsystemPartition
) -> float:
    """F_A(t)/F(t) + F_Abar(eta)/F(eta); equals 1 for pure global states."""
    var = energy_variance(psi_t, hb)
    if var < MIN_VARIANCE:
        raise ValueError(f"energy variance {var:.3g} is zero")
    report = subsystem_qfi(psi_t, hb, partition)
    return report.F_A / (4.0 * var) + report.F_eta * var


@dataclass
class OptimalBasis:
    """SLD eigenbasis with per-state entanglement entropies across cuts."""

    basis: np.ndarray
    eigenvalues: np.ndarray
    probabilities: np.ndarray
    cuts: list[int] = field(default_factory=list)
    entropies: np.ndarray | None = None
    page_values: np.ndarray | None = None

    @property
    def mean_entropy(self) -> np.ndarray | None:
        if self.entropies is None or self.entropies.size == 0:
            return None
        return self.entropies.mean(axis=0)


def _fix_phases(V: np.ndarray) -> np.ndarray:
    """Make the first non-negligible component of each column real positive."""
    V = V.copy()
    for k in range(V.shape[1]):
        col = V[:, k]
        idx = int(np.argmax(np.abs(col) > 1e-12))
        phase = col[idx] / abs(col[idx])
        V[:, k] = col / phase
    return V


def basis_entropy_profile(
    basis: np.ndarray, cuts: list[int] | None = None
) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Entropy of each basis column across contiguous interior cuts.

    A cut k splits sites {0..k-1} | {k..n-1}. Returns (cuts, entropies,
    Page values).
    """
    n = int(basis.shape[0]).bit_length() - 1
    if cuts is None:
        cuts = list(range(1, n))
    ent = np.empty((basis.shape[1], len(cuts)))
    parts = [SubsystemPartition.contiguous(n, k) for k in cuts]
    for a in range(basis.shape[1]):
        for c, part in enumerate(parts):
            ent[a, c] = entanglement_entropy(basis[:, a], part)
    page = np.array([page_entropy(2**k, 2 ** (n - k)) for k in cuts])
    return cuts, ent, page


def optimal_basis(
    rho: DensityMatrix | np.ndarray,
    drho: np.ndarray,
    tol: float | None = None,
    cuts: list[int] | None = None,
    with_profile: bool = True,
) -> OptimalBasis:
    """Eigenbasis of the SLD, ordered by ascending eigenvalue with a phase fix.

    The entropy profile covers basis states with p_xi above the rank
    tolerance.
    """
    m = _matrix(rho)
    _, sld = qfi(m, drho, tol=tol)
    lam, V = hermitian_eig(sld)
    V = _fix_phases(V)
    probs = np.real(np.einsum("ia,ij,ja->a", V.conj(), m, V))
    result = OptimalBasis(basis=V, eigenvalues=lam, probabilities=probs)
    if with_profile and m.shape[0] > 2:
        cutoff = _rank_tol(probs, tol)
        kept = V[:, probs > cutoff]
        result.cuts, result.entropies, result.page_values = basis_entropy_profile(kept, cuts)
    return result


def pure_optimal_basis(psi: PureState, hb: HamiltonianBundle) -> np.ndarray:
    """Orthonormal basis whose first two columns are (|psi> +- i|xi>)/sqrt(2).

    |xi> = (H - <H>)|psi> / sqrt(Var H).
    """
    var = energy_variance(psi, hb)
    if var < MIN_VARIANCE:
        raise ValueError(f"energy variance {var:.3g} is zero; no optimal basis")
    mean = energy_moments(psi, hb)[0]
    xi = (hb.H @ psi.amplitudes - mean * psi.amplitudes) / np.sqrt(var)
    b_plus = (psi.amplitudes + 1j * xi) / np.sqrt(2.0)
    b_minus = (psi.amplitudes - 1j * xi) / np.sqrt(2.0)
    stacked = np.column_stack([b_plus, b_minus, np.eye(psi.dim)])
    Q, _ = scipy.linalg.qr(stacked, mode="economic")
    Q = Q[:, : psi.dim].copy()
    Q[:, 0], Q[:, 1] = b_plus, b_minus
    return Q


def xi_state(psi: PureState, hb: HamiltonianBundle) -> PureState:
    """|xi> = (H - <H>)|psi> / sqrt(Var H)."""
    var = energy_variance(psi, hb)
    if var < MIN_VARIANCE:
        raise ValueError(f"energy variance {var:.3g} is zero")
    mean = energy_moments(psi, hb)[0]
    xi = (hb.H @ psi.amplitudes - mean * psi.amplitudes) / np.sqrt(var)
    return PureState(psi.n_sites, xi / np.linalg.norm(xi))


def lindblad_qfi_series(traj: Trajectory, spec: LindbladSpec, tol: float | None = None) -> np.ndarray:
    """QFI of each stored rho(t) with d rho/dt = L(rho)."""
    out = np.empty(len(traj))
    for k, rho in enumerate(traj.states):
        out[k], _ = qfi(rho, apply_lindbladian(spec, rho.elements), tol=tol)
    return out
