"""Spin-chain Hamiltonians and boundary dissipators as dense operators.

Every builder keeps its Pauli term list so the A / Abar / interaction
split can assign terms by support.

Usage:
    from qfitime.models import build_mixed_field_ising, split_hamiltonian
    from qfitime.types import SubsystemPartition

    hb = build_mixed_field_ising(10)
    hb = split_hamiltonian(hb, SubsystemPartition.contiguous(10, 4))
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Any

import numpy as np

from .hilbert import embed_local
from .types import HamiltonianBundle, LindbladSpec, PauliTerm, SubsystemPartition

logger = logging.getLogger(__name__)

G_CHAOTIC = -1.05
H_CHAOTIC = 0.5
DELTA_XXZ = 0.5
MAX_SITES = 14

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

BOUNDARIES = ("periodic", "open")


def embed_pauli(n: int, ops: tuple[tuple[int, str], ...] | list[tuple[int, str]]) -> np.ndarray:
    """Dense 2^n matrix of a Pauli string given as (site, label) pairs."""
    factors = ["I"] * n
    for site, label in ops:
        if not 0 <= site < n:
            raise ValueError(f"site {site} out of range 0..{n - 1}")
        factors[site] = label
    out = np.ones((1, 1), dtype=complex)
    # highest site is the most significant factor
    for label in reversed(factors):
        out = np.kron(out, PAULI[label])
    return out


def materialize(n: int, terms: tuple[PauliTerm, ...]) -> np.ndarray:
    d = 2**n
    H = np.zeros((d, d), dtype=complex)
    for term in terms:
        H += term.coefficient * embed_pauli(n, term.ops)
    return H


def _check_chain(n: int, boundary: str) -> None:
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if n > MAX_SITES:
        raise ValueError(f"n must be <= {MAX_SITES}, got {n}")
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")


def _bonds(n: int, boundary: str) -> list[tuple[int, int]]:
    if boundary == "periodic":
        return [(i, (i + 1) % n) for i in range(n)]
    return [(i, i + 1) for i in range(n - 1)]


def _bundle(n: int, terms: list[PauliTerm], model: str, params: dict[str, Any]) -> HamiltonianBundle:
    terms = [t for t in terms if t.coefficient != 0.0]
    return HamiltonianBundle(
        n_sites=n, H=materialize(n, tuple(terms)), terms=tuple(terms), model=model, params=params
    )


def build_mixed_field_ising(
    n: int, g: float = G_CHAOTIC, h: float = H_CHAOTIC, boundary: str = "periodic"
) -> HamiltonianBundle:
    """H = sum Z_i Z_{i+1} + g sum X_i + h sum Z_i."""
    _check_chain(n, boundary)
    terms = [PauliTerm(1.0, ((i, "Z"), (j, "Z"))) for i, j in _bonds(n, boundary)]
    terms += [PauliTerm(float(g), ((i, "X"),)) for i in range(n)]
    terms += [PauliTerm(float(h), ((i, "Z"),)) for i in range(n)]
    params = {"n": n, "g": float(g), "h": float(h), "boundary": boundary}
    return _bundle(n, terms, "mixed_field_ising", params)


def build_tfi_integrable(n: int, g: float = G_CHAOTIC, boundary: str = "periodic") -> HamiltonianBundle:
    """Transverse-field Ising chain, the h = 0 integrable point."""
    hb = build_mixed_field_ising(n, g=g, h=0.0, boundary=boundary)
    return replace(hb, model="tfi")


def build_xxz(n: int, delta: float = DELTA_XXZ, boundary: str = "periodic") -> HamiltonianBundle:
    """H = sum X_i X_{i+1} + Y_i Y_{i+1} + delta Z_i Z_{i+1}."""
    _check_chain(n, boundary)
    terms: list[PauliTerm] = []
    for i, j in _bonds(n, boundary):
        terms.append(PauliTerm(1.0, ((i, "X"), (j, "X"))))
        terms.append(PauliTerm(1.0, ((i, "Y"), (j, "Y"))))
        terms.append(PauliTerm(float(delta), ((i, "Z"), (j, "Z"))))
    return _bundle(n, terms, "xxz", {"n": n, "delta": float(delta), "boundary": boundary})


MODEL_BUILDERS = {
    "mixed_field_ising": build_mixed_field_ising,
    "tfi": build_tfi_integrable,
    "xxz": build_xxz,
}


def build_model(name: str, n: int, **params: Any) -> HamiltonianBundle:
    """Look up a builder by name and call it with the given parameters."""
    builder = MODEL_BUILDERS.get(name)
    if builder is None:
        raise ValueError(f"unknown model {name!r}, expected one of {sorted(MODEL_BUILDERS)}")
    return builder(n, **params)


def split_hamiltonian(hb: HamiltonianBundle, partition: SubsystemPartition) -> HamiltonianBundle:
    """Assign each term to H_A, H_Abar or H_int by its support."""
    if partition.n_total != hb.n_sites:
        raise ValueError(
            f"partition has {partition.n_total} sites, Hamiltonian has {hb.n_sites}"
        )
    if not hb.terms:
        raise ValueError("Hamiltonian has no term list to split")

    local_A = {s: k for k, s in enumerate(partition.sites_A)}
    local_Abar = {s: k for k, s in enumerate(partition.sites_Abar)}
    H_A = np.zeros((partition.d_A, partition.d_A), dtype=complex)
    H_Abar = np.zeros((partition.d_Abar, partition.d_Abar), dtype=complex)
    H_int = np.zeros_like(hb.H)
    n_int = 0
    for term in hb.terms:
        support = term.support
        if support <= local_A.keys():
            ops = tuple((local_A[s], p) for s, p in term.ops)
            H_A += term.coefficient * embed_pauli(partition.n_A, ops)
        elif support <= local_Abar.keys():
            ops = tuple((local_Abar[s], p) for s, p in term.ops)
            H_Abar += term.coefficient * embed_pauli(partition.n_Abar, ops)
        else:
            H_int += term.coefficient * embed_pauli(hb.n_sites, term.ops)
            n_int += 1
    logger.debug("split %s: %d interaction terms across the cut", hb.model, n_int)
    return replace(hb, partition=partition, H_A=H_A, H_Abar=H_Abar, H_int=H_int)


def interaction_terms(hb: HamiltonianBundle, partition: SubsystemPartition) -> list[PauliTerm]:
    """Terms whose support straddles the cut."""
    sites_A = set(partition.sites_A)
    return [t for t in hb.terms if t.support & sites_A and t.support - sites_A]


def reassemble(hb: HamiltonianBundle) -> np.ndarray:
    """H_A (x) 1 + 1 (x) H_Abar + H_int at full dimension."""
    if not hb.has_split:
        raise ValueError("Hamiltonian has no partition split")
    part = hb.partition
    return embed_local(hb.H_A, part, "A") + embed_local(hb.H_Abar, part, "Abar") + hb.H_int


def boundary_depolarizing_jumps(
    n_A: int, gamma: float = 1.0, g: float = G_CHAOTIC, h: float = H_CHAOTIC
) -> LindbladSpec:
    """Open mixed-field Ising on n_A sites with X, Y, Z jumps on both end sites."""
    if n_A < 2:
        raise ValueError(f"n_A must be >= 2, got {n_A}")
    hb = build_mixed_field_ising(n_A, g=g, h=h, boundary="open")
    ends = (0, n_A - 1)
    jumps = tuple(embed_pauli(n_A, ((site, p),)) for site in ends for p in ("X", "Y", "Z"))
    sites = tuple(site for site in ends for _ in range(3))
    return LindbladSpec(H=hb, jump_operators=jumps, gamma=float(gamma), jump_sites=sites)
