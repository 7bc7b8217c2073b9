"""Closed-form reference values for Haar-random and Brownian-GUE states.

All traces are evaluated exactly on the supplied Hamiltonian; the
thermodynamic-limit simplifications are returned alongside the finite-d
expressions so finite-size comparisons stay honest.

Usage:
    from qfitime.analytic import haar_saturation_fa, trace_distance_full

    sat = haar_saturation_fa(split_hamiltonian(hb, partition))
    print(sat.F_S_pred, sat.F_B_pred)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.stats
from scipy.special import digamma, gammaln

from .hilbert import (
    amplitude_matrix,
    embed_local,
    partial_trace,
    psd_sqrt,
    random_product_state,
    to_local_order,
    trace_out,
)
from .types import (
    BgueSpec,
    BlackHoleSpec,
    HamiltonianBundle,
    PureState,
    SeededRng,
    SubsystemPartition,
)

logger = logging.getLogger(__name__)

TD_INFINITE = 2.0 / math.e


def page_entropy(d_A: int, d_B: int) -> float:
    """Mean entanglement entropy of a Haar state on d_A x d_B (natural log)."""
    m, n = sorted((int(d_A), int(d_B)))
    return float(digamma(m * n + 1) - digamma(n + 1) - (m - 1) / (2.0 * n))


def _real_trace(m: np.ndarray) -> float:
    return float(np.real(np.trace(m)))


@dataclass
class HaarSaturation:
    """Late-time subsystem QFI of a Haar state. S is the smaller side."""

    side_S: str
    d_S: int
    d_B: int
    F_S: float
    F_B: float
    F_S_flat: float
    F_S_nonflat: float
    F_B_flat: float
    F_B_nonflat: float
    F_S_pred: float
    F_B_pred: float
    n_S: int = 0
    n_B: int = 0

    def for_side(self, side: str) -> float:
        """Thermodynamic-limit prediction for partition side 'A' or 'Abar'."""
        return self.F_S_pred if side == self.side_S else self.F_B_pred

    @property
    def c_constant(self) -> float:
        """Energy-density constant c with F_B_pred = 2 c n_B."""
        return self.F_B_pred / (2.0 * self.n_B) if self.n_B else float("nan")


def _haar_plus_minus(
    trH2: float, trH_sq: float, g_S: float, g_B: float, d_S: int, d_B: int, I: float
) -> tuple[float, float]:
    D = (d_S**2 - 1) * (d_B**2 - 1)
    inv = 1.0 / (d_S * d_B)
    plus = (
        trH2 * ((1 / d_S - 1 / d_B) * I / 4 + (d_S**2 - 1) * (1 - inv))
        + trH_sq * ((-1 / d_S + 1 / d_B) * I / 4)
        + g_B * ((-1 + inv) * I / 4)
        + g_S * ((1 - inv) * I / 4 + (d_S**2 - 1) * (1 / d_S - 1 / d_B))
    ) / D
    minus = (
        (trH2 + trH_sq) * ((1 / d_S + 1 / d_B) * I / 4 - (d_S**2 - 1) * inv)
        + (g_B + g_S) * ((-1 - inv) * I / 4 + (d_S**2 - 1) / d_S)
    ) / D
    return plus, minus


def haar_saturation_fa(
    hb: HamiltonianBundle, side_S: str | None = None, I: float | None = None
) -> HaarSaturation:
    """Haar-average F_S and F_B, exact in d, plus the limit forms.

    hb must carry a partition split. side_S names the smaller side; by
    default it is chosen automatically. I defaults to 2 d_S^2 / d_B.
    """
    if not hb.has_split:
        raise ValueError("haar_saturation_fa needs a split Hamiltonian")
    part = hb.partition
    if side_S is None:
        side_S = "A" if part.d_A <= part.d_Abar else "Abar"
    side_B = "Abar" if side_S == "A" else "A"
    d_S, d_B = part.dims(side_S)
    if d_S > d_B:
        raise ValueError(f"side {side_S} is the larger subsystem (d_S={d_S} > d_B={d_B})")
    if d_S < 2:
        raise ValueError(f"d_S must be >= 2, got {d_S}")
    if I is None:
        I = 2.0 * d_S**2 / d_B

    H = hb.H
    d = d_S * d_B
    trH2 = _real_trace(H @ H)
    trH_sq = _real_trace(H) ** 2
    H_S = trace_out(H, part, side_S)
    H_B = trace_out(H, part, side_B)
    g_S = _real_trace(H_S @ H_S)
    g_B = _real_trace(H_B @ H_B)

    plus, minus = _haar_plus_minus(trH2, trH_sq, g_S, g_B, d_S, d_B, I)
    plus0, minus0 = _haar_plus_minus(trH2, trH_sq, g_S, g_B, d_S, d_B, 0.0)
    F_S = 2 * (plus - minus)
    F_B = 4 * trH2 / d - 2 * plus - 2 * minus
    F_S_flat = 2 * (plus0 - minus0)
    F_B_flat = 4 * trH2 / d - 2 * plus0 - 2 * minus0

    h_S = hb.local_block(side_S)
    h_B = hb.local_block(side_B)
    F_S_pred = 2.0 / d_B * (_real_trace(h_S @ h_S) - _real_trace(h_S) ** 2 / d_S)
    F_B_pred = 4.0 * (_real_trace(h_B @ h_B) / d_B - (_real_trace(h_B) / d_B) ** 2)

    return HaarSaturation(
        side_S=side_S,
        d_S=d_S,
        d_B=d_B,
        F_S=F_S,
        F_B=F_B,
        F_S_flat=F_S_flat,
        F_S_nonflat=F_S - F_S_flat,
        F_B_flat=F_B_flat,
        F_B_nonflat=F_B - F_B_flat,
        F_S_pred=F_S_pred,
        F_B_pred=F_B_pred,
        n_S=int(d_S).bit_length() - 1,
        n_B=int(d_B).bit_length() - 1,
    )


def finite_temperature_fa(S_A_eq: float, S_Abar_eq: float, varH_A_eq: float) -> float:
    """2 var e^{S_A - S_Abar} below the entropy crossing, 4 var above it."""
    if varH_A_eq < 0:
        raise ValueError(f"variance must be >= 0, got {varH_A_eq}")
    if S_A_eq < S_Abar_eq:
        return 2.0 * varH_A_eq * math.exp(S_A_eq - S_Abar_eq)
    return 4.0 * varH_A_eq


@dataclass
class CfiSaturation:
    full: float
    subsystem: float
    d_keep: int
    d_other: int
    n: int

    @property
    def kappa(self) -> float:
        """kappa with f_sub = kappa * n / d_other."""
        return self.subsystem * self.d_other / self.n


def cfi_saturation(
    hb: HamiltonianBundle, partition: SubsystemPartition, keep: str = "A"
) -> CfiSaturation:
    """Late-time computational-basis CFI of a Haar state.

    The subsystem value is the leading large-d expression for the kept
    side; it does not reduce to the full-system value at d_other = 1.
    """
    H = hb.H
    d = H.shape[0]
    trH2 = _real_trace(H @ H)
    diag2 = float(np.sum(np.real(np.diagonal(H)) ** 2))
    full = 2.0 / d * trH2 - 2.0 / d * diag2

    d_k, d_o = partition.dims(keep)
    d_A, d_Abar = partition.d_A, partition.d_Abar
    local = to_local_order(H, partition).reshape(d_A, d_Abar, d_A, d_Abar)
    if keep == "Abar":
        local = local.transpose(1, 0, 3, 2)
    H_k = np.einsum("ajbj->ab", local)
    trHk2 = float(np.sum(np.abs(H_k) ** 2))
    diag_k2 = float(np.sum(np.real(np.diagonal(H_k)) ** 2))
    # blocks <alpha|H|alpha> on the traced side
    blocks = np.einsum("aiaj->aij", local)
    block2 = float(np.sum(np.abs(blocks) ** 2))

    if d_k >= d_o:
        sub = (
            2.0 / (d_k * d_o**2) * trH2
            + 2.0 / (d_k * d_o**3) * trHk2
            - 2.0 / (d_k * d_o**3) * diag_k2
            - 2.0 / (d_k * d_o**2) * block2
        )
    else:
        sub = (
            2.0 / (d_o**2 * d_k) * trH2
            + 2.0 / (d_o**2 * d_k**2) * trHk2
            - 2.0 / (d_o**2 * d_k**2) * diag_k2
            - 2.0 / (d_o**2 * d_k) * block2
        )
    return CfiSaturation(full=full, subsystem=sub, d_keep=d_k, d_other=d_o, n=hb.n_sites)


def trace_distance_full(d: float) -> float:
    """2 (1 - 1/d)^d; d = inf gives 2/e."""
    if math.isinf(d):
        return TD_INFINITE
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return 2.0 * math.exp(d * math.log1p(-1.0 / d)) if d > 1 else 0.0


def trace_distance_sub(d: float, d_Abar: int) -> float:
    """Haar-average total variation of the computational outcomes on A."""
    if d_Abar < 1:
        raise ValueError(f"d_Abar must be >= 1, got {d_Abar}")
    if math.isinf(d):
        k = float(d_Abar)
        return 2.0 * math.exp((k - 1) * math.log(k) - k - gammaln(k))
    if d_Abar > d:
        raise ValueError(f"d_Abar={d_Abar} exceeds d={d}")
    if d_Abar == d:
        return 0.0
    k = float(d_Abar)
    log_td = (
        (k - 1) * math.log(k)
        + (d - k) * math.log(d - k)
        + gammaln(d)
        - d * math.log(d)
        - gammaln(k)
        - gammaln(d - k)
    )
    return 2.0 * math.exp(log_td)


def trace_distance_sub_limit(d_Abar: int) -> float:
    """Large-d_Abar form 2 (2 pi)^{-1/2} d_Abar^{-1/2}."""
    return 2.0 / math.sqrt(2.0 * math.pi * d_Abar)


def sampled_trace_distance(psi: PureState, partition: SubsystemPartition) -> float:
    """sum_a |p_a - 1/d_A| for computational outcomes on A."""
    p = np.sum(np.abs(amplitude_matrix(psi, partition)) ** 2, axis=1)
    return float(np.sum(np.abs(p - 1.0 / partition.d_A)))


def _outcome_law(d: int, d_Abar: int) -> scipy.stats.rv_continuous:
    if not 1 <= d_Abar < d:
        raise ValueError(f"need 1 <= d_Abar < d, got d_Abar={d_Abar}, d={d}")
    return scipy.stats.beta(d_Abar, d - d_Abar)


def outcome_density(lam: float | np.ndarray, d: int, d_Abar: int = 1) -> float | np.ndarray:
    """Density of <0|Tr_Abar|psi><psi||0> over Haar states.

    d_Abar = 1 is the full-system law (d-1)(1-lambda)^{d-2}.
    """
    return _outcome_law(d, d_Abar).pdf(lam)


def outcome_cdf(lam: float | np.ndarray, d: int, d_Abar: int = 1) -> float | np.ndarray:
    return _outcome_law(d, d_Abar).cdf(lam)


def holevo_prediction(n_R: int, n: int) -> float:
    """1 up to half the system, then n_B / n."""
    n_B = n - n_R
    return 1.0 if n_R <= n_B else n_B / n


def holevo_fidelity(
    psi: PureState, hb: HamiltonianBundle, partition: SubsystemPartition
) -> tuple[float, float]:
    """(Tr sqrt(rho_R) sqrt(sigma_R), predicted) with R = partition side A."""
    from .fisher import xi_state

    xi = xi_state(psi, hb)
    rho = partial_trace(psi, partition, "A").elements
    sigma = partial_trace(xi, partition, "A").elements
    measured = float(np.real(np.trace(psd_sqrt(rho) @ psd_sqrt(sigma))))
    return measured, holevo_prediction(partition.n_A, partition.n_total)


# rows: f_1 .. f_8; columns multiply (1, e^-t, e^-(2-2/d_B)t, e^-2t, e^-(2+2/d_B)t)
def bgue_coefficients(d_B: int) -> np.ndarray:
    if d_B <= 2:
        raise ValueError(f"d_B must be > 2, got {d_B}")
    b = float(d_B)
    return np.array(
        [
            [0, 0, 1 / 4, 1 / 2, 1 / 4],
            [0, (b**2 - 2) / (b * (b**2 - 4)), -1 / (4 * (b - 2)), -1 / (2 * b), -1 / (4 * (b + 2))],
            [0, 0, -1 / 4, 0, 1 / 4],
            [0, -1 / (b**2 - 4), 1 / (4 * (b - 2)), 0, -1 / (4 * (b + 2))],
            [
                1 / (b**2 - 1),
                -2 / (b**2 - 4),
                1 / (2 * (b - 1) * (b - 2)),
                0,
                1 / (2 * (b + 1) * (b + 2)),
            ],
            [0, 0, 1 / 4, -1 / 2, 1 / 4],
            [
                -1 / (b**3 - b),
                4 / (b * (b**2 - 4)),
                -1 / (2 * (b - 1) * (b - 2)),
                0,
                1 / (2 * (b + 1) * (b + 2)),
            ],
            [0, 2 / (b * (b**2 - 4)), -1 / (4 * (b - 2)), 1 / (2 * b), -1 / (4 * (b + 2))],
        ]
    )


def bgue_f(d_B: int, t: float | np.ndarray) -> np.ndarray:
    """f_1(t) .. f_8(t) as an (8,) or (8, len(t)) array."""
    t = np.asarray(t, dtype=float)
    b = float(d_B)
    cols = np.stack(
        [
            np.ones_like(t),
            np.exp(-t),
            np.exp(-(2 - 2 / b) * t),
            np.exp(-2 * t),
            np.exp(-(2 + 2 / b) * t),
        ]
    )
    return bgue_coefficients(d_B) @ cols


def make_bgue_spec(n_S: int, hb: HamiltonianBundle, rng: SeededRng) -> BgueSpec:
    """S = sites 0..n_S-1, B1 = next n_S sites, B2 = the rest.

    P_B = 1_{B1} (x) |phi0><phi0|_{B2} with phi0 a seeded random product state.
    """
    n = hb.n_sites
    n_B = n - n_S
    n_B2 = n_B - n_S
    if n_S < 1 or n_B2 < 1:
        raise ValueError(f"need n_S >= 1 and n - 2 n_S >= 1, got n={n}, n_S={n_S}")
    phi0 = random_product_state(n_B2, rng).amplitudes
    proj = np.outer(phi0, phi0.conj())
    # B2 sites are the most significant within B
    P_B = np.kron(proj, np.eye(2**n_S))
    return BgueSpec(n_S=n_S, n_B=n_B, H=hb, P_B=P_B)


@dataclass
class BgueCurves:
    t: np.ndarray
    F_S: np.ndarray
    F_B: np.ndarray
    F_ent: np.ndarray
    F_rot: np.ndarray
    F_S_plus: np.ndarray
    F_S_minus: np.ndarray
    F_B_plus: np.ndarray
    H2: np.ndarray


def bgue_g(spec: BgueSpec) -> np.ndarray:
    """g_1 .. g_12 (index 0 is unused) from full-space traces."""
    H = spec.H.H
    part = SubsystemPartition.contiguous(spec.H.n_sites, spec.n_S)
    P = embed_local(spec.P_B, part, "Abar")
    P_loc = spec.P_B
    PH = P @ H
    TrB_PH = trace_out(PH, part, "A")
    TrB_H = trace_out(H, part, "A")
    TrS_H = trace_out(H, part, "Abar")
    TrS_H2 = TrS_H @ TrS_H
    PTrS = P_loc @ TrS_H
    g = np.zeros(13)
    g[1] = _real_trace(H @ H)
    g[2] = _real_trace(H @ H @ P)
    g[3] = _real_trace(TrB_PH @ TrB_PH)
    g[4] = _real_trace(PH @ PH)
    g[5] = _real_trace(TrB_PH @ TrB_H)
    g[6] = _real_trace(TrB_H @ TrB_H)
    g[7] = _real_trace(TrS_H2)
    g[8] = _real_trace(P_loc @ TrS_H2)
    g[9] = _real_trace(PH) ** 2
    g[10] = _real_trace(PTrS @ PTrS)
    g[11] = _real_trace(PH) * _real_trace(H)
    g[12] = _real_trace(H) ** 2
    return g


def bgue_curves(spec: BgueSpec, t_grid: np.ndarray) -> BgueCurves:
    """Ensemble-averaged F_S, F_B and the ent/rot split in the Brownian GUE model."""
    tr_P = _real_trace(spec.P_B)
    if abs(tr_P - spec.d_S) > 1e-9:
        raise ValueError(f"Tr P_B must equal d_S={spec.d_S}, got {tr_P:.6g}")
    d_S, d_B = float(spec.d_S), float(spec.d_B)
    t = np.asarray(t_grid, dtype=float)
    f = bgue_f(spec.d_B, t)
    g = bgue_g(spec)
    a = 1.0 / (d_S * (d_S**2 - 1))
    b = -1.0 / (d_S**2 * (d_S**2 - 1))

    plus = (
        g[4] / d_S**2 * f[0]
        + (2 * g[2] / d_S + 2 * g[5] / d_S**2) * f[1]
        + 2 * g[3] / d_S**2 * f[2]
        + (4 * g[2] / d_S**2 + 4 * g[5] / d_S) * f[3]
        + (g[1] + g[6] / d_S) * f[4]
        + g[4] / d_S**2 * f[5]
        + (g[1] / d_S + g[6]) * f[6]
        + (2 * g[2] / d_S + 2 * g[5] / d_S**2) * f[7]
    )
    mixed = a * g[3] + b * g[4] + b * g[9] + a * g[10]
    mixed2 = 2 * b * g[3] + 2 * a * g[4] + 2 * a * g[9] + 2 * b * g[10]
    minus = (
        mixed * f[0]
        + (2 * g[5] + 2 * g[8]) / d_S**2 * f[1]
        + mixed2 * f[2]
        + (4 * g[2] + 4 * g[11]) / d_S**2 * f[3]
        + (g[6] + g[7]) / d_S * f[4]
        + mixed * f[5]
        + (g[1] + g[12]) / d_S * f[6]
        + (2 * g[5] + 2 * g[8]) / d_S**2 * f[7]
    )
    H2 = g[2] / d_S**2 * np.exp(-t) + g[1] * (1 - np.exp(-t)) / (d_S * d_B)
    F_S = 2 * plus - 2 * minus
    F_rot = 4 * H2 - 4 * plus
    return BgueCurves(
        t=t,
        F_S=F_S,
        F_B=F_rot + F_S,
        F_ent=F_S,
        F_rot=F_rot,
        F_S_plus=plus,
        F_S_minus=minus,
        F_B_plus=2 * H2 - plus,
        H2=H2,
    )


@dataclass
class BlackHolePoint:
    """Radiation estimator at one time.

    Before the Page time F_R is exponentially small: F_R is None and
    F_R ~ variance * exp(-suppression_exponent).
    """

    t: float
    M: float
    T_H: float
    variance: float
    regime: str
    F_R: float | None
    suppression_exponent: float | None = None

    @property
    def log_F_R(self) -> float:
        if self.variance <= 0:
            return float("-inf")
        if self.F_R is not None:
            return math.log(self.F_R)
        return math.log(self.variance) - self.suppression_exponent


def bh_entropy(spec: BlackHoleSpec, M: float) -> float:
    """Bekenstein-Hawking entropy 4 pi G_N M^2."""
    return 4.0 * math.pi * spec.G_N * M**2


def bh_radiation_qfi(spec: BlackHoleSpec, t: float) -> BlackHolePoint:
    """Closed-form mass, temperature, radiation energy variance and F_R(t)."""
    if not 0 <= t < spec.t_total:
        raise ValueError(f"t must be in [0, {spec.t_total:g}), got {t}")
    x = t / spec.t_total
    M = (spec.M0**3 - t / spec.G_N**2) ** (1.0 / 3.0)
    T_H = 1.0 / (8.0 * math.pi * spec.G_N * M)
    variance = spec.alpha / spec.G_N * -math.log1p(-x)
    S_B = bh_entropy(spec, M)
    S_R = spec.entropy_ratio * (bh_entropy(spec, spec.M0) - S_B)
    if S_R > S_B:
        return BlackHolePoint(t, M, T_H, variance, "post-page", variance)
    return BlackHolePoint(t, M, T_H, variance, "pre-page", None, S_B - S_R)


def bh_page_fraction(spec: BlackHoleSpec) -> float:
    """t_Page / t_total where radiation entropy first equals the hole's."""
    r = spec.entropy_ratio
    mass_sq = r / (1.0 + r)
    return 1.0 - mass_sq**1.5
