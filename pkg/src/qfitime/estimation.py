"""Time estimation from measurement outcomes.

Builds Born-probability tables p_xi(t) on a time grid, estimates t by
maximum likelihood, checks the Cramer-Rao bound and runs the
evolving-versus-equilibrium discrimination protocol.

Usage:
    from qfitime.estimation import likelihood_table, draw_samples, mle

    table = likelihood_table(psi0, hb, partition, None, np.linspace(0, 20, 801))
    samples = draw_samples(psi0, hb, partition, table, t0=10.0, count=50, rng=SeededRng(7))
    result = mle(samples, table)
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
from scipy.interpolate import PchipInterpolator

from .dynamics import evolve, evolve_times
from .fisher import subsystem_cfi
from .hilbert import amplitude_matrix, basis_probabilities, born_sample, partial_trace
from .types import (
    DensityMatrix,
    HamiltonianBundle,
    LikelihoodTable,
    MleResult,
    PureState,
    SampleSet,
    SeededRng,
    SubsystemPartition,
)

logger = logging.getLogger(__name__)

MAX_GRID_SPACING = 0.05
LOG_FLOOR = np.log(1e-300)
REFINE_TOL = 1e-4
LOCAL_MAX_WINDOW = 2.0
DEGENERATE_PER_SAMPLE = 1e-6
NEGATIVE_CLAMP = 1e-12
MIN_TRIALS = 3
DEFAULT_RATIO_THRESHOLD = 4.0
RESOLVABLE_FRACTION = 0.05
ZERO_INFORMATION = 1e-12
MAD_SCALE = 1.4826


def _probabilities(
    psi: PureState,
    partition: SubsystemPartition,
    basis: np.ndarray | None,
) -> np.ndarray:
    if partition.is_full:
        return basis_probabilities(psi, basis)
    if basis is None:
        M = amplitude_matrix(psi, partition, "A")
        return np.sum(np.abs(M) ** 2, axis=1)
    return basis_probabilities(partial_trace(psi, partition, "A"), basis)


def _normalize_column(p: np.ndarray) -> np.ndarray:
    if p.min() < -NEGATIVE_CLAMP:
        raise ValueError(f"negative Born probability {p.min():.3g}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def outcome_probabilities(
    psi0: PureState,
    hb: HamiltonianBundle,
    partition: SubsystemPartition,
    basis: np.ndarray | None,
    t: float,
) -> np.ndarray:
    """Exact p_xi(t) for the kept side A at a single time."""
    return _normalize_column(_probabilities(evolve(hb, psi0, t), partition, basis))


def likelihood_table(
    psi0: PureState,
    hb: HamiltonianBundle,
    partition: SubsystemPartition,
    basis: np.ndarray | None,
    t_grid: Sequence[float],
    max_spacing: float = MAX_GRID_SPACING,
    basis_id: str | None = None,
) -> LikelihoodTable:
    """Tabulate p_xi(t_k) = <xi|rho_A(t_k)|xi> on an increasing grid.

    A grid coarser than max_spacing is accepted with a warning and a
    `coarse_grid` flag in the table metadata.
    """
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or len(times) < 2:
        raise ValueError(f"t_grid needs at least 2 points, got {times.shape}")
    if np.any(np.diff(times) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    d_A = partition.d_A
    if basis is not None and basis.shape != (d_A, d_A):
        raise ValueError(f"basis must be {d_A}x{d_A}, got {basis.shape}")

    traj = evolve_times(hb, psi0, times)
    probs = np.column_stack([_normalize_column(_probabilities(s, partition, basis)) for s in traj.states])

    spacing = float(np.max(np.diff(times)))
    metadata = {
        "model": hb.model,
        "n": hb.n_sites,
        "sites_A": list(partition.sites_A),
        "max_spacing": spacing,
        "coarse_grid": spacing > max_spacing,
    }
    if spacing > max_spacing:
        logger.warning("likelihood grid spacing %.4g exceeds %.4g", spacing, max_spacing)
    return LikelihoodTable(
        t_grid=times,
        probabilities=probs,
        basis_id=basis_id or ("computational" if basis is None else "custom"),
        basis=basis,
        metadata=metadata,
    )


def draw_samples(
    psi0: PureState,
    hb: HamiltonianBundle,
    partition: SubsystemPartition,
    table: LikelihoodTable,
    t0: float,
    count: int,
    rng: SeededRng,
) -> SampleSet:
    """Measure `count` copies of rho_A(t0) in the table's basis."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    p = outcome_probabilities(psi0, hb, partition, table.basis, t0)
    outcomes = rng.generator().choice(len(p), size=count, p=p)
    return SampleSet(outcomes=outcomes, true_t0=float(t0), seed=rng.master_seed)


def sample_copies(rho: DensityMatrix, table: LikelihoodTable, count: int, rng: SeededRng) -> SampleSet:
    """Measure `count` copies of a state of unknown origin in the table's basis."""
    if rho.dim != table.n_outcomes:
        raise ValueError(f"state dimension {rho.dim} does not match table {table.n_outcomes}")
    return born_sample(rho, table.basis, count, rng)


def _log_interpolant(table: LikelihoodTable, observed: np.ndarray) -> PchipInterpolator:
    logp = np.log(np.clip(table.probabilities[observed], np.exp(LOG_FLOOR), None))
    return PchipInterpolator(table.t_grid, logp.T, axis=0)


def mle(
    samples: SampleSet,
    table: LikelihoodTable,
    search_range: tuple[float, float] | None = None,
    refine_tol: float = REFINE_TOL,
) -> MleResult:
    """Maximum-likelihood time from the outcomes in `samples`.

    The log-likelihood sum_i log p_{xi_i}(t) uses monotone cubic
    interpolation of log p. The global maximum is located by a scan over
    the table grid and then refined with a bounded scalar search between
    the neighbouring grid points.
    """
    outcomes = np.asarray(samples.outcomes, dtype=int)
    if outcomes.size == 0:
        raise ValueError("samples must be nonempty")
    if outcomes.min() < 0 or outcomes.max() >= table.n_outcomes:
        raise ValueError(
            f"outcome indices must be in 0..{table.n_outcomes - 1}, "
            f"got {outcomes.min()}..{outcomes.max()}"
        )
    counts = np.bincount(outcomes, minlength=table.n_outcomes)
    observed = np.flatnonzero(counts)
    impossible = observed[np.all(table.probabilities[observed] <= 0.0, axis=1)]
    if impossible.size:
        raise ValueError(
            f"outcome(s) {impossible.tolist()} have zero probability on the whole grid; "
            "samples do not match the likelihood table"
        )

    lo, hi = search_range if search_range is not None else (table.t_grid[0], table.t_grid[-1])
    if not table.t_grid[0] <= lo < hi <= table.t_grid[-1]:
        raise ValueError(
            f"search range ({lo}, {hi}) must lie inside the grid "
            f"[{table.t_grid[0]}, {table.t_grid[-1]}]"
        )
    interp = _log_interpolant(table, observed)
    weights = counts[observed].astype(float)

    def loglik(t: float | np.ndarray) -> float | np.ndarray:
        return interp(t) @ weights

    grid = table.t_grid[(table.t_grid >= lo) & (table.t_grid <= hi)]
    if grid[0] > lo:
        grid = np.concatenate([[lo], grid])
    if grid[-1] < hi:
        grid = np.concatenate([grid, [hi]])
    ell = loglik(grid)
    k = int(np.argmax(ell))

    t_est, ell_best = float(grid[k]), float(ell[k])
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if b > a:
        res = scipy.optimize.minimize_scalar(
            lambda t: -loglik(t), bounds=(a, b), method="bounded", options={"xatol": refine_tol}
        )
        if res.success and -res.fun >= ell_best:
            t_est, ell_best = float(res.x), float(-res.fun)

    interior = (ell[1:-1] >= ell[:-2]) & (ell[1:-1] >= ell[2:])
    peaks = np.flatnonzero(interior) + 1
    for edge in (0, len(ell) - 1):
        if len(ell) > 1 and ell[edge] >= ell[1 if edge == 0 else -2]:
            peaks = np.append(peaks, edge)
    local_maxima = sorted(
        (float(grid[i]), float(ell[i])) for i in peaks if ell[i] >= ell_best - LOCAL_MAX_WINDOW
    )

    degenerate = float(ell.max() - ell.min()) < DEGENERATE_PER_SAMPLE * len(outcomes)
    if degenerate:
        logger.info("flat likelihood over [%.3g, %.3g] with N=%d", lo, hi, len(outcomes))
    score = None if samples.true_t0 is None else (t_est - samples.true_t0) ** 2
    return MleResult(
        t_est=t_est,
        loglik_t=grid,
        loglik=ell,
        local_maxima=local_maxima,
        score=score,
        degenerate=degenerate,
    )


@dataclass
class CramerRaoRow:
    """Empirical MLE variance at one N against the bound 1/(N f(t0))."""

    N: int
    variance: float
    bound: float
    bias: float
    repetitions: int
    degenerate_fraction: float = 0.0
    unbounded: bool = False

    @property
    def ratio(self) -> float:
        if self.unbounded or self.bound == 0:
            return float("nan")
        return self.variance / self.bound

    def as_row(self) -> dict[str, float]:
        return {
            "N": self.N,
            "variance": self.variance,
            "bound": self.bound,
            "ratio": self.ratio,
            "bias": self.bias,
            "repetitions": self.repetitions,
            "degenerate_fraction": self.degenerate_fraction,
            "unbounded": self.unbounded,
        }


def cramer_rao_experiment(
    psi0: PureState,
    hb: HamiltonianBundle,
    partition: SubsystemPartition,
    table: LikelihoodTable,
    t0: float,
    N_list: Sequence[int],
    repetitions: int,
    rng: SeededRng,
    search_range: tuple[float, float] | None = None,
) -> list[CramerRaoRow]:
    """Repeat MLE at each N and compare the spread with 1/(N f(t0)).

    f(t0) is the classical Fisher information of the table's basis. When
    it vanishes the bound is infinite and the row is marked unbounded.
    """
    if repetitions < 2:
        raise ValueError(f"repetitions must be >= 2, got {repetitions}")
    f = subsystem_cfi(evolve(hb, psi0, t0), hb, partition, table.basis)
    unbounded = f < ZERO_INFORMATION
    if unbounded:
        logger.warning("zero Fisher information at t0=%.4g; estimates are unbounded", t0)

    rows = []
    for i, N in enumerate(N_list):
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        estimates = np.empty(repetitions)
        n_degenerate = 0
        for r in range(repetitions):
            samples = draw_samples(psi0, hb, partition, table, t0, N, rng.stream(i).stream(r))
            result = mle(samples, table, search_range)
            estimates[r] = result.t_est
            n_degenerate += result.degenerate
        rows.append(
            CramerRaoRow(
                N=int(N),
                variance=float(np.mean((estimates - t0) ** 2)),
                bound=float("inf") if unbounded else 1.0 / (N * f),
                bias=float(np.mean(estimates) - t0),
                repetitions=repetitions,
                degenerate_fraction=n_degenerate / repetitions,
                unbounded=unbounded,
            )
        )
        logger.info("cramer-rao N=%d: variance %.4g bound %.4g", N, rows[-1].variance, rows[-1].bound)
    return rows


@dataclass
class Discrimination:
    decision: str
    confidence: float
    estimates: np.ndarray
    fisher: float
    predicted_variance: float
    robust_variance: float
    degenerate_trials: int = 0
    details: dict[str, float] = field(default_factory=dict)


def _table_fisher(table: LikelihoodTable, t: float) -> float:
    """CFI of the tabulated distribution from the interpolated dp/dt."""
    interp = PchipInterpolator(table.t_grid, table.probabilities.T, axis=0)
    p = interp(t)
    dp = interp.derivative()(t)
    ok = p > 1e-14
    return float(np.sum(dp[ok] ** 2 / p[ok]))


def discriminate_state(
    copies: Sequence[DensityMatrix],
    table: LikelihoodTable,
    N_per_trial: int,
    trials: int,
    rng: SeededRng,
    search_range: tuple[float, float] | None = None,
    threshold: float = DEFAULT_RATIO_THRESHOLD,
) -> Discrimination:
    """Decide whether the copies come from an evolving state or equilibrium.

    Each trial estimates t from N_per_trial outcomes. The copies are
    called evolving when the estimates cluster with the spread the Fisher
    information predicts, 1/(N f), up to `threshold`, and that spread is
    small against the search range. Trial k measures copies[k % len(copies)].
    """
    if trials < MIN_TRIALS:
        raise ValueError(f"trials must be >= {MIN_TRIALS}, got {trials}")
    if not copies:
        raise ValueError("copies must be nonempty")
    if N_per_trial < 1:
        raise ValueError(f"N_per_trial must be >= 1, got {N_per_trial}")
    lo, hi = search_range if search_range is not None else (table.t_grid[0], table.t_grid[-1])

    estimates = np.empty(trials)
    n_degenerate = 0
    for k in range(trials):
        samples = sample_copies(copies[k % len(copies)], table, N_per_trial, rng.stream(k))
        result = mle(samples, table, (lo, hi))
        estimates[k] = result.t_est
        n_degenerate += result.degenerate

    center = float(np.median(estimates))
    mad = float(np.median(np.abs(estimates - center)))
    robust_var = (MAD_SCALE * mad) ** 2
    f = _table_fisher(table, center)
    predicted = float("inf") if f < ZERO_INFORMATION else 1.0 / (N_per_trial * f)

    resolvable = np.sqrt(predicted) <= RESOLVABLE_FRACTION * (hi - lo)
    consistent = robust_var <= threshold * predicted
    evolving = bool(resolvable and consistent and n_degenerate <= trials // 2)

    if np.isfinite(predicted):
        within = np.abs(estimates - center) <= 3.0 * np.sqrt(predicted)
        agree = float(np.mean(within))
    else:
        agree = 0.0
    confidence = agree if evolving else 1.0 - agree
    logger.info(
        "discrimination: %s (f=%.4g, predicted var %.4g, robust var %.4g)",
        "evolving" if evolving else "equilibrium", f, predicted, robust_var,
    )
    return Discrimination(
        decision="evolving" if evolving else "equilibrium",
        confidence=confidence,
        estimates=estimates,
        fisher=f,
        predicted_variance=predicted,
        robust_variance=robust_var,
        degenerate_trials=n_degenerate,
        details={"center": center, "threshold": threshold},
    )
