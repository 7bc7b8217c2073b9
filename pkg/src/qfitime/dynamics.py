"""Time evolution: spectral unitary evolution, reduced-state derivatives,
Lindblad RK4 integration and exponential-decay fits.

Usage:
    from qfitime.dynamics import evolve, lindblad_rk4
    from qfitime.models import boundary_depolarizing_jumps

    psi_t = evolve(hb, psi0, 5.0)
    spec = boundary_depolarizing_jumps(4)
    traj = lindblad_rk4(spec, rho0, np.linspace(0, 10, 101))
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import scipy.linalg

from .hilbert import amplitude_matrix
from .types import (
    DecayFit,
    DensityMatrix,
    HamiltonianBundle,
    LindbladSpec,
    NumericalError,
    PureState,
    SubsystemPartition,
    Trajectory,
)

logger = logging.getLogger(__name__)

DEFAULT_DT = 0.01
TRACE_DRIFT_TOL = 1e-6
MAX_GAP_SITES = 4
DEFAULT_FIT_FRACTIONS = (0.8, 0.05)
MIN_FIT_POINTS = 4


def _check_state(hb: HamiltonianBundle, psi: PureState) -> None:
    if psi.dim != hb.dim:
        raise ValueError(f"state dimension {psi.dim} does not match Hamiltonian {hb.dim}")


def evolve(hb: HamiltonianBundle, psi0: PureState, t: float) -> PureState:
    """e^{-iHt} psi0 through the cached spectral decomposition."""
    _check_state(hb, psi0)
    if t == 0:
        return psi0
    E, V = hb.spectrum
    c = V.conj().T @ psi0.amplitudes
    amps = V @ (np.exp(-1j * E * t) * c)
    return PureState(psi0.n_sites, amps / np.linalg.norm(amps))


def evolve_times(hb: HamiltonianBundle, psi0: PureState, times: Sequence[float]) -> Trajectory:
    """Evolve one initial state to every time in an increasing grid."""
    _check_state(hb, psi0)
    E, V = hb.spectrum
    c = V.conj().T @ psi0.amplitudes
    states = []
    for t in times:
        if t == 0:
            states.append(psi0)
            continue
        amps = V @ (np.exp(-1j * E * t) * c)
        states.append(PureState(psi0.n_sites, amps / np.linalg.norm(amps)))
    return Trajectory(np.asarray(times, dtype=float), tuple(states), {"model": hb.model})


def reduced_state_and_derivative(
    psi_t: PureState,
    hb: HamiltonianBundle,
    partition: SubsystemPartition,
    keep: str = "A",
) -> tuple[DensityMatrix, np.ndarray]:
    """rho_keep and Tr_other(-i[H, |psi><psi|])."""
    _check_state(hb, psi_t)
    M = amplitude_matrix(psi_t, partition, keep)
    N = amplitude_matrix(hb.H @ psi_t.amplitudes, partition, keep)
    rho = M @ M.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    X = N @ M.conj().T
    drho = -1j * (X - X.conj().T)
    return DensityMatrix(rho.shape[0], rho / np.trace(rho).real), drho


def lindblad_rhs(
    rho: np.ndarray, H: np.ndarray, jumps: Sequence[np.ndarray], gamma: float
) -> np.ndarray:
    """-i[H, rho] + gamma * sum(L rho L^dag - {L^dag L, rho}/2)."""
    out = -1j * (H @ rho - rho @ H)
    for L in jumps:
        LdL = L.conj().T @ L
        out += gamma * (L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL))
    return out


def rk4_step(f: Callable[[np.ndarray], np.ndarray], rho: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(rho)
    k2 = f(rho + 0.5 * dt * k1)
    k3 = f(rho + 0.5 * dt * k2)
    k4 = f(rho + dt * k3)
    return rho + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _stabilize(rho: np.ndarray, t: float) -> np.ndarray:
    if not np.all(np.isfinite(rho)):
        logger.error("non-finite density matrix at t=%.4f", t)
        raise NumericalError(f"non-finite density matrix at t={t:.4f}")
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_DRIFT_TOL:
        logger.error("trace drift %.3g at t=%.4f", tr - 1.0, t)
        raise NumericalError(
            f"trace drift {tr - 1.0:.3g} at t={t:.4f}; reduce the step size"
        )
    rho = rho / tr
    # purity <= 1 means Frobenius norm <= 1
    if np.linalg.norm(rho) > 1.0 + TRACE_DRIFT_TOL:
        logger.error("Frobenius norm %.6f > 1 at t=%.4f", np.linalg.norm(rho), t)
        raise NumericalError(f"density matrix norm exceeded 1 at t={t:.4f}; unstable step")
    return rho


def lindblad_rk4(
    spec: LindbladSpec,
    rho0: DensityMatrix,
    t_grid: Sequence[float],
    dt: float = DEFAULT_DT,
) -> Trajectory:
    """Fixed-step RK4 integration of the Lindblad equation.

    rho0 is the state at t_grid[0]. Each step is re-symmetrized and
    renormalized; trace drift beyond TRACE_DRIFT_TOL aborts with NumericalError.
    """
    if rho0.dim != spec.dim:
        raise ValueError(f"rho0 dimension {rho0.dim} does not match generator {spec.dim}")
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if dt > DEFAULT_DT:
        logger.warning("RK4 step %.4g exceeds default %.4g", dt, DEFAULT_DT)
    times = np.asarray(t_grid, dtype=float)
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("t_grid must be strictly increasing")

    H = spec.H.H

    def f(r: np.ndarray) -> np.ndarray:
        return lindblad_rhs(r, H, spec.jump_operators, spec.gamma)

    rho = rho0.elements.copy()
    t = times[0]
    states = [DensityMatrix(spec.dim, rho.copy())]
    for target in times[1:]:
        while t < target - 1e-12:
            h = min(dt, target - t)
            rho = _stabilize(rk4_step(f, rho, h), t + h)
            t += h
        t = target
        states.append(DensityMatrix(spec.dim, rho.copy()))
    logger.info("lindblad rk4: %d grid points to t=%.3g, dt=%.3g", len(times), times[-1], dt)
    return Trajectory(
        times, tuple(states), {"model": spec.H.model, "gamma": spec.gamma, "dt": dt}
    )


def lindblad_generator(spec: LindbladSpec) -> np.ndarray:
    """Superoperator on column-stacked vec(rho)."""
    d = spec.dim
    eye = np.eye(d)
    H = spec.H.H
    gen = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for L in spec.jump_operators:
        LdL = L.conj().T @ L
        gen += spec.gamma * (
            np.kron(L.conj(), L) - 0.5 * np.kron(eye, LdL) - 0.5 * np.kron(LdL.T, eye)
        )
    return gen


def lindblad_gap(spec: LindbladSpec) -> float:
    """Smallest decay rate -Re(lambda) among nonzero generator eigenvalues."""
    n = spec.H.n_sites
    if n > MAX_GAP_SITES:
        raise ValueError(f"gap only computed for n_A <= {MAX_GAP_SITES}, got {n}")
    w = scipy.linalg.eigvals(lindblad_generator(spec))
    nonzero = w[np.abs(w) > 1e-9]
    return float(-np.max(nonzero.real))


def apply_lindbladian(spec: LindbladSpec, rho: np.ndarray) -> np.ndarray:
    return lindblad_rhs(rho, spec.H.H, spec.jump_operators, spec.gamma)


def fit_exponential_decay(
    times: Sequence[float],
    values: Sequence[float],
    window: tuple[float, float] | None = None,
    fractions: tuple[float, float] = DEFAULT_FIT_FRACTIONS,
) -> DecayFit:
    """Least-squares line through log(y) vs t.

    Without an explicit window, the fit uses the first contiguous run of
    points where y lies between fractions[1] and fractions[0] of y[0]. Later
    points that re-enter the band (revivals, noise floor) are ignored.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is None:
        hi, lo = fractions
        in_band = (y <= hi * y[0]) & (y >= lo * y[0])
        mask = np.zeros_like(in_band)
        if in_band.any():
            start = int(np.argmax(in_band))
            outside = np.flatnonzero(~in_band[start:])
            stop = start + int(outside[0]) if outside.size else len(y)
            mask[start:stop] = True
    else:
        mask = (t >= window[0]) & (t <= window[1])
    if np.count_nonzero(mask) < MIN_FIT_POINTS:
        raise ValueError(
            f"need at least {MIN_FIT_POINTS} points in the fit window, got {np.count_nonzero(mask)}"
        )
    tw, yw = t[mask], y[mask]
    if np.any(yw <= 0):
        raise ValueError("values must be > 0 inside the fit window")
    slope, intercept = np.polyfit(tw, np.log(yw), 1)
    resid = np.log(yw) - (slope * tw + intercept)
    if slope >= 0:
        logger.warning("non-decaying fit: slope %.4g on [%.3g, %.3g]", slope, tw[0], tw[-1])
    return DecayFit(
        rate=float(-slope),
        amplitude=float(np.exp(intercept)),
        fit_window=(float(tw[0]), float(tw[-1])),
        residual=float(np.sqrt(np.mean(resid**2))),
        n_points=len(tw),
    )


SENSITIVITY_FRACTIONS = ((0.8, 0.05), (0.9, 0.1), (0.6, 0.02), (0.5, 0.01))


def fit_window_sensitivity(
    times: Sequence[float],
    values: Sequence[float],
    windows: Sequence[tuple[float, float]] | None = None,
) -> list[DecayFit]:
    """Refit over several windows; windows without enough points are skipped.

    Explicit windows are time intervals; the default family varies the
    fractional thresholds.
    """
    fits: list[DecayFit] = []
    if windows is None:
        for fr in SENSITIVITY_FRACTIONS:
            try:
                fits.append(fit_exponential_decay(times, values, fractions=fr))
            except ValueError as e:
                logger.debug("skipping fractions %s: %s", fr, e)
    else:
        for w in windows:
            try:
                fits.append(fit_exponential_decay(times, values, window=w))
            except ValueError as e:
                logger.debug("skipping window %s: %s", w, e)
    return fits


def rate_spread(fits: Sequence[DecayFit]) -> float:
    """(max - min) / mean of fitted rates."""
    rates = np.array([f.rate for f in fits])
    if len(rates) < 2:
        return 0.0
    return float((rates.max() - rates.min()) / abs(rates.mean()))


def export_csv(
    traj: Trajectory,
    path: str | Path,
    observables: dict[str, Callable[[PureState | DensityMatrix], float]],
) -> None:
    """Write t plus one column per observable, with a commented header."""
    from .resultfile import write_csv

    rows = []
    for t, state in zip(traj.times, traj.states):
        row = {"t": float(t)}
        for name, fn in observables.items():
            row[name] = float(fn(state))
        rows.append(row)
    header = {"columns": "t " + " ".join(observables), **traj.metadata}
    write_csv(path, rows, header=header)
