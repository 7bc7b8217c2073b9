"""Named experiments: config, task fan-out, resumable runs and summaries.

Each experiment id maps to a defaults dictionary, a task list and a
stateless worker. run() executes the tasks on a thread pool; the calling
thread is the only writer, appending finished rows to a JSON-lines journal
next to the output so an interrupted run resumes where it stopped.

Usage:
    from qfitime.experiments import ExperimentConfig, run, summarize

    config = ExperimentConfig("qfi-scan", {"n": [8], "samples": 10})
    bundle = run(config)
    summary = summarize(bundle)
"""

from __future__ import annotations

import json
import logging
import math
import threading
import time
from collections import defaultdict
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy.stats

from . import analytic, estimation
from .dynamics import (
    evolve,
    evolve_times,
    fit_exponential_decay,
    fit_window_sensitivity,
    lindblad_gap,
    lindblad_rk4,
    rate_spread,
)
from .fisher import energy_variance, lindblad_qfi_series, subsystem_cfi, subsystem_qfi
from .hilbert import (
    amplitude_matrix,
    haar_state,
    partial_trace,
    random_product_state,
    von_neumann_entropy,
)
from .models import (
    DELTA_XXZ,
    G_CHAOTIC,
    H_CHAOTIC,
    MODEL_BUILDERS,
    boundary_depolarizing_jumps,
    build_model,
    split_hamiltonian,
)
from .resultfile import ResultBundle, append_journal, read_journal, save_bundle
from .types import (
    BlackHoleSpec,
    DensityMatrix,
    HamiltonianBundle,
    PauliTerm,
    PureState,
    SeededRng,
    SubsystemPartition,
)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 1234
MAX_N = 12
MAX_LINDBLAD_SITES = 7
SATURATION_WINDOW = (15.0, 20.0)
LIST_PARAMS = ("n", "n_A", "N", "n_R", "n_Abar", "d_exponents")

_CHAIN = {"model": "mixed_field_ising", "g": G_CHAOTIC, "h": H_CHAOTIC, "delta": DELTA_XXZ,
          "boundary": "periodic"}


@dataclass
class ExperimentConfig:
    """One experiment run. params are merged over the experiment defaults."""

    experiment: str
    params: dict[str, Any] = field(default_factory=dict)
    master_seed: int = DEFAULT_SEED
    threads: int = 1
    output: Path | None = None
    paper_scale: bool = False

    def __post_init__(self) -> None:
        spec = get_experiment(self.experiment)
        self.params = validate_params(spec, self.params)
        if self.paper_scale and spec.count_key:
            self.params[spec.count_key] = spec.paper_count
        if self.threads < 1:
            raise ValueError(f"config.threads: must be >= 1, got {self.threads}")
        if self.output is not None:
            self.output = Path(self.output)

    def echo(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "seed": self.master_seed,
            "threads": self.threads,
            "paper_scale": self.paper_scale,
            "params": dict(self.params),
        }


@dataclass(frozen=True)
class Task:
    key: str
    params: dict[str, Any]


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    defaults: dict[str, Any]
    tasks: Callable[[ExperimentConfig], list[Task]]
    work: Callable[[ExperimentConfig, Task], list[dict[str, Any]]]
    count_key: str | None = None
    paper_count: int | None = None
    check: Callable[[dict[str, Any]], None] | None = None


# -- shared immutable inputs ------------------------------------------------

_cache: dict[tuple, Any] = {}
_cache_lock = threading.Lock()


def _shared(key: tuple, factory: Callable[[], Any]) -> Any:
    with _cache_lock:
        if key in _cache:
            return _cache[key]
    value = factory()
    with _cache_lock:
        return _cache.setdefault(key, value)


def _model_kwargs(params: dict[str, Any]) -> dict[str, Any]:
    name = params["model"]
    if name == "mixed_field_ising":
        return {"g": params["g"], "h": params["h"], "boundary": params["boundary"]}
    if name == "tfi":
        return {"g": params["g"], "boundary": params["boundary"]}
    return {"delta": params["delta"], "boundary": params["boundary"]}


def _model_key(params: dict[str, Any]) -> tuple:
    return (params["model"], *sorted(_model_kwargs(params).items()))


def chain(params: dict[str, Any], n: int) -> HamiltonianBundle:
    """Model from the config parameters, built once per (model, n)."""
    kwargs = _model_kwargs(params)
    key = ("chain", n, *_model_key(params))
    return _shared(key, lambda: build_model(params["model"], n, **kwargs))


def _split(params: dict[str, Any], n: int, n_A: int) -> HamiltonianBundle:
    key = ("split", n, n_A, *_model_key(params))
    return _shared(
        key, lambda: split_hamiltonian(chain(params, n), SubsystemPartition.contiguous(n, n_A))
    )


def _t_grid(params: dict[str, Any]) -> np.ndarray:
    return np.linspace(params.get("t_min", 0.0), params["t_max"], params["t_points"])


def _subsystems(params: dict[str, Any], n: int) -> list[int]:
    return list(params["n_A"]) or list(range(1, n))


def qubit_benchmark() -> tuple[HamiltonianBundle, PureState, np.ndarray]:
    """H = Z on one qubit, |+> initial state, X-basis measurement."""
    Z = np.diag([1.0, -1.0]).astype(complex)
    hb = HamiltonianBundle(1, Z, (PauliTerm(1.0, ((0, "Z"),)),), model="qubit")
    plus = PureState(1, np.array([1.0, 1.0]) / np.sqrt(2.0))
    basis = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)
    return hb, plus, basis


# -- qfi-scan / xxz-scan ----------------------------------------------------

def _scan_tasks(config: ExperimentConfig) -> list[Task]:
    p = config.params
    return [
        Task(f"n={n}/sample={s}", {"n": n, "sample": s})
        for n in p["n"]
        for s in range(p["samples"])
    ]


def _scan_work(config: ExperimentConfig, task: Task) -> list[dict[str, Any]]:
    p = config.params
    n, sample = task.params["n"], task.params["sample"]
    hb = chain(p, n)
    rng = SeededRng(config.master_seed, n).stream(sample)
    psi0 = random_product_state(n, rng)
    traj = evolve_times(hb, psi0, _t_grid(p))
    rows = []
    for t, psi in zip(traj.times, traj.states):
        F_full = 4.0 * energy_variance(psi, hb)
        for n_A in _subsystems(p, n):
            rep = subsystem_qfi(psi, hb, SubsystemPartition.contiguous(n, n_A))
            rows.append({"n": n, "n_A": n_A, "sample": sample, "seed": config.master_seed,
                         "t": float(t), **rep.as_row(), "F_full": F_full})
    return rows


# -- lindblad ---------------------------------------------------------------

def _lindblad_tasks(config: ExperimentConfig) -> list[Task]:
    p = config.params
    return [Task(f"n_A={k}/sample={s}", {"n_A": k, "sample": s})
            for k in p["n_A"] for s in range(p["samples"])]


def _lindblad_work(config: ExperimentConfig, task: Task) -> list[dict[str, Any]]:
    p = config.params
    n_A, sample = task.params["n_A"], task.params["sample"]
    spec = boundary_depolarizing_jumps(n_A, gamma=p["gamma"], g=p["g"], h=p["h"])
    gap = lindblad_gap(spec) if n_A <= 4 else float("nan")
    rng = SeededRng(config.master_seed, n_A).stream(sample)
    rho0 = random_product_state(n_A, rng).density_matrix()
    traj = lindblad_rk4(spec, rho0, _t_grid(p), dt=p["dt"])
    F_Q = lindblad_qfi_series(traj, spec)
    return [
        {"n_A": n_A, "sample": sample, "seed": config.master_seed, "t": float(t),
         "S": von_neumann_entropy(rho), "S_max": n_A * math.log(2.0),
         "purity": rho.purity(), "F_Q": float(f), "gap": gap}
        for t, rho, f in zip(traj.times, traj.states, F_Q)
    ]


# -- haar-sat ---------------------------------------------------------------

def _sample_tasks(config: ExperimentConfig) -> list[Task]:
    return [Task(f"sample={s}", {"sample": s}) for s in range(config.params["samples"])]


def _haar_work(config: ExperimentConfig, task: Task) -> list[dict[str, Any]]:
    p = config.params
    n, sample = p["n"], task.params["sample"]
    psi = haar_state(n, SeededRng(config.master_seed, n).stream(sample))
    rows = []
    for n_A in _subsystems(p, n):
        hb = _split(p, n, n_A)
        sat = _shared(
            ("haar-sat", n, n_A, *_model_key(p)), lambda hb=hb: analytic.haar_saturation_fa(hb)
        )
        rep = subsystem_qfi(psi, hb, hb.partition)
        exact = sat.F_S if sat.side_S == "A" else sat.F_B
        rows.append({"n": n, "n_A": n_A, "sample": sample, "seed": config.master_seed,
                     "F_A": rep.F_A, "F_ent": rep.F_ent, "F_rot": rep.F_rot,
                     "F_A_exact": exact, "F_A_pred": sat.for_side("A"), "c": sat.c_constant})
    return rows


# -- cfi-scan ---------------------------------------------------------------

def _cfi_work(config: ExperimentConfig, task: Task) -> list[dict[str, Any]]:
    p = config.params
    n, sample = task.params["n"], task.params["sample"]
    hb = chain(p, n)
    psi0 = random_product_state(n, SeededRng(config.master_seed, n).stream(sample))
    traj = evolve_times(hb, psi0, _t_grid(p))
    sizes = list(p["n_A"]) or [n]
    rows = []
    for n_A in sizes:
        part = SubsystemPartition.contiguous(n, n_A)
        pred = _shared(
            ("cfi-sat", n, n_A, *_model_key(p)), lambda part=part: analytic.cfi_saturation(hb, part)
        )
        f_pred = pred.full if part.is_full else pred.subsystem
        for t, psi in zip(traj.times, traj.states):
            rows.append({"n": n, "n_A": n_A, "sample": sample, "seed": config.master_seed,
                         "t": float(t), "f_comp": subsystem_cfi(psi, hb, part),
                         "f_pred": f_pred, "d_Abar": part.d_Abar, "kappa": pred.kappa})
    return rows


# -- mle --------------------------------------------------------------------

def _estimation_setup(config: ExperimentConfig):
    """(hb, psi0, partition, table) shared by all mle / discriminate tasks."""
    p = config.params

    def build():
        if p["model"] == "qubit":
            hb, psi0, basis = qubit_benchmark()
            part = SubsystemPartition(1, (0,))
        else:
            n = p["n"]
            hb = chain(p, n)
            psi0 = random_product_state(n, SeededRng(config.master_seed, n))
            part = SubsystemPartition.contiguous(n, p["n_A"] or n)
            basis = None
        table = estimation.likelihood_table(psi0, hb, part, basis, _t_grid(p))
        return hb, psi0, part, table

    key = ("estimation", config.experiment, config.master_seed, json.dumps(p, sort_keys=True))
    return _shared(key, build)


def _search_range(p: dict[str, Any]) -> tuple[float, float] | None:
    return tuple(p["search"]) if p["search"] else None


def _mle_tasks(config: ExperimentConfig) -> list[Task]:
    return [Task(f"N={N}", {"N": N, "index": i}) for i, N in enumerate(config.params["N"])]


def _mle_work(config: ExperimentConfig, task: Task) -> list[dict[str, Any]]:
    p = config.params
    hb, psi0, part, table = _estimation_setup(config)
    N, index = task.params["N"], task.params["index"]
    rng = SeededRng(config.master_seed, 1000 + index)
    (row,) = estimation.cramer_rao_experiment(
        psi0, hb, part, table, p["t0"], [N], p["repetitions"], rng, _search_range(p)
    )
    example = estimation.mle(
        estimation.draw_samples(psi0, hb, part, table, p["t0"], N, rng.stream(10**6)),
        table,
        _search_range(p),
    )
    return [{"kind": "cramer_rao", "seed": config.master_seed, "t0": p["t0"], **row.as_row()},
            {"kind": "example", "seed": config.master_seed, "t0": p["t0"], "N": N,
             "t_est": example.t_est, "error": example.t_est - p["t0"],
             "degenerate": example.degenerate, "local_maxima": example.local_maxima}]


# -- discriminate -----------------------------------------------------------

def _discriminate_tasks(config: ExperimentConfig) -> list[Task]:
    return [Task(f"run={r}", {"run": r}) for r in range(config.params["runs"])]


def _discriminate_work(config: ExperimentConfig, task: Task) -> list[dict[str, Any]]:
    p = config.params
    hb, psi0, part, table = _estimation_setup(config)
    if p["source"] == "equilibrium":
        copy = DensityMatrix.maximally_mixed(part.d_A)
        expected = "equilibrium"
    else:
        copy = partial_trace(evolve(hb, psi0, p["t0"]), part, "A")
        expected = "evolving"
    run_id = task.params["run"]
    result = estimation.discriminate_state(
        [copy], table, p["N_per_trial"], p["trials"],
        SeededRng(config.master_seed, 2000).stream(run_id),
        _search_range(p), p["threshold"],
    )
    return [{"run": run_id, "seed": config.master_seed, "source": p["source"],
             "decision": result.decision, "correct": result.decision == expected,
             "confidence": result.confidence, "fisher": result.fisher,
             "predicted_variance": result.predicted_variance,
             "robust_variance": result.robust_variance,
             "degenerate_trials": result.degenerate_trials}]


# -- bgue / tracedist / fidelity / blackhole --------------------------------

def _single_task(config: ExperimentConfig) -> list[Task]:
    return [Task("all", {})]


def _bgue_work(config: ExperimentConfig, task: Task) -> list[dict[str, Any]]:
    p = config.params
    spec = analytic.make_bgue_spec(p["n_S"], chain(p, p["n"]), SeededRng(config.master_seed))
    c = analytic.bgue_curves(spec, _t_grid(p))
    return [
        {"t": float(c.t[k]), "d_S": spec.d_S, "d_B": spec.d_B, "F_S": float(c.F_S[k]),
         "F_B": float(c.F_B[k]), "F_ent": float(c.F_ent[k]), "F_rot": float(c.F_rot[k]),
         "F_S_plus": float(c.F_S_plus[k]), "F_S_minus": float(c.F_S_minus[k])}
        for k in range(len(c.t))
    ]


def _tracedist_tasks(config: ExperimentConfig) -> list[Task]:
    return [Task("closed", {})] + [
        Task(f"n_Abar={k}", {"n_Abar": k}) for k in config.params["n_Abar"]
    ]


def _tracedist_work(config: ExperimentConfig, task: Task) -> list[dict[str, Any]]:
    p = config.params
    if task.key == "closed":
        rows = [{"kind": "full", "d": 2**e, "TD": analytic.trace_distance_full(2**e)}
                for e in p["d_exponents"]]
        rows.append({"kind": "full", "d": math.inf, "TD": analytic.TD_INFINITE})
        return rows
    n, n_Abar = p["n"], task.params["n_Abar"]
    part = SubsystemPartition.contiguous(n, n - n_Abar)
    root = SeededRng(config.master_seed, 3000 + n_Abar)
    td = np.empty(p["samples"])
    first = np.empty(p["samples"])
    for s in range(p["samples"]):
        psi = haar_state(n, root.stream(s))
        td[s] = analytic.sampled_trace_distance(psi, part)
        first[s] = float(np.sum(np.abs(amplitude_matrix(psi, part)[0]) ** 2))
    d = 2**n
    ks = scipy.stats.kstest(first, lambda x: analytic.outcome_cdf(x, d, 2**n_Abar))
    return [{"kind": "sub", "n": n, "n_Abar": n_Abar, "seed": config.master_seed,
             "TD_pred": analytic.trace_distance_sub(d, 2**n_Abar),
             "TD_limit": analytic.trace_distance_sub_limit(2**n_Abar),
             "TD_mean": float(td.mean()), "TD_stderr": float(td.std(ddof=1) / np.sqrt(len(td))),
             "ks_pvalue": float(ks.pvalue), "samples": p["samples"]}]


def _fidelity_work(config: ExperimentConfig, task: Task) -> list[dict[str, Any]]:
    p = config.params
    n, sample = p["n"], task.params["sample"]
    hb = chain(p, n)
    psi = haar_state(n, SeededRng(config.master_seed, n).stream(sample))
    rows = []
    for n_R in p["n_R"] or range(1, n):
        measured, predicted = analytic.holevo_fidelity(psi, hb, SubsystemPartition.contiguous(n, n_R))
        rows.append({"n": n, "n_R": n_R, "sample": sample, "seed": config.master_seed,
                     "F_H": measured, "F_H_pred": predicted})
    return rows


def _blackhole_work(config: ExperimentConfig, task: Task) -> list[dict[str, Any]]:
    p = config.params
    spec = BlackHoleSpec(p["M0"], p["G_N"], p["alpha"], p["entropy_ratio"])
    rows = []
    for t in np.linspace(0.0, spec.t_total, p["points"], endpoint=False):
        pt = analytic.bh_radiation_qfi(spec, float(t))
        rows.append({"t": pt.t, "t_frac": pt.t / spec.t_total, "M": pt.M, "T_H": pt.T_H,
                     "variance": pt.variance, "regime": pt.regime, "log_F_R": pt.log_F_R,
                     "t_page_frac": analytic.bh_page_fraction(spec)})
    return rows


# -- validation -------------------------------------------------------------

def _check_sizes(p: dict[str, Any], n_key: str = "n") -> None:
    sizes = p[n_key] if isinstance(p[n_key], list) else [p[n_key]]
    for n in sizes:
        if not 2 <= n <= MAX_N:
            raise ValueError(f"config.params.{n_key}: must be 2..{MAX_N}, got {n}")
    n_A = p.get("n_A") or []
    for k in n_A if isinstance(n_A, list) else [n_A]:
        if not 1 <= k <= min(sizes):
            raise ValueError(f"config.params.n_A: must be 1..{min(sizes)}, got {k}")


def _check_chain_model(p: dict[str, Any]) -> None:
    if p["model"] not in MODEL_BUILDERS:
        raise ValueError(
            f"config.params.model: expected one of {sorted(MODEL_BUILDERS)}, got {p['model']!r}"
        )


def _check_scan(p: dict[str, Any]) -> None:
    _check_chain_model(p)
    _check_sizes(p)
    for k in p["n_A"]:
        if k >= min(p["n"]):
            raise ValueError(f"config.params.n_A: subsystem must be smaller than n, got {k}")


def _check_lindblad(p: dict[str, Any]) -> None:
    for k in p["n_A"]:
        if not 2 <= k <= MAX_LINDBLAD_SITES:
            raise ValueError(f"config.params.n_A: must be 2..{MAX_LINDBLAD_SITES}, got {k}")
    if p["gamma"] <= 0:
        raise ValueError(f"config.params.gamma: must be > 0, got {p['gamma']}")


def _check_estimation(p: dict[str, Any]) -> None:
    if p["model"] != "qubit":
        _check_chain_model(p)
        _check_sizes(p)
    if not p.get("t_min", 0.0) <= p["t0"] <= p["t_max"]:
        raise ValueError(f"config.params.t0: must lie in the time grid, got {p['t0']}")
    if p.get("source", "evolved") not in ("evolved", "equilibrium"):
        raise ValueError(f"config.params.source: expected 'evolved' or 'equilibrium', got {p['source']!r}")


def _check_bgue(p: dict[str, Any]) -> None:
    _check_chain_model(p)
    _check_sizes(p)
    if p["n"] - 2 * p["n_S"] < 1:
        raise ValueError(f"config.params.n_S: need n - 2 n_S >= 1, got n={p['n']}, n_S={p['n_S']}")


def _check_tracedist(p: dict[str, Any]) -> None:
    _check_sizes(p)
    for k in p["n_Abar"]:
        if not 1 <= k < p["n"]:
            raise ValueError(f"config.params.n_Abar: must be 1..{p['n'] - 1}, got {k}")


def _check_scan_single(p: dict[str, Any]) -> None:
    _check_chain_model(p)
    _check_sizes(p)
    for k in p["n_A"]:
        if k >= p["n"]:
            raise ValueError(f"config.params.n_A: subsystem must be smaller than n, got {k}")


def _check_cfi(p: dict[str, Any]) -> None:
    _check_chain_model(p)
    _check_sizes(p)


def _check_fidelity(p: dict[str, Any]) -> None:
    _check_chain_model(p)
    _check_sizes(p)
    for k in p["n_R"]:
        if not 1 <= k < p["n"]:
            raise ValueError(f"config.params.n_R: must be 1..{p['n'] - 1}, got {k}")


def _coerce(path: str, value: Any, default: Any, name: str) -> Any:
    if name in LIST_PARAMS and isinstance(default, list):
        if not isinstance(value, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise ValueError(f"{path}: expected list of integers, got {value!r}")
        return list(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValueError(f"{path}: expected integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValueError(f"{path}: expected number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValueError(f"{path}: expected string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ValueError(f"{path}: expected list of numbers, got {value!r}")
        return [float(v) for v in value]
    return value


def validate_params(spec: Experiment, params: dict[str, Any]) -> dict[str, Any]:
    """Merge params over the defaults with type and range checks."""
    if not isinstance(params, dict):
        raise ValueError(f"config.params: expected object, got {type(params).__name__}")
    merged = json.loads(json.dumps(spec.defaults))
    for key, value in params.items():
        path = f"config.params.{key}"
        if key not in spec.defaults:
            raise ValueError(f"{path}: unknown parameter for {spec.name}")
        merged[key] = _coerce(path, value, spec.defaults[key], key)
    for key in ("samples", "repetitions", "runs", "trials", "t_points", "points", "N_per_trial"):
        if key in merged and merged[key] < 1:
            raise ValueError(f"config.params.{key}: must be >= 1, got {merged[key]}")
    if spec.check is not None:
        spec.check(merged)
    return merged


_SCAN_DEFAULTS = {**_CHAIN, "n": [8], "n_A": [], "t_max": 20.0, "t_points": 41, "samples": 50}

EXPERIMENTS: dict[str, Experiment] = {
    e.name: e
    for e in [
        Experiment("qfi-scan", "subsystem QFI time series for random product states",
                   _SCAN_DEFAULTS, _scan_tasks, _scan_work, "samples", 200, _check_scan),
        Experiment("xxz-scan", "subsystem QFI time series for the XXZ chain",
                   {**_SCAN_DEFAULTS, "model": "xxz"}, _scan_tasks, _scan_work, "samples", 200,
                   _check_scan),
        Experiment("lindblad", "boundary-depolarized chain: entropy and QFI decay",
                   {"g": G_CHAOTIC, "h": H_CHAOTIC, "gamma": 1.0, "n_A": [4], "t_max": 30.0,
                    "t_points": 301, "dt": 0.01, "samples": 1},
                   _lindblad_tasks, _lindblad_work, "samples", 1, _check_lindblad),
        Experiment("haar-sat", "subsystem QFI of Haar states against the saturation formula",
                   {**_CHAIN, "n": 10, "n_A": [], "samples": 20},
                   _sample_tasks, _haar_work, "samples", 100, _check_scan_single),
        Experiment("cfi-scan", "computational-basis CFI at late times",
                   {**_CHAIN, "n": [6, 8, 10], "n_A": [], "t_min": 15.0, "t_max": 20.0,
                    "t_points": 10, "samples": 20},
                   _scan_tasks, _cfi_work, "samples", 400, _check_cfi),
        Experiment("mle", "maximum-likelihood time estimation and the Cramer-Rao bound",
                   {**_CHAIN, "model": "qubit", "n": 9, "n_A": 0, "t0": 0.4, "N": [1000],
                    "repetitions": 200, "t_min": 0.0, "t_max": math.pi / 2, "t_points": 64,
                    "search": []},
                   _mle_tasks, _mle_work, "repetitions", 200, _check_estimation),
        Experiment("discriminate", "evolving versus equilibrium from measured copies",
                   {**_CHAIN, "n": 8, "n_A": 0, "t0": 5.0, "source": "evolved",
                    "N_per_trial": 50, "trials": 10, "runs": 20, "t_min": 0.0, "t_max": 12.0,
                    "t_points": 601, "threshold": estimation.DEFAULT_RATIO_THRESHOLD,
                    "search": []},
                   _discriminate_tasks, _discriminate_work, "runs", 20, _check_estimation),
        Experiment("bgue", "Brownian GUE subsystem QFI curves",
                   {**_CHAIN, "n_S": 3, "n": 9, "t_max": 10.0, "t_points": 101},
                   _single_task, _bgue_work, None, None, _check_bgue),
        Experiment("tracedist", "trace distance closed forms and Haar Monte Carlo",
                   {"d_exponents": list(range(1, 11)), "n": 8, "n_Abar": [3], "samples": 1000},
                   _tracedist_tasks, _tracedist_work, "samples", 10_000, _check_tracedist),
        Experiment("fidelity", "Holevo fidelity of radiation subsystems",
                   {**_CHAIN, "n": 10, "n_R": [], "samples": 20},
                   _sample_tasks, _fidelity_work, "samples", 50, _check_fidelity),
        Experiment("blackhole", "radiation time estimator of an evaporating black hole",
                   {"M0": 10.0, "G_N": 1.0, "alpha": 1.0, "entropy_ratio": 1.48, "points": 50},
                   _single_task, _blackhole_work),
    ]
}


def get_experiment(name: str) -> Experiment:
    spec = EXPERIMENTS.get(name)
    if spec is None:
        raise ValueError(
            f"config.experiment: unknown experiment {name!r}, expected one of {sorted(EXPERIMENTS)}"
        )
    return spec


# -- config files -----------------------------------------------------------

_TOP_LEVEL = {"experiment": str, "seed": int, "threads": int, "output": str, "paper_scale": bool,
              "params": dict}


def read_config(path: str | Path) -> dict[str, Any]:
    """Load a JSON config document and check its top-level fields."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"config: invalid JSON in {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ValueError(f"config: expected an object at the top level of {path}")
    for key, value in doc.items():
        kind = _TOP_LEVEL.get(key)
        if kind is None:
            raise ValueError(f"config.{key}: unknown field")
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            raise ValueError(f"config.{key}: expected {kind.__name__}, got {value!r}")
    return doc


def resolve_setting(cli_value: Any, env_value: str | None, file_value: Any, default: Any,
                    name: str) -> Any:
    """CLI flag > environment variable > config file > built-in default."""
    if cli_value is not None:
        return cli_value
    if env_value not in (None, ""):
        try:
            return int(env_value)
        except ValueError:
            raise ValueError(f"{name}: expected integer in environment, got {env_value!r}") from None
    if file_value is not None:
        return file_value
    return default


# -- running ----------------------------------------------------------------

def _journal_path(output: Path | None) -> Path | None:
    if output is None:
        return None
    return output.with_name(output.name + ".journal")


def _resume(journal: Path, echo: dict[str, Any]) -> dict[str, list[dict[str, Any]]]:
    records = read_journal(journal)
    if not records or records[0].get("_config") != json.loads(json.dumps(echo)):
        if records:
            logger.warning("journal %s belongs to a different config; starting over", journal)
        journal.unlink(missing_ok=True)
        append_journal(journal, [{"_config": echo}])
        return {}
    pending: dict[str, list[dict[str, Any]]] = defaultdict(list)
    finished: dict[str, list[dict[str, Any]]] = {}
    for rec in records[1:]:
        if "_done" in rec:
            finished[rec["_done"]] = pending.pop(rec["_done"], [])
        elif "task" in rec:
            pending[rec["task"]].append(rec)
    return finished


def run(config: ExperimentConfig, resume: bool = True) -> ResultBundle:
    """Execute every task of the experiment and collect the rows in task order.

    With an output path, finished tasks are journaled as they complete and
    skipped on the next run of the same config.
    """
    spec = get_experiment(config.experiment)
    tasks = spec.tasks(config)
    echo = config.echo()
    journal = _journal_path(config.output)
    results: dict[str, list[dict[str, Any]]] = {}
    if journal is not None:
        journal.parent.mkdir(parents=True, exist_ok=True)
        if not resume:
            journal.unlink(missing_ok=True)
        results = _resume(journal, echo)
    pending = [t for t in tasks if t.key not in results]
    if results:
        logger.info("resuming %s: %d of %d tasks already done", spec.name, len(results), len(tasks))

    started = time.time()
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        futures = {pool.submit(spec.work, config, task): task for task in pending}
        try:
            for k, future in enumerate(as_completed(futures), 1):
                task = futures[future]
                rows = [{**row, "task": task.key} for row in future.result()]
                results[task.key] = rows
                if journal is not None:
                    append_journal(journal, rows + [{"_done": task.key}])
                logger.info("%s task %s done (%d/%d)", spec.name, task.key, k, len(pending))
        except BaseException:
            pool.shutdown(wait=False, cancel_futures=True)
            raise

    rows = [row for task in tasks for row in results[task.key]]
    bundle = ResultBundle(
        experiment=spec.name,
        config=echo,
        rows=rows,
        metadata={
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
            "elapsed_s": round(time.time() - started, 3),
            "tasks": len(tasks),
            "resumed_tasks": len(tasks) - len(pending),
        },
    )
    if config.output is not None:
        save_bundle(bundle, config.output)
        journal.unlink(missing_ok=True)
    return bundle


# -- summaries --------------------------------------------------------------

@dataclass
class Summary:
    experiment: str
    rows: list[dict[str, Any]]
    notes: dict[str, Any] = field(default_factory=dict)


def reduce_values(values: Any, reduction: str = "mean") -> tuple[float, float]:
    """(center, standard error); the median's error uses the normal-theory factor."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values to reduce")
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
    if reduction == "mean":
        return float(v.mean()), se
    if reduction == "median":
        return float(np.median(v)), se * math.sqrt(math.pi / 2)
    raise ValueError(f"reduction must be 'mean' or 'median', got {reduction!r}")


def reduce_series(
    rows: list[dict[str, Any]], value: str, by: tuple[str, ...], reduction: str = "mean"
) -> list[dict[str, Any]]:
    """Reduce `value` over samples for each distinct key in `by`."""
    groups: dict[tuple, list[float]] = defaultdict(list)
    for row in rows:
        groups[tuple(row[k] for k in by)].append(row[value])
    out = []
    for key in sorted(groups):
        center, se = reduce_values(groups[key], reduction)
        out.append({**dict(zip(by, key)), value: center, f"{value}_stderr": se,
                    "count": len(groups[key])})
    return out


def _window_times(rows: list[dict[str, Any]], window: tuple[float, float]) -> set[float]:
    times = sorted({row["t"] for row in rows})
    chosen = {t for t in times if window[0] <= t <= window[1]}
    if not chosen:
        chosen = set(times[-max(1, len(times) // 4):])
        logger.warning("no times in window [%g, %g]; using the last %d grid times",
                       window[0], window[1], len(chosen))
    return chosen


def _per_sample(rows: list[dict[str, Any]], value: str, window: set[float]) -> list[float]:
    """Window average of `value` for each sample."""
    acc: dict[Any, list[float]] = defaultdict(list)
    for row in rows:
        if row["t"] in window:
            acc[row["sample"]].append(row[value])
    return [float(np.mean(v)) for _, v in sorted(acc.items())]


def _group(rows: list[dict[str, Any]], *keys: str) -> dict[tuple, list[dict[str, Any]]]:
    groups: dict[tuple, list[dict[str, Any]]] = defaultdict(list)
    for row in rows:
        groups[tuple(row[k] for k in keys)].append(row)
    return dict(sorted(groups.items()))


def _summarize_scan(bundle: ResultBundle, reduction: str, window: tuple[float, float]) -> Summary:
    params = bundle.config["params"]
    out = []
    for (n, n_A), rows in _group(bundle.rows, "n", "n_A").items():
        times = _window_times(rows, window)
        F_A, se = reduce_values(_per_sample(rows, "F_A", times), reduction)
        F_rot, _ = reduce_values(_per_sample(rows, "F_rot", times), reduction)
        f_comp, _ = reduce_values(_per_sample(rows, "f_comp", times), reduction)
        pred = analytic.haar_saturation_fa(_split(params, n, n_A)).for_side("A")
        out.append({"n": n, "n_A": n_A, "x": 2 * n_A - n, "F_A_sat": F_A, "F_A_sat_stderr": se,
                    "log_F_A": math.log(F_A) if F_A > 0 else float("-inf"),
                    "log_F_A_per_site": math.log(F_A / n_A) if F_A > 0 else float("-inf"),
                    "rot_fraction": F_rot / F_A if F_A > 0 else float("nan"),
                    "f_comp_sat": f_comp, "F_A_pred": pred,
                    "ratio_to_pred": F_A / pred if pred > 0 else float("nan")})
    notes: dict[str, Any] = {"window": list(window), "collapse_slope_expected": math.log(2.0)}
    collapse = [r for r in out if 2 * r["n_A"] < r["n"] and math.isfinite(r["log_F_A"])]
    if len({r["x"] for r in collapse}) >= 2:
        x = [r["x"] for r in collapse]
        # F_A ~ n_A 2^x: the per-site slope is log 2, the raw slope carries the n_A factor
        notes["collapse_slope"] = float(np.polyfit(x, [r["log_F_A"] for r in collapse], 1)[0])
        notes["collapse_slope_per_site"] = float(
            np.polyfit(x, [r["log_F_A_per_site"] for r in collapse], 1)[0]
        )
    return Summary(bundle.experiment, out, notes)


def _summarize_lindblad(bundle: ResultBundle, reduction: str, window: tuple[float, float]) -> Summary:
    out = []
    for (n_A,), rows in _group(bundle.rows, "n_A").items():
        F = reduce_series(rows, "F_Q", ("t",), reduction)
        S = reduce_series(rows, "S", ("t",), reduction)
        t = np.array([r["t"] for r in F])
        F_mean = np.array([r["F_Q"] for r in F])
        late = max(1, len(S) // 10)
        S_late = float(np.mean([r["S"] for r in S[-late:]]))
        S_max = rows[0]["S_max"]
        gap = float(rows[0]["gap"])
        row = {"n_A": n_A, "S_late": S_late, "S_max": S_max, "S_ratio": S_late / S_max, "gap": gap,
               "rate": float("nan"), "rate_over_2gap": float("nan"), "rate_spread": float("nan")}
        try:
            fit_window = (2.0 / gap, 6.0 / gap) if math.isfinite(gap) and gap > 0 else None
            fit = fit_exponential_decay(t, F_mean, window=fit_window)
            row.update(rate=fit.rate, fit_start=fit.fit_window[0], fit_end=fit.fit_window[1])
            if math.isfinite(gap):
                row["rate_over_2gap"] = fit.rate / (2.0 * gap)
            fits = fit_window_sensitivity(t, F_mean)
            if fits:
                row["rate_spread"] = rate_spread(fits)
        except ValueError as e:
            logger.warning("decay fit failed for n_A=%d: %s", n_A, e)
        out.append(row)
    return Summary(bundle.experiment, out)


def _summarize_haar(bundle: ResultBundle, reduction: str, window: tuple[float, float]) -> Summary:
    out = []
    for (n, n_A), rows in _group(bundle.rows, "n", "n_A").items():
        F_A, se = reduce_values([r["F_A"] for r in rows], reduction)
        out.append({"n": n, "n_A": n_A, "F_A": F_A, "F_A_stderr": se,
                    "F_A_exact": rows[0]["F_A_exact"], "F_A_pred": rows[0]["F_A_pred"],
                    "c": rows[0]["c"]})
    return Summary(bundle.experiment, out)


def _summarize_cfi(bundle: ResultBundle, reduction: str, window: tuple[float, float]) -> Summary:
    out = []
    for (n, n_A), rows in _group(bundle.rows, "n", "n_A").items():
        f, se = reduce_values(_per_sample(rows, "f_comp", _window_times(rows, window)), reduction)
        f_pred = rows[0]["f_pred"]
        out.append({"n": n, "n_A": n_A, "d_Abar": rows[0]["d_Abar"], "f_comp": f,
                    "f_comp_stderr": se, "f_pred": f_pred, "kappa": rows[0]["kappa"],
                    "ratio_to_pred": f / f_pred if f_pred > 0 else float("nan")})
    notes: dict[str, Any] = {}
    full = [r for r in out if r["n_A"] == r["n"]]
    if len(full) >= 2:
        slope, intercept = np.polyfit([r["n"] for r in full], [r["f_comp"] for r in full], 1)
        notes.update(full_slope=float(slope), full_intercept=float(intercept))
    return Summary(bundle.experiment, out, notes)


def _summarize_mle(bundle: ResultBundle, reduction: str, window: tuple[float, float]) -> Summary:
    out = [{k: r[k] for k in ("N", "variance", "bound", "ratio", "bias", "unbounded")}
           for r in bundle.rows if r.get("kind") == "cramer_rao"]
    notes: dict[str, Any] = {}
    if len(out) >= 2:
        notes["variance_ratios"] = [b["variance"] / a["variance"] for a, b in zip(out, out[1:])]
    return Summary(bundle.experiment, out, notes)


def _summarize_discriminate(bundle: ResultBundle, reduction: str,
                            window: tuple[float, float]) -> Summary:
    rows = bundle.rows
    evolving = sum(r["decision"] == "evolving" for r in rows)
    out = [{"source": rows[0]["source"] if rows else "-", "runs": len(rows),
            "evolving": evolving, "equilibrium": len(rows) - evolving,
            "accuracy": float(np.mean([r["correct"] for r in rows])) if rows else float("nan"),
            "mean_confidence": float(np.mean([r["confidence"] for r in rows])) if rows else float("nan")}]
    return Summary(bundle.experiment, out)


def _summarize_fidelity(bundle: ResultBundle, reduction: str, window: tuple[float, float]) -> Summary:
    out = []
    for (n, n_R), rows in _group(bundle.rows, "n", "n_R").items():
        F_H, se = reduce_values([r["F_H"] for r in rows], reduction)
        out.append({"n": n, "n_R": n_R, "F_H": F_H, "F_H_stderr": se, "F_H_pred": rows[0]["F_H_pred"]})
    return Summary(bundle.experiment, out)


def _passthrough(bundle: ResultBundle, reduction: str, window: tuple[float, float]) -> Summary:
    return Summary(bundle.experiment, [{k: v for k, v in r.items() if k != "task"} for r in bundle.rows])


_SUMMARIZERS = {
    "qfi-scan": _summarize_scan,
    "xxz-scan": _summarize_scan,
    "lindblad": _summarize_lindblad,
    "haar-sat": _summarize_haar,
    "cfi-scan": _summarize_cfi,
    "mle": _summarize_mle,
    "discriminate": _summarize_discriminate,
    "fidelity": _summarize_fidelity,
    "bgue": _passthrough,
    "tracedist": _passthrough,
    "blackhole": _passthrough,
}


def summarize(
    bundle: ResultBundle,
    reduction: str = "mean",
    window: tuple[float, float] = SATURATION_WINDOW,
) -> Summary:
    """Reduce a bundle over samples; saturation values average over `window`."""
    if reduction not in ("mean", "median"):
        raise ValueError(f"reduction must be 'mean' or 'median', got {reduction!r}")
    summarizer = _SUMMARIZERS.get(bundle.experiment)
    if summarizer is None:
        raise ValueError(f"no summary for experiment {bundle.experiment!r}")
    return summarizer(bundle, reduction, window)
