from .ensembles import EnsembleBuilder, flat_schmidt_state
from .estimation import cramer_rao_experiment, discriminate_state, likelihood_table, mle
from .experiments import ExperimentConfig, run, summarize
from .fisher import qfi, subsystem_cfi, subsystem_qfi
from .hilbert import haar_state, partial_trace, random_product_state, schmidt
from .models import build_mixed_field_ising, build_model, split_hamiltonian
from .resultfile import ResultBundle, load_bundle, save_bundle
from .types import (
    DensityMatrix,
    FisherReport,
    HamiltonianBundle,
    NumericalError,
    PureState,
    SeededRng,
    SubsystemPartition,
)

__all__ = [
    "PureState",
    "DensityMatrix",
    "SubsystemPartition",
    "SeededRng",
    "HamiltonianBundle",
    "FisherReport",
    "NumericalError",
    "partial_trace",
    "schmidt",
    "haar_state",
    "random_product_state",
    "build_model",
    "build_mixed_field_ising",
    "split_hamiltonian",
    "qfi",
    "subsystem_qfi",
    "subsystem_cfi",
    "likelihood_table",
    "mle",
    "cramer_rao_experiment",
    "discriminate_state",
    "EnsembleBuilder",
    "flat_schmidt_state",
    "ExperimentConfig",
    "run",
    "summarize",
    "ResultBundle",
    "save_bundle",
    "load_bundle",
]
