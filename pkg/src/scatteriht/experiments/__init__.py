"""Seeded numerical studies and the ``scatter`` command line."""
from .config import (
    DESK, EXPERIMENT_IDS, PAPER, ExperimentConfig, load_config, preset, realization_rng,
    realization_seed,
)
from .models import ScattererModel, build_model, central_slice
from .runners import (
    RunResult, check_success_ordering, run_coherence_vs_directions, run_coherence_vs_sparsity,
    run_convergence_comparison, run_experiment, run_model_reconstruction,
    run_single_scatterer_curves, run_success_rate, wilson_interval,
)
