"""Ground-truth benchmark for local feature attributions under input noise."""

from . import datagen, explainers, harness, models, scoring
from .datagen import Dataset, EpisodicProcessSpec, NoiseSpec, gen_process, gen_toy, perturb, split_grouped
from .explainers import ExplainerConfig, Explanation, explain
from .harness import DatasetSpec, ExperimentPlan, ResultRecord, run_noise_sweep, run_sanity_eval_noise, run_sanity_train_noise
from .models import ModelConfig, TrainedModel, fit
from .scoring import ScoreReport, infidelity, r2, score

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DatasetSpec",
    "EpisodicProcessSpec",
    "ExperimentPlan",
    "ExplainerConfig",
    "Explanation",
    "ModelConfig",
    "NoiseSpec",
    "ResultRecord",
    "ScoreReport",
    "TrainedModel",
    "datagen",
    "explain",
    "explainers",
    "fit",
    "gen_process",
    "gen_toy",
    "harness",
    "infidelity",
    "models",
    "perturb",
    "r2",
    "run_noise_sweep",
    "run_sanity_eval_noise",
    "run_sanity_train_noise",
    "score",
    "scoring",
    "split_grouped",
]
