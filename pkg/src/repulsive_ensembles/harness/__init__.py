"""Configuration, synthetic datasets, builtin recipes and the command-line interface."""
from .config import ExperimentConfig, load_config, parse_config
from .datasets import Dataset, gen_classification_2d, gen_regression_1d
from .experiment import ExperimentResult, load_csv, load_moments, load_summary, run_experiment
from .recipes import RECIPES, list_recipes, recipe_config

__all__ = [
    "ExperimentConfig", "load_config", "parse_config",
    "Dataset", "gen_classification_2d", "gen_regression_1d",
    "ExperimentResult", "load_csv", "load_moments", "load_summary", "run_experiment",
    "RECIPES", "list_recipes", "recipe_config",
]
