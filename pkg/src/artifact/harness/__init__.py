"""Experiment harness: configs, Monte Carlo drivers, statistics and reports."""

from .config import ConfigError, ExperimentConfig, FactorSpec, Query, config_hash, load_config
from .experiments import (run_convergence_sweep, run_oracle_smalln, run_sample_paths,
                          run_universality, sample_paths, seed_plan)
from .report import ExperimentReport
