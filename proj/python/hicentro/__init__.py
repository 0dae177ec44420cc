"""Centromere inference from Hi-C contact maps."""

import json
import os

from ._core import (
    ConfigError,
    ContactMap,
    DomainError,
    GenomeSpec,
    LoadError,
    ShapeError,
    StageError,
    TrainingError,
    bin_to_bp,
    block_pearson,
    bp_to_bin,
    euclidean_mean,
    ice_normalize,
    make_reference,
    mmd_to_dirac,
    row_pearson,
    sample_prior,
    simulate_map,
    wasserstein2_to_dirac,
    yeast_genome,
    yeast_small_genome,
)
from ._core import evaluate_samples as _evaluate_samples
from ._core import export_density as _export_density
from ._core import run_experiment as _run_experiment

__all__ = [
    "ConfigError", "ContactMap", "DomainError", "GenomeSpec", "LoadError", "ShapeError", "StageError",
    "TrainingError", "bin_to_bp", "block_pearson", "bp_to_bin", "euclidean_mean", "evaluate_samples",
    "export_density", "ice_normalize", "make_reference", "mmd_to_dirac", "row_pearson", "run_experiment",
    "sample_prior", "simulate_map", "wasserstein2_to_dirac", "yeast_genome", "yeast_small_genome",
]


def evaluate_samples(samples, theta_ref, weights=None):
    """Euclidean mean, per-dimension error, MMD and W2 of samples against theta_ref."""
    return json.loads(_evaluate_samples([list(s) for s in samples], list(weights or []), list(theta_ref)))


def export_density(samples, lower, upper, weights=None, points=512):
    """Per-dimension KDE grids as a list of (x, density, bandwidth)."""
    return _export_density([list(s) for s in samples], list(weights or []), list(lower), list(upper), points)


def run_experiment(config, out_dir="", base_dir=""):
    """Run an experiment from a config dict or a JSON file path; returns the metrics dict."""
    if isinstance(config, (str, os.PathLike)):
        path = os.fspath(config)
        with open(path) as fh:
            config = json.load(fh)
        base_dir = base_dir or os.path.dirname(os.path.abspath(path))
    return json.loads(_run_experiment(json.dumps(config), os.fspath(base_dir), os.fspath(out_dir)))
