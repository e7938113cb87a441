"""Numerical checks for gradient-descent training of overparameterized nets.

Four experiment families share one dataset type:

- ``relu_dynamics``: shallow ReLU nets, Gram-matrix flow, convergence bounds
- ``linear_landscape``: deep linear nets and rank-constrained optima
- ``sigmoid_rank``: wide sigmoid layers, feature rank, zero-loss fits
- ``experiments``: the config-driven harness behind the ``gramflow`` CLI
"""

from gramflow.dataset import (
    Dataset,
    DatasetError,
    DatasetValidationError,
    ValidationReport,
    generate_sphere_dataset,
    load_dataset,
    save_dataset,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DatasetError",
    "DatasetValidationError",
    "ValidationReport",
    "generate_sphere_dataset",
    "load_dataset",
    "save_dataset",
    "validate",
    "__version__",
]
