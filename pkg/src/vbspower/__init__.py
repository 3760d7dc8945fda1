"""CPU power models for software base stations.

Piecewise regression models, a small from-scratch MLP, a synthetic
measurement-campaign generator and an evaluation harness with a CLI.
"""

from .core import Dataset, ModelFile, ModelKind, Sample, Scheduler
from .regression import CustomRegParams, DefaultRegParams, Variant

__version__ = "0.1.0"

__all__ = [
    "CustomRegParams",
    "Dataset",
    "DefaultRegParams",
    "ModelFile",
    "ModelKind",
    "Sample",
    "Scheduler",
    "Variant",
    "__version__",
]
