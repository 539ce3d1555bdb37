"""Gaussian process regression with knowledge scores for trustworthy prediction."""

__version__ = "0.1.0"

from .errors import DegenerateError, FitError, GPTrustError, InputError, NumericalError
from .gpr import Dataset, FitOptions, GprModel, condition, fit, load_model, predict, save_model
from .kernels import RBF, Linear, LocallyPeriodic, Periodic, Product, Sum, parse_kernel
from .knowledge import KnowledgeScore, knowledge_profile, knowledge_score, knowledge_values

__all__ = [
    "DegenerateError",
    "FitError",
    "GPTrustError",
    "InputError",
    "NumericalError",
    "Dataset",
    "FitOptions",
    "GprModel",
    "condition",
    "fit",
    "load_model",
    "predict",
    "save_model",
    "RBF",
    "Linear",
    "LocallyPeriodic",
    "Periodic",
    "Product",
    "Sum",
    "parse_kernel",
    "KnowledgeScore",
    "knowledge_profile",
    "knowledge_score",
    "knowledge_values",
]
