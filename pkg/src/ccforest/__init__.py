"""Canonical correlation forests."""

from .cca import CcaConfig, CcaResult, cca_oracle, cca_stable
from .data import Dataset, Schema, load_csv, load_schema, make_folds
from .forest import Forest, ForestConfig, default_lambda, train
from .synth import corr_augment, gen_spirals, make_compound

__version__ = "0.1.0"
