"""Python interface to the macrocast engine."""

import json

from . import _core
from ._core import (
    ConfigError,
    DataError,
    Error,
    IntegrityError,
    Model,
    NumericalError,
    backtest,
    compare,
    evaluate,
    explain,
    report,
    shapley_exact,
    shapley_sampled,
    synth,
    weights_exponential,
    weights_reciprocal,
)

__version__ = "0.1.0"


def load_config(path):
    """Validated run configuration as a dict (defaults applied, data path absolute)."""
    return json.loads(_core.load_config(str(path)))


def fit(family, x, y, seed=0, **hyperparams):
    """Fit one learner family ("ridge", "random_forest", "gbdt", ...) on arrays."""
    return _core.fit(family, x, y, json.dumps(hyperparams), seed)


__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "IntegrityError",
    "Model",
    "NumericalError",
    "backtest",
    "compare",
    "evaluate",
    "explain",
    "fit",
    "load_config",
    "report",
    "shapley_exact",
    "shapley_sampled",
    "synth",
    "weights_exponential",
    "weights_reciprocal",
]
