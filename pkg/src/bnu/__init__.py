"""Bayesian nonparametric unmixing of hyperspectral images.

The number of endmembers is inferred jointly with their spectra and the
abundances, using an Indian Buffet Process prior over band activations and a
tempered Gibbs sampler.
"""

from .estimator import BNUnmixer
from .exceptions import ContractError, InputError, InvalidParameterError, ParseError
from .model import HyperConfig, ModelState, ObservedImage
from .sampler import UnmixingResult, run
from .simkit import SceneSpec, compose_scene

__all__ = [
    "BNUnmixer",
    "ContractError",
    "HyperConfig",
    "InputError",
    "InvalidParameterError",
    "ModelState",
    "ObservedImage",
    "ParseError",
    "SceneSpec",
    "UnmixingResult",
    "compose_scene",
    "run",
]

__version__ = "0.1.0"
