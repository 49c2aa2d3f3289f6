"""Exact inference for hybrid probabilistic programs by bit-blasting continuous
densities into weighted Boolean formulas compiled to ordered BDDs."""
from .bdd import BDDStore, WeightMap, node_count, to_dot, wmc
from .core import BoolRv, InferenceContext, OverflowDetected, ZeroEvidenceError
from .fixedpoint import (BitVectorDist, FixedPointFormat, FormatError, add, constant, equals,
                         less_equal, less_than, minus, mux, plus, shift_scale, widen)
from .compiler import (GeneralizedGamma, MixedGamma, compile_exponential, compile_gamma1,
                       compile_general_gamma, compile_mixture, expo1_theta, unif_obs)
from .query import PosteriorTable, expectation, pr, variance
from . import distributions
from .lang import Config, evaluate, parse, run_source

__all__ = [
    "BDDStore", "WeightMap", "node_count", "to_dot", "wmc",
    "BoolRv", "InferenceContext", "OverflowDetected", "ZeroEvidenceError",
    "BitVectorDist", "FixedPointFormat", "FormatError", "add", "constant", "equals",
    "less_equal", "less_than", "minus", "mux", "plus", "shift_scale", "widen",
    "GeneralizedGamma", "MixedGamma", "compile_exponential", "compile_gamma1",
    "compile_general_gamma", "compile_mixture", "expo1_theta", "unif_obs",
    "PosteriorTable", "expectation", "pr", "variance", "distributions",
    "Config", "evaluate", "parse", "run_source",
]
