"""Classically-instructed remote preparation of secret qubits over an LWE-style
two-regular trapdoor function, at desk scale, with brute-force oracles."""

from .params import ParamSet, paper_params, toy_params

__all__ = ["ParamSet", "paper_params", "toy_params"]
__version__ = "0.1.0"
