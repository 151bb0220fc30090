"""Tensor-diagram calculus and numeric verification for Hessian metrics of
Monge-Ampere potentials."""

__version__ = "0.1.0"
