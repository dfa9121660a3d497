#!/usr/bin/env python3
import importlib
import logging

import numpy as np

from src.densities.base_density import AdmissibleDensity

logger = logging.getLogger('stablefield.densities.callable')


def resolve_target(target):
    """
    Import a function named 'package.module:function'.

    Raises:
        ValueError: If the target is malformed or cannot be imported
    """
    module_name, sep, attr = str(target).partition(':')
    if not sep or not module_name or not attr:
        raise ValueError("density target must look like 'module:function', got '{}'".format(target))
    try:
        module = importlib.import_module(module_name)
        fn = getattr(module, attr)
    except (ImportError, AttributeError) as e:
        raise ValueError("Cannot load density target '{}': {}".format(target, str(e))) from e
    if not callable(fn):
        raise ValueError("density target '{}' is not callable".format(target))
    return fn


class CallableDensity(AdmissibleDensity):
    """User-supplied f; partials come from nested central differences."""

    kind = 'callable'

    def __init__(self, fn, alpha, d, a_prime, a, target=None):
        """
        Initialize the density.

        Args:
            fn (callable): Maps points of shape (..., d) to values of shape (...)
            alpha (float): Stability parameter
            d (int): Dimension
            a_prime (float): Near-origin exponent
            a (sequence): Far-field exponents
            target (str): Import path, kept for provenance
        """
        super().__init__(alpha, d, a_prime, a)
        self.fn = fn
        self.target = target

    @classmethod
    def from_target(cls, target, alpha, d, a_prime, a):
        logger.info("Loading density function %s", target)
        return cls(resolve_target(target), alpha, d, a_prime, a, target=target)

    def evaluate(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.asarray(self.fn(xi), dtype=float).reshape(xi.shape[:-1])

    def describe(self):
        info = super().describe()
        info['target'] = self.target
        return info
