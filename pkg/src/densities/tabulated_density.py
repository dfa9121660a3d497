#!/usr/bin/env python3
import logging

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from src.densities.base_density import AdmissibleDensity
from src.utils.grid_io import read_grid

logger = logging.getLogger('stablefield.densities.tabulated')


class TabulatedDensity(AdmissibleDensity):
    """
    Density given as log f on a regular grid of log|ξ_l|.

    The table covers one orthant and is extended evenly to the others.
    Between nodes log f is interpolated cubically in log-log coordinates;
    outside the table the same interpolant extrapolates, which continues
    the boundary power laws.
    """

    kind = 'tabulated'

    def __init__(self, log_values, origin, step, alpha, a_prime, a, path=None):
        log_values = np.asarray(log_values, dtype=float)
        super().__init__(alpha, log_values.ndim, a_prime, a)
        if any(n < 4 for n in log_values.shape):
            raise ValueError("cubic interpolation needs at least 4 nodes per axis, got {}".format(log_values.shape))
        axes = [o + s * np.arange(n) for o, s, n in zip(origin, step, log_values.shape)]
        self._interp = RegularGridInterpolator(axes, log_values, method='cubic', bounds_error=False, fill_value=None)
        self.origin = tuple(float(o) for o in origin)
        self.step = tuple(float(s) for s in step)
        self.shape = log_values.shape
        self.path = path

    @classmethod
    def from_file(cls, path, alpha, a_prime, a):
        """
        Load the table from an HSFG grid.

        Raises:
            GridFormatError: If the file is not a valid grid
        """
        origin, step, values = read_grid(path)
        logger.info("Loaded tabulated density %s with shape %s", path, values.shape)
        return cls(values, origin, step, alpha, a_prime, a, path=path)

    def evaluate(self, xi):
        xi = np.asarray(xi, dtype=float)
        flat = np.abs(xi.reshape(-1, self.d))
        out = np.zeros(flat.shape[0])
        inside = np.all(flat > 0.0, axis=1)
        if np.any(inside):
            out[inside] = np.exp(self._interp(np.log(flat[inside])))
        return out.reshape(xi.shape[:-1])

    def describe(self):
        info = super().describe()
        info.update({'table': self.path, 'origin': list(self.origin), 'step': list(self.step)})
        return info
