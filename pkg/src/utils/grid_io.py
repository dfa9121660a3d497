#!/usr/bin/env python3
"""
Artifact persistence: HSFG binary grids, YAML sidecars and reports, curve files
and the run manifest.

HSFG layout (all little-endian):
    b'HSFG' | uint32 version | uint32 d | uint32 counts[d] |
    float64 origin[d] | float64 step[d] | float64 data, row-major
"""
import hashlib
import logging
import os
import struct

import numpy as np
import yaml

logger = logging.getLogger('stablefield.grid_io')

MAGIC = b'HSFG'
FORMAT_VERSION = 1


class GridFormatError(ValueError):
    """Raised when a file is not a readable HSFG grid."""


def to_plain(value):
    """Convert numpy scalars, arrays and tuples into YAML-safe builtins."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def write_grid(path, origin, step, values):
    """
    Write a rectangular lattice of float64 values.

    Args:
        path (str): Output file
        origin (sequence): Per-axis origin
        step (sequence): Per-axis step
        values (numpy.ndarray): Array with one axis per lattice dimension
    """
    values = np.ascontiguousarray(values, dtype='<f8')
    d = values.ndim
    if len(origin) != d or len(step) != d:
        raise GridFormatError("origin/step length does not match the {}-dimensional values".format(d))

    header = [
        MAGIC, struct.pack('<II', FORMAT_VERSION, d), struct.pack('<{}I'.format(d), *values.shape),
        struct.pack('<{}d'.format(d), *(float(o) for o in origin)),
        struct.pack('<{}d'.format(d), *(float(s) for s in step)),
    ]
    with open(path, 'wb') as f:
        f.write(b''.join(header))
        f.write(values.tobytes(order='C'))
    logger.debug("Wrote grid %s with shape %s", path, values.shape)


def read_grid(path):
    """
    Read an HSFG grid.

    Returns:
        tuple: (origin, step, values) with origin/step as tuples of floats

    Raises:
        GridFormatError: On a bad magic, version or truncated payload
    """
    with open(path, 'rb') as f:
        payload = f.read()

    if payload[:4] != MAGIC:
        raise GridFormatError("{} has wrong header".format(path))
    try:
        version, d = struct.unpack_from('<II', payload, 4)
        if version != FORMAT_VERSION:
            raise GridFormatError("{} has unsupported version {}".format(path, version))
        offset = 12
        counts = struct.unpack_from('<{}I'.format(d), payload, offset)
        offset += 4 * d
        origin = struct.unpack_from('<{}d'.format(d), payload, offset)
        step = struct.unpack_from('<{}d'.format(d), payload, offset + 8 * d)
        offset += 16 * d
    except struct.error as e:
        raise GridFormatError("{} has a truncated header: {}".format(path, str(e))) from e

    expected = 8 * int(np.prod(counts))
    if len(payload) - offset != expected:
        raise GridFormatError("{} holds {} data bytes, expected {}".format(path, len(payload) - offset, expected))

    values = np.frombuffer(payload, dtype='<f8', offset=offset).reshape(counts).astype(float)
    return tuple(origin), tuple(step), values


def write_yaml(path, data):
    """Dump a mapping in canonical block style."""
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(to_plain(data), f, sort_keys=True, default_flow_style=False)


def read_yaml(path):
    with open(path, 'r', encoding='utf-8') as f:
        return yaml.safe_load(f) or {}


def write_curve(path, x, y):
    """Two-column plot data."""
    np.savetxt(path, np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)]), fmt='%.17g')


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


class Manifest:
    """Record of the artifacts and subcommand statuses of one run."""

    def __init__(self, output_dir, header=None):
        self.output_dir = output_dir
        self.header = dict(header or {})
        self.artifacts = {}
        self.statuses = {}

    def add(self, path):
        """Register a written file by its name relative to the output directory."""
        name = os.path.relpath(path, self.output_dir)
        self.artifacts[name] = sha256_file(path)
        logger.info("Wrote %s", path)
        return name

    def status(self, subcommand, value):
        self.statuses[subcommand] = value

    def write(self):
        path = os.path.join(self.output_dir, 'manifest.yml')
        write_yaml(path, {
            **self.header,
            'artifacts': dict(sorted(self.artifacts.items())),
            'statuses': dict(self.statuses),
        })
        return path
