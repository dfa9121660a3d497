#!/usr/bin/env python3
import os
import struct
import tempfile
import unittest

import numpy as np
import yaml

from src.utils.grid_io import (GridFormatError, Manifest, read_grid, read_yaml, sha256_file, to_plain, write_curve,
                               write_grid, write_yaml)


class TestGrid(unittest.TestCase):
    """Test cases for HSFG grid files."""

    def setUp(self):
        """Set up test fixtures."""
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, 'field.hsfg')

    def tearDown(self):
        self.tmp.cleanup()

    def test_two_dimensional_grid(self):
        """Test that a 2-D grid keeps its values, origin and step."""
        values = np.arange(12.0).reshape(3, 4) / 7.0
        write_grid(self.path, [-1.0, 0.5], [0.25, 0.125], values)
        origin, step, loaded = read_grid(self.path)
        self.assertEqual(origin, (-1.0, 0.5))
        self.assertEqual(step, (0.25, 0.125))
        self.assertTrue(np.array_equal(loaded, values))

    def test_header_layout(self):
        """Test the magic, version, dimension and counts at fixed offsets."""
        write_grid(self.path, [0.0], [1.0], np.zeros(5))
        with open(self.path, 'rb') as f:
            payload = f.read()
        self.assertEqual(payload[:4], b'HSFG')
        self.assertEqual(struct.unpack_from('<III', payload, 4), (1, 1, 5))
        self.assertEqual(len(payload), 4 + 8 + 4 + 16 + 40)

    def test_header_blocks(self):
        """Test that a 2-D header stores all origins before all steps."""
        write_grid(self.path, [-1.0, 0.5], [0.25, 0.125], np.arange(12.0).reshape(3, 4))
        with open(self.path, 'rb') as f:
            payload = f.read()
        self.assertEqual(struct.unpack_from('<III', payload, 4), (1, 2, 3))
        self.assertEqual(struct.unpack_from('<I', payload, 16), (4,))
        self.assertEqual(struct.unpack_from('<2d', payload, 20), (-1.0, 0.5))
        self.assertEqual(struct.unpack_from('<2d', payload, 36), (0.25, 0.125))
        self.assertEqual(struct.unpack_from('<d', payload, 52), (0.0,))
        self.assertEqual(len(payload), 52 + 8 * 12)

    def test_bad_magic(self):
        """Test that a foreign file is rejected."""
        with open(self.path, 'wb') as f:
            f.write(b'NOPE' + bytes(32))
        with self.assertRaises(GridFormatError):
            read_grid(self.path)

    def test_truncated(self):
        """Test that a short payload is rejected."""
        write_grid(self.path, [0.0], [1.0], np.ones(8))
        with open(self.path, 'rb') as f:
            payload = f.read()
        with open(self.path, 'wb') as f:
            f.write(payload[:-8])
        with self.assertRaises(GridFormatError):
            read_grid(self.path)

    def test_unsupported_version(self):
        """Test that another format version is rejected."""
        write_grid(self.path, [0.0], [1.0], np.ones(2))
        with open(self.path, 'r+b') as f:
            f.seek(4)
            f.write(struct.pack('<I', 9))
        with self.assertRaises(GridFormatError):
            read_grid(self.path)

    def test_axis_mismatch(self):
        """Test that origin and step must match the array rank."""
        with self.assertRaises(GridFormatError):
            write_grid(self.path, [0.0], [1.0], np.zeros((2, 2)))


class TestYamlArtifacts(unittest.TestCase):
    """Test cases for sidecars, curves and the manifest."""

    def setUp(self):
        """Set up test fixtures."""
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def test_to_plain(self):
        """Test that numpy values become YAML builtins."""
        data = to_plain({'a': np.float64(0.5), 'b': (np.int64(3), np.bool_(True)), 'c': np.arange(2)})
        self.assertEqual(data, {'a': 0.5, 'b': [3, True], 'c': [0, 1]})
        self.assertIsInstance(data['a'], float)
        yaml.safe_dump(data)

    def test_sidecar(self):
        """Test a YAML sidecar with numpy content."""
        path = os.path.join(self.dir, 'meta.yml')
        write_yaml(path, {'J': (1, 2), 'alpha': np.float64(1.5)})
        self.assertEqual(read_yaml(path), {'J': [1, 2], 'alpha': 1.5})

    def test_curve(self):
        """Test two-column curve files."""
        path = os.path.join(self.dir, 'ratio.dat')
        write_curve(path, [0.5, 0.25], [1.0, 2.0 / 3.0])
        data = np.loadtxt(path)
        np.testing.assert_array_equal(data, [[0.5, 1.0], [0.25, 2.0 / 3.0]])

    def test_manifest(self):
        """Test checksums, statuses and the header in manifest.yml."""
        path = os.path.join(self.dir, 'field.hsfg')
        write_grid(path, [0.0], [1.0], np.ones(3))
        manifest = Manifest(self.dir, {'seed': 4})
        self.assertEqual(manifest.add(path), 'field.hsfg')
        manifest.status('synth', 'passed')
        written = read_yaml(manifest.write())
        self.assertEqual(written['seed'], 4)
        self.assertEqual(written['artifacts'], {'field.hsfg': sha256_file(path)})
        self.assertEqual(written['statuses'], {'synth': 'passed'})


if __name__ == '__main__':
    unittest.main()
