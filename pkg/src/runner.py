#!/usr/bin/env python3
"""
Subcommand dispatch for a configured run.

Every artifact lands in `output_dir`: grids as `<name>.hsfg` with a `<name>.yml`
sidecar, reports as `<name>.report.yml`, plot curves as `<name>.<curve>.dat`,
and `manifest.yml` listing versions, seeds, checksums and statuses.
"""
import hashlib
import logging
import os

import numpy as np
import scipy

from src import __version__
from src.field_synthesizer import (LatticeSpec, Synthesizer, TruncationPlan, bands, check_differentiable,
                                   derivative_field, frame_reconstruction_error, synthesize_band,
                                   synthesize_full, tail_report)
from src.lemma_oracles import lemma_oracles
from src.lepage_coefficients import coefficient_source, envelope_check
from src.psi_kernel import KernelBank, QuadratureSpec, verify_localization
from src.regularity_verifier import (directional_scan, infinity_scan, ratio_curves, rectangular_n0,
                                     rectangular_scan)
from src.spectral_density import check_admissibility, get_spectral_density
from src.utils.config import SUBCOMMANDS, dump_config
from src.utils.grid_io import Manifest, write_curve, write_grid, write_yaml

logger = logging.getLogger('stablefield.runner')


def default_lattice(d):
    return LatticeSpec.centred(1.0, 2.0 ** -6 if d == 1 else 2.0 ** -4, d)


class Run:
    """State shared by the subcommands of one run."""

    def __init__(self, config, workers=None):
        self.config = config
        self.workers = int(workers or config['workers'])
        self.d = int(config['d'])
        self.alpha = float(config['alpha'])
        self.output_dir = config['output_dir']
        self._density = None
        self._bank = None
        canonical = dump_config(config).encode('utf-8')
        self.manifest = Manifest(self.output_dir, {
            'package': 'stablefield',
            'version': __version__,
            'numpy': np.__version__,
            'scipy': scipy.__version__,
            'seed': config['seed'],
            'config_sha256': hashlib.sha256(canonical).hexdigest(),
        })

    @property
    def density(self):
        if self._density is None:
            self._density = get_spectral_density(self.config)
        return self._density

    def plan(self):
        truncation = self.config['truncation']
        nodes = self.config['quadrature']['nodes_per_half_band']
        default = TruncationPlan.default(self.d)
        return TruncationPlan(
            j_abs_max=default.j_abs_max if truncation['j_abs_max'] is None else truncation['j_abs_max'],
            k_radius=truncation['k_radius'],
            table_margin=truncation['table_margin'],
            table_step=truncation['table_step'],
            quad=QuadratureSpec(nodes) if nodes else QuadratureSpec.default(self.d),
        )

    @property
    def bank(self):
        if self._bank is None:
            plan = self.plan()
            self._bank = KernelBank(self.density, self.alpha, plan.table_radius, plan.table_step, plan.quad,
                                    self.workers)
        return self._bank

    def source(self, seed):
        return coefficient_source(self.alpha, seed, self.d, self.config['epsilon_phi'], self.config['M'])

    def synthesizer(self, seed):
        return Synthesizer(self.source(seed), self.density, self.plan(), self.workers, self.bank)

    def lattice(self):
        lattice = self.config['lattice']
        if lattice['counts'] is None:
            return default_lattice(self.d)
        return LatticeSpec(lattice['origin'], lattice['step'], lattice['counts'])

    def path(self, name):
        return os.path.join(self.output_dir, name)

    def save_grid(self, name, realization, extra=None):
        path = self.path(name + '.hsfg')
        write_grid(path, realization.grid.origin, realization.grid.step, realization.values)
        self.manifest.add(path)
        sidecar = self.path(name + '.yml')
        write_yaml(sidecar, {**realization.meta, **(extra or {})})
        self.manifest.add(sidecar)

    def save_report(self, name, report):
        path = self.path(name + '.report.yml')
        write_yaml(path, report)
        self.manifest.add(path)

    def save_curves(self, name, curves):
        for curve, (x, y) in sorted(curves.items()):
            path = self.path('{}.{}.dat'.format(name, curve))
            write_curve(path, x, y)
            self.manifest.add(path)


def _label(eta):
    return ''.join(str(e) for e in eta)


def run_synth(run):
    synth = run.synthesizer(run.config['seed'])
    realization = synthesize_full(synth, run.lattice())
    run.save_grid('field', realization, {'tail': tail_report(synth)})
    return True


def run_bands(run):
    synth = run.synthesizer(run.config['seed'])
    grid = run.lattice()
    for eta in bands(run.d):
        realization = synthesize_band(synth, eta, grid)
        label = _label(eta)
        run.save_grid('band_' + label, realization, {'tail': {label: synth.plan.tail_report[label]}})
    return True


def _derivative_index(run):
    B = run.config['scan']['B']
    return tuple(B) if B is not None else (1,) + (0,) * (run.d - 1)


def run_derivs(run):
    """∂^b on every band where η_l b_l < a_l holds, and on the full field when b < a."""
    b = _derivative_index(run)
    synth = run.synthesizer(run.config['seed'])
    grid = run.lattice()
    a = run.density.a
    skipped = []
    for eta in bands(run.d) + [None]:
        label = 'full' if eta is None else _label(eta)
        try:
            check_differentiable(b, eta, a)
        except ValueError as e:
            logger.info("Skipping derivative on %s: %s", label, str(e))
            skipped.append({'band': label, 'reason': str(e)})
            continue
        run.save_grid('deriv_' + label, derivative_field(synth, b, eta, grid))
    run.save_report('derivs', {'b': list(b), 'a': list(a), 'skipped': skipped})
    return True


def run_verify_kernels(run):
    density = run.density
    admissibility = check_admissibility(density, run.alpha, workers=run.workers, raise_on_violation=False)
    J_set = [(j,) + (0,) * (run.d - 1) for j in range(4)]
    localization = verify_localization(J_set, (0,) * run.d, 1.0, density, run.alpha)
    run.save_report('kernels', {
        'density': density.describe(),
        'admissibility': admissibility.to_dict(),
        'localization': localization.to_dict(),
    })
    return admissibility.passed and localization.passed


def run_verify_coeffs(run):
    delta = run.config['scan']['delta']
    checks = []
    for seed in run.config['scan']['seeds']:
        source = run.source(seed)
        entry = envelope_check(source, delta=delta)
        entry['seed'] = seed
        entry['truncation_bound'] = float(source.truncation_bound((0,) * run.d))
        checks.append(entry)
    run.save_report('coeffs', {'coefficients': run.source(run.config['seed']).describe(), 'checks': checks})
    return all(c['bounded'] for c in checks)


def scan_lattice(d, T, levels, reach):
    """Lattice over [-T, T + reach T / 2]^d with step T 2^-levels."""
    step = T * 2.0 ** -levels
    count = int(round((2.0 * T + reach * T / 2.0) / step)) + 1
    return LatticeSpec([-T] * d, [step] * d, [count] * d)


def run_verify_regularity(run):
    scan = run.config['scan']
    density = run.density
    T, levels, delta = scan['T'], scan['levels'], scan['delta']
    eta = tuple(scan['band']) if scan['band'] is not None else None
    B = _derivative_index(run)
    n = scan['n'] if scan['n'] is not None else rectangular_n0(density.a)
    grid = scan_lattice(run.d, T, levels, max(sum(B), n))

    synths, realizations = [], []
    for seed in scan['seeds']:
        synth = run.synthesizer(seed)
        synths.append(synth)
        realizations.append(synthesize_full(synth, grid) if eta is None else synthesize_band(synth, eta, grid))

    reports = {
        'directional': directional_scan(realizations, B, T, density.a, run.alpha, delta, eta, levels,
                                        workers=run.workers),
        'rectangular': rectangular_scan(realizations, n, T, density.a, run.alpha, delta, eta, levels,
                                        workers=run.workers),
        'infinity': infinity_scan(synths, run.alpha, density.a_prime, delta, eta, shells=scan['shells']),
    }
    for kind, report in reports.items():
        run.save_report('regularity_' + kind, report.to_dict())
        run.save_curves('regularity_' + kind, ratio_curves(report))
    return all(r.verdict == 'bounded-trend' for r in reports.values())


def run_verify_lemmas(run):
    report = lemma_oracles(workers=run.workers)
    run.save_report('lemmas', report.to_dict())
    return report.passed


def run_frame_check(run):
    if run.d != 1:
        logger.warning("frame-check is one-dimensional; skipped for d=%s", run.d)
        return True
    levels = min(run.config['scan']['levels'], 6)
    errors = frame_reconstruction_error(1.0, levels, run.density, run.alpha)
    decreasing = all(b < a for a, b in zip(errors[:-1], errors[1:]))
    run.save_report('frame', {'t': 1.0, 'errors': errors, 'decreasing': decreasing})
    run.save_curves('frame', {'error': (np.arange(1, levels + 1), np.array(errors))})
    return decreasing


HANDLERS = {
    'synth': run_synth,
    'bands': run_bands,
    'derivs': run_derivs,
    'verify-kernels': run_verify_kernels,
    'verify-coeffs': run_verify_coeffs,
    'verify-regularity': run_verify_regularity,
    'verify-lemmas': run_verify_lemmas,
    'frame-check': run_frame_check,
}


def run(config, subcommands=None, workers=None):
    """
    Execute subcommands and write the manifest.

    Args:
        config (dict): Validated configuration
        subcommands (list): Names to run; None runs config['scans']
        workers (int): Overrides config['workers']

    Returns:
        int: 0 when every subcommand completed and passed, 1 otherwise
    """
    selected = list(config['scans'] if subcommands is None else subcommands)
    for name in selected:
        if name not in SUBCOMMANDS:
            raise ValueError("Unknown subcommand: {}".format(name))
    os.makedirs(config['output_dir'], exist_ok=True)
    state = Run(config, workers)
    status = 0
    for name in selected:
        logger.info("Running %s", name)
        try:
            passed = HANDLERS[name](state)
        except Exception as e:
            logger.error("Subcommand %s failed: %s", name, str(e))
            state.manifest.status(name, 'error: {}'.format(str(e)))
            status = 1
            continue
        state.manifest.status(name, 'passed' if passed else 'failed')
        if not passed:
            logger.warning("Subcommand %s completed with failed checks", name)
            status = 1
    path = state.manifest.write()
    logger.info("Manifest written to %s", path)
    return status
