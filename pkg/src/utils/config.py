#!/usr/bin/env python3
import copy
import logging
import os

import yaml

logger = logging.getLogger('stablefield.config')

DEFAULT_CONFIG_PATH = 'stablefield.yml'

SUBCOMMANDS = ('synth', 'bands', 'derivs', 'verify-kernels', 'verify-coeffs', 'verify-regularity',
               'verify-lemmas', 'frame-check')

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')

# Default configuration
DEFAULT_CONFIG = {
    'density': {
        'kind': 'builtin',
        'u': 0.5,
        'v': None,
        'a_prime': None,
        'a': None,
        'target': None,
        'table': None,
    },
    'alpha': 2.0,
    'd': 1,
    'seed': 0,
    'epsilon_phi': 0.5,
    'M': None,
    'truncation': {
        'j_abs_max': None,
        'k_radius': 12,
        'table_margin': 2.0,
        'table_step': None,
    },
    'quadrature': {
        'nodes_per_half_band': None,
    },
    'lattice': {
        'origin': None,
        'step': None,
        'counts': None,
    },
    'scans': [],
    'scan': {
        'T': 1.0,
        'levels': 8,
        'seeds': [0],
        'delta': 0.1,
        'B': None,
        'n': None,
        'shells': 7,
        'band': None,
    },
    'workers': 1,
    'output_dir': 'stablefield-out',
    'logging': {
        'level': 'INFO',
    },
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending dotted field."""

    def __init__(self, field, message):
        super().__init__("{}: {}".format(field, message))
        self.field = field


def resolve_config_path(config_path=None):
    """CLI argument, else STABLEFIELD_CONFIG, else stablefield.yml."""
    return config_path or os.environ.get('STABLEFIELD_CONFIG') or DEFAULT_CONFIG_PATH


def get_default_config():
    """
    Get default configuration.

    Returns:
        dict: A deep copy of DEFAULT_CONFIG
    """
    return copy.deepcopy(DEFAULT_CONFIG)


def deep_merge(target, source):
    """
    Deep merge two dictionaries. Keys from source override keys from target
    if they have the same name. If both values are dictionaries, they are
    merged recursively.

    Args:
        target (dict): Target dictionary to merge into
        source (dict): Source dictionary to merge from
    """
    for key, value in source.items():
        if key in target and isinstance(target[key], dict) and isinstance(value, dict):
            deep_merge(target[key], value)
        else:
            target[key] = value


def parse_config(text):
    """
    Parse YAML text, overlay it on the defaults and validate.

    Raises:
        ConfigError: If the text is not a YAML mapping or fails validation
    """
    try:
        loaded = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError('<file>', "failed to parse configuration: {}".format(str(e))) from e
    if loaded is None:
        loaded = {}
    if not isinstance(loaded, dict):
        raise ConfigError('<file>', "top level must be a mapping")
    _reject_unknown(loaded, DEFAULT_CONFIG, '')
    config = get_default_config()
    deep_merge(config, loaded)
    return validate_config(config)


def load_config(config_path=None):
    """
    Load configuration from file.

    Args:
        config_path (str): Path to config file; see resolve_config_path

    Returns:
        dict: Validated configuration

    Raises:
        ConfigError: If the file cannot be parsed or is invalid
    """
    path = resolve_config_path(config_path)
    if not os.path.exists(path):
        logger.warning("Configuration file %s not found, using defaults", path)
        return validate_config(get_default_config())
    with open(path, 'r', encoding='utf-8') as f:
        config = parse_config(f.read())
    logger.info("Loaded configuration from %s", path)
    return config


def dump_config(config):
    """Canonical YAML text: sorted keys, block style."""
    return yaml.safe_dump(config, sort_keys=True, default_flow_style=False)


def _reject_unknown(config, schema, prefix):
    for key, value in config.items():
        path = prefix + str(key)
        if key not in schema:
            raise ConfigError(path, "unknown key")
        if isinstance(schema[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(path, "must be a mapping")
            _reject_unknown(value, schema[key], path + '.')


def _number(config, path, low=None, high=None, low_open=False, high_open=False, optional=False, integer=False):
    node = config
    for part in path.split('.'):
        node = node[part]
    if node is None and optional:
        return
    kinds = (int,) if integer else (int, float)
    if isinstance(node, bool) or not isinstance(node, kinds):
        raise ConfigError(path, "expected {}, got {!r}".format('an integer' if integer else 'a number', node))
    if low is not None and (node < low or (low_open and node == low)):
        raise ConfigError(path, "must be {} {}".format('>' if low_open else '>=', low))
    if high is not None and (node > high or (high_open and node == high)):
        raise ConfigError(path, "must be {} {}".format('<' if high_open else '<=', high))


def _vector(value, path, d, low=None, integer=False, positive=False, allowed=None):
    if value is None:
        return
    if not isinstance(value, list) or len(value) != d:
        raise ConfigError(path, "expected a list of {} entries, got {!r}".format(d, value))
    for i, x in enumerate(value):
        kinds = (int,) if integer else (int, float)
        if isinstance(x, bool) or not isinstance(x, kinds):
            raise ConfigError("{}[{}]".format(path, i), "expected a number, got {!r}".format(x))
        if low is not None and x < low:
            raise ConfigError("{}[{}]".format(path, i), "must be >= {}".format(low))
        if positive and x <= 0:
            raise ConfigError("{}[{}]".format(path, i), "must be > 0")
        if allowed is not None and x not in allowed:
            raise ConfigError("{}[{}]".format(path, i), "must be one of {}".format(list(allowed)))


def validate_config(config):
    """
    Validate the configuration.

    Args:
        config (dict): Configuration dictionary

    Returns:
        dict: The configuration

    Raises:
        ConfigError: Naming the first unknown key or out-of-range field
    """
    _reject_unknown(config, DEFAULT_CONFIG, '')

    _number(config, 'd', low=1, high=3, integer=True)
    d = config['d']
    _number(config, 'alpha', low=0.0, high=2.0, low_open=True)
    _number(config, 'seed', low=0, integer=True)
    _number(config, 'epsilon_phi', low=0.0, low_open=True)
    _number(config, 'M', low=1, optional=True, integer=True)
    _number(config, 'workers', low=1, integer=True)

    density = config['density']
    if density['kind'] not in ('builtin', 'callable', 'tabulated'):
        raise ConfigError('density.kind', "unsupported density kind {!r}".format(density['kind']))
    _number(config, 'density.u', low=0.0, high=1.0, low_open=True, high_open=True)
    _vector(density['v'], 'density.v', d, low=0.0)
    _number(config, 'density.a_prime', low=0.0, high=1.0, low_open=True, high_open=True, optional=True)
    _vector(density['a'], 'density.a', d, positive=True)
    if density['kind'] == 'callable' and not density['target']:
        raise ConfigError('density.target', "required for kind 'callable'")
    if density['kind'] == 'tabulated' and not density['table']:
        raise ConfigError('density.table', "required for kind 'tabulated'")

    _number(config, 'truncation.j_abs_max', low=0, optional=True, integer=True)
    _number(config, 'truncation.k_radius', low=1, integer=True)
    _number(config, 'truncation.table_margin', low=0.0, low_open=True)
    _number(config, 'truncation.table_step', low=0.0, low_open=True, optional=True)
    _number(config, 'quadrature.nodes_per_half_band', low=2, optional=True, integer=True)

    lattice = config['lattice']
    given = [lattice[k] is not None for k in ('origin', 'step', 'counts')]
    if any(given) and not all(given):
        raise ConfigError('lattice', "origin, step and counts must be given together")
    _vector(lattice['origin'], 'lattice.origin', d)
    _vector(lattice['step'], 'lattice.step', d, positive=True)
    _vector(lattice['counts'], 'lattice.counts', d, integer=True, positive=True)

    if not isinstance(config['scans'], list):
        raise ConfigError('scans', "expected a list of subcommands")
    for i, name in enumerate(config['scans']):
        if name not in SUBCOMMANDS:
            raise ConfigError('scans[{}]'.format(i), "unknown subcommand {!r}".format(name))

    scan = config['scan']
    _number(config, 'scan.T', low=0.0, low_open=True)
    _number(config, 'scan.levels', low=1, integer=True)
    _number(config, 'scan.delta', low=0.0, low_open=True)
    _number(config, 'scan.n', low=1, optional=True, integer=True)
    _number(config, 'scan.shells', low=1, integer=True)
    if not isinstance(scan['seeds'], list) or not scan['seeds']:
        raise ConfigError('scan.seeds', "expected a non-empty list of seeds")
    _vector(scan['seeds'], 'scan.seeds', len(scan['seeds']), low=0, integer=True)
    _vector(scan['B'], 'scan.B', d, low=0, integer=True)
    _vector(scan['band'], 'scan.band', d, integer=True, allowed=(0, 1))

    if not isinstance(config['output_dir'], str) or not config['output_dir']:
        raise ConfigError('output_dir', "expected a directory path")
    if config['logging']['level'] not in LOG_LEVELS:
        raise ConfigError('logging.level', "must be one of {}".format(list(LOG_LEVELS)))

    return config
