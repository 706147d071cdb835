"""Optimization settings and their file format

Settings are read from TOML or JSON. RMSProp parameters may be given flat
(``learning_rate_a = 0.01``) or as a nested table::

    t_max = 8
    lambdas = [5.0, 1.0, 1.0, 0.5, 0.005]

    [rmsprop]
    learning_rate_a = 0.01
    decay = 0.9
"""
import json
import os
import tomllib

from dataclasses import asdict, dataclass, fields, replace

from diwr.exceptions import ConfigError

SEVERITIES = ('auto', 'easy', 'severe')

# keys accepted inside the nested [rmsprop] table
_RMSPROP_KEYS = {'learning_rate_a': 'learning_rate_a',
                 'learning_rate_c': 'learning_rate_c',
                 'decay': 'rmsprop_decay',
                 'epsilon': 'rmsprop_epsilon'}


@dataclass(frozen=True)
class OptimConfig:
    """Every threshold, weight and schedule of the reconstruction

    The lambda defaults are the values for easy and moderate inputs;
    severe inputs use half of them (see `initial_lambdas`).
    """
    lambda1: float = 5.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 0.5
    lambda5: float = 5e-3

    eps_a: float = 0.15
    eps_n: float = 0.02
    t_max: int = 10
    tau_in: float = 0.9
    r_s: float = 0.03
    r_rho: float = 0.06
    # the exclusion radius grows to this multiple of the median spacing of
    # the high-confidence points, up to band_cap * r_s; 0 keeps r_s fixed
    band_spacing: float = 1.0
    band_cap: float = 4.0

    grid_resolution: int = 64
    box_margin: float = 0.1
    beta: float = 2.0

    learning_rate_a: float = 0.01
    learning_rate_c: float = 0.01
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8

    lambda_growth: float = 1.25
    lambda_cap: float = 4.0

    max_inner_steps_a: int = 200
    max_inner_steps_c: int = 200
    max_area_rounds: int = 5
    early_exit_tol: float = 1e-5
    early_exit_window: int = 10
    dense_pair_limit: int = 2_000_000

    severity: str = 'auto'
    quality_k: int = 20

    area_init: str = 'voronoi'
    voronoi_k: int = 12

    orient_iters: int = 20
    orient_blend: float = 0.5
    orient_tol: float = 1e-3
    orient_width_start: float = 0.08
    orient_width_end: float = 0.015

    extract_resolution: int = 128
    # kernel smoothing of the extraction field, in voxel sides
    extract_smoothing: float = 0.5
    keep_largest: bool = True

    seed: int = 0

    @property
    def severity_auto(self):
        return self.severity == 'auto'

    @property
    def lambdas(self):
        return (self.lambda1, self.lambda2, self.lambda3, self.lambda4,
                self.lambda5)

    def initial_lambdas(self, severe=False):
        """Starting weights, halved for severe inputs"""
        factor = 0.5 if severe else 1.0
        return tuple(factor * value for value in self.lambdas)

    def scheduled_lambdas(self, t, severe=False):
        """Weights for outer iteration `t` (0-based)

        Each outer iteration multiplies the weights by `lambda_growth`
        until they reach `lambda_cap` times their initial value.
        """
        factor = min(self.lambda_growth ** t, self.lambda_cap)
        return tuple(factor * value for value in self.initial_lambdas(severe))

    def validate(self):
        """Check every invariant, returns self for chaining

        Raises
        ------
        ConfigError
            If a value is out of range.
        """
        problems = []

        for name in ('lambda1', 'lambda2', 'lambda3', 'lambda4', 'lambda5'):
            if getattr(self, name) < 0:
                problems.append('%s must be non-negative' % name)

        for name in ('eps_a', 'eps_n', 'r_s', 'r_rho', 'learning_rate_a',
                     'learning_rate_c', 'early_exit_tol'):
            if not getattr(self, name) > 0:
                problems.append('%s must be positive' % name)

        for name in ('t_max', 'grid_resolution', 'max_inner_steps_a',
                     'max_inner_steps_c', 'max_area_rounds',
                     'early_exit_window', 'orient_iters'):
            if getattr(self, name) < 1:
                problems.append('%s must be at least 1' % name)

        if not 0 < self.tau_in <= 1:
            problems.append('tau_in must be in (0, 1]')
        if self.band_spacing < 0:
            problems.append('band_spacing must be non-negative')
        if self.band_cap < 1:
            problems.append('band_cap must be at least 1')
        if self.box_margin < 0:
            problems.append('box_margin must be non-negative')
        if self.rmsprop_epsilon < 0:
            problems.append('rmsprop_epsilon must be non-negative')
        if not 0 < self.rmsprop_decay < 1:
            problems.append('rmsprop_decay must be in (0, 1)')
        if self.lambda_growth < 1 or self.lambda_cap < 1:
            problems.append('lambda_growth and lambda_cap must be >= 1')
        if not 0 < self.orient_blend <= 1:
            problems.append('orient_blend must be in (0, 1]')
        if self.orient_width_start < 0 or self.orient_width_end < 0:
            problems.append('orientation widths must be non-negative')
        if self.extract_smoothing < 0:
            problems.append('extract_smoothing must be non-negative')
        if self.severity not in SEVERITIES:
            problems.append('severity must be one of %s' %
                            ', '.join(SEVERITIES))
        if self.area_init not in ('voronoi', 'uniform'):
            problems.append('area_init must be "voronoi" or "uniform"')
        if self.voronoi_k < 3:
            problems.append('voronoi_k must be at least 3')
        if self.extract_resolution < 32:
            problems.append('extract_resolution must be at least 32')
        if not 10 <= self.quality_k <= 40:
            problems.append('quality_k must be in [10, 40]')

        if problems:
            raise ConfigError('Invalid configuration: %s' %
                              '; '.join(problems))
        return self

    def updated(self, **overrides):
        """Copy with `overrides` applied (None values are ignored)"""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **overrides).validate()

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        """Build a config from a parsed TOML/JSON mapping

        Raises
        ------
        ConfigError
            On unknown keys or values that fail validation.
        """
        values = dict(values)
        known = {f.name for f in fields(cls)}

        rmsprop = values.pop('rmsprop', None)
        if rmsprop is not None:
            if not isinstance(rmsprop, dict):
                raise ConfigError('The rmsprop entry must be a table')
            for key, value in rmsprop.items():
                if key not in _RMSPROP_KEYS:
                    raise ConfigError('Unknown rmsprop setting "%s"' % key)
                values[_RMSPROP_KEYS[key]] = value

        lambdas = values.pop('lambdas', None)
        if lambdas is not None:
            if len(lambdas) != 5:
                raise ConfigError('lambdas must list exactly 5 values, got %d'
                                  % len(lambdas))
            for i, value in enumerate(lambdas):
                values['lambda%d' % (i + 1)] = value

        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError('Unknown configuration keys: %s' %
                              ', '.join(unknown))

        try:
            config = cls(**values)
        except TypeError as e:
            raise ConfigError(str(e))
        return config.validate()

    @classmethod
    def from_file(cls, path):
        """Read a .toml or .json configuration file

        Raises
        ------
        FileNotFoundError
            If `path` does not exist.
        ConfigError
            If the file cannot be parsed or holds invalid settings.
        """
        if not os.path.isfile(path):
            raise FileNotFoundError('The configuration file %s does not '
                                    'exist' % path)

        extension = os.path.splitext(path)[1].lower()
        try:
            if extension == '.toml':
                with open(path, 'rb') as f:
                    values = tomllib.load(f)
            elif extension == '.json':
                with open(path) as f:
                    values = json.load(f)
            else:
                raise ConfigError('Configuration files must be .toml or '
                                  '.json, got "%s"' % path)
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
            raise ConfigError('Could not parse %s: %s' % (path, e))

        return cls.from_dict(values)
