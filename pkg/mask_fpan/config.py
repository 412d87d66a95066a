# coding=utf-8
"""Tools for managing Mask-FPAN's configuration.

A configuration is one JSON document with the sections ``data``, ``lom``,
``ppm``, ``dom``, ``uvm``, ``segm`` and ``pipeline``. Every key has a default,
listed in :data:`DEFAULTS`, so a document only needs to name the values it
changes. For example, this document shrinks the training set and turns the
occlusion-distance term of the segmentation loss off::

    {
      "data": {"n_samples": 500},
      "segm": {"C": 0.0}
    }

Parsing is strict. An unknown section or key raises
:class:`mask_fpan.exceptions.ConfigKeyError` and a value of the wrong JSON type
raises :class:`mask_fpan.exceptions.ConfigValueError`, both before any work is
done.

All methods dealing with files obey the `XDG Base Directory Specification
<http://standards.freedesktop.org/basedir-spec/basedir-spec-latest.html>`_.
By default they work with a file named ``settings.json`` in a ``mask_fpan``
configuration directory. The ``MASK_FPAN_CONFIG_FILE`` environment variable
overrides the file name. If set, it should be a file name like
``settings2.json`` (or a relative path), *not* an absolute path.
"""
from __future__ import unicode_literals

import json
import os
from collections import OrderedDict
from copy import deepcopy
from threading import Lock

from packaging.version import InvalidVersion, Version
from xdg import BaseDirectory

from mask_fpan import exceptions
from mask_fpan.constants import (
    CONFIG_VERSION,
    EXTERNAL_PART_TABLE,
    THREADS_ENV,
)


# `get_config` uses this as a cache. It is intentionally a global, so the
# cache can be flushed at run time.
_CONFIG = None

DEFAULTS = OrderedDict((
    ('data', OrderedDict((
        ('image_size', 64),
        ('num_classes', 10),
        ('landmark_count', 68),
        ('num_bases', 8),
        ('model_seed', 0),
        ('mesh_grid', [95, 105]),
        ('n_samples', 2500),
        ('eval_fraction', 0.2),
        ('seed', 0),
        ('policy', [0.4, 0.3, 0.3]),
        ('pose_range', [60.0, 25.0, 15.0]),
        ('flip_prob', 0.5),
        ('gamma_range', [0.8, 1.25]),
        ('scale_range', [0.9, 1.1]),
        ('solid_background_prob', 0.3),
        ('dataset_dir', None),
        ('part_table', [list(row) for row in EXTERNAL_PART_TABLE]),
    ))),
    ('lom', OrderedDict((
        ('channels', [8, 16, 16, 32]),
        ('occlusion_hidden', 64),
        ('landmark_steps', 600),
        ('occlusion_steps', 400),
        ('batch_size', 16),
        ('lr', 0.05),
        ('momentum', 0.9),
        ('clip_norm', 10.0),
        ('threshold', 0.5),
        ('dilation_fraction', 0.05),
        ('log_every', 50),
    ))),
    ('ppm', OrderedDict((
        ('channels', [8, 16, 16, 32]),
        ('hidden', 32),
        ('steps', 400),
        ('batch_size', 16),
        ('lr', 0.05),
        ('momentum', 0.9),
        ('clip_norm', 10.0),
        ('lambda_p', 0.5),
        ('log_every', 50),
    ))),
    ('dom', OrderedDict((
        ('grid', [8, 8]),
        ('hidden', 64),
        ('decoder_hidden', 96),
        ('beta', 1.0),
        ('n_pairs', 600),
        ('steps', 600),
        ('batch_size', 16),
        ('lr', 0.1),
        ('momentum', 0.9),
        ('clip_norm', 5.0),
        ('threshold', 0.5),
        ('log_every', 50),
    ))),
    ('uvm', OrderedDict((
        ('atlas_size', 128),
        ('poses_per_sample', 1),
        ('pose_range', [60.0, 25.0, 15.0]),
        ('max_sources', 400),
    ))),
    ('segm', OrderedDict((
        ('channels', [8, 12, 16, 24]),
        ('C', 2.0),
        ('tau', 8.0),
        ('steps', 1500),
        ('batch_size', 8),
        ('lr', 0.05),
        ('momentum', 0.9),
        ('clip_norm', 10.0),
        ('log_every', 100),
    ))),
    ('pipeline', OrderedDict((
        ('seeds', [0, 1, 2]),
    ))),
))
"""Every configuration key with its default value.

``data``
    Synthetic dataset: image size, class count, landmark count, number of
    shape bases, face model seed, mesh grid (rows, columns), total sample count
    and the held-out fraction, dataset seed, label-regime policy
    (with mask, without mask, clean), pose range (yaw, pitch, roll) in degrees,
    augmentation ranges, an optional on-disk dataset directory and the part
    table used for the external layout.
``lom``
    Landmark occlusion module: encoder channels, occlusion head width, steps of
    both training stages, optimizer settings, occlusion threshold and the
    occluded-region disk radius as a fraction of the image width.
``ppm``
    Pose prediction module: encoder and head sizes, optimizer settings and
    ``lambda_p``, the pose weight slope.
``dom``
    De-occlusion module: patch grid (M, N), encoder and decoder widths, mask
    loss weight ``beta``, number of training pairs, optimizer settings and the
    mask threshold.
``uvm``
    UV module: atlas resolution, re-rendered poses per clean sample, pose range
    of the re-rendered faces and a cap on the number of augmented sources.
``segm``
    Segmenter: channels, loss coupling ``C``, distance decay ``tau`` in pixels
    and optimizer settings.
``pipeline``
    Seeds of the paired ablation runs.
"""


def _parse_version(value):
    """Parse a format version string.

    :raises mask_fpan.exceptions.ConfigValueError: If ``value`` is not a
        version string.
    """
    if isinstance(value, type('')):
        try:
            return Version(value)
        except InvalidVersion:
            pass
    raise exceptions.ConfigValueError(
        'The configuration format version {!r} is not a version string.'
        .format(value)
    )


# Lists whose length is free. Other lists must keep their default length.
_VARIABLE_LENGTH = frozenset(('channels', 'seeds', 'part_table'))


def _public_attrs(obj):
    """Return a copy of the public elements in ``vars(obj)``."""
    return {
        key: val for key, val in vars(obj).copy().items()
        if not key.startswith('_')
    }


def _check_value(section, key, value, default):
    """Return ``value`` coerced to the type of ``default``, or raise.

    :raises mask_fpan.exceptions.ConfigValueError: If the JSON type of
        ``value`` does not match the default's.
    """
    where = '{}.{}'.format(section, key)
    if default is None:
        if value is None or isinstance(value, type('')):
            return value
        raise exceptions.ConfigValueError(
            '{} must be a string or null, not {!r}.'.format(where, value)
        )
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, list):
        if isinstance(value, list):
            if key not in _VARIABLE_LENGTH and len(value) != len(default):
                raise exceptions.ConfigValueError(
                    '{} must hold {} values, not {!r}.'
                    .format(where, len(default), value)
                )
            return deepcopy(value)
    raise exceptions.ConfigValueError(
        '{} must be of type {}, not {!r}.'
        .format(where, type(default).__name__, value)
    )


class Section(object):  # pylint:disable=too-few-public-methods
    """The values of one configuration section, as attributes."""

    def __init__(self, name, values):
        """Set one attribute per key in ``values``."""
        self._name = name
        for key, value in values.items():
            setattr(self, key, value)

    def __repr__(self):  # noqa
        str_kwargs = ', '.join(
            '{}={}'.format(key, repr(value))
            for key, value in sorted(_public_attrs(self).items())
        )
        return '{}({})'.format(type(self).__name__, str_kwargs)

    def to_dict(self):
        """Return this section's values as an ordered dict."""
        return OrderedDict(
            (key, deepcopy(getattr(self, key)))
            for key in DEFAULTS[self._name]
        )


class Config(object):
    """A complete Mask-FPAN configuration, plus methods for (de)serializing it.

    A typical usage of this object is as follows:

    >>> from mask_fpan.config import Config
    >>> cfg = Config.from_dict({'segm': {'C': 0.0}})
    >>> cfg.segm.C
    0.0
    >>> cfg.data.image_size
    64

    Sections are attributes named after the sections of :data:`DEFAULTS`.
    """

    # Used to lock access to the configuration file when saving.
    _file_lock = Lock()

    def __init__(self, sections=None, format_version=None):
        """Initialize this object with one attribute per section.

        :param sections: A dict mapping section names to dicts of overridden
            values. Missing sections and keys take their defaults.
        :param format_version: A string. The format version of the document
            these values come from.
        :raises mask_fpan.exceptions.ConfigKeyError: If a section or key is
            unknown.
        :raises mask_fpan.exceptions.ConfigValueError: If a value has the
            wrong type.
        """
        sections = sections or {}
        unknown = sorted(set(sections) - set(DEFAULTS))
        if unknown:
            raise exceptions.ConfigKeyError(
                'Unknown configuration sections: {}. Valid sections are: {}.'
                .format(', '.join(unknown), ', '.join(DEFAULTS))
            )
        for name, defaults in DEFAULTS.items():
            given = sections.get(name) or {}
            unknown = sorted(set(given) - set(defaults))
            if unknown:
                raise exceptions.ConfigKeyError(
                    'Unknown keys in configuration section "{}": {}.'
                    .format(name, ', '.join(unknown))
                )
            values = OrderedDict()
            for key, default in defaults.items():
                if key in given:
                    values[key] = _check_value(name, key, given[key], default)
                else:
                    values[key] = deepcopy(default)
            setattr(self, name, Section(name, values))
        if format_version is None:
            format_version = CONFIG_VERSION
        self.format_version = _parse_version(format_version)
        if self.format_version.release[0] != Version(CONFIG_VERSION).release[0]:
            raise exceptions.VersionMismatchError(
                'The configuration document has format version {}, but only '
                'version {} is supported.'
                .format(format_version, CONFIG_VERSION)
            )
        self._check()

    def __repr__(self):  # noqa
        return '{}({!r})'.format(type(self).__name__, self.to_dict())

    def __eq__(self, other):
        return isinstance(other, Config) and self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self == other

    def _check(self):
        """Reject values that have the right type but cannot work."""
        policy = self.data.policy
        if any(p < 0 for p in policy) or abs(sum(policy) - 1.0) > 1e-9:
            raise exceptions.ConfigValueError(
                'data.policy must hold three non-negative probabilities '
                'summing to 1, not {!r}.'.format(policy)
            )
        if self.data.num_classes < 10:
            raise exceptions.ConfigValueError(
                'data.num_classes must be at least 10, not {}.'
                .format(self.data.num_classes)
            )
        if self.data.image_size % 16:
            raise exceptions.ConfigValueError(
                'data.image_size must be a multiple of 16, not {}.'
                .format(self.data.image_size)
            )
        if not 0 < self.data.eval_fraction < 1:
            raise exceptions.ConfigValueError(
                'data.eval_fraction must lie in (0, 1), not {}.'
                .format(self.data.eval_fraction)
            )
        if self.segm.tau <= 0 or self.segm.C < 0:
            raise exceptions.ConfigValueError(
                'segm.tau must be positive and segm.C non-negative.'
            )
        if not self.pipeline.seeds:
            raise exceptions.ConfigValueError('pipeline.seeds is empty.')

    @classmethod
    def from_dict(cls, document):
        """Build a configuration from a parsed JSON document.

        The optional top-level ``format_version`` key is checked against
        :data:`mask_fpan.constants.CONFIG_VERSION`.
        """
        document = dict(document)
        format_version = document.pop('format_version', None)
        return cls(document, format_version)

    def to_dict(self):
        """Return the full document, defaults included."""
        document = OrderedDict(
            (name, getattr(self, name).to_dict()) for name in DEFAULTS
        )
        document['format_version'] = type('')(self.format_version)
        return document

    def replace(self, **sections):
        """Return a copy of this configuration with some values overridden.

        >>> cfg = Config().replace(segm={'C': 0.0}, data={'seed': 3})

        :param sections: Section names mapped to dicts of new values.
        :returns: A new :class:`Config`. This object is not modified.
        """
        document = self.to_dict()
        for name, values in sections.items():
            if name not in document:
                raise exceptions.ConfigKeyError(
                    'Unknown configuration section: {}.'.format(name)
                )
            document[name].update(values)
        return type(self).from_dict(document)

    def save(self, path=None, xdg_config_file=None, xdg_config_dir=None):
        """Write the full document to ``path`` or to the XDG config file.

        This method is thread-safe. Keys are sorted, so saving the same
        configuration twice produces identical bytes.
        """
        if path is None:
            if xdg_config_file is None:
                xdg_config_file = _xdg_config_file()
            if xdg_config_dir is None:
                xdg_config_dir = 'mask_fpan'
            path = os.path.join(
                BaseDirectory.save_config_path(xdg_config_dir),
                xdg_config_file
            )
        self._file_lock.acquire()
        try:
            with open(path, 'w') as config_file:
                json.dump(self.to_dict(), config_file, indent=2, sort_keys=True)
                config_file.write('\n')
        finally:
            self._file_lock.release()
        return path

    @classmethod
    def read(cls, path=None, xdg_config_file=None, xdg_config_dir=None):
        """Read a configuration document.

        :param path: A string. An explicit file to read. If omitted, the XDG
            configuration directories are searched.
        :param xdg_config_file: A string. The name of the file to search for.
        :param xdg_config_dir: A string. The XDG configuration directory in
            which the configuration file resides.
        :returns: A new :class:`Config`.
        :raises mask_fpan.exceptions.ConfigFileNotFoundError: If no file is
            found.
        """
        if path is None:
            if xdg_config_file is None:
                xdg_config_file = _xdg_config_file()
            if xdg_config_dir is None:
                xdg_config_dir = 'mask_fpan'
            path = _get_config_file_path(xdg_config_dir, xdg_config_file)
        elif not os.path.isfile(path):
            raise exceptions.ConfigFileNotFoundError(
                'The configuration file {} does not exist.'.format(path)
            )
        with open(path) as handle:
            try:
                document = json.load(handle)
            except ValueError as err:
                raise exceptions.ConfigValueError(
                    'The configuration file {} is not valid JSON: {}'
                    .format(path, err)
                )
        if not isinstance(document, dict):
            raise exceptions.ConfigValueError(
                'The configuration file {} must hold a JSON object.'
                .format(path)
            )
        return cls.from_dict(document)


def get_config():
    """Return a copy of the global ``Config`` object.

    This method makes use of a cache. If the cache is empty, the configuration
    file is parsed and the cache is populated. Otherwise, a copy of the cached
    configuration object is returned.

    :returns: A copy of the global configuration object.
    :rtype: mask_fpan.config.Config
    """
    global _CONFIG  # pylint:disable=global-statement
    if _CONFIG is None:
        _CONFIG = Config.read()
    return deepcopy(_CONFIG)


def thread_count():
    """Return the worker thread cap from ``MFPN_THREADS``, default 1.

    :raises mask_fpan.exceptions.ConfigValueError: If the variable is not a
        positive integer.
    """
    raw = os.environ.get(THREADS_ENV, '1')
    try:
        count = int(raw)
    except ValueError:
        count = 0
    if count < 1:
        raise exceptions.ConfigValueError(
            '{} must be a positive integer, not {!r}.'.format(THREADS_ENV, raw)
        )
    return count


def _xdg_config_file():
    """Return the configuration file name, honouring the environment."""
    return os.environ.get('MASK_FPAN_CONFIG_FILE', 'settings.json')


def _get_config_file_path(xdg_config_dir, xdg_config_file):
    """Search ``XDG_CONFIG_DIRS`` for a config file and return the first found.

    :param xdg_config_dir: A string. The name of the directory that is suffixed
        to the end of each of the ``XDG_CONFIG_DIRS`` paths.
    :param xdg_config_file: A string. The name of the configuration file that
        is being searched for.
    :returns: A string. A path to a configuration file.
    :raises mask_fpan.exceptions.ConfigFileNotFoundError: If the requested
        configuration file cannot be found.
    """
    paths = [
        os.path.join(config_dir, xdg_config_file)
        for config_dir in BaseDirectory.load_config_paths(xdg_config_dir)
    ]
    for path in paths:
        if os.path.isfile(path):
            return path
    raise exceptions.ConfigFileNotFoundError(
        'Mask-FPAN is unable to find a configuration file. The following '
        '(XDG compliant) paths have been searched: ' + ', '.join(paths)
    )
