# coding=utf-8
"""Utilities for the functional tests."""
from __future__ import unicode_literals

from mask_fpan import config, exceptions, selectors

ACCEPTANCE_OVERRIDES = {
    'data': {'image_size': 64, 'n_samples': 2500, 'eval_fraction': 0.2},
    'pipeline': {'seeds': [0, 1, 2]},
}
"""Desk-scale settings: 2000 training and 500 held-out 64x64 samples."""


def set_up_module():
    """Skip tests unless the functional tests are enabled.

    This function is meant to be used as ``setUpModule``.
    """
    selectors.skip_unless_functional()


def acceptance_config():
    """Return the configuration the functional tests run with.

    The XDG settings file is used when it exists. Otherwise the defaults are
    combined with :data:`ACCEPTANCE_OVERRIDES`.
    """
    try:
        return config.get_config()
    except exceptions.ConfigFileNotFoundError:
        return config.Config().replace(**ACCEPTANCE_OVERRIDES)
