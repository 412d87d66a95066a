# coding=utf-8
"""Tools for selecting and deselecting tests."""
from __future__ import unicode_literals

import os
from functools import wraps

from mask_fpan.compat import unittest
from mask_fpan.constants import FUNCTIONAL_TESTS_ENV


def functional_tests_enabled():
    """Tell whether the long-running functional tests should run.

    They run when the ``MASK_FPAN_FUNCTIONAL`` environment variable is ``1``.
    """
    return os.environ.get(FUNCTIONAL_TESTS_ENV, '').strip() == '1'


def skip_unless_functional():
    """Raise ``SkipTest`` unless the functional tests are enabled.

    Functional test modules use this as their ``setUpModule``.
    """
    if not functional_tests_enabled():
        raise unittest.SkipTest(
            'Functional tests are slow. Set {}=1 to run them.'
            .format(FUNCTIONAL_TESTS_ENV)
        )


def require_seeds(count):
    """A decorator for skipping test methods that need several seeds.

    It can be used like so:

    >>> from mask_fpan.config import Config
    >>> from mask_fpan.selectors import require_seeds
    >>> from unittest import TestCase
    >>> class MyTestCase(TestCase):
    ...
    ...     @classmethod
    ...     def setUpClass(cls):
    ...         cls.cfg = Config()
    ...
    ...     @require_seeds(3)  # References `self.cfg`
    ...     def test_foo(self):
    ...         pass  # Average something over three seeds here.

    Notice that ``cls.cfg`` is assigned to. This is a **requirement**.

    :param count: The number of ``pipeline.seeds`` the test needs.
    """
    def plain_decorator(test_method):
        """An argument-less decorator. Accepts the function being wrapped."""
        @wraps(test_method)
        def new_test_method(self, *args, **kwargs):
            """A wrapper around a test method."""
            seeds = self.cfg.pipeline.seeds
            if len(seeds) < count:
                self.skipTest(
                    'This test needs {} seeds, but the configuration lists '
                    'only {}: {}.'.format(count, len(seeds), seeds)
                )
            return test_method(self, *args, **kwargs)
        return new_test_method
    return plain_decorator
