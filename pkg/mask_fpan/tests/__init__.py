# coding=utf-8
"""Functional tests for Mask-FPAN.

This package holds the long-running end-to-end checks: full-resolution
geometry round trips, learning trends of every module on a desk-scale
synthetic dataset and byte-for-byte reproducibility of an ablation. They are
entirely different from the unit tests in :mod:`tests`, which use tiny images
and a few training steps.

The checks take tens of minutes, so they are skipped by default. Every
``test*`` module defines a `setUpModule`_ that raises `SkipTest`_ unless the
environment variable ``MASK_FPAN_FUNCTIONAL`` is ``1``. For convenience,
:func:`mask_fpan.tests.utils.set_up_module` can be used for this purpose::

    >>> from mask_fpan.tests.utils import set_up_module as setUpModule

The configuration comes from the XDG settings file when one exists (see
:mod:`mask_fpan.config`) and from :func:`mask_fpan.tests.utils.acceptance_config`
otherwise.

.. _SkipTest: https://docs.python.org/3.5/library/unittest.html#unittest.SkipTest
.. _setUpModule: https://docs.python.org/3.5/library/unittest.html#setupmodule-and-teardownmodule
"""
from __future__ import unicode_literals
