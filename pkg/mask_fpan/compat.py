# coding=utf-8
"""Provides modules that would otherwise be imported from several places.

Both test suites import ``unittest`` from here, so a backport can be swapped
in at a single point should an interpreter ever need one.
"""
from __future__ import unicode_literals

import unittest

__all__ = ('unittest',)
