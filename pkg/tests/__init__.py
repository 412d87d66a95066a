# coding=utf-8
"""Unit tests for Mask-FPAN.

These tests verify the building blocks of the library with small images and
coarse face meshes, so the whole suite runs in minutes. They are entirely
different from the tests in :mod:`mask_fpan.tests`, which train full-size
models and are skipped by default.
"""
from __future__ import unicode_literals
