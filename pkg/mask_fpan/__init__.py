# coding=utf-8
"""The root of Mask-FPAN's namespace."""
from __future__ import unicode_literals
