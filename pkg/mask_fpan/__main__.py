# coding=utf-8
"""The entry point for ``python -m mask_fpan``."""
from __future__ import unicode_literals

from mask_fpan.cli import main


if __name__ == '__main__':
    main()
