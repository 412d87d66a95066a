# coding=utf-8
"""Read and write binary PPM (P6) and PGM (P5) images.

Colour images are handled as ``(H, W, 3)`` float arrays in [0, 1] quantised to
multiples of 1/255. Grey images are ``(H, W)`` integer arrays, used for label
maps and masks.
"""
from __future__ import division, unicode_literals

import numpy as np
from PIL import Image


def to_bytes(image):
    """Quantise a float image in [0, 1] to ``uint8``."""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def quantize(image):
    """Round a float image to the nearest multiple of 1/255."""
    return to_bytes(image) / 255.0


def write_ppm(path, image):
    """Write an ``(H, W, 3)`` float image as a binary PPM file."""
    Image.fromarray(to_bytes(image)).save(path, format='PPM')


def write_pgm(path, values):
    """Write an ``(H, W)`` array of integers in [0, 255] as a binary PGM file.

    :raises ValueError: If a value does not fit in a byte.
    """
    values = np.asarray(values)
    if values.size and (values.min() < 0 or values.max() > 255):
        raise ValueError(
            'PGM values must lie in [0, 255], found [{}, {}].'
            .format(values.min(), values.max())
        )
    Image.fromarray(values.astype(np.uint8)).save(path, format='PPM')


def read_ppm(path):
    """Read a binary PPM file into an ``(H, W, 3)`` float image.

    :raises ValueError: If the file is not an RGB PPM image.
    """
    with Image.open(path) as image:
        if image.format != 'PPM' or image.mode != 'RGB':
            raise ValueError('not a binary RGB PPM image')
        return np.asarray(image, dtype=np.uint8) / 255.0


def read_pgm(path):
    """Read a binary PGM file into an ``(H, W)`` integer array.

    :raises ValueError: If the file is not a greyscale PGM image.
    """
    with Image.open(path) as image:
        if image.format != 'PPM' or image.mode != 'L':
            raise ValueError('not a binary greyscale PGM image')
        return np.asarray(image, dtype=np.uint8).astype(np.int64)
