# coding=utf-8
"""Values usable by multiple modules."""
from __future__ import unicode_literals


ABLATION_MODES = (
    'SEGM',
    'SEGM+PPM',
    'SEGM+PPM+LOM',
    'SEGM+PPM+LOM+DOM',
    'MASK_FPAN',
)
"""The cumulative ablation modes, weakest first."""

CHECKPOINT_MAGIC = b'MFPN'
"""The first four bytes of every checkpoint file."""

CHECKPOINT_VERSION = 1
"""The checkpoint container version written by this package."""

CLASS_NAMES = (
    'background',
    'skin',
    'brow',
    'eye',
    'nose',
    'upper_lip',
    'lower_lip',
    'mouth_interior',
    'hair',
    'occlusion',
)
"""The default class scheme. The last class always marks occluders."""

BACKGROUND = 0
SKIN = 1
BROW = 2
EYE = 3
NOSE = 4
UPPER_LIP = 5
LOWER_LIP = 6
MOUTH_INTERIOR = 7
HAIR = 8

CLASS_PALETTE = (
    (0, 0, 0),
    (204, 153, 128),
    (102, 51, 0),
    (0, 102, 255),
    (255, 204, 0),
    (255, 0, 102),
    (204, 0, 51),
    (102, 0, 153),
    (153, 102, 51),
    (0, 255, 0),
)
"""RGB colours used when emitting colour-mapped label images."""

EXTERNAL_PART_TABLE = (
    ('skin', 1),
    ('l_brow', 2),
    ('r_brow', 2),
    ('l_eye', 3),
    ('r_eye', 3),
    ('nose', 4),
    ('u_lip', 5),
    ('l_lip', 6),
    ('mouth', 7),
    ('hair', 8),
    ('occlusion', 9),
)
"""Default part-name to class-id table for the external dataset layout.

Masks are merged in table order, so later parts overwrite earlier ones.
"""

FUNCTIONAL_TESTS_ENV = 'MASK_FPAN_FUNCTIONAL'
"""Set this environment variable to ``1`` to run the functional test suite."""

MANIFEST_VERSION = '1.0'
"""The run manifest format written by :func:`mask_fpan.pipeline.save_run`."""

CONFIG_VERSION = '1.0'
"""The configuration document format understood by :mod:`mask_fpan.config`."""

DATASET_VERSION = '1.0'
"""The native dataset layout written by :func:`mask_fpan.faceworld.export_dataset`."""

REGIMES = ('occluded_with_mask', 'occluded_no_mask', 'clean')
"""Label regimes, in the order of an occlusion policy's probabilities."""

OCCLUDER_KINDS = ('bar', 'ellipse', 'hand_blob', 'mic_blob', 'cloth_mask')

OCCLUDER_ANCHORS = (
    'mouth',
    'eyes',
    'nose',
    'left_cheek',
    'right_cheek',
    'chin',
)

THREADS_ENV = 'MFPN_THREADS'
"""Environment variable capping evaluation and generation thread pools."""

VALID_POSE_RANGE = (90.0, 45.0, 45.0)
"""Largest absolute (yaw, pitch, roll) in degrees the face model supports."""
