# coding=utf-8
"""Small fixtures shared by the unit tests."""
from __future__ import unicode_literals

from mask_fpan import faceworld
from mask_fpan.config import Config

COARSE_GRID = (25, 33)
"""A mesh grid coarse enough for fast rendering at 32x32 pixels."""


def tiny_model(num_bases=4, landmark_count=68, seed=0):
    """Return a face model on :data:`COARSE_GRID`."""
    return faceworld.build_model(num_bases, landmark_count, seed,
                                 grid=COARSE_GRID)


def tiny_config(**sections):
    """Return a configuration sized for 32x32 images and a few steps.

    :param sections: Extra overrides, as for
        :meth:`mask_fpan.config.Config.replace`.
    """
    config = Config.from_dict({
        'data': {
            'image_size': 32,
            'num_bases': 4,
            'mesh_grid': list(COARSE_GRID),
            'n_samples': 20,
            'eval_fraction': 0.2,
            'flip_prob': 0.0,
            'gamma_range': [1.0, 1.0],
            'scale_range': [1.0, 1.0],
        },
        'lom': {
            'channels': [4, 4, 8],
            'occlusion_hidden': 8,
            'landmark_steps': 3,
            'occlusion_steps': 3,
            'batch_size': 4,
            'log_every': 0,
        },
        'ppm': {
            'channels': [4, 4, 8],
            'hidden': 8,
            'steps': 3,
            'batch_size': 4,
            'log_every': 0,
        },
        'dom': {
            'grid': [4, 4],
            'hidden': 8,
            'decoder_hidden': 8,
            'n_pairs': 6,
            'steps': 3,
            'batch_size': 3,
            'log_every': 0,
        },
        'uvm': {'atlas_size': 32, 'max_sources': 2},
        'segm': {
            'channels': [4, 4, 4, 4],
            'steps': 3,
            'batch_size': 4,
            'log_every': 0,
        },
        'pipeline': {'seeds': [0]},
    })
    if sections:
        config = config.replace(**sections)
    return config
