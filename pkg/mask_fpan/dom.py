# coding=utf-8
"""The de-occlusion module (DOM).

An image is cut into an ``M x N`` grid of patches that an LSTM reads in
row-major order. A second LSTM reads the same grid over a 2x average-pooled
copy of the image. Their final hidden states, concatenated, describe the face.
A decoder LSTM then emits one patch per step, in the same order, from that
description and a one-hot step position. Each step feeds two heads: a sigmoid
reconstruction of the occlusion-free patch and the occlusion-mask logits of
the patch.
"""
from __future__ import division, unicode_literals

import logging
from collections import OrderedDict, namedtuple

import numpy as np
from scipy.special import expit

from mask_fpan import exceptions, netpbm
from mask_fpan.gradcore import Tensor, apply, binary_cross_entropy, forward_only
from mask_fpan.layers import LSTMCell, Linear, Module, train_loop

logger = logging.getLogger(__name__)  # pylint:disable=invalid-name


PatchSeq = namedtuple('PatchSeq', ('patches', 'grid', 'patch_size'))
"""Row-major flattened patches.

``patches`` is ``(M * N, ph * pw * C)``, ``grid`` is ``(M, N)`` and
``patch_size`` is ``(ph, pw, C)``.
"""

DomOutput = namedtuple('DomOutput', ('recon', 'occ_mask', 'occ_prob'))

DomLoss = namedtuple('DomLoss', ('total', 'reconstruction', 'mask'))
"""Loss tensors. ``mask`` is ``None`` when the mask weight is zero."""

DomScores = namedtuple('DomScores', ('masked_mse', 'baseline_mse', 'mask_iou'))
"""Reconstruction error inside true occluders, the same error of the
unchanged input and the IOU of predicted and true masks."""


def _patch_shape(shape, grid):
    height, width = shape[:2]
    rows, cols = grid
    if rows < 1 or cols < 1 or height % rows or width % cols:
        raise exceptions.ShapeMismatchError(
            'A {}x{} image cannot be cut into a {}x{} patch grid.'
            .format(height, width, rows, cols)
        )
    return height // rows, width // cols


def patch_batch(images, grid):
    """Cut ``(B, H, W, C)`` images into ``(B, M * N, ph * pw * C)`` patches."""
    images = np.asarray(images, dtype=np.float64)
    count, height, width, channels = images.shape
    patch_h, patch_w = _patch_shape((height, width), grid)
    rows, cols = grid
    return (
        images.reshape(count, rows, patch_h, cols, patch_w, channels)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(count, rows * cols, patch_h * patch_w * channels)
    )


def unpatch_batch(patches, grid, patch_size):
    """Invert :func:`patch_batch`."""
    count = patches.shape[0]
    rows, cols = grid
    patch_h, patch_w, channels = patch_size
    return (
        np.asarray(patches)
        .reshape(count, rows, cols, patch_h, patch_w, channels)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(count, rows * patch_h, cols * patch_w, channels)
    )


def patchify(image, rows, cols):
    """Cut an ``(H, W, C)`` or ``(H, W)`` image into a :class:`PatchSeq`.

    :raises mask_fpan.exceptions.ShapeMismatchError: If ``H`` is not divisible
        by ``rows`` or ``W`` by ``cols``.
    """
    image = np.asarray(image)
    squeeze = image.ndim == 2
    if squeeze:
        image = image[..., None]
    patch_h, patch_w = _patch_shape(image.shape, (rows, cols))
    patches = patch_batch(image[None], (rows, cols))[0].astype(image.dtype)
    return PatchSeq(patches, (rows, cols), (patch_h, patch_w, image.shape[2]))


def unpatchify(seq):
    """Reassemble the image of a :class:`PatchSeq`."""
    image = unpatch_batch(seq.patches[None], seq.grid, seq.patch_size)[0]
    return image.astype(seq.patches.dtype)


def downsample(images):
    """Average-pool ``(B, H, W, C)`` images by 2 in each direction."""
    count, height, width, channels = images.shape
    return images.reshape(
        count, height // 2, 2, width // 2, 2, channels
    ).mean(axis=(2, 4))


class DomModel(Module):
    """Two encoder LSTMs, one decoder LSTM and two per-step heads.

    :param image_size: The side of the square input images.
    :param grid: The patch grid ``(M, N)``. Patches must have even sides.
    :param hidden: The width of each encoder cell.
    :param decoder_hidden: The width of the decoder cell.
    :param rng: Draws the initial weights.
    """

    def __init__(self, image_size, grid, hidden, decoder_hidden, rng):
        """Build the cells and heads."""
        super(DomModel, self).__init__()
        self.image_size = image_size
        self.grid = tuple(grid)
        self.hidden = hidden
        self.decoder_hidden = decoder_hidden
        patch_h, patch_w = _patch_shape((image_size, image_size), self.grid)
        if patch_h % 2 or patch_w % 2:
            raise exceptions.ShapeMismatchError(
                'Patches of {}x{} pixels cannot be pooled by 2.'
                .format(patch_h, patch_w)
            )
        self.patch_size = (patch_h, patch_w, 3)
        self.steps = self.grid[0] * self.grid[1]
        self.patch_dim = patch_h * patch_w * 3
        self.encoder_full = self.add_child(
            'encoder_full', LSTMCell(self.patch_dim, hidden, rng)
        )
        self.encoder_coarse = self.add_child(
            'encoder_coarse', LSTMCell(self.patch_dim // 4, hidden, rng)
        )
        self.decoder = self.add_child('decoder', LSTMCell(
            2 * hidden + self.steps, decoder_hidden, rng
        ))
        self.recon_head = self.add_child(
            'recon_head', Linear(decoder_hidden, self.patch_dim, rng)
        )
        self.mask_head = self.add_child(
            'mask_head', Linear(decoder_hidden, patch_h * patch_w, rng)
        )
        self.trained = False
        self.curves = OrderedDict()

    def architecture(self):
        """Return the constructor arguments as a JSON-ready dict."""
        return OrderedDict((
            ('image_size', self.image_size),
            ('grid', list(self.grid)),
            ('hidden', self.hidden),
            ('decoder_hidden', self.decoder_hidden),
        ))

    @classmethod
    def from_architecture(cls, architecture):
        """Build an untrained model from :meth:`architecture` output."""
        return cls(rng=np.random.default_rng(0), **architecture)


def _run_encoder(cell, patches):
    state = cell.initial_state(patches.shape[0])
    for step in range(patches.shape[1]):
        state = cell.step(Tensor.wrap(patches[:, step]), state)
    return state[0]


def encode_batch(model, images):
    """Return the ``(B, 2 * hidden)`` description of ``(B, H, W, 3)`` images."""
    images = np.asarray(images, dtype=np.float64)
    if images.shape[1:] != (model.image_size, model.image_size, 3):
        raise exceptions.ImageSizeError(
            'Expected {0}x{0} RGB images, got an array of shape {1}.'
            .format(model.image_size, images.shape)
        )
    full = patch_batch(images, model.grid)
    coarse = patch_batch(downsample(images), model.grid)
    return apply('concat', [
        _run_encoder(model.encoder_full, full),
        _run_encoder(model.encoder_coarse, coarse),
    ], {'axis': 1})


def decode_batch(model, hidden):
    """Run the decoder.

    :returns: ``(recon, mask_logits)`` tensors of shapes
        ``(B, M * N * patch_dim)`` and ``(B, M * N * ph * pw)``, in patch
        order.
    """
    count = hidden.shape[0]
    state = model.decoder.initial_state(count)
    recon, logits = [], []
    for step in range(model.steps):
        position = np.zeros((count, model.steps))
        position[:, step] = 1.0
        state = model.decoder.step(
            apply('concat', [hidden, Tensor.wrap(position)], {'axis': 1}),
            state,
        )
        recon.append(apply('sigmoid', [model.recon_head(state[0])]))
        logits.append(model.mask_head(state[0]))
    return (
        apply('concat', recon, {'axis': 1}),
        apply('concat', logits, {'axis': 1}),
    )


def encode(model, image):
    """Return the ``2 * hidden`` description of one image as an array."""
    with forward_only():
        return encode_batch(model, np.asarray(image)[None]).data[0]


def decode(model, hidden):
    """Decode one description.

    :returns: ``(recon_face, occ_mask_prob)`` of shapes ``(H, W, 3)`` and
        ``(H, W)``.
    """
    with forward_only():
        recon, logits = decode_batch(
            model, Tensor.wrap(np.asarray(hidden).reshape(1, -1))
        )
    patch_h, patch_w, _ = model.patch_size
    image = unpatch_batch(
        recon.data.reshape(1, model.steps, -1), model.grid, model.patch_size
    )[0]
    prob = unpatch_batch(
        expit(logits.data).reshape(1, model.steps, -1), model.grid,
        (patch_h, patch_w, 1),
    )[0, ..., 0]
    return image, prob


def reconstruction_loss(recon, target):
    """Mean squared error between a reconstruction and its target."""
    diff = np.asarray(recon, dtype=np.float64) - np.asarray(target)
    return float(np.mean(diff * diff))


def dom_loss(recon, mask_logits, target, mask, beta):
    """Return the :class:`DomLoss` of a batch in patch order.

    The total is the reconstruction MSE plus ``beta`` times the mask binary
    cross-entropy. With ``beta == 0`` the mask term is not computed at all.
    """
    reconstruction = apply('mse', [recon, Tensor.wrap(target)])
    if not beta:
        return DomLoss(reconstruction, reconstruction, None)
    mask_term = binary_cross_entropy(mask_logits, mask)
    total = apply('add', [
        reconstruction, apply('mul', [mask_term, Tensor.wrap(beta)]),
    ])
    return DomLoss(total, reconstruction, mask_term)


def _pair_arrays(pairs, model):
    occluded = np.stack([pair[0] for pair in pairs])
    clean = np.stack([pair[1] for pair in pairs])
    masks = np.stack([pair[2] for pair in pairs]).astype(np.float64)
    targets = patch_batch(clean, model.grid).reshape(len(pairs), -1)
    mask_targets = patch_batch(masks[..., None], model.grid).reshape(
        len(pairs), -1
    )
    return occluded, targets, mask_targets > 0.5


def train_dom(pairs, config, seed=0):
    """Train a de-occlusion model on ``(X_occ, X, true_mask)`` triples.

    :returns: A trained :class:`DomModel`; ``curves`` holds per-step losses.
    :raises mask_fpan.exceptions.EmptyDatasetError: If ``pairs`` is empty.
    """
    pairs = list(pairs)
    if not pairs:
        raise exceptions.EmptyDatasetError('No de-occlusion pairs to train on.')
    settings = config.dom
    size = np.asarray(pairs[0][0]).shape[0]
    rng = np.random.default_rng([seed, 17])
    model = DomModel(size, settings.grid, settings.hidden,
                     settings.decoder_hidden, rng)
    occluded, targets, mask_targets = _pair_arrays(pairs, model)

    def batch_loss(indices):
        recon, logits = decode_batch(model, encode_batch(model, occluded[indices]))
        return dom_loss(recon, logits, targets[indices],
                        mask_targets[indices], settings.beta).total

    logger.info('Training DOM on %d pairs.', len(pairs))
    model.curves['total'] = train_loop(
        model.parameters(), batch_loss, len(pairs), settings, rng, 'DOM'
    )
    model.trained = True
    return model


def deocclude(model, image, threshold=0.5):
    """Reconstruct the occlusion-free face and find the occluder.

    :returns: A :class:`DomOutput`. ``occ_mask`` is ``occ_prob > threshold``.
    """
    recon, prob = decode(model, encode(model, image))
    return DomOutput(recon, prob > threshold, prob)


def evaluate_dom(model, pairs, threshold=0.5):
    """Score a de-occlusion model on held-out pairs.

    :returns: A :class:`DomScores`. Errors are measured over the pixels of
        the true occluders.
    """
    recon_error = baseline_error = count = 0.0
    intersection = union = 0
    for occluded, clean, mask in pairs:
        output = deocclude(model, occluded, threshold)
        mask = np.asarray(mask, dtype=bool)
        recon_error += np.sum((output.recon[mask] - clean[mask]) ** 2)
        baseline_error += np.sum((occluded[mask] - clean[mask]) ** 2)
        count += mask.sum() * 3
        intersection += np.sum(output.occ_mask & mask)
        union += np.sum(output.occ_mask | mask)
    count = max(count, 1.0)
    return DomScores(
        float(recon_error / count),
        float(baseline_error / count),
        float(intersection / union) if union else 1.0,
    )


def write_triptych(path, image, recon, mask):
    """Write ``image | recon | mask`` side by side as one PPM file."""
    mask = np.repeat(np.asarray(mask, dtype=np.float64)[..., None], 3, axis=2)
    netpbm.write_ppm(path, np.concatenate([image, recon, mask], axis=1))
