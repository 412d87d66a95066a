# coding=utf-8
"""The face parsing network and its occlusion- and pose-weighted loss.

Every pixel ``i`` contributes ``w_i * CE_i`` to the loss, with
``w_i = 1 + C * o_i * p``. Here ``o_i = exp(-d_i / tau)`` decays with the
distance ``d_i`` from the pixel to the nearest occluded pixel and ``p`` is the
pose weight of the image. Without occlusion, or with ``C = 0``, the loss is
the plain mean cross-entropy.
"""
from __future__ import division, unicode_literals

import logging
from collections import OrderedDict, namedtuple

import numpy as np
from scipy import ndimage

from mask_fpan import exceptions, netpbm
from mask_fpan.constants import CLASS_PALETTE
from mask_fpan.gradcore import Tensor, apply, forward_only
from mask_fpan.layers import Conv3x3, Module, images_to_batch, train_loop

logger = logging.getLogger(__name__)  # pylint:disable=invalid-name


LossParams = namedtuple('LossParams', ('C', 'tau'))

AuxSignal = namedtuple('AuxSignal', ('occ_mask', 'pose_weight', 'source'))
"""What the segmenter learns from besides labels, for one sample.

``occ_mask`` is an ``(H, W)`` boolean mask, ``pose_weight`` the ``p`` of
the loss and ``source`` names where the mask came from (``label``,
``lom``, ``dom`` or ``none``).
"""


class SegModel(Module):
    """A three-stage conv encoder-decoder with skip connections.

    The stem keeps full resolution, each encoder stage halves it and each
    decoder stage doubles it again before merging the matching encoder output.
    A final 3x3 convolution produces one logit per class and pixel.
    """

    def __init__(self, image_size, channels, num_classes, rng):
        """Build the layers. ``channels`` holds four widths."""
        super(SegModel, self).__init__()
        if image_size % 8:
            raise exceptions.ImageSizeError(
                'The segmenter needs an image size divisible by 8, got {}.'
                .format(image_size)
            )
        self.image_size = image_size
        self.channels = list(channels)
        self.num_classes = num_classes
        c0, c1, c2, c3 = channels
        self.stem = self.add_child('stem', Conv3x3(3, c0, 1, rng))
        self.encoder = [
            self.add_child('enc1', Conv3x3(c0, c1, 2, rng)),
            self.add_child('enc2', Conv3x3(c1, c2, 2, rng)),
            self.add_child('enc3', Conv3x3(c2, c3, 2, rng)),
        ]
        self.decoder = [
            self.add_child('dec3', Conv3x3(c3 + c2, c2, 1, rng)),
            self.add_child('dec2', Conv3x3(c2 + c1, c1, 1, rng)),
            self.add_child('dec1', Conv3x3(c1 + c0, c0, 1, rng)),
        ]
        self.head = self.add_child('head', Conv3x3(c0, num_classes, 1, rng))
        self.curves = OrderedDict()

    def architecture(self):
        """Return the constructor arguments as a JSON-ready dict."""
        return OrderedDict((
            ('image_size', self.image_size),
            ('channels', self.channels),
            ('num_classes', self.num_classes),
        ))

    @classmethod
    def from_architecture(cls, architecture):
        """Build an untrained model from :meth:`architecture` output."""
        return cls(rng=np.random.default_rng(0), **architecture)

    def __call__(self, batch):
        """Map a ``(B, 3, H, W)`` batch to ``(B, K, H, W)`` logits."""
        skips = [apply('relu', [self.stem(batch)])]
        for layer in self.encoder:
            skips.append(apply('relu', [layer(skips[-1])]))
        x = skips.pop()
        for layer in self.decoder:
            x = apply('concat', [apply('upsample', [x]), skips.pop()],
                      {'axis': 1})
            x = apply('relu', [layer(x)])
        return self.head(x)


def occlusion_distance_map(occ_mask, tau):
    """Return ``exp(-d / tau)`` for the distance ``d`` to the occlusion mask.

    Distances are exact Euclidean distances between pixel centres. Without
    any occluded pixel the map is zero everywhere.

    :raises ValueError: If ``tau`` is not positive.
    """
    if not tau > 0:
        raise ValueError('tau must be positive, got {}.'.format(tau))
    occ_mask = np.asarray(occ_mask, dtype=bool)
    if not occ_mask.any():
        return np.zeros(occ_mask.shape)
    return np.exp(-ndimage.distance_transform_edt(~occ_mask) / tau)


def loss_weights(o, p, params):
    """Return the per-pixel weights ``1 + C * o * p``."""
    if hasattr(p, 'p'):
        p = p.p
    return 1.0 + params.C * np.asarray(o, dtype=np.float64) * p


def weighted_loss(logits, labels, o, p, params, class_axis=-1):
    """Mean of ``w_i * CE_i`` over every pixel.

    :param logits: A :class:`mask_fpan.gradcore.Tensor` or array with the
        classes along ``class_axis``, ``(H, W, K)`` by default.
    :param labels: Integer class ids, the logits' shape without the class axis.
    :param o: The occlusion distance map, broadcastable to ``labels``.
    :param p: A :class:`mask_fpan.auxnets.PoseWeight` or a number.
    :param params: A :class:`LossParams`.
    :returns: A scalar tensor, differentiable in ``logits`` only.
    :raises mask_fpan.exceptions.LabelOutOfRangeError: If a label is not a
        valid class id.
    """
    labels = np.asarray(labels)
    weights = np.broadcast_to(loss_weights(o, p, params), labels.shape)
    return apply('softmax_cross_entropy', [logits], {
        'labels': labels,
        'weights': weights,
        'axis': class_axis,
    })


def _check_aux(dataset, aux):
    aux = list(aux) if aux is not None else []
    if len(aux) != len(dataset):
        raise exceptions.UnresolvedAuxError(
            'Got auxiliary signals for {} of {} samples.'
            .format(len(aux), len(dataset))
        )
    for index, (sample, signal) in enumerate(zip(dataset, aux)):
        if (signal is None or signal.occ_mask is None or
                signal.pose_weight is None):
            raise exceptions.UnresolvedAuxError(
                'Sample {} has no resolved occlusion mask or pose weight.'
                .format(index)
            )
        if np.shape(signal.occ_mask) != sample.part_labels.shape:
            raise exceptions.ShapeMismatchError(
                'The occlusion mask of sample {} has shape {}, expected {}.'
                .format(index, np.shape(signal.occ_mask),
                        sample.part_labels.shape)
            )
    return aux


def train_segm(dataset, aux, config, seed=0):
    """Train a segmenter with the weighted loss.

    :param dataset: A :class:`mask_fpan.faceworld.Dataset` with labels.
    :param aux: One :class:`AuxSignal` per sample.
    :param config: A :class:`mask_fpan.config.Config`.
    :returns: A :class:`SegModel`. ``curves['segm']`` holds the losses.
    :raises mask_fpan.exceptions.UnresolvedAuxError: If a sample lacks its
        mask or pose weight.
    :raises mask_fpan.exceptions.EmptyDatasetError: If ``dataset`` is empty.
    """
    if not len(dataset):
        raise exceptions.EmptyDatasetError('The training dataset is empty.')
    aux = _check_aux(dataset, aux)
    settings = config.segm
    params = LossParams(settings.C, settings.tau)
    images = np.stack([sample.image for sample in dataset])
    labels = np.stack([sample.part_labels for sample in dataset])
    weights = np.stack([
        loss_weights(occlusion_distance_map(signal.occ_mask, params.tau),
                     signal.pose_weight, params)
        for signal in aux
    ])
    rng = np.random.default_rng([seed, 19])
    model = SegModel(images.shape[1], settings.channels,
                     len(dataset.class_names), rng)
    batch = images_to_batch(images)

    def batch_loss(indices):
        logits = model(Tensor.wrap(batch.data[indices]))
        return apply('softmax_cross_entropy', [logits], {
            'labels': labels[indices],
            'weights': weights[indices],
            'axis': 1,
        })

    logger.info('Training the segmenter on %d samples (C=%s, tau=%s).',
                len(dataset), params.C, params.tau)
    model.curves['segm'] = train_loop(
        model.parameters(), batch_loss, len(dataset), settings, rng, 'SEGM'
    )
    return model


def predict_parse_batch(model, images):
    """Return ``(B, H, W)`` label maps for ``(B, H, W, 3)`` images."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[1:] != (
            model.image_size, model.image_size, 3):
        raise exceptions.ImageSizeError(
            'Expected {0}x{0} RGB images, got an array of shape {1}.'
            .format(model.image_size, images.shape)
        )
    with forward_only():
        logits = model(images_to_batch(images)).data
    return np.argmax(logits, axis=1)


def predict_parse(model, image):
    """Return the ``(H, W)`` label map of one image."""
    return predict_parse_batch(model, np.asarray(image)[None])[0]


def colorize(labels, palette=CLASS_PALETTE):
    """Map class ids to palette colours in [0, 1].

    Classes beyond the palette reuse it cyclically.
    """
    table = np.asarray(palette, dtype=np.float64) / 255.0
    return table[np.asarray(labels) % len(table)]


def write_prediction(path_pgm, path_ppm, labels, palette=CLASS_PALETTE):
    """Write a label map as an indexed PGM and a colour-mapped PPM."""
    netpbm.write_pgm(path_pgm, labels)
    netpbm.write_ppm(path_ppm, colorize(labels, palette))
