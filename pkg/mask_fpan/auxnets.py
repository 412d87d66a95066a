# coding=utf-8
"""Auxiliary networks: landmarks with occlusion flags, and head pose.

The landmark occlusion module (LOM) regresses every landmark and, in a second
training stage with the landmark branch frozen, predicts whether each landmark
is occluded. Flagged landmarks become an occluded image region through
:func:`occluded_region`.

The pose prediction module (PPM) regresses yaw, pitch and roll in degrees.
:func:`pose_weight` turns a pose into the weight ``p`` of the segmentation
loss.
"""
from __future__ import division, unicode_literals

import logging
from collections import OrderedDict, namedtuple

import numpy as np
from scipy.special import expit

from mask_fpan import exceptions
from mask_fpan.gradcore import (
    Tensor,
    apply,
    binary_cross_entropy,
    forward_only,
)
from mask_fpan.layers import (
    ConvEncoder,
    Linear,
    Module,
    images_to_batch,
    train_loop,
)

logger = logging.getLogger(__name__)  # pylint:disable=invalid-name


PoseWeight = namedtuple('PoseWeight', ('p',))
"""The pose weight ``p >= 1`` of the segmentation loss."""

LomScores = namedtuple('LomScores', ('mean_error', 'flag_accuracy'))
"""Mean landmark error in pixels and per-landmark occlusion-flag accuracy."""


def check_images(images, image_size):
    """Stack images and make sure they are ``image_size`` squares.

    :raises mask_fpan.exceptions.ImageSizeError: Otherwise.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    if images.ndim != 4 or images.shape[1:] != (image_size, image_size, 3):
        raise exceptions.ImageSizeError(
            'Expected {0}x{0} RGB images, got an array of shape {1}.'
            .format(image_size, images.shape)
        )
    return images


def _stack(dataset):
    if not len(dataset):
        raise exceptions.EmptyDatasetError('The training dataset is empty.')
    return np.stack([sample.image for sample in dataset])


class LomModel(Module):
    """A conv encoder with a landmark head and an occlusion head.

    :param image_size: The side of the square input images.
    :param landmark_count: The number of landmarks ``L``.
    :param channels: Encoder channels, one stride-2 layer each.
    :param occlusion_hidden: The width of the occlusion head's hidden layer.
    :param rng: Draws the initial weights.
    """

    def __init__(self, image_size, landmark_count, channels, occlusion_hidden,
                 rng):
        """Build the layers."""
        super(LomModel, self).__init__()
        self.image_size = image_size
        self.landmark_count = landmark_count
        self.channels = list(channels)
        self.occlusion_hidden = occlusion_hidden
        self.backbone = self.add_child(
            'backbone', ConvEncoder(3, channels, image_size, rng)
        )
        features = self.backbone.features
        self.landmark_head = self.add_child(
            'landmark_head', Linear(features, 2 * landmark_count, rng)
        )
        self.occlusion_hidden_layer = self.add_child(
            'occlusion_hidden', Linear(features, occlusion_hidden, rng)
        )
        self.occlusion_head = self.add_child(
            'occlusion_head', Linear(occlusion_hidden, landmark_count, rng)
        )
        self.curves = OrderedDict()

    def architecture(self):
        """Return the constructor arguments as a JSON-ready dict."""
        return OrderedDict((
            ('image_size', self.image_size),
            ('landmark_count', self.landmark_count),
            ('channels', self.channels),
            ('occlusion_hidden', self.occlusion_hidden),
        ))

    @classmethod
    def from_architecture(cls, architecture):
        """Build an untrained model from :meth:`architecture` output."""
        return cls(rng=np.random.default_rng(0), **architecture)

    def landmark_parameters(self):
        """The stage-1 parameters: backbone and landmark head."""
        params = self.backbone.parameters('backbone.')
        params.update(self.landmark_head.parameters('landmark_head.'))
        return params

    def occlusion_parameters(self):
        """The stage-2 parameters: the occlusion head."""
        params = self.occlusion_hidden_layer.parameters('occlusion_hidden.')
        params.update(self.occlusion_head.parameters('occlusion_head.'))
        return params

    def to_pixels(self, normalised):
        """Map normalised landmark outputs to pixel coordinates."""
        half = self.image_size / 2.0
        return normalised * half + (self.image_size - 1) / 2.0

    def to_normalised(self, pixels):
        """Map pixel coordinates to the landmark head's target range."""
        half = self.image_size / 2.0
        return (pixels - (self.image_size - 1) / 2.0) / half

    def occlusion_logits(self, features):
        """Return ``(B, L)`` occlusion logits for backbone features."""
        hidden = apply('relu', [self.occlusion_hidden_layer(features)])
        return self.occlusion_head(hidden)


def _landmark_targets(dataset, model):
    for sample in dataset:
        if sample.landmarks_2d.shape[0] != model.landmark_count:
            raise exceptions.MissingLabelsError(
                'Every landmark training sample needs {} landmarks, one has {}.'
                .format(model.landmark_count, sample.landmarks_2d.shape[0])
            )
    targets = np.stack([
        model.to_normalised(sample.landmarks_2d).reshape(-1)
        for sample in dataset
    ])
    flags = np.stack([sample.landmark_occluded for sample in dataset])
    return targets, flags


def train_lom(dataset, config, seed=0):
    """Train a landmark occlusion module in two stages.

    Stage 1 minimises the mean squared landmark error (in normalised
    coordinates) over the backbone and the landmark head. Stage 2 trains only
    the occlusion head with binary cross-entropy on backbone features computed
    without a tape, so stage-1 parameters stay bit-identical.

    :param dataset: A :class:`mask_fpan.faceworld.Dataset` with landmarks.
    :param config: A :class:`mask_fpan.config.Config`.
    :param seed: Seeds weights and batch order.
    :returns: A :class:`LomModel`. ``model.curves`` maps ``landmark`` and
        ``occlusion`` to per-step losses.
    :raises mask_fpan.exceptions.MissingLabelsError: If a sample lacks
        landmarks.
    :raises mask_fpan.exceptions.EmptyDatasetError: If ``dataset`` is empty.
    """
    settings = config.lom
    images = _stack(dataset)
    size = images.shape[1]
    check_images(images, size)
    rng = np.random.default_rng([seed, 11])
    model = LomModel(size, config.data.landmark_count, settings.channels,
                     settings.occlusion_hidden, rng)
    targets, flags = _landmark_targets(dataset, model)
    batch = images_to_batch(images)

    def landmark_loss(indices):
        features = model.backbone(Tensor.wrap(batch.data[indices]))
        return apply('mse', [
            model.landmark_head(features), Tensor.wrap(targets[indices])
        ])

    logger.info('Training LOM stage 1 on %d samples.', len(dataset))
    model.curves['landmark'] = train_loop(
        model.landmark_parameters(), landmark_loss, len(dataset), settings,
        rng, 'LOM landmarks', steps=settings.landmark_steps,
    )

    with forward_only():
        features = model.backbone(batch).data

    def occlusion_loss(indices):
        logits = model.occlusion_logits(Tensor.wrap(features[indices]))
        return binary_cross_entropy(logits, flags[indices])

    logger.info('Training LOM stage 2 with the landmark branch frozen.')
    model.curves['occlusion'] = train_loop(
        model.occlusion_parameters(), occlusion_loss, len(dataset), settings,
        rng, 'LOM occlusion', steps=settings.occlusion_steps,
    )
    return model


def lom_predict_batch(model, images):
    """Return ``(B, L, 2)`` landmarks and ``(B, L)`` occlusion probabilities."""
    images = check_images(images, model.image_size)
    with forward_only():
        features = model.backbone(images_to_batch(images))
        landmarks = model.landmark_head(features).data
        logits = model.occlusion_logits(features).data
    landmarks = model.to_pixels(landmarks.reshape(len(images), -1, 2))
    return landmarks, expit(logits)


def lom_predict(model, image):
    """Predict landmarks and per-landmark occlusion probabilities.

    :returns: ``(landmarks_2d, occ_prob)`` of shapes ``(L, 2)`` and ``(L,)``.
    :raises mask_fpan.exceptions.ImageSizeError: If the image does not match
        the training size.
    """
    landmarks, probs = lom_predict_batch(model, image)
    return landmarks[0], probs[0]


def lom_verdict(occ_prob, threshold=0.5):
    """Whether any landmark is flagged as occluded."""
    return bool(np.any(np.asarray(occ_prob) > threshold))


def occluded_region(landmarks_2d, occ_prob, threshold, dilation_radius,
                    image_size=64):
    """Return the union of disks around landmarks flagged as occluded.

    A pixel belongs to a disk when its centre lies within ``dilation_radius``
    of the landmark.

    :raises ValueError: If ``threshold`` is outside ``(0, 1)``.
    """
    if not 0 < threshold < 1:
        raise ValueError('The threshold must lie in (0, 1), got {}.'
                         .format(threshold))
    if isinstance(image_size, (tuple, list)):
        height, width = image_size
    else:
        height = width = image_size
    mask = np.zeros((height, width), dtype=bool)
    ys, xs = np.mgrid[0:height, 0:width]
    flagged = np.asarray(landmarks_2d)[np.asarray(occ_prob) > threshold]
    for x, y in flagged:
        mask |= (xs - x) ** 2 + (ys - y) ** 2 <= dilation_radius ** 2
    return mask


def evaluate_lom(model, dataset, threshold=0.5):
    """Score a landmark model on annotated samples.

    :returns: A :class:`LomScores`.
    """
    images = _stack(dataset)
    landmarks, probs = lom_predict_batch(model, images)
    truth = np.stack([sample.landmarks_2d for sample in dataset])
    flags = np.stack([sample.landmark_occluded for sample in dataset])
    error = np.linalg.norm(landmarks - truth, axis=-1).mean()
    accuracy = np.mean((probs > threshold) == flags)
    return LomScores(float(error), float(accuracy))


class PpmModel(Module):
    """A conv encoder with a two-layer regression head for yaw, pitch, roll.

    Outputs are scaled by 1/90 during training and clamped to ``pose_range``
    at prediction.
    """

    def __init__(self, image_size, channels, hidden, pose_range, rng):
        """Build the layers."""
        super(PpmModel, self).__init__()
        self.image_size = image_size
        self.channels = list(channels)
        self.hidden = hidden
        self.pose_range = [float(limit) for limit in pose_range]
        self.backbone = self.add_child(
            'backbone', ConvEncoder(3, channels, image_size, rng)
        )
        self.hidden_layer = self.add_child(
            'hidden', Linear(self.backbone.features, hidden, rng)
        )
        self.head = self.add_child('head', Linear(hidden, 3, rng))
        self.curves = OrderedDict()

    def architecture(self):
        """Return the constructor arguments as a JSON-ready dict."""
        return OrderedDict((
            ('image_size', self.image_size),
            ('channels', self.channels),
            ('hidden', self.hidden),
            ('pose_range', self.pose_range),
        ))

    @classmethod
    def from_architecture(cls, architecture):
        """Build an untrained model from :meth:`architecture` output."""
        return cls(rng=np.random.default_rng(0), **architecture)

    def __call__(self, batch):
        features = self.backbone(batch)
        return self.head(apply('relu', [self.hidden_layer(features)]))


def train_ppm(dataset, config, seed=0):
    """Train a pose prediction module with MSE on degrees / 90.

    :returns: A :class:`PpmModel` whose ``curves['pose']`` holds the losses.
    :raises mask_fpan.exceptions.MissingLabelsError: If a sample has no pose.
    :raises mask_fpan.exceptions.EmptyDatasetError: If ``dataset`` is empty.
    """
    settings = config.ppm
    images = _stack(dataset)
    if any(sample.pose is None for sample in dataset):
        raise exceptions.MissingLabelsError(
            'Every pose training sample needs a ground-truth pose.'
        )
    size = images.shape[1]
    check_images(images, size)
    rng = np.random.default_rng([seed, 13])
    model = PpmModel(size, settings.channels, settings.hidden,
                     config.data.pose_range, rng)
    targets = np.array([sample.pose for sample in dataset]) / 90.0
    batch = images_to_batch(images)

    def pose_loss(indices):
        return apply('mse', [
            model(Tensor.wrap(batch.data[indices])),
            Tensor.wrap(targets[indices]),
        ])

    logger.info('Training PPM on %d samples.', len(dataset))
    model.curves['pose'] = train_loop(
        model.parameters(), pose_loss, len(dataset), settings, rng, 'PPM'
    )
    return model


def ppm_predict_batch(model, images):
    """Return ``(B, 3)`` predicted poses in degrees."""
    images = check_images(images, model.image_size)
    with forward_only():
        raw = model(images_to_batch(images)).data * 90.0
    limits = np.array(model.pose_range)
    return np.clip(raw, -limits, limits)


def ppm_predict(model, image):
    """Predict ``(yaw, pitch, roll)`` in degrees for one image."""
    return tuple(float(angle) for angle in ppm_predict_batch(model, image)[0])


def evaluate_ppm(model, dataset):
    """Return the mean absolute error per axis, ``(yaw, pitch, roll)``."""
    predicted = ppm_predict_batch(model, _stack(dataset))
    truth = np.array([sample.pose for sample in dataset])
    return tuple(float(e) for e in np.abs(predicted - truth).mean(axis=0))


def pose_weight(yaw, pitch, roll, lambda_p):  # pylint:disable=unused-argument
    """Return ``PoseWeight(1 + lambda_p * (|yaw| + |pitch|) / 90)``.

    Roll is ignored: an in-plane rotation hides nothing.
    """
    return PoseWeight(1.0 + lambda_p * (abs(yaw) + abs(pitch)) / 90.0)
