# coding=utf-8
"""Custom exceptions defined by Mask-FPAN.

The command line application sorts these into usage errors, data errors and
internal errors. See :mod:`mask_fpan.cli` for the mapping onto exit codes.
"""
from __future__ import unicode_literals


class CheckpointEntryMissingError(Exception):
    """A checkpoint lacks one or more entries a model needs.

    The exception message names every missing entry. See
    :meth:`mask_fpan.layers.Module.load_state_dict`.
    """


class CheckpointFormatError(Exception):
    """A checkpoint file is not a valid ``MFPN`` container.

    Raised for a wrong magic number or a truncated entry. The exception message
    names the offending file. See :func:`mask_fpan.gradcore.load_checkpoint`.
    """


class ConfigFileNotFoundError(Exception):
    """We cannot find the requested Mask-FPAN configuration file.

    See :mod:`mask_fpan.config` for more information on how configuration
    files are handled.
    """


class ConfigKeyError(Exception):
    """A configuration document contains an unknown section or key.

    Parsing is strict: an unknown key aborts before any work is done.
    """


class ConfigValueError(Exception):
    """A configuration value has the wrong type or an impossible value."""


class DatasetFormatError(Exception):
    """A dataset directory contains missing or malformed files.

    The ``problems`` attribute is a list of ``(path, reason)`` pairs, one per
    offending file. Datasets are loaded all-or-nothing, so a single problem
    refuses the whole load.
    """

    def __init__(self, problems):
        """Record the problems and build a message listing all of them."""
        self.problems = list(problems)
        super(DatasetFormatError, self).__init__(
            'The dataset could not be loaded. Problems found: {}'.format(
                '; '.join(
                    '{}: {}'.format(path, reason)
                    for path, reason in self.problems
                )
            )
        )


class DatasetNotFoundError(Exception):
    """A dataset directory does not exist."""


class EmptyDatasetError(Exception):
    """A training routine was handed no samples."""


class ImageSizeError(Exception):
    """An image does not have the size a model was trained for."""


class InsufficientLandmarksError(Exception):
    """Too few visible landmarks are available to fit a pose."""


class LabelOutOfRangeError(Exception):
    """A class id is negative or not smaller than the number of classes."""


class MissingLabelsError(Exception):
    """A dataset lacks the annotations a training routine needs.

    For example, landmark training needs ``landmarks_2d`` and
    ``landmark_occluded`` on every sample.
    """


class ModeSignalError(Exception):
    """An ablation mode is inconsistent with the signals it is given.

    For example, ``MASK_FPAN`` with zero poses per sample would silently turn
    the UV augmentation off.
    """


class NoVisibleTexelsError(Exception):
    """A UV atlas has no visible texel to complete from."""


class NonFiniteError(Exception):
    """An operation produced NaN or infinite values in checked mode.

    Also raised when a training loss diverges. See
    :class:`mask_fpan.gradcore.Tape` and :func:`mask_fpan.layers.train_loop`.
    """


class NonScalarLossError(Exception):
    """Back-propagation was started from a tensor with more than one value."""


class NotOnTapeError(Exception):
    """Back-propagation was started from a tensor the tape never recorded."""


class PolicyError(Exception):
    """A label-regime policy does not hold three probabilities summing to 1."""


class PoseRangeError(Exception):
    """A head pose lies outside the range the face model supports."""


class ReportFormatError(Exception):
    """A report document does not follow the published report schema."""


class RoutingViolationError(Exception):
    """A sample reached a stage the routing rules keep it away from.

    UV augmentation accepts occlusion-free samples only.
    """


class ShapeMismatchError(Exception):
    """Tensor shapes are incompatible with the requested operation.

    The exception message names the operation and the offending shapes.
    """


class UnknownModeError(Exception):
    """An ablation mode name is not one of the known modes."""


class UnknownOpError(Exception):
    """An operation kind has not been registered with the tape machinery."""


class UnresolvedAuxError(Exception):
    """A training sample has no occlusion mask or pose source assigned."""


class UntrainedModelError(Exception):
    """A routine that needs a trained model was handed an untrained one."""


class VersionMismatchError(Exception):
    """A file was written by an incompatible format version.

    The exception message names both the found and the supported version.
    """
