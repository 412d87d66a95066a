# coding=utf-8
"""The ``mask-fpan`` command line application.

Four sub-commands are available::

    mask-fpan gen-data --out DIR --n N --seed S --policy a,b,c --pose-range Y,P,R
    mask-fpan train --config FILE --mode MODE --out DIR
    mask-fpan ablate --config FILE --out DIR
    mask-fpan demo --ckpt DIR --image FILE --out DIR

Exit codes are 0 on success, 2 for usage errors, 3 for data errors (missing
or malformed datasets, configuration files, checkpoints and images) and 4 for
anything else.
"""
from __future__ import division, print_function, unicode_literals

import functools
import logging
import os
import sys

import numpy as np
from plumbum import cli

from mask_fpan import exceptions, faceworld, metrics, netpbm, pipeline
from mask_fpan.auxnets import lom_predict, ppm_predict
from mask_fpan.config import Config, thread_count
from mask_fpan.constants import ABLATION_MODES
from mask_fpan.dom import deocclude
from mask_fpan.segm import predict_parse, write_prediction

logger = logging.getLogger(__name__)  # pylint:disable=invalid-name

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

USAGE_ERRORS = (
    exceptions.PolicyError,
    exceptions.PoseRangeError,
    exceptions.UnknownModeError,
)

DATA_ERRORS = (
    exceptions.CheckpointEntryMissingError,
    exceptions.CheckpointFormatError,
    exceptions.ConfigFileNotFoundError,
    exceptions.ConfigKeyError,
    exceptions.ConfigValueError,
    exceptions.DatasetFormatError,
    exceptions.DatasetNotFoundError,
    exceptions.EmptyDatasetError,
    exceptions.ImageSizeError,
    exceptions.MissingLabelsError,
    exceptions.ModeSignalError,
    exceptions.ReportFormatError,
    exceptions.VersionMismatchError,
    IOError,
    OSError,
)

DEMO_FILES = ('overlay.ppm', 'deocc.ppm', 'mask.pgm', 'parse.pgm',
              'parse_color.ppm')
"""The files written by ``mask-fpan demo``."""


def exit_code(error):
    """Return the exit code for an exception raised by a command."""
    if isinstance(error, USAGE_ERRORS):
        return EXIT_USAGE
    if isinstance(error, DATA_ERRORS):
        return EXIT_DATA
    return EXIT_INTERNAL


def guarded(method):
    """Turn exceptions raised by a command's ``main`` into exit codes."""
    @functools.wraps(method)
    def wrapper(self, *args):
        try:
            method(self, *args)
        except Exception as err:  # pylint:disable=broad-except
            code = exit_code(err)
            if code == EXIT_INTERNAL:
                logger.exception('Internal error.')
            print('{}: {}'.format(type(err).__name__, err), file=sys.stderr)
            return code
        return 0
    return wrapper


def floats(count):
    """Return a switch type parsing ``count`` comma-separated numbers."""
    def parse(text):
        values = [float(field) for field in text.split(',')]
        if len(values) != count:
            raise ValueError('expected {} comma-separated numbers, got {!r}'
                             .format(count, text))
        return values
    parse.__name__ = '{}-floats'.format(count)
    return parse


def load_config(path):
    """Read ``path``, or the XDG configuration file, or fall back to defaults."""
    if path is not None:
        return Config.read(path)
    try:
        return Config.read()
    except exceptions.ConfigFileNotFoundError:
        logger.info('No configuration file found. Using the defaults.')
        return Config()


class MaskFpanApp(cli.Application):
    """Train and run occlusion-robust face parsing models."""

    PROGNAME = 'mask-fpan'
    VERSION = '1.0.0'

    verbose = cli.Flag(['-v', '--verbose'], help='Log at DEBUG level.')

    def main(self, *args):
        """Configure logging, or complain when no sub-command is given."""
        if args:
            print('Unknown command: {}'.format(args[0]), file=sys.stderr)
            self.help()
            return EXIT_USAGE
        if not self.nested_command:
            self.help()
            return EXIT_USAGE
        logging.basicConfig(
            level=logging.DEBUG if self.verbose else logging.WARNING,
            format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        )
        return None


class _ConfigMixin(object):  # pylint:disable=too-few-public-methods
    config_path = cli.SwitchAttr(
        ['--config'], str, default=None,
        help='A JSON configuration document. Defaults to the XDG settings '
             'file, then to the built-in defaults.',
    )


@MaskFpanApp.subcommand('gen-data')
class GenData(_ConfigMixin, cli.Application):
    """Generate a synthetic dataset in the native layout."""

    out = cli.SwitchAttr(['--out'], str, mandatory=True,
                         help='The dataset directory to write.')
    n = cli.SwitchAttr(['--n'], int, default=None,
                       help='The number of samples. Defaults to data.n_samples.')
    seed = cli.SwitchAttr(['--seed'], int, default=None,
                          help='The dataset seed. Defaults to data.seed.')
    policy = cli.SwitchAttr(
        ['--policy'], floats(3), default=None,
        help='Probabilities of the occluded-with-mask, occluded-without-mask '
             'and clean regimes, e.g. 0.4,0.3,0.3.',
    )
    pose_range = cli.SwitchAttr(
        ['--pose-range'], floats(3), default=None,
        help='Largest absolute yaw,pitch,roll in degrees.',
    )

    @guarded
    def main(self):  # pylint:disable=arguments-differ
        """Write the dataset."""
        config = load_config(self.config_path)
        data = config.data
        n = data.n_samples if self.n is None else self.n
        if n < 1:
            raise exceptions.EmptyDatasetError(
                '--n must be positive, not {}.'.format(n)
            )
        dataset = faceworld.export_dataset(
            self.out,
            n,
            data.seed if self.seed is None else self.seed,
            data.policy if self.policy is None else self.policy,
            faceworld.model_from_config(data),
            data.pose_range if self.pose_range is None else self.pose_range,
            data.image_size,
            faceworld.options_from_config(data),
            thread_count(),
        )
        counts = pipeline.regime_counts(dataset)
        print('Wrote {} samples to {} ({}).'.format(
            len(dataset), self.out,
            ', '.join('{} {}'.format(v, k) for k, v in counts.items())
        ))


def _write_table(path, text):
    with open(path, 'w') as handle:
        handle.write(text)


@MaskFpanApp.subcommand('train')
class Train(_ConfigMixin, cli.Application):
    """Train one ablation mode and write its checkpoints and reports."""

    mode = cli.SwitchAttr(
        ['--mode'], str, mandatory=True,
        help='One of: {}.'.format(', '.join(ABLATION_MODES)),
    )
    out = cli.SwitchAttr(['--out'], str, mandatory=True,
                         help='The run directory to write.')
    seed = cli.SwitchAttr(['--seed'], int, default=None,
                          help='The run seed. Defaults to the first of '
                               'pipeline.seeds.')
    dataset = cli.SwitchAttr(['--dataset'], str, default=None,
                             help='Train on this dataset directory instead '
                                  'of data.dataset_dir.')

    @guarded
    def main(self):  # pylint:disable=arguments-differ
        """Train, evaluate and save."""
        pipeline.mode_signals(self.mode)
        config = load_config(self.config_path)
        if self.dataset is not None:
            config = config.replace(data={'dataset_dir': self.dataset})
        seed = config.pipeline.seeds[0] if self.seed is None else self.seed
        run = pipeline.run_training(config, self.mode, seed)
        pipeline.save_run(self.out, run)
        rows = [('{} ({})'.format(self.mode, split), report)
                for split, report in run.reports.items()]
        if rows:
            table = metrics.format_table(rows)
            _write_table(os.path.join(self.out, 'table.txt'), table)
            print(table, end='')


@MaskFpanApp.subcommand('ablate')
class Ablate(_ConfigMixin, cli.Application):
    """Train every ablation mode with paired seeds and tabulate them."""

    out = cli.SwitchAttr(['--out'], str, mandatory=True,
                         help='The directory for runs and tables.')

    @guarded
    def main(self):  # pylint:disable=arguments-differ
        """Run the ablation and write one run directory per mode and seed."""
        config = load_config(self.config_path)
        runs = pipeline.run_ablation(config)
        for mode, mode_runs in runs.items():
            for run in mode_runs:
                pipeline.save_run(os.path.join(
                    self.out, mode, 'seed_{}'.format(run.seed)
                ), run)
        tables = pipeline.ablation_tables(runs)
        _write_table(os.path.join(self.out, 'table.txt'), tables)
        print(tables, end='')


_AXIS_COLOURS = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


def _stamp(image, x, y, colour, radius=1):
    height, width = image.shape[:2]
    col, row = int(round(x)), int(round(y))
    image[max(row - radius, 0):min(row + radius + 1, height),
          max(col - radius, 0):min(col + radius + 1, width)] = colour


def draw_overlay(image, landmarks_2d, occ_prob, pose, threshold=0.5):
    """Draw landmarks and head pose axes on a copy of ``image``.

    Landmarks flagged as occluded are magenta, the others yellow. The yaw,
    pitch and roll of ``pose`` rotate three axes drawn in red, green and blue
    from the landmarks' centroid.
    """
    overlay = np.array(image, dtype=np.float64, copy=True)
    height, width = overlay.shape[:2]
    centre = np.asarray(landmarks_2d).mean(axis=0)
    rotation = faceworld.rotation_matrix(*pose)
    length = 0.25 * min(height, width)
    for axis, colour in zip(rotation.T, _AXIS_COLOURS):
        end = centre + length * np.array([axis[0], -axis[1]])
        for t in np.linspace(0.0, 1.0, int(2 * length) + 1):
            x, y = centre + t * (end - centre)
            if 0 <= x < width and 0 <= y < height:
                _stamp(overlay, x, y, colour, radius=0)
    for (x, y), prob in zip(landmarks_2d, occ_prob):
        colour = (1.0, 0.0, 1.0) if prob > threshold else (1.0, 1.0, 0.0)
        if 0 <= x < width and 0 <= y < height:
            _stamp(overlay, x, y, colour)
    return overlay


def run_demo(run, image, directory):
    """Run every model of ``run`` on one image and write :data:`DEMO_FILES`.

    :returns: The predicted ``(yaw, pitch, roll)``.
    :raises mask_fpan.exceptions.CheckpointEntryMissingError: If the run
        lacks one of the four models.
    """
    lom, ppm, dom, segm = pipeline.require_models(
        run, ('lom', 'ppm', 'dom', 'segm')
    )
    threshold = run.config.lom.threshold if run.config else 0.5
    mask_threshold = run.config.dom.threshold if run.config else 0.5
    if not os.path.isdir(directory):
        os.makedirs(directory)
    landmarks, occ_prob = lom_predict(lom, image)
    pose = ppm_predict(ppm, image)
    output = deocclude(dom, image, mask_threshold)
    path = functools.partial(os.path.join, directory)
    netpbm.write_ppm(path('overlay.ppm'),
                     draw_overlay(image, landmarks, occ_prob, pose, threshold))
    netpbm.write_ppm(path('deocc.ppm'), output.recon)
    netpbm.write_pgm(path('mask.pgm'), output.occ_mask.astype(np.uint8) * 255)
    write_prediction(path('parse.pgm'), path('parse_color.ppm'),
                     predict_parse(segm, image))
    return pose


@MaskFpanApp.subcommand('demo')
class Demo(cli.Application):
    """Run a trained MASK_FPAN run on one image."""

    ckpt = cli.SwitchAttr(['--ckpt'], str, mandatory=True,
                          help='A run directory written by train or ablate.')
    image = cli.SwitchAttr(['--image'], str, mandatory=True,
                           help='A PPM image of the training size.')
    out = cli.SwitchAttr(['--out'], str, mandatory=True,
                         help='The directory for the emitted images.')

    @guarded
    def main(self):  # pylint:disable=arguments-differ
        """Write the demo images and print the predicted pose."""
        run = pipeline.load_run(self.ckpt)
        pose = run_demo(run, netpbm.read_ppm(self.image), self.out)
        print('yaw {:.1f} pitch {:.1f} roll {:.1f}'.format(*pose))


def main():
    """Run the application and exit with its exit code."""
    MaskFpanApp.run()
