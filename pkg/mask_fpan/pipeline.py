# coding=utf-8
"""Semi-supervised orchestration of the Mask-FPAN modules.

A training run takes one ablation mode. The mode decides which auxiliary
signals reach the segmenter:

``SEGM``
    Plain segmenter. Pose weight 1, occlusion maps from labelled masks only.
``SEGM+PPM``
    Adds the predicted pose weight.
``SEGM+PPM+LOM``
    Adds landmark-based occlusion regions for occluded samples without a
    mask label.
``SEGM+PPM+LOM+DOM``
    Replaces those regions with de-occlusion masks, written into the labels.
``MASK_FPAN``
    Adds UV augmentation of the samples found occlusion-free.

Every sample goes through :func:`route` once the landmark module is on.
"""
from __future__ import division, unicode_literals

import json
import logging
import os
import warnings
from collections import Counter, OrderedDict, namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from packaging.version import InvalidVersion, Version

from mask_fpan import auxnets, exceptions, faceworld, metrics, uvm
from mask_fpan.auxnets import LomModel, PpmModel
from mask_fpan.config import Config, thread_count
from mask_fpan.constants import ABLATION_MODES, MANIFEST_VERSION, REGIMES
from mask_fpan.dom import DomModel, DomOutput, deocclude, train_dom
from mask_fpan.gradcore import load_checkpoint, save_checkpoint
from mask_fpan.segm import (
    AuxSignal,
    SegModel,
    predict_parse,
    train_segm,
)

logger = logging.getLogger(__name__)  # pylint:disable=invalid-name


SIGNALS = ('ppm', 'lom', 'dom', 'uvm')
"""The auxiliary signals, in the order the ablation modes add them."""

_MODE_SIGNALS = OrderedDict((
    ('SEGM', ()),
    ('SEGM+PPM', ('ppm',)),
    ('SEGM+PPM+LOM', ('ppm', 'lom')),
    ('SEGM+PPM+LOM+DOM', ('ppm', 'lom', 'dom')),
    ('MASK_FPAN', ('ppm', 'lom', 'dom', 'uvm')),
))

BRANCHES = ('direct_to_uvm', 'to_dom', 'direct_to_segm')
"""Where :func:`route` can send a sample."""

REASONS = ('no_occlusion_detected', 'mask_label_missing', 'mask_label_present')
"""Why :func:`route` picked a branch, one reason per branch."""

MODEL_CLASSES = OrderedDict((
    ('lom', LomModel),
    ('ppm', PpmModel),
    ('dom', DomModel),
    ('segm', SegModel),
))

MANIFEST_KEYS = ('format_version', 'mode', 'seed', 'models', 'reports')

RouteDecision = namedtuple('RouteDecision', ('branch', 'reason'))

Datasets = namedtuple('Datasets', (
    'train', 'eval_clean', 'eval_occluded', 'face_model',
))
"""The training set, the two frozen evaluation splits and the face model."""

TrainingRun = namedtuple('TrainingRun', (
    'mode', 'seed', 'models', 'reports', 'curves', 'instrumentation',
    'config',
))
"""Everything one training run produces.

``models`` and ``reports`` are ordered dicts keyed by model name and
evaluation split. ``curves`` maps ``<model>.<curve>`` to per-step losses.
``instrumentation`` records the routing counts, occlusion map sources and
pose weights the segmenter was trained with.
"""


def mode_signals(mode):
    """Return the frozenset of signals ``mode`` enables.

    :raises mask_fpan.exceptions.UnknownModeError: If ``mode`` is unknown.
    """
    try:
        return frozenset(_MODE_SIGNALS[mode])
    except KeyError:
        raise exceptions.UnknownModeError(
            'Unknown ablation mode {!r}. Valid modes are: {}.'
            .format(mode, ', '.join(ABLATION_MODES))
        )


def _modes_are_monotonic():
    signals = [mode_signals(mode) for mode in ABLATION_MODES]
    return all(low < high for low, high in zip(signals, signals[1:]))


assert tuple(_MODE_SIGNALS) == ABLATION_MODES
assert _modes_are_monotonic()


def check_mode(mode, config):
    """Make sure ``config`` lets every signal of ``mode`` take effect.

    :returns: The mode's signals.
    :raises mask_fpan.exceptions.UnknownModeError: If ``mode`` is unknown.
    :raises mask_fpan.exceptions.ModeSignalError: If an enabled signal is
        configured to do nothing.
    """
    signals = mode_signals(mode)
    if 'dom' in signals and config.dom.n_pairs < 1:
        raise exceptions.ModeSignalError(
            'Mode {} de-occludes, but dom.n_pairs is {}.'
            .format(mode, config.dom.n_pairs)
        )
    if 'uvm' in signals and (config.uvm.poses_per_sample < 1 or
                             config.uvm.max_sources < 1):
        raise exceptions.ModeSignalError(
            'Mode {} augments through UV maps, but uvm.poses_per_sample is {} '
            'and uvm.max_sources is {}.'.format(
                mode, config.uvm.poses_per_sample, config.uvm.max_sources
            )
        )
    return signals


def route(sample, lom_verdict):
    """Decide where a sample goes next.

    Samples without a detected occlusion go to the UV module. Detected
    occlusions go straight to the segmenter when their mask is labelled, and
    to the de-occlusion module otherwise.

    :param sample: A :class:`mask_fpan.faceworld.FaceSample`.
    :param lom_verdict: Whether the landmark module detected an occlusion.
    :returns: A :class:`RouteDecision`.
    """
    if not lom_verdict:
        return RouteDecision('direct_to_uvm', 'no_occlusion_detected')
    if sample.regime == 'occluded_with_mask':
        return RouteDecision('direct_to_segm', 'mask_label_present')
    return RouteDecision('to_dom', 'mask_label_missing')


def synthesize_labels(sample, dom, num_classes, threshold=0.5):
    """Write a de-occlusion mask into a sample's labels.

    Masked pixels get the occlusion class, the mask becomes the sample's
    occluder mask and the regime becomes ``occluded_with_mask``. An empty
    mask leaves the sample as it is. Either way the result is flagged as
    ``synthetic``.

    :param dom: A trained :class:`mask_fpan.dom.DomModel`, or the
        :class:`mask_fpan.dom.DomOutput` it produced for this sample.
    :param num_classes: The size of the class scheme. The last class marks
        occluders.
    :raises mask_fpan.exceptions.UntrainedModelError: If ``dom`` is a model
        that was never trained.
    """
    if isinstance(dom, DomOutput):
        mask = dom.occ_mask
    else:
        if not getattr(dom, 'trained', False):
            raise exceptions.UntrainedModelError(
                'Labels can only be synthesized with a trained de-occlusion '
                'model.'
            )
        mask = deocclude(dom, sample.image, threshold).occ_mask
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != sample.part_labels.shape:
        raise exceptions.ShapeMismatchError(
            'A mask of shape {} cannot label a sample of shape {}.'
            .format(mask.shape, sample.part_labels.shape)
        )
    if not mask.any():
        return sample.replace(synthetic=True)
    labels = sample.part_labels.copy()
    labels[mask] = num_classes - 1
    return sample.replace(
        part_labels=labels,
        occluder_mask=mask,
        regime='occluded_with_mask',
        synthetic=True,
    )


def build_datasets(config, face_model=None, threads=None):
    """Build the training set and the frozen evaluation splits.

    Synthetic data is drawn with the seed ``data.seed``. The first
    ``n_samples * (1 - eval_fraction)`` indices form the training set and the
    rest the evaluation set, whose ``occluded_no_mask`` draws are revealed as
    their labelled twins. With ``data.dataset_dir`` set, that dataset is
    loaded instead and its last ``eval_fraction`` share is held out; only its
    labelled samples are evaluated.

    :returns: A :class:`Datasets`.
    """
    data = config.data
    if face_model is None:
        face_model = faceworld.model_from_config(data)
    if threads is None:
        threads = thread_count()
    if data.dataset_dir is not None:
        loaded = faceworld.load_dataset(data.dataset_dir, data.part_table)
        n_eval = int(round(len(loaded) * data.eval_fraction))
        n_train = len(loaded) - n_eval
        train = loaded.subset(range(n_train))
        held_out = loaded.subset(range(n_train, len(loaded)))
    else:
        options = faceworld.options_from_config(data)
        n_eval = int(round(data.n_samples * data.eval_fraction))
        n_train = data.n_samples - n_eval
        train = faceworld.generate_dataset(
            face_model, n_train, data.seed, data.policy, data.pose_range,
            data.image_size, options, threads,
        )
        held_out = faceworld.generate_dataset(
            face_model, n_eval, data.seed, data.policy, data.pose_range,
            data.image_size, options, threads, reveal=True, start=n_train,
        )
    eval_clean = held_out.subset(
        [i for i, s in enumerate(held_out) if s.regime == 'clean']
    )
    eval_occluded = held_out.subset(
        [i for i, s in enumerate(held_out) if s.regime == 'occluded_with_mask']
    )
    logger.info('Datasets: %d training, %d clean and %d occluded evaluation '
                'samples.', len(train), len(eval_clean), len(eval_occluded))
    return Datasets(train, eval_clean, eval_occluded, face_model)


def _batched(function, images, size=64):
    parts = [function(images[i:i + size]) for i in range(0, len(images), size)]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(column) for column in zip(*parts))
    return np.concatenate(parts)


def _shared(cache, key, build):
    if cache is None:
        return build()
    if key not in cache:
        cache[key] = build()
    return cache[key]


def _lom_landmarks(sample, landmarks):
    """Give a sample without landmark labels the predicted landmarks."""
    if sample.has_landmarks:
        return sample
    count = landmarks.shape[0]
    return sample.replace(
        landmarks_2d=landmarks,
        landmark_occluded=np.zeros(count, dtype=bool),
        landmark_visible=np.ones(count, dtype=bool),
    )


def _uv_views(config, datasets, samples, decisions, predicted, seed, threads):
    """Return re-rendered views of the samples routed to the UV module."""
    settings = config.uvm
    sources = []
    for index, decision in enumerate(decisions):
        if decision.branch != 'direct_to_uvm':
            continue
        sample = samples[index]
        if sample.regime != 'clean':
            warnings.warn(
                'Sample {} is {} but no occlusion was detected; it is not '
                'augmented.'.format(index, sample.regime), RuntimeWarning
            )
            continue
        sources.append(_lom_landmarks(sample, predicted[index]))
        if len(sources) == settings.max_sources:
            break
    source_set = faceworld.Dataset(sources, datasets.train.class_names)
    augmented = uvm.augment(
        source_set, datasets.face_model, settings.poses_per_sample,
        settings.pose_range, np.random.default_rng([seed, 29]),
        settings.atlas_size, threads,
    )
    originals = set(id(sample) for sample in sources)
    return [sample for sample in augmented if id(sample) not in originals]


def _train_aux_models(config, signals, datasets, seed, cache):
    models = OrderedDict()
    train = datasets.train
    if 'lom' in signals:
        models['lom'] = _shared(
            cache, ('lom', seed), lambda: auxnets.train_lom(train, config, seed)
        )
    if 'ppm' in signals:
        models['ppm'] = _shared(
            cache, ('ppm', seed), lambda: auxnets.train_ppm(train, config, seed)
        )
    if 'dom' in signals:
        data = config.data

        def pairs():
            return faceworld.generate_pairs(
                datasets.face_model, config.dom.n_pairs, data.seed,
                data.pose_range, data.image_size,
                faceworld.options_from_config(data), thread_count(),
                start=data.n_samples,
            )

        models['dom'] = _shared(cache, ('dom', seed), lambda: train_dom(
            _shared(cache, 'pairs', pairs), config, seed
        ))
    return models


def run_training(config, mode, seed=0, datasets=None, cache=None):
    """Train every model ``mode`` needs and evaluate the segmenter.

    :param config: A :class:`mask_fpan.config.Config`.
    :param mode: One of :data:`mask_fpan.constants.ABLATION_MODES`.
    :param seed: Seeds every model and random choice of the run.
    :param datasets: A :class:`Datasets`. Built from ``config`` if omitted.
    :param cache: An optional dict. Auxiliary models and datasets stored
        there are reused by later runs with the same seed, which gives the
        same result as training them again.
    :returns: A :class:`TrainingRun`.
    :raises mask_fpan.exceptions.UnknownModeError: If ``mode`` is unknown.
    :raises mask_fpan.exceptions.ModeSignalError: If ``config`` disables a
        signal the mode needs.
    """
    signals = check_mode(mode, config)
    threads = thread_count()
    if datasets is None:
        datasets = _shared(cache, 'datasets',
                           lambda: build_datasets(config, threads=threads))
    train = datasets.train
    num_classes = train.num_classes
    logger.info('Training mode %s with seed %s.', mode, seed)
    models = _train_aux_models(config, signals, datasets, seed, cache)

    samples = list(train)
    decisions = [None] * len(samples)
    predicted = probs = None
    sources = []
    masks = []
    routes = Counter()
    synthesized = 0
    if 'lom' in signals:
        lom = models['lom']
        images = np.stack([sample.image for sample in samples])
        predicted, probs = _batched(
            lambda chunk: auxnets.lom_predict_batch(lom, chunk), images
        )
        radius = config.lom.dilation_fraction * train[0].image.shape[1]
        for index, sample in enumerate(samples):
            verdict = auxnets.lom_verdict(probs[index], config.lom.threshold)
            decisions[index] = route(sample, verdict)
            routes[decisions[index].branch] += 1
            logger.debug('Sample %d routed %s (%s).', index,
                         *decisions[index])
    for index, sample in enumerate(samples):
        decision = decisions[index]
        if (decision is not None and decision.branch == 'to_dom' and
                'dom' in signals):
            sample = synthesize_labels(sample, models['dom'], num_classes,
                                       config.dom.threshold)
            samples[index] = sample
            synthesized += sample.regime == 'occluded_with_mask'
        if sample.regime == 'occluded_with_mask':
            masks.append(sample.occluder_mask)
            sources.append('dom' if sample.synthetic else 'label')
        elif decision is not None and decision.branch == 'to_dom':
            masks.append(auxnets.occluded_region(
                predicted[index], probs[index], config.lom.threshold,
                radius, sample.part_labels.shape,
            ))
            sources.append('lom')
        else:
            masks.append(np.zeros(sample.part_labels.shape, dtype=bool))
            sources.append('none')

    augmented = 0
    if 'uvm' in signals:
        views = _uv_views(config, datasets, samples, decisions, predicted,
                          seed, threads)
        augmented = len(views)
        for view in views:
            samples.append(view)
            masks.append(np.zeros(view.part_labels.shape, dtype=bool))
            sources.append('none')

    final = faceworld.Dataset(samples, train.class_names, train.meta)
    if 'ppm' in signals:
        images = np.stack([sample.image for sample in samples])
        poses = _batched(
            lambda chunk: auxnets.ppm_predict_batch(models['ppm'], chunk), images
        )
        weights = [auxnets.pose_weight(yaw, pitch, roll, config.ppm.lambda_p)
                   for yaw, pitch, roll in poses]
    else:
        weights = [auxnets.PoseWeight(1.0)] * len(samples)
    aux = [AuxSignal(mask, weight, source)
           for mask, weight, source in zip(masks, weights, sources)]
    models['segm'] = train_segm(final, aux, config, seed)

    reports = OrderedDict()
    for split, dataset in (('clean', datasets.eval_clean),
                           ('occluded', datasets.eval_occluded)):
        if len(dataset):
            reports[split] = evaluate(models['segm'], dataset, threads, mode,
                                      seed, split)
            logger.info('%s %s MIOU: %.4f', mode, split, reports[split].miou)

    instrumentation = OrderedDict((
        ('augmented', augmented),
        ('occ_sources', OrderedDict(sorted(Counter(sources).items()))),
        ('pose_weights', [float(weight.p) for weight in weights]),
        ('routes', OrderedDict((branch, routes[branch])
                               for branch in BRANCHES if 'lom' in signals)),
        ('signals', sorted(signals)),
        ('synthesized', int(synthesized)),
    ))
    return TrainingRun(mode, seed, models, reports, _curves(models),
                       instrumentation, config)


def _curves(models):
    curves = OrderedDict()
    for name, model in models.items():
        for curve, values in model.curves.items():
            curves['{}.{}'.format(name, curve)] = [float(v) for v in values]
    return curves


def evaluate(model, dataset, threads=None, mode=None, seed=None, split=None):
    """Parse every image of ``dataset`` and score the result.

    Images are parsed in parallel, one confusion matrix each, and the
    matrices are summed.

    :param model: A trained :class:`mask_fpan.segm.SegModel`.
    :param dataset: A :class:`mask_fpan.faceworld.Dataset` with labels.
    :param threads: The worker count. Defaults to ``MFPN_THREADS``.
    :returns: A :class:`mask_fpan.metrics.Report`.
    :raises mask_fpan.exceptions.LabelOutOfRangeError: If a label is not a
        valid class id.
    """
    if threads is None:
        threads = thread_count()
    num_classes = dataset.num_classes

    def one(sample):
        return metrics.confusion_matrix(
            sample.part_labels, predict_parse(model, sample.image), num_classes
        )

    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            matrices = list(executor.map(one, dataset))
    else:
        matrices = [one(sample) for sample in dataset]
    for matrix in matrices:
        confusion += matrix
    return metrics.Report(confusion, dataset.class_names, mode, seed,
                          len(dataset), split)


def run_ablation(config, seeds=None):
    """Run every ablation mode for every seed on the same datasets.

    :returns: An ordered dict mapping each mode to its runs, one per seed.
    """
    if seeds is None:
        seeds = config.pipeline.seeds
    for mode in ABLATION_MODES:
        check_mode(mode, config)
    cache = {}
    runs = OrderedDict()
    for mode in ABLATION_MODES:
        runs[mode] = [run_training(config, mode, seed, cache=cache)
                      for seed in seeds]
    return runs


def ablation_tables(runs):
    """Format the MIOU and F-measure tables of :func:`run_ablation` output.

    There is one table per metric and evaluation split, each with one row per
    mode, averaged over seeds.
    """
    tables = []
    for split in ('clean', 'occluded'):
        for metric, name in (('iou', 'MIOU'), ('f1', 'F-measure')):
            rows = [
                (mode, [run.reports[split] for run in mode_runs
                        if split in run.reports])
                for mode, mode_runs in runs.items()
            ]
            if not all(reports for _, reports in rows):
                continue
            tables.append(metrics.format_table(
                rows, metric, '{} on the {} split'.format(name, split)
            ))
    return '\n'.join(tables)


def _write_json(path, document):
    with open(path, 'w') as handle:
        json.dump(document, handle, indent=2, sort_keys=True)
        handle.write('\n')


def _read_json(path):
    try:
        with open(path) as handle:
            return json.load(handle)
    except (IOError, OSError) as err:
        raise exceptions.CheckpointFormatError(
            'Cannot read {}: {}'.format(path, err)
        )
    except ValueError as err:
        raise exceptions.CheckpointFormatError(
            'The file {} is not valid JSON: {}'.format(path, err)
        )


def save_run(directory, run):
    """Write a run to ``directory``.

    The directory gets ``manifest.json`` (format version, mode, seed and the
    architecture of every model), ``checkpoint.mfpn`` (every parameter, named
    ``<model>.<parameter>``), one ``report_<split>.json`` per evaluation
    split, ``curves.json``, ``instrumentation.json`` and ``config.json``.
    Saving a loaded run again gives identical bytes.
    """
    if not os.path.isdir(directory):
        os.makedirs(directory)
    entries = OrderedDict()
    for name, model in run.models.items():
        entries.update(model.state_dict(name + '.'))
    save_checkpoint(os.path.join(directory, 'checkpoint.mfpn'), entries)
    manifest = OrderedDict((
        ('format_version', MANIFEST_VERSION),
        ('mode', run.mode),
        ('seed', run.seed),
        ('models', OrderedDict(
            (name, model.architecture()) for name, model in run.models.items()
        )),
        ('reports', list(run.reports)),
    ))
    _write_json(os.path.join(directory, 'manifest.json'), manifest)
    for split, report in run.reports.items():
        with open(os.path.join(directory, 'report_{}.json'.format(split)),
                  'w') as handle:
            handle.write(report.to_json())
    _write_json(os.path.join(directory, 'curves.json'), run.curves)
    _write_json(os.path.join(directory, 'instrumentation.json'),
                run.instrumentation)
    if run.config is not None:
        run.config.save(os.path.join(directory, 'config.json'))
    logger.info('Saved the %s run to %s.', run.mode, directory)


def _manifest_version(directory, manifest):
    """Return the manifest's format version after checking its shape."""
    if not isinstance(manifest, dict):
        raise exceptions.CheckpointFormatError(
            'The manifest in {} is not a JSON object.'.format(directory)
        )
    missing = [key for key in MANIFEST_KEYS if key not in manifest]
    if missing:
        raise exceptions.CheckpointFormatError(
            'The manifest in {} lacks the keys {}.'.format(directory, missing)
        )
    found = manifest['format_version']
    if isinstance(found, type('')):
        try:
            return Version(found)
        except InvalidVersion:
            pass
    raise exceptions.CheckpointFormatError(
        'The manifest in {} has an invalid format version {!r}.'
        .format(directory, found)
    )


def load_run(directory):
    """Read a run written by :func:`save_run`.

    :returns: A :class:`TrainingRun`.
    :raises mask_fpan.exceptions.CheckpointFormatError: If a file is missing
        or malformed.
    :raises mask_fpan.exceptions.VersionMismatchError: If the manifest was
        written by an incompatible version.
    :raises mask_fpan.exceptions.CheckpointEntryMissingError: If the
        checkpoint lacks parameters of a listed model.
    """
    manifest = _read_json(os.path.join(directory, 'manifest.json'))
    found = _manifest_version(directory, manifest)
    if found.release[0] != Version(MANIFEST_VERSION).release[0]:
        raise exceptions.VersionMismatchError(
            'The run in {} has manifest version {}, but only version {} is '
            'supported.'.format(directory, found, MANIFEST_VERSION)
        )
    checkpoint = os.path.join(directory, 'checkpoint.mfpn')
    if not os.path.isfile(checkpoint):
        raise exceptions.CheckpointFormatError(
            'The checkpoint file {} does not exist.'.format(checkpoint)
        )
    entries = load_checkpoint(checkpoint)
    curves = _read_json(os.path.join(directory, 'curves.json'))
    models = OrderedDict()
    for name, architecture in manifest['models'].items():
        if name not in MODEL_CLASSES:
            raise exceptions.CheckpointFormatError(
                'The manifest in {} lists an unknown model {!r}.'
                .format(directory, name)
            )
        model = MODEL_CLASSES[name].from_architecture(architecture)
        model.load_state_dict(entries, name + '.')
        if name == 'dom':
            model.trained = True
        prefix = name + '.'
        for key, values in curves.items():
            if key.startswith(prefix):
                model.curves[key[len(prefix):]] = values
        models[name] = model
    reports = OrderedDict()
    for split in manifest['reports']:
        path = os.path.join(directory, 'report_{}.json'.format(split))
        try:
            with open(path) as handle:
                reports[split] = metrics.Report.from_json(handle.read())
        except (IOError, OSError) as err:
            raise exceptions.CheckpointFormatError(
                'Cannot read {}: {}'.format(path, err)
            )
        except exceptions.ReportFormatError as err:
            raise exceptions.CheckpointFormatError(
                'The report {} is malformed: {}'.format(path, err)
            )
    instrumentation = _read_json(
        os.path.join(directory, 'instrumentation.json')
    )
    config_path = os.path.join(directory, 'config.json')
    config = Config.read(config_path) if os.path.isfile(config_path) else None
    return TrainingRun(manifest['mode'], manifest['seed'], models, reports,
                       OrderedDict(curves), instrumentation, config)


def require_models(run, names):
    """Return the named models of a run.

    :raises mask_fpan.exceptions.CheckpointEntryMissingError: Naming every
        missing model.
    """
    missing = [name for name in names if name not in run.models]
    if missing:
        raise exceptions.CheckpointEntryMissingError(
            'The {} run has no {} entries. Train with mode MASK_FPAN to get '
            'every model.'.format(
                run.mode, ', '.join('{}.*'.format(name) for name in missing)
            )
        )
    return [run.models[name] for name in names]


def regime_counts(dataset):
    """Count the samples of each label regime."""
    counts = Counter(sample.regime for sample in dataset)
    return OrderedDict((regime, counts[regime]) for regime in REGIMES)
