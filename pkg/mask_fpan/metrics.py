# coding=utf-8
"""Confusion matrices, parsing reports and ablation tables.

Rows of a confusion matrix are ground-truth classes and columns are predicted
classes. Reports serialize to JSON with every float at full precision.
"""
from __future__ import division, unicode_literals

import json
from collections import OrderedDict

import numpy as np

from mask_fpan import exceptions
from mask_fpan.constants import EYE, LOWER_LIP, MOUTH_INTERIOR, UPPER_LIP

REPORT_KEYS = (
    'class_names', 'confusion', 'miou', 'mode', 'n', 'per_class_f1',
    'per_class_iou', 'seed', 'split',
)

TABLE_COLUMNS = ('eyes', 'mouth', 'occlusion', 'overall')


def confusion_matrix(ground_truth, predicted, num_classes):
    """Count ``(ground truth, prediction)`` pixel pairs.

    :returns: A ``(K, K)`` int64 array.
    :raises mask_fpan.exceptions.LabelOutOfRangeError: If a class id is not in
        ``[0, K)``.
    :raises mask_fpan.exceptions.ShapeMismatchError: If the maps differ in
        shape.
    """
    ground_truth = np.asarray(ground_truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if ground_truth.shape != predicted.shape:
        raise exceptions.ShapeMismatchError(
            'Ground truth of shape {} cannot be compared with a prediction of '
            'shape {}.'.format(ground_truth.shape, predicted.shape)
        )
    for name, labels in (('ground truth', ground_truth),
                         ('prediction', predicted)):
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise exceptions.LabelOutOfRangeError(
                'The {} holds class ids in [{}, {}], but only {} classes '
                'exist.'.format(name, labels.min(), labels.max(), num_classes)
            )
    counts = np.bincount(
        num_classes * ground_truth.reshape(-1) + predicted.reshape(-1),
        minlength=num_classes * num_classes,
    )
    return counts.reshape(num_classes, num_classes)


def per_class_iou(confusion):
    """Return ``TP / (TP + FP + FN)`` per class, 0 where undefined."""
    confusion = np.asarray(confusion, dtype=np.float64)
    tp = np.diag(confusion)
    union = confusion.sum(axis=0) + confusion.sum(axis=1) - tp
    return np.where(union > 0, tp / np.maximum(union, 1), 0.0)


def per_class_f1(confusion):
    """Return the pixel F-measure per class, 0 where precision + recall is 0."""
    confusion = np.asarray(confusion, dtype=np.float64)
    tp = np.diag(confusion)
    predicted = confusion.sum(axis=0)
    actual = confusion.sum(axis=1)
    precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 0.0)
    recall = np.where(actual > 0, tp / np.maximum(actual, 1), 0.0)
    total = precision + recall
    return np.where(total > 0,
                    2 * precision * recall / np.where(total > 0, total, 1),
                    0.0)


def mean_iou(confusion):
    """Average the IOU over classes that occur in the ground truth."""
    confusion = np.asarray(confusion)
    present = confusion.sum(axis=1) > 0
    if not present.any():
        return 0.0
    return float(per_class_iou(confusion)[present].mean())


class Report(object):
    """Parsing metrics of one model on one evaluation split.

    :param confusion: The ``(K, K)`` confusion matrix.
    :param class_names: The names of the ``K`` classes.
    :param mode: The ablation mode that produced the model.
    :param seed: The run seed.
    :param n: The number of evaluated images.
    :param split: The name of the evaluation split.
    """

    def __init__(self, confusion, class_names, mode=None, seed=None, n=0,
                 split=None):
        """Derive every metric from the confusion matrix."""
        self.confusion = np.asarray(confusion, dtype=np.int64)
        self.class_names = tuple(class_names)
        if self.confusion.shape != (len(self.class_names),) * 2:
            raise exceptions.ShapeMismatchError(
                'A confusion matrix of shape {} does not fit {} classes.'
                .format(self.confusion.shape, len(self.class_names))
            )
        self.mode = mode
        self.seed = seed
        self.n = int(n)
        self.split = split
        self.per_class_iou = per_class_iou(self.confusion)
        self.per_class_f1 = per_class_f1(self.confusion)
        self.miou = mean_iou(self.confusion)

    def __repr__(self):
        return 'Report(mode={!r}, split={!r}, miou={:.4f}, n={})'.format(
            self.mode, self.split, self.miou, self.n
        )

    def __eq__(self, other):
        if not isinstance(other, Report):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    __hash__ = None

    @property
    def present(self):
        """Which classes occur in the ground truth."""
        return self.confusion.sum(axis=1) > 0

    def to_dict(self):
        """Return a JSON-ready dict."""
        return OrderedDict((
            ('class_names', list(self.class_names)),
            ('confusion', self.confusion.tolist()),
            ('miou', self.miou),
            ('mode', self.mode),
            ('n', self.n),
            ('per_class_f1', [float(v) for v in self.per_class_f1]),
            ('per_class_iou', [float(v) for v in self.per_class_iou]),
            ('seed', self.seed),
            ('split', self.split),
        ))

    def to_json(self):
        """Return the report as a JSON document with sorted keys."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'

    @classmethod
    def from_dict(cls, document):
        """Rebuild a report from :meth:`to_dict` output.

        :raises mask_fpan.exceptions.ReportFormatError: If the document is
            malformed or its metrics disagree with its confusion matrix.
        """
        validate_report_dict(document)
        report = cls(document['confusion'], document['class_names'],
                     document['mode'], document['seed'], document['n'],
                     document['split'])
        if report.to_dict() != _normalised(document):
            raise exceptions.ReportFormatError(
                'The report metrics do not match its confusion matrix.'
            )
        return report

    @classmethod
    def from_json(cls, text):
        """Parse a report written by :meth:`to_json`."""
        try:
            document = json.loads(text)
        except ValueError as err:
            raise exceptions.ReportFormatError(
                'The report is not valid JSON: {}'.format(err)
            )
        return cls.from_dict(document)

    def region_score(self, region, metric='iou'):
        """Return the mean ``metric`` of a table column, or ``None``.

        Only classes present in the ground truth count. ``overall`` is the
        MIOU (or the mean F-measure over present classes).
        """
        values = self.per_class_iou if metric == 'iou' else self.per_class_f1
        if region == 'overall':
            if metric == 'iou':
                return self.miou
            present = self.present
            return float(values[present].mean()) if present.any() else None
        classes = [c for c in region_classes(len(self.class_names))[region]
                   if self.present[c]]
        if not classes:
            return None
        return float(np.mean(values[classes]))


def _normalised(document):
    return json.loads(json.dumps(document, sort_keys=True))


def region_classes(num_classes):
    """Map every table column except ``overall`` to its class ids."""
    return OrderedDict((
        ('eyes', (EYE,)),
        ('mouth', (UPPER_LIP, LOWER_LIP, MOUTH_INTERIOR)),
        ('occlusion', (num_classes - 1,)),
    ))


def validate_report_dict(document):
    """Check the report schema.

    A report is an object with exactly the keys of :data:`REPORT_KEYS`:
    ``confusion`` is a ``K x K`` array of non-negative integers,
    ``class_names`` lists ``K`` strings, ``per_class_iou`` and
    ``per_class_f1`` list ``K`` numbers in [0, 1], ``miou`` is a number in
    [0, 1] and ``n`` a non-negative integer.

    :raises mask_fpan.exceptions.ReportFormatError: On the first violation.
    """
    def fail(reason):
        return exceptions.ReportFormatError('Invalid report: {}.'.format(reason))

    if not isinstance(document, dict):
        raise fail('not a JSON object')
    keys = set(document)
    if keys != set(REPORT_KEYS):
        raise fail('keys {} differ from {}'.format(
            sorted(keys), list(REPORT_KEYS)
        ))
    names = document['class_names']
    if not isinstance(names, list) or not names:
        raise fail('class_names must be a non-empty list')
    count = len(names)
    confusion = document['confusion']
    if (not isinstance(confusion, list) or len(confusion) != count or
            any(not isinstance(row, list) or len(row) != count
                for row in confusion)):
        raise fail('confusion must be a {0}x{0} array'.format(count))
    for row in confusion:
        for value in row:
            if (isinstance(value, bool) or not isinstance(value, int) or
                    value < 0):
                raise fail('confusion counts must be non-negative integers')
    for key in ('per_class_iou', 'per_class_f1'):
        values = document[key]
        if not isinstance(values, list) or len(values) != count:
            raise fail('{} must list {} values'.format(key, count))
        if any(not _unit(value) for value in values):
            raise fail('{} values must lie in [0, 1]'.format(key))
    if not _unit(document['miou']):
        raise fail('miou must lie in [0, 1]')
    n = document['n']
    if isinstance(n, bool) or not isinstance(n, int) or n < 0:
        raise fail('n must be a non-negative integer')


def _unit(value):
    return (not isinstance(value, bool) and isinstance(value, (int, float)) and
            0.0 <= value <= 1.0)


def table_cell(reports, column, metric='iou'):
    """Average a column over several reports, ignoring undefined scores."""
    values = [report.region_score(column, metric) for report in reports]
    values = [value for value in values if value is not None]
    if not values:
        return None
    return float(np.mean(values))


def format_table(rows, metric='iou', title=None):
    """Format ``(name, reports)`` rows as a plain-text table.

    ``reports`` is one :class:`Report` or a list of them, one per seed, whose
    scores are averaged. The columns are eyes, mouth, occlusion and overall.
    Cells without any ground-truth pixel show ``-``.
    """
    header = ['method'] + list(TABLE_COLUMNS)
    lines = []
    for name, reports in rows:
        if isinstance(reports, Report):
            reports = [reports]
        cells = [name]
        for column in TABLE_COLUMNS:
            value = table_cell(reports, column, metric)
            cells.append('-' if value is None else '{:.4f}'.format(value))
        lines.append(cells)
    widths = [
        max(len(row[i]) for row in [header] + lines) for i in range(len(header))
    ]

    def render(cells):
        return '  '.join(
            cell.ljust(width) if i == 0 else cell.rjust(width)
            for i, (cell, width) in enumerate(zip(cells, widths))
        ).rstrip()

    out = []
    if title:
        out.append(title)
    out.append(render(header))
    out.extend(render(cells) for cells in lines)
    return '\n'.join(out) + '\n'
