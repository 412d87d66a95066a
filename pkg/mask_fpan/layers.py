# coding=utf-8
"""Parameterised building blocks shared by every learned module.

A :class:`Module` owns named parameters and named child modules. Its
:meth:`Module.state_dict` flattens them into dotted names such as
``lom.backbone.0.weight``, which is the naming convention of checkpoint files.
"""
from __future__ import unicode_literals

import logging
from collections import OrderedDict

import numpy as np

from mask_fpan import exceptions
from mask_fpan.gradcore import SGD, Tape, Tensor, apply, glorot_uniform

logger = logging.getLogger(__name__)  # pylint:disable=invalid-name


class Module(object):
    """Holds parameters and child modules in registration order."""

    def __init__(self):
        """Start with no parameters and no children."""
        self._params = OrderedDict()
        self._children = OrderedDict()

    def add_param(self, name, array):
        """Register ``array`` as a trainable parameter and return it."""
        tensor = Tensor(array, requires_grad=True)
        self._params[name] = tensor
        return tensor

    def add_child(self, name, module):
        """Register ``module`` as a child and return it."""
        self._children[name] = module
        return module

    def param(self, name):
        """Return this module's own parameter ``name``."""
        return self._params[name]

    def set_param(self, name, tensor):
        """Replace the tensor object of this module's parameter ``name``."""
        if name not in self._params:
            raise KeyError(name)
        self._params[name] = tensor

    def parameters(self, prefix=''):
        """Return an ordered dict of every parameter under dotted names."""
        params = OrderedDict()
        for name, tensor in self._params.items():
            params[prefix + name] = tensor
        for name, child in self._children.items():
            params.update(child.parameters('{}{}.'.format(prefix, name)))
        return params

    def state_dict(self, prefix=''):
        """Return a copy of every parameter value under dotted names.

        :param prefix: Prepended to every name, for example ``'lom.'``.
        """
        return OrderedDict(
            (name, tensor.numpy())
            for name, tensor in self.parameters(prefix).items()
        )

    def load_state_dict(self, entries, prefix=''):
        """Copy values from ``entries`` into this module's parameters.

        :raises mask_fpan.exceptions.CheckpointEntryMissingError: If an entry
            is missing. All missing names are listed.
        :raises mask_fpan.exceptions.ShapeMismatchError: If an entry has the
            wrong shape.
        """
        params = self.parameters(prefix)
        missing = [name for name in params if name not in entries]
        if missing:
            raise exceptions.CheckpointEntryMissingError(
                'The checkpoint lacks these entries: {}.'
                .format(', '.join(missing))
            )
        for name, tensor in params.items():
            value = np.asarray(entries[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise exceptions.ShapeMismatchError(
                    'Checkpoint entry {} has shape {}, expected {}.'
                    .format(name, value.shape, tensor.shape)
                )
            tensor.data = value.copy()


class Linear(Module):
    """``x W + b`` for a batch ``x`` of shape ``(B, in_features)``."""

    def __init__(self, in_features, out_features, rng):
        """Draw Glorot-uniform weights and zero biases."""
        super(Linear, self).__init__()
        self.add_param('weight', glorot_uniform(
            (in_features, out_features), in_features, out_features, rng
        ))
        self.add_param('bias', np.zeros((1, out_features)))

    def __call__(self, x):
        return apply('add', [
            apply('matmul', [x, self.param('weight')]),
            self.param('bias'),
        ])


class Conv3x3(Module):
    """A 3x3 convolution with a per-channel bias."""

    def __init__(self, in_channels, out_channels, stride, rng):
        """Draw Glorot-uniform kernels and zero biases."""
        super(Conv3x3, self).__init__()
        self.stride = stride
        self.add_param('weight', glorot_uniform(
            (out_channels, in_channels, 3, 3),
            in_channels * 9,
            out_channels * 9,
            rng,
        ))
        self.add_param('bias', np.zeros((1, out_channels, 1, 1)))

    def __call__(self, x):
        return apply('add', [
            apply('conv', [x, self.param('weight')], {'stride': self.stride}),
            self.param('bias'),
        ])


class LSTMCell(Module):
    """A standard LSTM cell with input, forget, cell and output gates.

    The gate pre-activations are ``[x; h] W + b``, split in that order. The
    forget gate bias starts at 1.
    """

    def __init__(self, in_features, hidden, rng):
        """Draw Glorot-uniform weights."""
        super(LSTMCell, self).__init__()
        self.hidden = hidden
        self.add_param('weight', glorot_uniform(
            (in_features + hidden, 4 * hidden),
            in_features + hidden,
            4 * hidden,
            rng,
        ))
        bias = np.zeros((1, 4 * hidden))
        bias[0, hidden:2 * hidden] = 1.0
        self.add_param('bias', bias)

    def initial_state(self, batch):
        """Return zero ``(h, c)`` tensors for a batch."""
        return (
            Tensor.wrap(np.zeros((batch, self.hidden))),
            Tensor.wrap(np.zeros((batch, self.hidden))),
        )

    def step(self, x, state):
        """Advance one time step and return the new ``(h, c)``."""
        h, c = state
        hidden = self.hidden
        gates = apply('add', [
            apply('matmul', [
                apply('concat', [x, h], {'axis': 1}),
                self.param('weight'),
            ]),
            self.param('bias'),
        ])

        def gate(index):
            key = (slice(None), slice(index * hidden, (index + 1) * hidden))
            return apply('slice', [gates], {'key': key})

        in_gate = apply('sigmoid', [gate(0)])
        forget_gate = apply('sigmoid', [gate(1)])
        cell_gate = apply('tanh', [gate(2)])
        out_gate = apply('sigmoid', [gate(3)])
        c = apply('add', [
            apply('mul', [forget_gate, c]),
            apply('mul', [in_gate, cell_gate]),
        ])
        h = apply('mul', [out_gate, apply('tanh', [c])])
        return h, c


class ConvEncoder(Module):
    """Stride-2 3x3 convolutions with ReLU, flattened at the end.

    An ``(N, C, H, W)`` input leaves as ``(N, features)`` where ``features``
    is ``channels[-1] * (H / 2**depth) * (W / 2**depth)``.
    """

    def __init__(self, in_channels, channels, image_size, rng):
        """Build one stride-2 layer per entry of ``channels``."""
        super(ConvEncoder, self).__init__()
        self.layers = []
        previous = in_channels
        for index, width in enumerate(channels):
            self.layers.append(self.add_child(
                type('')(index), Conv3x3(previous, width, 2, rng)
            ))
            previous = width
        side = image_size
        for _ in channels:
            side = (side - 1) // 2 + 1
        self.features = previous * side * side

    def __call__(self, x):
        for layer in self.layers:
            x = apply('relu', [layer(x)])
        return apply('reshape', [x], {'shape': (x.shape[0], self.features)})


def images_to_batch(images):
    """Turn ``(B, H, W, 3)`` images in [0, 1] into a centred ``(B, 3, H, W)``.

    The result is a constant :class:`Tensor`.
    """
    images = np.asarray(images, dtype=np.float64)
    return Tensor.wrap(np.ascontiguousarray(images.transpose(0, 3, 1, 2)) - 0.5)


def minibatches(count, batch_size, steps, rng):
    """Yield ``steps`` arrays of sample indices drawn without replacement."""
    batch_size = min(batch_size, count)
    for _ in range(steps):
        yield np.sort(rng.choice(count, size=batch_size, replace=False))


def train_loop(params, batch_loss, count, settings, rng, label, steps=None):
    """Run minibatch momentum SGD and return the loss of every step.

    :param params: An ordered dict of the parameters to update.
    :param batch_loss: A callable taking an array of sample indices and
        returning a scalar loss :class:`Tensor`. It runs under an active tape.
    :param count: The number of training samples.
    :param settings: A config section with ``steps``, ``batch_size``, ``lr``,
        ``momentum``, ``clip_norm`` and ``log_every``.
    :param rng: A ``numpy.random.Generator`` for batch selection.
    :param label: A name used in log messages.
    :param steps: Overrides ``settings.steps``.
    :returns: A list of per-step losses, measured before each update.
    :raises mask_fpan.exceptions.NonFiniteError: If a step's loss is NaN or
        infinite. The parameters keep their values from before that step.
    """
    if steps is None:
        steps = settings.steps
    optimizer = SGD(params, settings.lr, settings.momentum, settings.clip_norm)
    curve = []
    batches = minibatches(count, settings.batch_size, steps, rng)
    for step, indices in enumerate(batches):
        with Tape() as tape:
            loss = batch_loss(indices)
        if not np.isfinite(loss.item()):
            raise exceptions.NonFiniteError(
                '{} diverged at step {}/{}: loss {}.'.format(
                    label, step, steps, loss.item()
                )
            )
        tape.backward(loss)
        optimizer.step(tape)
        curve.append(loss.item())
        if settings.log_every and step % settings.log_every == 0:
            logger.info('%s step %d/%d: loss %.6f', label, step, steps,
                        curve[-1])
    if curve:
        logger.info('%s finished after %d steps: loss %.6f', label, steps,
                    curve[-1])
    return curve
