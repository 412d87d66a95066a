# coding=utf-8
"""Dense tensors with reverse-mode differentiation, plus an SGD optimizer.

Operations are applied with :func:`apply`. When any input requires a gradient
and a :class:`Tape` is active on the current thread, the operation is recorded
on that tape. Calling :meth:`Tape.backward` on a scalar result then fills in
the gradient of every leaf tensor reachable from it:

>>> from mask_fpan.gradcore import Tape, Tensor, apply
>>> x = Tensor([3.0], requires_grad=True)
>>> with Tape() as tape:
...     loss = apply('mean', [apply('mul', [x, x])])
>>> grads = tape.backward(loss)
>>> tape.grad(x).data
array([6.])

Every value is stored in double precision. With no tape active, operations
are evaluated forward only.
"""
from __future__ import division, unicode_literals

import contextlib
import struct
import threading
from collections import OrderedDict, namedtuple

import numpy as np
from scipy.special import expit

from mask_fpan import exceptions
from mask_fpan.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION


_LOCAL = threading.local()


def _tape_stack():
    """Return the stack of active tapes for the current thread."""
    try:
        return _LOCAL.stack
    except AttributeError:
        _LOCAL.stack = []
        return _LOCAL.stack


def current_tape():
    """Return the innermost active tape of this thread, or ``None``."""
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextlib.contextmanager
def forward_only():
    """Suspend recording for the duration of a ``with`` block."""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Tensor(object):
    """A dense n-dimensional array of float64 values.

    :param data: Anything ``numpy.array`` accepts. The values are copied.
    :param requires_grad: Whether gradients should flow to this tensor.
    """

    def __init__(self, data, requires_grad=False):
        """Copy ``data`` into a new float64 array."""
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.node_id = None

    @classmethod
    def wrap(cls, array, requires_grad=False):
        """Wrap a float64 array without copying it."""
        tensor = cls.__new__(cls)
        tensor.data = np.asarray(array, dtype=np.float64)
        tensor.requires_grad = bool(requires_grad)
        tensor.node_id = None
        return tensor

    @property
    def shape(self):
        """The shape of the underlying array."""
        return self.data.shape

    @property
    def size(self):
        """The number of values held."""
        return self.data.size

    def item(self):
        """Return the single value of a one-element tensor."""
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        """Return a copy of the underlying array."""
        return self.data.copy()

    def __repr__(self):
        return 'Tensor(shape={}, requires_grad={})'.format(
            self.shape, self.requires_grad
        )

    def __add__(self, other):
        return apply('add', [self, other])

    def __radd__(self, other):
        return apply('add', [other, self])

    def __mul__(self, other):
        return apply('mul', [self, other])

    def __rmul__(self, other):
        return apply('mul', [other, self])

    def __matmul__(self, other):
        return apply('matmul', [self, other])


def _as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


_Node = namedtuple('_Node', ('op_kind', 'inputs', 'op', 'tensor'))


class Tape(object):
    """An ordered record of applied operations.

    Use it as a context manager. While the ``with`` block runs, every
    operation whose inputs require a gradient is appended to :attr:`nodes`.
    A tape belongs to the thread that entered it.

    :param checked: If true, any operation producing NaN or infinite values
        raises :class:`mask_fpan.exceptions.NonFiniteError`.
    """

    def __init__(self, checked=False):
        """Initialize an empty tape."""
        self.nodes = []
        self.gradients = {}
        self.checked = checked
        self._ids = {}

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc_info):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def _node_for(self, tensor):
        """Return the node id of ``tensor``, registering a leaf if new."""
        node_id = self._ids.get(id(tensor))
        if node_id is None:
            node_id = len(self.nodes)
            self.nodes.append(_Node('leaf', (), None, tensor))
            self._ids[id(tensor)] = node_id
            tensor.node_id = node_id
        return node_id

    def record(self, op, inputs, output):
        """Append an applied operation to the tape."""
        input_ids = tuple(
            self._node_for(tensor) if tensor.requires_grad else None
            for tensor in inputs
        )
        node_id = len(self.nodes)
        self.nodes.append(_Node(op.kind, input_ids, op, output))
        self._ids[id(output)] = node_id
        output.node_id = node_id

    def backward(self, loss):
        """Back-propagate from a scalar ``loss``.

        Nodes are visited in reverse recording order and gradients are summed
        in that fixed order, so the result is deterministic.

        :returns: A dict mapping the node id of every reachable leaf to its
            gradient :class:`Tensor`. The same dict is kept in
            :attr:`gradients`.
        :raises mask_fpan.exceptions.NonScalarLossError: If ``loss`` holds
            more than one value.
        :raises mask_fpan.exceptions.NotOnTapeError: If ``loss`` was not
            recorded on this tape.
        """
        if loss.size != 1:
            raise exceptions.NonScalarLossError(
                'Back-propagation needs a scalar loss, got shape {}.'
                .format(loss.shape)
            )
        start = self._ids.get(id(loss))
        if start is None or self.nodes[start].tensor is not loss:
            raise exceptions.NotOnTapeError(
                'The loss tensor was not recorded on this tape.'
            )
        grads = {start: np.ones_like(loss.data)}
        for node_id in range(start, -1, -1):
            grad = grads.get(node_id)
            node = self.nodes[node_id]
            if grad is None or node.op_kind == 'leaf':
                continue
            input_grads = node.op.backward(grad)
            for input_id, input_grad in zip(node.inputs, input_grads):
                if input_id is None or input_grad is None:
                    continue
                if input_id in grads:
                    grads[input_id] = grads[input_id] + input_grad
                else:
                    grads[input_id] = input_grad
        self.gradients = {
            node_id: Tensor.wrap(grad)
            for node_id, grad in grads.items()
            if self.nodes[node_id].op_kind == 'leaf'
        }
        return self.gradients

    def grad(self, tensor):
        """Return the gradient of a leaf tensor, or ``None``."""
        node_id = self._ids.get(id(tensor))
        if node_id is None or self.nodes[node_id].tensor is not tensor:
            return None
        return self.gradients.get(node_id)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _mismatch(kind, *shapes):
    return exceptions.ShapeMismatchError(
        'Operation {} cannot combine shapes {}.'.format(
            kind, ', '.join(type('')(tuple(shape)) for shape in shapes)
        )
    )


class Op(object):
    """Base class of a differentiable operation.

    Subclasses set :attr:`kind` and implement :meth:`forward`, which receives
    the input arrays, and :meth:`backward`, which receives the gradient of the
    output and returns one gradient (or ``None``) per input.
    """

    kind = None
    arity = None

    def __init__(self, attrs):
        """Keep the operation attributes."""
        self.attrs = attrs

    def forward(self, *arrays):
        """Compute the output array."""
        raise NotImplementedError

    def backward(self, grad):
        """Compute the input gradients."""
        raise NotImplementedError


class MatMul(Op):
    """Two-dimensional matrix product."""

    kind = 'matmul'
    arity = 2

    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise _mismatch(self.kind, a.shape, b.shape)
        self.a, self.b = a, b
        return a.dot(b)

    def backward(self, grad):
        return grad.dot(self.b.T), self.a.T.dot(grad)


class Add(Op):
    """Element-wise sum with numpy broadcasting."""

    kind = 'add'
    arity = 2

    def forward(self, a, b):
        try:
            out = a + b
        except ValueError:
            raise _mismatch(self.kind, a.shape, b.shape)
        self.shapes = (a.shape, b.shape)
        return out

    def backward(self, grad):
        return (
            _unbroadcast(grad, self.shapes[0]),
            _unbroadcast(grad, self.shapes[1]),
        )


class Mul(Op):
    """Element-wise product with numpy broadcasting."""

    kind = 'mul'
    arity = 2

    def forward(self, a, b):
        try:
            out = a * b
        except ValueError:
            raise _mismatch(self.kind, a.shape, b.shape)
        self.a, self.b = a, b
        return out

    def backward(self, grad):
        return (
            _unbroadcast(grad * self.b, self.a.shape),
            _unbroadcast(grad * self.a, self.b.shape),
        )


class Sigmoid(Op):
    kind = 'sigmoid'
    arity = 1

    def forward(self, x):
        self.out = expit(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Tanh(Op):
    kind = 'tanh'
    arity = 1

    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out * self.out),)


class Relu(Op):
    kind = 'relu'
    arity = 1

    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad):
        return (np.where(self.mask, grad, 0.0),)


class Concat(Op):
    """Join any number of inputs along ``axis`` (default 0)."""

    kind = 'concat'

    def forward(self, *arrays):
        axis = self.attrs.get('axis', 0)
        try:
            out = np.concatenate(arrays, axis=axis)
        except ValueError:
            raise _mismatch(self.kind, *[array.shape for array in arrays])
        self.splits = np.cumsum([array.shape[axis] for array in arrays])[:-1]
        self.axis = axis
        return out

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))


class Slice(Op):
    """Basic indexing with the tuple of slices and integers in ``key``."""

    kind = 'slice'
    arity = 1

    def forward(self, x):
        key = self.attrs['key']
        try:
            out = x[key]
        except IndexError:
            raise _mismatch(self.kind, x.shape)
        self.in_shape = x.shape
        return np.array(out, dtype=np.float64)

    def backward(self, grad):
        out = np.zeros(self.in_shape)
        out[self.attrs['key']] = grad
        return (out,)


class Mean(Op):
    """Mean over all values, or over one ``axis``."""

    kind = 'mean'
    arity = 1

    def forward(self, x):
        self.axis = self.attrs.get('axis')
        self.in_shape = x.shape
        if self.axis is None:
            return np.array(x.mean())
        return x.mean(axis=self.axis)

    def backward(self, grad):
        if self.axis is None:
            count = float(np.prod(self.in_shape))
            return (np.full(self.in_shape, grad.reshape(()) / count),)
        count = float(self.in_shape[self.axis])
        expanded = np.expand_dims(grad, self.axis) / count
        return (np.broadcast_to(expanded, self.in_shape).copy(),)


class Reshape(Op):
    kind = 'reshape'
    arity = 1

    def forward(self, x):
        self.in_shape = x.shape
        try:
            return x.reshape(self.attrs['shape'])
        except ValueError:
            raise _mismatch(self.kind, x.shape, self.attrs['shape'])

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Upsample(Op):
    """Nearest-neighbour 2x upsampling of an ``(N, C, H, W)`` array."""

    kind = 'upsample'
    arity = 1

    def forward(self, x):
        if x.ndim != 4:
            raise _mismatch(self.kind, x.shape)
        self.in_shape = x.shape
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, grad):
        n, c, h, w = self.in_shape
        return (grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)


_OFFSETS = tuple((di, dj) for di in range(3) for dj in range(3))


def _im2col(x, stride):
    """Return ``(N, C*9, Ho*Wo)`` columns of a zero-padded 3x3 window."""
    n, c, h, w = x.shape
    out_h = (h - 1) // stride + 1
    out_w = (w - 1) // stride + 1
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode='constant')
    cols = np.empty((n, c, 9, out_h, out_w))
    for k, (di, dj) in enumerate(_OFFSETS):
        cols[:, :, k] = padded[
            :, :,
            di:di + stride * (out_h - 1) + 1:stride,
            dj:dj + stride * (out_w - 1) + 1:stride,
        ]
    return cols.reshape(n, c * 9, out_h * out_w), out_h, out_w


class Conv(Op):
    """3x3 convolution with zero "same" padding and a ``stride`` of 1 or 2.

    Inputs are an ``(N, C, H, W)`` image batch and a ``(Co, C, 3, 3)``
    kernel. The output is ``(N, Co, ceil(H / stride), ceil(W / stride))``.
    """

    kind = 'conv'
    arity = 2

    def forward(self, x, kernel):
        self.stride = self.attrs.get('stride', 1)
        if self.stride not in (1, 2):
            raise _mismatch(self.kind, x.shape, kernel.shape)
        if (x.ndim != 4 or kernel.ndim != 4 or
                kernel.shape[1] != x.shape[1] or kernel.shape[2:] != (3, 3)):
            raise _mismatch(self.kind, x.shape, kernel.shape)
        self.in_shape = x.shape
        self.kernel = kernel
        self.cols, out_h, out_w = _im2col(x, self.stride)
        flat = kernel.reshape(kernel.shape[0], -1)
        out = np.matmul(flat, self.cols)
        return out.reshape(x.shape[0], kernel.shape[0], out_h, out_w)

    def backward(self, grad):
        n, c, h, w = self.in_shape
        stride = self.stride
        out_h, out_w = grad.shape[2:]
        grad2 = grad.reshape(n, grad.shape[1], -1)
        flat = self.kernel.reshape(self.kernel.shape[0], -1)
        grad_kernel = np.tensordot(grad2, self.cols, axes=([0, 2], [0, 2]))
        grad_cols = np.matmul(flat.T, grad2).reshape(n, c, 9, out_h, out_w)
        padded = np.zeros((n, c, h + 2, w + 2))
        for k, (di, dj) in enumerate(_OFFSETS):
            padded[
                :, :,
                di:di + stride * (out_h - 1) + 1:stride,
                dj:dj + stride * (out_w - 1) + 1:stride,
            ] += grad_cols[:, :, k]
        return (
            padded[:, :, 1:-1, 1:-1],
            grad_kernel.reshape(self.kernel.shape),
        )


def softmax(logits, axis=-1):
    """Return the softmax of an array along ``axis``."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


class SoftmaxCrossEntropy(Op):
    """Mean of ``weights * CE`` over every position.

    Attributes: ``labels``, an integer array with the logits' shape minus the
    class ``axis`` (default last); optional ``weights`` of the same shape,
    treated as data.
    """

    kind = 'softmax_cross_entropy'
    arity = 1

    def forward(self, logits):
        axis = self.attrs.get('axis', -1)
        moved = np.moveaxis(logits, axis, -1)
        labels = np.asarray(self.attrs['labels'])
        if labels.shape != moved.shape[:-1]:
            raise _mismatch(self.kind, logits.shape, labels.shape)
        num_classes = moved.shape[-1]
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise exceptions.LabelOutOfRangeError(
                'Labels must lie in [0, {}), found values in [{}, {}].'
                .format(num_classes, labels.min(), labels.max())
            )
        weights = self.attrs.get('weights')
        if weights is not None:
            weights = np.asarray(weights, dtype=np.float64)
            if weights.shape != labels.shape:
                raise _mismatch(self.kind, labels.shape, weights.shape)
        shifted = moved - moved.max(axis=-1, keepdims=True)
        exp = np.exp(shifted)
        total = exp.sum(axis=-1, keepdims=True)
        log_prob = shifted - np.log(total)
        index = labels[..., None].astype(np.intp)
        cross_entropy = -np.take_along_axis(log_prob, index, axis=-1)[..., 0]
        self.prob = exp / total
        self.index = index
        self.weights = weights
        self.axis = axis
        self.count = float(cross_entropy.size)
        if weights is not None:
            cross_entropy = weights * cross_entropy
        return np.array(cross_entropy.sum() / self.count)

    def backward(self, grad):
        out = self.prob.copy()
        picked = np.take_along_axis(out, self.index, axis=-1)
        np.put_along_axis(out, self.index, picked - 1.0, axis=-1)
        if self.weights is None:
            scale = np.full(self.index.shape, 1.0 / self.count)
        else:
            scale = (self.weights / self.count)[..., None]
        out = out * scale * grad.reshape(())
        return (np.moveaxis(out, -1, self.axis),)


class Mse(Op):
    """Mean squared difference of two same-shaped inputs."""

    kind = 'mse'
    arity = 2

    def forward(self, a, b):
        if a.shape != b.shape:
            raise _mismatch(self.kind, a.shape, b.shape)
        self.diff = a - b
        return np.array(np.mean(self.diff * self.diff))

    def backward(self, grad):
        scaled = grad.reshape(()) * 2.0 * self.diff / self.diff.size
        return scaled, -scaled


_OPS = {}


def register_op(op_class):
    """Make ``op_class`` available to :func:`apply` under its ``kind``."""
    _OPS[op_class.kind] = op_class
    return op_class


for _op_class in (
        MatMul, Add, Mul, Sigmoid, Tanh, Relu, Concat, Slice, Mean, Reshape,
        Upsample, Conv, SoftmaxCrossEntropy, Mse):
    register_op(_op_class)


def apply(op_kind, inputs, attrs=None):
    """Apply the operation ``op_kind`` to ``inputs``.

    :param op_kind: A registered operation name, such as ``'matmul'``.
    :param inputs: A sequence of :class:`Tensor` objects or array-likes.
    :param attrs: A dict of operation attributes, such as ``{'axis': 1}``.
    :returns: A new :class:`Tensor`, recorded on the active tape when any
        input requires a gradient.
    :raises mask_fpan.exceptions.UnknownOpError: If ``op_kind`` is not
        registered.
    :raises mask_fpan.exceptions.ShapeMismatchError: If the input shapes do
        not suit the operation.
    :raises mask_fpan.exceptions.NonFiniteError: If the active tape is in
        checked mode and the output is not finite.
    """
    try:
        op_class = _OPS[op_kind]
    except KeyError:
        raise exceptions.UnknownOpError(
            'Unknown operation {!r}. Registered operations: {}.'
            .format(op_kind, ', '.join(sorted(_OPS)))
        )
    inputs = [_as_tensor(value) for value in inputs]
    if op_class.arity is not None and len(inputs) != op_class.arity:
        raise exceptions.ShapeMismatchError(
            'Operation {} takes {} inputs, got {}.'
            .format(op_kind, op_class.arity, len(inputs))
        )
    op = op_class(attrs or {})
    out = op.forward(*[tensor.data for tensor in inputs])
    tape = current_tape()
    if tape is not None and tape.checked and not np.all(np.isfinite(out)):
        raise exceptions.NonFiniteError(
            'Operation {} produced non-finite values.'.format(op_kind)
        )
    requires_grad = any(tensor.requires_grad for tensor in inputs)
    result = Tensor.wrap(out, requires_grad=requires_grad)
    if tape is not None and requires_grad:
        tape.record(op, inputs, result)
    return result


def binary_cross_entropy(logits, targets, weights=None):
    """Mean binary cross-entropy of ``logits`` against boolean ``targets``.

    Expressed as a two-class softmax cross-entropy with a zero logit for the
    negative class, so it needs no dedicated operation.
    """
    shape = logits.shape + (1,)
    pair = apply('concat', [
        Tensor.wrap(np.zeros(shape)),
        apply('reshape', [logits], {'shape': shape}),
    ], {'axis': len(shape) - 1})
    return apply('softmax_cross_entropy', [pair], {
        'labels': np.asarray(targets).astype(np.intp),
        'weights': weights,
        'axis': -1,
    })


def grad_check(f, point, epsilon=1e-5):
    """Compare the analytic gradient of ``f`` with central differences.

    :param f: A callable taking a :class:`Tensor` and returning a scalar one.
    :param point: A :class:`Tensor` or array-like. Where to check.
    :param epsilon: The finite-difference step.
    :returns: The largest ``|analytic - numeric| / max(1, |numeric|)`` over
        all coordinates of ``point``.
    """
    base = np.array(
        point.data if isinstance(point, Tensor) else point,
        dtype=np.float64,
    )
    probe = Tensor(base, requires_grad=True)
    with Tape() as tape:
        loss = f(probe)
    tape.backward(loss)
    analytic = tape.grad(probe)
    analytic = np.zeros_like(base) if analytic is None else analytic.data
    numeric = np.empty_like(base)
    with forward_only():
        for index in range(base.size):
            shifted = base.copy()
            shifted.flat[index] += epsilon
            upper = f(Tensor(shifted)).item()
            shifted.flat[index] -= 2 * epsilon
            lower = f(Tensor(shifted)).item()
            numeric.flat[index] = (upper - lower) / (2 * epsilon)
    return float(np.max(
        np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    ))


def glorot_uniform(shape, fan_in, fan_out, rng):
    """Draw weights from ``uniform(-s, s)``, ``s = sqrt(6 / (in + out))``."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def sgd_step(params, grads, lr, momentum=0.0, velocities=None):
    """Take one momentum SGD step without modifying the inputs.

    ``v <- momentum * v + g`` then ``p <- p - lr * v``.

    :param params: A sequence of :class:`Tensor` parameters.
    :param grads: A sequence of :class:`Tensor` gradients, one per parameter.
    :param velocities: The velocities returned by the previous step, or
        ``None`` to start from zero.
    :returns: A ``(new_params, new_velocities)`` pair.
    :raises mask_fpan.exceptions.ShapeMismatchError: If a parameter and its
        gradient differ in shape.
    """
    params, grads = list(params), list(grads)
    if len(params) != len(grads):
        raise exceptions.ShapeMismatchError(
            'Got {} parameters but {} gradients.'
            .format(len(params), len(grads))
        )
    if velocities is None:
        velocities = [np.zeros(param.shape) for param in params]
    new_params, new_velocities = [], []
    for param, grad, velocity in zip(params, grads, velocities):
        if param.shape != grad.shape:
            raise _mismatch('sgd_step', param.shape, grad.shape)
        velocity = momentum * velocity + grad.data
        new_velocities.append(velocity)
        new_params.append(Tensor.wrap(
            param.data - lr * velocity, requires_grad=param.requires_grad
        ))
    return new_params, new_velocities


class SGD(object):
    """Momentum SGD over a fixed, named set of parameters.

    Parameters are updated in place with the same rule as :func:`sgd_step`.
    A parameter that received no gradient in a step is left untouched.

    :param params: An ordered dict mapping names to :class:`Tensor` objects.
    :param clip_norm: If given, gradients are scaled down so that their global
        L2 norm does not exceed it.
    """

    def __init__(self, params, lr, momentum=0.0, clip_norm=None):
        """Start with zero velocities."""
        self.params = OrderedDict(params)
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocities = OrderedDict(
            (name, np.zeros(param.shape))
            for name, param in self.params.items()
        )

    def step(self, tape):
        """Update every parameter that has a gradient on ``tape``.

        :returns: The global gradient norm before clipping.
        """
        grads = OrderedDict()
        for name, param in self.params.items():
            grad = tape.grad(param)
            if grad is not None:
                grads[name] = grad.data
        norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        for name, grad in grads.items():
            velocity = self.velocities[name]
            velocity *= self.momentum
            velocity += grad * scale if scale != 1.0 else grad
            self.params[name].data -= self.lr * velocity
        return norm


def save_checkpoint(path, entries):
    """Write named arrays to a checkpoint file.

    The file starts with the magic bytes ``MFPN`` and a little-endian u32
    version. Each entry follows as: u32 name length, UTF-8 name, u32 rank,
    u64 dims, then the values as little-endian f64. Entries are written in
    sorted name order, so equal inputs give identical bytes.

    :param entries: A dict mapping names to arrays.
    """
    with open(path, 'wb') as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack('<I', CHECKPOINT_VERSION))
        for name in sorted(entries):
            array = np.ascontiguousarray(entries[name], dtype='<f8')
            encoded = name.encode('utf-8')
            handle.write(struct.pack('<I', len(encoded)))
            handle.write(encoded)
            handle.write(struct.pack('<I', array.ndim))
            handle.write(struct.pack('<{}Q'.format(array.ndim), *array.shape))
            handle.write(array.tobytes())


def load_checkpoint(path):
    """Read a checkpoint file written by :func:`save_checkpoint`.

    :returns: An ordered dict mapping names to float64 arrays.
    :raises mask_fpan.exceptions.CheckpointFormatError: If the magic bytes
        are wrong or an entry is truncated.
    :raises mask_fpan.exceptions.VersionMismatchError: If the container
        version is not supported.
    """
    with open(path, 'rb') as handle:
        blob = handle.read()

    def fail(reason):
        return exceptions.CheckpointFormatError(
            'The checkpoint file {} is malformed: {}.'.format(path, reason)
        )

    if blob[:4] != CHECKPOINT_MAGIC:
        raise fail('bad magic bytes {!r}'.format(blob[:4]))
    if len(blob) < 8:
        raise fail('truncated header')
    version = struct.unpack_from('<I', blob, 4)[0]
    if version != CHECKPOINT_VERSION:
        raise exceptions.VersionMismatchError(
            'The checkpoint file {} has container version {}, but only '
            'version {} is supported.'
            .format(path, version, CHECKPOINT_VERSION)
        )
    entries = OrderedDict()
    offset = 8
    try:
        while offset < len(blob):
            name_length = struct.unpack_from('<I', blob, offset)[0]
            offset += 4
            if offset + name_length > len(blob):
                raise fail('truncated entry name')
            name = blob[offset:offset + name_length].decode('utf-8')
            offset += name_length
            rank = struct.unpack_from('<I', blob, offset)[0]
            offset += 4
            dims = struct.unpack_from('<{}Q'.format(rank), blob, offset)
            offset += 8 * rank
            count = int(np.prod(dims)) if rank else 1
            if offset + 8 * count > len(blob):
                raise fail('truncated payload of entry {!r}'.format(name))
            array = np.frombuffer(blob, dtype='<f8', count=count, offset=offset)
            offset += 8 * count
            entries[name] = array.astype(np.float64).reshape(dims)
    except (struct.error, UnicodeDecodeError) as err:
        raise fail(type('')(err))
    return entries
