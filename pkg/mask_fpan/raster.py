# coding=utf-8
"""A vectorised z-buffer triangle rasteriser.

Pixel centres sit at integer coordinates: pixel ``(row, col)`` covers the
point ``(x=col, y=row)``. Larger depth values are closer to the camera.
"""
from __future__ import division, unicode_literals

from collections import namedtuple

import numpy as np


Fragments = namedtuple('Fragments', ('triangle', 'barycentric', 'depth'))
"""The winning triangle of every pixel.

``triangle`` is an ``(H, W)`` array of triangle indices, ``-1`` where no
triangle covers the pixel. ``barycentric`` is ``(H, W, 3)``. ``depth`` is
``(H, W)``, ``-inf`` where no triangle covers the pixel.
"""

_EPSILON = 1e-9


def signed_areas(points, triangles):
    """Return twice the signed area of every projected triangle."""
    p0, p1, p2 = (points[triangles[:, k]] for k in range(3))
    return (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) -
        (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )


def rasterize_triangles(points, depth, triangles, height, width, keep=None):
    """Rasterise triangles with a depth test.

    Triangles with a (near) zero projected area are skipped. Coverage is
    inclusive, so a pixel centre on a shared edge is claimed by both
    neighbours and resolved by depth, then by the lower triangle index.

    :param points: ``(V, 2)`` projected vertex positions ``(x, y)``.
    :param depth: ``(V,)`` vertex depths.
    :param triangles: ``(T, 3)`` vertex indices.
    :param keep: Optional ``(T,)`` booleans. Only these triangles are drawn.
    :returns: A :class:`Fragments` tuple.
    """
    points = np.asarray(points, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    triangles = np.asarray(triangles)
    area = signed_areas(points, triangles)
    corners = points[triangles]
    x_min = np.maximum(np.ceil(corners[:, :, 0].min(axis=1)), 0)
    x_max = np.minimum(np.floor(corners[:, :, 0].max(axis=1)), width - 1)
    y_min = np.maximum(np.ceil(corners[:, :, 1].min(axis=1)), 0)
    y_max = np.minimum(np.floor(corners[:, :, 1].max(axis=1)), height - 1)
    active = (np.abs(area) > 1e-12) & (x_min <= x_max) & (y_min <= y_max)
    if keep is not None:
        active &= np.asarray(keep, dtype=bool)
    index = np.flatnonzero(active)
    span = np.maximum(x_max - x_min, y_max - y_min)[index].astype(np.int64) + 1

    pixels, depths, owners, weights = [], [], [], []
    size = 1
    while index.size:
        group = index[span <= size]
        index, span = index[span > size], span[span > size]
        size *= 2
        if not group.size:
            continue
        limit = size // 2
        offsets = np.arange(limit)
        cand_x = x_min[group][:, None, None] + offsets[None, None, :]
        cand_y = y_min[group][:, None, None] + offsets[None, :, None]
        cand_x, cand_y = np.broadcast_arrays(cand_x, cand_y)
        valid = (
            (cand_x <= x_max[group][:, None, None]) &
            (cand_y <= y_max[group][:, None, None])
        )
        tri = triangles[group]
        p0, p1, p2 = (points[tri[:, k]] for k in range(3))
        inv_area = 1.0 / area[group]

        def edge(pa, pb):
            value = (
                (pa[:, 0, None, None] - cand_x) *
                (pb[:, 1, None, None] - cand_y) -
                (pb[:, 0, None, None] - cand_x) *
                (pa[:, 1, None, None] - cand_y)
            )
            return value * inv_area[:, None, None]

        w0 = edge(p1, p2)
        w1 = edge(p2, p0)
        w2 = 1.0 - w0 - w1
        inside = (
            valid & (w0 >= -_EPSILON) & (w1 >= -_EPSILON) & (w2 >= -_EPSILON)
        )
        which, row, col = np.nonzero(inside)
        z = depth[tri]
        a, b, c = w0[which, row, col], w1[which, row, col], w2[which, row, col]
        pixels.append(
            (cand_y[which, row, col] * width + cand_x[which, row, col])
            .astype(np.int64)
        )
        depths.append(a * z[which, 0] + b * z[which, 1] + c * z[which, 2])
        owners.append(group[which])
        weights.append(np.stack([a, b, c], axis=1))

    triangle_buffer = np.full(height * width, -1, dtype=np.int64)
    barycentric = np.zeros((height * width, 3))
    depth_buffer = np.full(height * width, -np.inf)
    if pixels:
        pixels = np.concatenate(pixels)
        depths = np.concatenate(depths)
        owners = np.concatenate(owners)
        weights = np.concatenate(weights)
        order = np.lexsort((owners, -depths, pixels))
        pixels, first = np.unique(pixels[order], return_index=True)
        winners = order[first]
        triangle_buffer[pixels] = owners[winners]
        barycentric[pixels] = weights[winners]
        depth_buffer[pixels] = depths[winners]
    return Fragments(
        triangle_buffer.reshape(height, width),
        barycentric.reshape(height, width, 3),
        depth_buffer.reshape(height, width),
    )


def interpolate(fragments, attributes, triangles, fill=0.0):
    """Blend per-vertex ``attributes`` with the fragments' barycentrics.

    :returns: An ``(H, W, ...)`` array, ``fill`` where no triangle won.
    """
    attributes = np.asarray(attributes, dtype=np.float64)
    covered = fragments.triangle >= 0
    out = np.full(fragments.triangle.shape + attributes.shape[1:], fill)
    tri = np.asarray(triangles)[fragments.triangle[covered]]
    weights = fragments.barycentric[covered]
    blended = sum(
        weights[:, k].reshape((-1,) + (1,) * (attributes.ndim - 1)) *
        attributes[tri[:, k]]
        for k in range(3)
    )
    out[covered] = blended
    return out


def majority_labels(fragments, vertex_labels, triangles, background=0):
    """Label every covered pixel with its triangle's barycentric majority.

    The vertex with the largest barycentric weight decides, which equals the
    label shared by a triangle whose vertices agree.
    """
    covered = fragments.triangle >= 0
    labels = np.full(fragments.triangle.shape, background, dtype=np.int64)
    tri = np.asarray(triangles)[fragments.triangle[covered]]
    winner = np.argmax(fragments.barycentric[covered], axis=1)
    labels[covered] = np.asarray(vertex_labels)[
        tri[np.arange(tri.shape[0]), winner]
    ]
    return labels


def bilinear_sample(image, x, y):
    """Sample an ``(H, W, C)`` image at real coordinates, clamping at borders.
    """
    height, width = image.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0, width - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0, height - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bottom = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def nearest_sample(image, x, y):
    """Sample ``image`` at the nearest pixel, clamping at the borders."""
    height, width = image.shape[:2]
    col = np.clip(np.round(x).astype(np.int64), 0, width - 1)
    row = np.clip(np.round(y).astype(np.int64), 0, height - 1)
    return image[row, col]
