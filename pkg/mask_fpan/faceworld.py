# coding=utf-8
"""A procedural morphable face model and a synthetic face dataset.

The face surface is a grid over longitude ``phi`` and latitude ``theta`` (in
degrees). ``phi = 0`` runs down the middle of the face and ``theta = 0`` sits
at the level of the nose bridge. Facial parts are regions of that grid, so a
vertex's part label, its UV coordinates and its mirror partner all follow from
its grid position.

Images are rendered with weak perspective: a rotation, an orthographic
projection and a global scale. Pixel ``(row, col)`` has its centre at
``(x=col, y=row)`` and image ``y`` grows downwards.

Samples come in three label regimes (see
:data:`mask_fpan.constants.REGIMES`). An ``occluded_no_mask`` sample shows an
occluder but its labels were never told about it, which is the case the
de-occlusion module exists for.
"""
from __future__ import division, unicode_literals

import json
import logging
import os
from collections import OrderedDict, namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from mask_fpan import exceptions, netpbm, raster
from mask_fpan.constants import (
    BACKGROUND,
    BROW,
    CLASS_NAMES,
    DATASET_VERSION,
    EXTERNAL_PART_TABLE,
    EYE,
    HAIR,
    LOWER_LIP,
    MOUTH_INTERIOR,
    NOSE,
    OCCLUDER_ANCHORS,
    OCCLUDER_KINDS,
    REGIMES,
    SKIN,
    UPPER_LIP,
    VALID_POSE_RANGE,
)

logger = logging.getLogger(__name__)  # pylint:disable=invalid-name

PHI_LIMIT = 130.0
THETA_TOP = 84.0
THETA_BOTTOM = -66.0
HEAD_RADII = (0.82, 1.05, 0.92)
DEFAULT_GRID = (95, 105)

# name, class id, centre (phi, theta), radii (phi, theta). A non-zero centre
# phi describes a left/right pair. Later regions overwrite earlier ones.
PART_REGIONS = (
    ('brow', BROW, (26.0, 24.0), (13.0, 4.0)),
    ('eye', EYE, (26.0, 11.0), (11.0, 5.5)),
    ('nose', NOSE, (0.0, -3.0), (8.0, 12.0)),
    ('upper_lip', UPPER_LIP, (0.0, -22.0), (16.0, 4.0)),
    ('lower_lip', LOWER_LIP, (0.0, -30.0), (15.0, 4.5)),
    ('mouth_interior', MOUTH_INTERIOR, (0.0, -26.0), (14.0, 2.2)),
)

# amplitude, centre (phi, theta), sigma (phi, theta)
_MEAN_BUMPS = (
    (0.20, (0.0, -4.0), (8.0, 11.0)),
    (0.08, (0.0, -9.0), (5.0, 5.0)),
    (-0.04, (26.0, 11.0), (9.0, 5.0)),
    (0.03, (26.0, 23.0), (13.0, 4.0)),
    (0.035, (0.0, -26.0), (14.0, 6.0)),
    (0.05, (0.0, -47.0), (16.0, 8.0)),
    (0.02, (38.0, -12.0), (14.0, 12.0)),
)

PART_ALBEDO = {
    BACKGROUND: (0.0, 0.0, 0.0),
    SKIN: (0.85, 0.65, 0.53),
    BROW: (0.25, 0.17, 0.12),
    EYE: (0.15, 0.15, 0.22),
    NOSE: (0.88, 0.60, 0.48),
    UPPER_LIP: (0.75, 0.35, 0.35),
    LOWER_LIP: (0.80, 0.42, 0.40),
    MOUTH_INTERIOR: (0.35, 0.08, 0.10),
    HAIR: (0.20, 0.13, 0.08),
}

# centre (phi, theta) and half extents (phi, theta) of occluder anchors
ANCHOR_REGIONS = {
    'mouth': ((0.0, -26.0), (20.0, 9.0)),
    'eyes': ((0.0, 12.0), (40.0, 8.0)),
    'nose': ((0.0, -4.0), (10.0, 14.0)),
    'left_cheek': ((38.0, -14.0), (14.0, 12.0)),
    'right_cheek': ((-38.0, -14.0), (14.0, 12.0)),
    'chin': ((0.0, -46.0), (20.0, 9.0)),
    'lower_face': ((0.0, -30.0), (45.0, 24.0)),
}

LANDMARK_GROUPS = ('contour', 'brow', 'nose', 'eye', 'mouth')
_LANDMARK_SHARES = (17, 10, 9, 12, 20)
_LIGHT = np.array([0.3, 0.4, 1.0]) / np.linalg.norm([0.3, 0.4, 1.0])
_MIN_OCCLUDER_FRACTION = 0.02
_MAX_OCCLUDER_FRACTION = 0.35


MorphableModel = namedtuple('MorphableModel', (
    'mean_shape',
    'bases',
    'triangles',
    'uv_coords',
    'vertex_part',
    'landmark_vertices',
    'landmark_groups',
    'vertex_symmetry',
    'landmark_symmetry',
    'grid',
    'grid_angles',
    'num_classes',
    'class_names',
))
"""A morphable face model. Build one with :func:`build_model`.

``vertex_symmetry`` is the left/right involution of vertices and
``landmark_symmetry`` the matching permutation of landmarks. ``grid`` is the
(rows, columns) shape of the vertex grid and ``grid_angles`` the
``(V, 2)`` array of each vertex's ``(phi, theta)``.
"""

OccluderSpec = namedtuple('OccluderSpec', ('kind', 'anchor', 'size', 'texture_seed'))
"""What occluder to draw, over which face region, at which relative size."""

SampleOptions = namedtuple('SampleOptions', (
    'flip_prob',
    'gamma_range',
    'scale_range',
    'solid_background_prob',
))
"""Per-sample augmentation settings. See :func:`options_from_config`."""

PLAIN_OPTIONS = SampleOptions(0.0, (1.0, 1.0), (1.0, 1.0), 1.0)
"""Options that switch every augmentation off."""

RenderResult = namedtuple('RenderResult', (
    'image',
    'part_labels',
    'depth',
    'landmarks_2d',
    'landmark_visible',
))


def class_names(num_classes):
    """Return class names for a scheme of ``num_classes`` classes.

    Classes beyond the built-in parts are named ``class_<id>``. The last class
    is always ``occlusion``.
    """
    if num_classes < len(CLASS_NAMES):
        raise exceptions.LabelOutOfRangeError(
            'At least {} classes are needed, got {}.'
            .format(len(CLASS_NAMES), num_classes)
        )
    names = list(CLASS_NAMES[:-1])
    names.extend(
        'class_{}'.format(index)
        for index in range(len(names), num_classes - 1)
    )
    names.append(CLASS_NAMES[-1])
    return tuple(names)


def occlusion_class(model):
    """Return the class id of occluders in ``model``'s scheme."""
    return model.num_classes - 1


def _gaussian(phi, theta, centre, sigma):
    return np.exp(-0.5 * (
        ((phi - centre[0]) / sigma[0]) ** 2 +
        ((theta - centre[1]) / sigma[1]) ** 2
    ))


def _paired_gaussian(phi, theta, centre, sigma):
    """A gaussian bump, mirrored onto the other side when off-centre."""
    bump = _gaussian(phi, theta, centre, sigma)
    if centre[0] != 0:
        bump = bump + _gaussian(phi, theta, (-centre[0], centre[1]), sigma)
    return bump


def _directions(phi, theta):
    phi, theta = np.radians(phi), np.radians(theta)
    return np.stack([
        np.sin(phi) * np.cos(theta),
        np.sin(theta),
        np.cos(phi) * np.cos(theta),
    ], axis=-1)


def _part_of(phi, theta):
    """Return the class id of surface points at the given angles."""
    part = np.full(np.shape(phi), SKIN, dtype=np.int64)
    part[(theta > 40.0) | (np.abs(phi) > 75.0)] = HAIR
    for _, class_id, centre, radii in PART_REGIONS:
        lon = np.abs(phi) if centre[0] else phi
        inside = (
            ((lon - centre[0]) / radii[0]) ** 2 +
            ((theta - centre[1]) / radii[1]) ** 2
        ) <= 1.0
        part[inside] = class_id
    return part


def landmark_layout(count):
    """Return ``(group, phi, theta)`` for ``count`` landmarks.

    Landmarks are allotted to the groups contour, brow, nose, eye and mouth in
    proportion to the 68-point scheme. Every group is placed symmetrically.

    :raises ValueError: If ``count`` is smaller than 5.
    """
    if count < 5:
        raise ValueError('At least 5 landmarks are needed, got {}.'.format(count))
    counts = OrderedDict([
        ('contour', 0), ('brow', 0), ('nose', 1), ('eye', 2), ('mouth', 2),
    ])
    shares = dict(zip(LANDMARK_GROUPS, _LANDMARK_SHARES))
    remaining = count - 5
    while remaining > 0:
        best, best_deficit = None, None
        for group in LANDMARK_GROUPS:
            step = 2 if group in ('brow', 'eye') else 1
            if step > remaining:
                continue
            deficit = shares[group] * count / 68.0 - counts[group]
            if best is None or deficit > best_deficit:
                best, best_deficit = group, deficit
        step = 2 if best in ('brow', 'eye') else 1
        counts[best] += step
        remaining -= step

    layout = []
    n = counts['contour']
    for t in np.linspace(-1.0, 1.0, n) if n > 1 else [0.0] * n:
        layout.append(('contour', 70.0 * t, -8.0 - 44.0 * (1 - t * t) ** 0.8))
    half = counts['brow'] // 2
    spots = np.linspace(16.0, 36.0, half) if half > 1 else [26.0] * half
    for sign in (1.0, -1.0):
        for lon in spots:
            arch = 1.5 * (1 - ((lon - 26.0) / 13.0) ** 2)
            layout.append(('brow', sign * lon, 24.0 + arch))
    n = counts['nose']
    bridge = max(1, n * 4 // 9)
    spots = np.linspace(7.0, -5.0, bridge) if bridge > 1 else [-6.0]
    layout.extend(('nose', 0.0, lat) for lat in spots)
    nostrils = n - bridge
    spots = np.linspace(-5.0, 5.0, nostrils) if nostrils > 1 else [0.0] * nostrils
    layout.extend(('nose', lon, -11.0) for lon in spots)
    half = counts['eye'] // 2
    angles = 2 * np.pi * np.arange(half) / max(half, 1)
    for sign in (1.0, -1.0):
        for angle in angles:
            radius = 0.75 if half > 1 else 0.0
            layout.append((
                'eye',
                sign * (26.0 + radius * 11.0 * np.cos(angle)),
                11.0 + radius * 5.5 * np.sin(angle),
            ))
    n = counts['mouth']
    upper = int(round(n * 0.3))
    lower = int(round(n * 0.3))
    for total, lat, reach in ((upper, -21.0, 11.0), (lower, -31.0, 10.0),
                              (n - upper - lower, -26.0, 10.5)):
        spots = np.linspace(-reach, reach, total) if total > 1 else [0.0] * total
        layout.extend(('mouth', lon, lat) for lon in spots)
    return layout


def _grid_angles(rows, cols):
    phi = np.linspace(-PHI_LIMIT, PHI_LIMIT, cols)
    phi = (phi - phi[::-1]) / 2.0
    theta = np.linspace(THETA_TOP, THETA_BOTTOM, rows)
    phi_grid, theta_grid = np.meshgrid(phi, theta)
    return phi_grid.reshape(-1), theta_grid.reshape(-1)


def _grid_triangles(rows, cols):
    index = np.arange(rows * cols).reshape(rows, cols)
    a = index[:-1, :-1].reshape(-1)
    b = index[:-1, 1:].reshape(-1)
    c = index[1:, :-1].reshape(-1)
    d = index[1:, 1:].reshape(-1)
    return np.concatenate([
        np.stack([a, b, d], axis=1),
        np.stack([a, d, c], axis=1),
    ]).astype(np.int64)


def build_model(num_bases, landmark_count, seed, grid=DEFAULT_GRID,
                num_classes=len(CLASS_NAMES)):
    """Build a morphable face model.

    The mean shape is a head ellipsoid with nose, brow, cheek, lip and chin
    relief. Each basis is a smooth, left/right symmetric radial deformation;
    the first two stretch the face sideways and lengthwise.

    :param num_bases: The number of deformation bases, at least 1.
    :param landmark_count: The number of landmarks, at least 5.
    :param seed: Seeds the random bases. Equal seeds give identical models.
    :param grid: The (rows, columns) of the vertex grid. Columns must be odd.
    :param num_classes: The size of the class scheme, at least 10.
    :returns: A :class:`MorphableModel`.
    """
    if num_bases < 1:
        raise ValueError('At least 1 basis is needed, got {}.'.format(num_bases))
    rows, cols = grid
    if cols % 2 == 0 or rows < 3:
        raise ValueError('The mesh grid needs an odd column count, got {}.'
                         .format(grid))
    names = class_names(num_classes)
    rng = np.random.default_rng(seed)
    phi, theta = _grid_angles(rows, cols)
    directions = _directions(phi, theta)
    relief = sum(
        amplitude * _paired_gaussian(phi, theta, centre, sigma)
        for amplitude, centre, sigma in _MEAN_BUMPS
    )
    mean_shape = directions * np.array(HEAD_RADII) * (1.0 + relief)[:, None]

    bases = np.zeros((num_bases, phi.size, 3))
    bases[0, :, 0] = 0.06 * mean_shape[:, 0]
    if num_bases > 1:
        bases[1, :, 1] = 0.06 * mean_shape[:, 1]
    for k in range(2, num_bases):
        centre = (rng.uniform(0.0, 60.0), rng.uniform(-50.0, 40.0))
        sigma = (rng.uniform(10.0, 25.0), rng.uniform(10.0, 25.0))
        amplitude = rng.choice([-1.0, 1.0]) * rng.uniform(0.02, 0.05)
        field = amplitude * _paired_gaussian(phi, theta, centre, sigma)
        bases[k] = directions * field[:, None]

    uv_coords = np.stack([
        np.tile(np.arange(cols) / (cols - 1.0), rows),
        np.repeat(np.arange(rows) / (rows - 1.0), cols),
    ], axis=1)
    symmetry = np.arange(rows * cols).reshape(rows, cols)[:, ::-1].reshape(-1)

    layout = landmark_layout(landmark_count)
    phi_step = 2 * PHI_LIMIT / (cols - 1)
    theta_step = (THETA_TOP - THETA_BOTTOM) / (rows - 1)
    landmark_vertices = []
    for _, lon, lat in layout:
        col = int(np.clip(np.round((lon + PHI_LIMIT) / phi_step), 0, cols - 1))
        row = int(np.clip(np.round((THETA_TOP - lat) / theta_step), 0, rows - 1))
        landmark_vertices.append(row * cols + col)
    landmark_vertices = np.array(landmark_vertices, dtype=np.int64)
    position = {}
    for index, vertex in enumerate(landmark_vertices):
        position.setdefault(int(vertex), index)
    landmark_symmetry = np.array([
        position.get(int(symmetry[vertex]), index)
        for index, vertex in enumerate(landmark_vertices)
    ], dtype=np.int64)

    return MorphableModel(
        mean_shape=mean_shape,
        bases=bases,
        triangles=_grid_triangles(rows, cols),
        uv_coords=uv_coords,
        vertex_part=_part_of(phi, theta),
        landmark_vertices=landmark_vertices,
        landmark_groups=tuple(group for group, _, _ in layout),
        vertex_symmetry=symmetry,
        landmark_symmetry=landmark_symmetry,
        grid=(rows, cols),
        grid_angles=np.stack([phi, theta], axis=1),
        num_classes=num_classes,
        class_names=names,
    )


def model_from_config(data):
    """Build the face model described by a ``data`` config section."""
    return build_model(
        data.num_bases,
        data.landmark_count,
        data.model_seed,
        grid=tuple(data.mesh_grid),
        num_classes=data.num_classes,
    )


def options_from_config(data):
    """Build :class:`SampleOptions` from a ``data`` config section."""
    return SampleOptions(
        flip_prob=data.flip_prob,
        gamma_range=tuple(data.gamma_range),
        scale_range=tuple(data.scale_range),
        solid_background_prob=data.solid_background_prob,
    )


def shape_vertices(model, shape_coeffs=None):
    """Return the ``(V, 3)`` vertices of a face with the given coefficients."""
    if shape_coeffs is None:
        return model.mean_shape.copy()
    coeffs = np.asarray(shape_coeffs, dtype=np.float64)
    return model.mean_shape + np.tensordot(coeffs, model.bases, axes=1)


def vertex_normals(model, vertices):
    """Return unit outward normals, area-weighted over adjacent triangles."""
    tri = model.triangles
    p0, p1, p2 = (vertices[tri[:, k]] for k in range(3))
    face = np.cross(p2 - p0, p1 - p0)
    normals = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(normals, tri[:, k], face)
    length = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.maximum(length, 1e-12)


def rotation_matrix(yaw, pitch, roll):
    """Return ``Rz(roll) Rx(pitch) Ry(yaw)`` for angles in degrees."""
    y, p, r = np.radians([yaw, pitch, roll])
    rot_y = np.array([
        [np.cos(y), 0.0, np.sin(y)],
        [0.0, 1.0, 0.0],
        [-np.sin(y), 0.0, np.cos(y)],
    ])
    rot_x = np.array([
        [1.0, 0.0, 0.0],
        [0.0, np.cos(p), -np.sin(p)],
        [0.0, np.sin(p), np.cos(p)],
    ])
    rot_z = np.array([
        [np.cos(r), -np.sin(r), 0.0],
        [np.sin(r), np.cos(r), 0.0],
        [0.0, 0.0, 1.0],
    ])
    return rot_z.dot(rot_x).dot(rot_y)


def check_pose(pose):
    """Raise :class:`mask_fpan.exceptions.PoseRangeError` for a bad pose."""
    for name, value, limit in zip(('yaw', 'pitch', 'roll'), pose,
                                  VALID_POSE_RANGE):
        if not abs(value) <= limit:
            raise exceptions.PoseRangeError(
                'The {} angle {} lies outside [-{}, {}] degrees.'
                .format(name, value, limit, limit)
            )


def image_shape(image_size):
    """Return ``(H, W)`` for an int or a pair."""
    if isinstance(image_size, (tuple, list)):
        return int(image_size[0]), int(image_size[1])
    return int(image_size), int(image_size)


def default_scale(image_size):
    """Return the pixels per model unit used for a frontal render."""
    return 0.4 * min(image_shape(image_size))


def image_centre(image_size):
    """Return the ``(x, y)`` image centre."""
    height, width = image_shape(image_size)
    return np.array([(width - 1) / 2.0, (height - 1) / 2.0])


def project(vertices, pose, scale, centre):
    """Project vertices with weak perspective.

    :returns: ``(points, depth, rotation)``: ``(V, 2)`` pixel positions,
        ``(V,)`` depths (larger is closer) and the rotation matrix.
    """
    rotation = rotation_matrix(*pose)
    rotated = vertices.dot(rotation.T)
    points = np.stack([
        centre[0] + scale * rotated[:, 0],
        centre[1] - scale * rotated[:, 1],
    ], axis=1)
    return points, rotated[:, 2], rotation


def depth_tolerance(normals, scale):
    """Return a slope-scaled depth tolerance for a depth-buffer comparison.

    A surface point is compared with the depth stored at its nearest pixel
    centre, up to 0.75 px away. The tolerance covers the depth change over
    that distance on a surface with the given (rotated) normals.
    """
    slope = (np.abs(normals[..., 0]) + np.abs(normals[..., 1])) / np.maximum(
        normals[..., 2], 1e-3
    )
    return 0.02 + np.minimum(0.75 * slope / scale, 0.15)


def front_facing(points, model):
    """Return which projected triangles face the camera."""
    return raster.signed_areas(points, model.triangles) > 0


Projection = namedtuple('Projection', (
    'vertices', 'points', 'depth', 'normals', 'fragments', 'scale',
))


def project_face(model, shape_coeffs, pose, image_size, scale=None,
                 centre=None):
    """Project and rasterise a face without shading it.

    :returns: A :class:`Projection` with vertex positions, depths and rotated
        normals plus the depth-tested, back-face culled fragments.
    """
    check_pose(pose)
    height, width = image_shape(image_size)
    if scale is None:
        scale = default_scale(image_size)
    if centre is None:
        centre = image_centre(image_size)
    vertices = shape_vertices(model, shape_coeffs)
    points, depth, rotation = project(vertices, pose, scale, centre)
    normals = vertex_normals(model, vertices).dot(rotation.T)
    fragments = raster.rasterize_triangles(
        points, depth, model.triangles, height, width,
        keep=front_facing(points, model),
    )
    return Projection(vertices, points, depth, normals, fragments, scale)


def landmark_visibility(model, projection):
    """Return which landmark vertices are not hidden by the face itself."""
    vertices = model.landmark_vertices
    normals = projection.normals[vertices]
    points = projection.points[vertices]
    height, width = projection.fragments.depth.shape
    inside = (
        (points[:, 0] > -0.5) & (points[:, 0] < width - 0.5) &
        (points[:, 1] > -0.5) & (points[:, 1] < height - 0.5)
    )
    stored = raster.nearest_sample(
        projection.fragments.depth, points[:, 0], points[:, 1]
    )
    tolerance = depth_tolerance(normals, projection.scale)
    return (
        inside & (normals[:, 2] > 0) &
        (projection.depth[vertices] >= stored - tolerance)
    )


def vertex_albedo(model, skin_tone=None, hair_colour=None):
    """Return per-vertex ``(V, 3)`` colours from the part albedo table."""
    table = np.zeros((model.num_classes, 3))
    for class_id, colour in PART_ALBEDO.items():
        table[class_id] = colour
    if skin_tone is not None:
        for class_id in (SKIN, NOSE):
            table[class_id] = np.clip(table[class_id] * skin_tone, 0, 1)
    if hair_colour is not None:
        table[HAIR] = hair_colour
        table[BROW] = np.asarray(hair_colour) * 0.8
    return table[model.vertex_part]


def shade(albedo, normals, light=_LIGHT):
    """Apply ambient plus Lambert shading to per-vertex colours."""
    lambert = np.maximum(normals.dot(light), 0.0)
    return albedo * (0.45 + 0.55 * lambert)[:, None]


def render(model, shape_coeffs, pose, image_size, scale=None, centre=None,
           albedo=None, light=_LIGHT):
    """Rasterise a face.

    :param model: A :class:`MorphableModel`.
    :param shape_coeffs: ``K`` shape coefficients, or ``None`` for the mean.
    :param pose: ``(yaw, pitch, roll)`` in degrees.
    :param image_size: An int or a ``(H, W)`` pair.
    :param scale: Pixels per model unit. Defaults to :func:`default_scale`.
    :param centre: The ``(x, y)`` pixel the head centre projects to.
    :param albedo: Optional per-vertex colours.
    :returns: A :class:`RenderResult`. ``depth`` is ``-inf`` on background.
    :raises mask_fpan.exceptions.PoseRangeError: If the pose is out of range.
    """
    projection = project_face(model, shape_coeffs, pose, image_size, scale,
                               centre)
    if albedo is None:
        albedo = vertex_albedo(model)
    colours = shade(albedo, projection.normals, light)
    image = raster.interpolate(projection.fragments, colours, model.triangles)
    labels = raster.majority_labels(
        projection.fragments, model.vertex_part, model.triangles
    )
    return RenderResult(
        image=np.clip(image, 0.0, 1.0),
        part_labels=labels,
        depth=projection.fragments.depth,
        landmarks_2d=projection.points[model.landmark_vertices].copy(),
        landmark_visible=landmark_visibility(model, projection),
    )


def random_background(rng, height, width, solid_prob):
    """Draw a background: a pure colour or a smooth multi-colour pattern.

    The number of random draws does not depend on the outcome.
    """
    pick = rng.random()
    solid = rng.uniform(0.0, 1.0, 3)
    freqs = rng.uniform(-4.0, 4.0, (4, 2))
    phases = rng.uniform(0.0, 2 * np.pi, 4)
    colours = rng.uniform(0.0, 1.0, (4, 3))
    if pick < solid_prob:
        return np.broadcast_to(solid, (height, width, 3)).copy()
    ys, xs = np.mgrid[0:height, 0:width] / float(max(height, width))
    waves = 0.5 + 0.5 * np.sin(
        2 * np.pi * (
            freqs[:, 0, None, None] * xs[None] +
            freqs[:, 1, None, None] * ys[None]
        ) + phases[:, None, None]
    )
    return np.clip(np.einsum('khw,kc->hwc', waves, colours) / 2.0, 0.0, 1.0)


def draw_regime(rng, policy):
    """Draw a regime name with the probabilities of ``policy``."""
    return REGIMES[int(rng.choice(len(REGIMES), p=policy))]


def check_policy(policy):
    """Raise :class:`mask_fpan.exceptions.PolicyError` for a bad policy."""
    policy = np.asarray(policy, dtype=np.float64)
    if (policy.shape != (3,) or np.any(policy < 0) or
            abs(policy.sum() - 1.0) > 1e-9):
        raise exceptions.PolicyError(
            'An occlusion policy needs three non-negative probabilities '
            'summing to 1, got {!r}.'.format(policy.tolist())
        )
    return policy


class FaceSample(object):
    """One training or evaluation record.

    ``landmarks_2d`` is ``(L, 2)`` pixel positions, ``landmark_occluded`` and
    ``landmark_visible`` are ``(L,)`` booleans. Samples from the external
    layout carry zero landmarks and no pose or shape coefficients.
    ``synthetic`` marks samples whose occlusion labels were synthesized.
    """

    FIELDS = (
        'image', 'part_labels', 'landmarks_2d', 'landmark_occluded',
        'landmark_visible', 'pose', 'shape_coeffs', 'occluder_mask', 'regime',
        'synthetic',
    )

    def __init__(  # pylint:disable=too-many-arguments
            self, image, part_labels, landmarks_2d, landmark_occluded,
            landmark_visible, pose, shape_coeffs, occluder_mask, regime,
            synthetic=False):
        """Store the fields."""
        if regime not in REGIMES:
            raise ValueError('Unknown regime {!r}.'.format(regime))
        self.image = np.asarray(image, dtype=np.float64)
        self.part_labels = np.asarray(part_labels, dtype=np.int64)
        self.landmarks_2d = np.asarray(landmarks_2d, dtype=np.float64).reshape(-1, 2)
        self.landmark_occluded = np.asarray(landmark_occluded, dtype=bool)
        self.landmark_visible = np.asarray(landmark_visible, dtype=bool)
        self.pose = None if pose is None else tuple(float(a) for a in pose)
        self.shape_coeffs = (
            None if shape_coeffs is None
            else np.asarray(shape_coeffs, dtype=np.float64)
        )
        self.occluder_mask = (
            None if occluder_mask is None
            else np.asarray(occluder_mask, dtype=bool)
        )
        self.regime = regime
        self.synthetic = bool(synthetic)

    def __repr__(self):
        return 'FaceSample(regime={!r}, size={}, pose={!r})'.format(
            self.regime, self.image.shape[:2], self.pose
        )

    def __eq__(self, other):
        if not isinstance(other, FaceSample):
            return NotImplemented
        for field in self.FIELDS:
            mine, theirs = getattr(self, field), getattr(other, field)
            if isinstance(mine, np.ndarray) or isinstance(theirs, np.ndarray):
                if mine is None or theirs is None:
                    return False
                if mine.shape != theirs.shape or not np.array_equal(mine, theirs):
                    return False
            elif mine != theirs:
                return False
        return True

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    __hash__ = None

    @property
    def has_landmarks(self):
        """Whether landmark annotations are present."""
        return self.landmarks_2d.shape[0] > 0

    def replace(self, **changes):
        """Return a copy with some fields replaced."""
        fields = {field: getattr(self, field) for field in self.FIELDS}
        fields.update(changes)
        for field, value in fields.items():
            if isinstance(value, np.ndarray):
                fields[field] = value.copy()
        return type(self)(**fields)


class Dataset(object):
    """An ordered collection of :class:`FaceSample` objects.

    :param samples: The samples.
    :param class_names: The class scheme the labels use.
    :param meta: A dict of generation facts (seed, policy, ...).
    """

    def __init__(self, samples, class_names=CLASS_NAMES, meta=None):
        """Keep the samples as a list."""
        self.samples = list(samples)
        self.class_names = tuple(class_names)
        self.meta = dict(meta or {})

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, index):
        return self.samples[index]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.class_names == other.class_names and
            len(self) == len(other) and
            all(a == b for a, b in zip(self.samples, other.samples))
        )

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    __hash__ = None

    def __repr__(self):
        return 'Dataset(n={}, classes={})'.format(len(self), len(self.class_names))

    @property
    def num_classes(self):
        """The number of classes in the label scheme."""
        return len(self.class_names)

    def subset(self, indices):
        """Return a dataset of the samples at ``indices``, in that order."""
        return type(self)(
            [self.samples[i] for i in indices], self.class_names, self.meta
        )

    def concat(self, other):
        """Return this dataset followed by ``other``."""
        return type(self)(self.samples + list(other), self.class_names, self.meta)


_Draws = namedtuple('_Draws', (
    'regime', 'shape_coeffs', 'pose', 'skin_tone', 'hair_colour', 'light',
    'scale_factor', 'background', 'occluder', 'flip', 'gamma', 'image_size',
))


def _draw(model, rng, policy, pose_range, image_size, options, occluder):
    """Make every random draw of one sample, in a fixed order and count."""
    regime = draw_regime(rng, policy)
    shape_coeffs = rng.uniform(-1.0, 1.0, model.bases.shape[0])
    pose = tuple(rng.uniform(-1.0, 1.0, 3) * np.asarray(pose_range, dtype=float))
    skin_tone = rng.uniform(0.75, 1.15) * rng.uniform(0.95, 1.05, 3)
    hair_colour = rng.uniform(0.03, 0.45, 3)
    light = np.array([rng.uniform(-0.5, 0.5), rng.uniform(0.0, 0.6), 1.0])
    scale_factor = rng.uniform(*options.scale_range)
    height, width = image_shape(image_size)
    background = random_background(
        rng, height, width, options.solid_background_prob
    )
    spec = OccluderSpec(
        kind=OCCLUDER_KINDS[int(rng.integers(len(OCCLUDER_KINDS)))],
        anchor=OCCLUDER_ANCHORS[int(rng.integers(len(OCCLUDER_ANCHORS)))],
        size=rng.uniform(0.8, 1.3),
        texture_seed=int(rng.integers(2 ** 31)),
    )
    flip = rng.random() < options.flip_prob
    low, high = options.gamma_range
    gamma = float(np.exp(rng.uniform(np.log(low), np.log(high))))
    return _Draws(
        regime, shape_coeffs, pose, skin_tone, hair_colour,
        light / np.linalg.norm(light), scale_factor, background,
        occluder if occluder is not None else spec, flip, gamma, image_size,
    )


def _anchor_frame(model, points, anchor):
    """Return the pixel centre, half extents and angle of a face region."""
    (lon, lat), (half_lon, half_lat) = ANCHOR_REGIONS[anchor]
    rows, cols = model.grid
    phi_step = 2 * PHI_LIMIT / (cols - 1)
    theta_step = (THETA_TOP - THETA_BOTTOM) / (rows - 1)

    def at(phi, theta):
        col = int(np.clip(np.round((phi + PHI_LIMIT) / phi_step), 0, cols - 1))
        row = int(np.clip(np.round((THETA_TOP - theta) / theta_step), 0, rows - 1))
        return points[row * cols + col]

    centre = at(lon, lat)
    left, right = at(lon - half_lon, lat), at(lon + half_lon, lat)
    top, bottom = at(lon, lat + half_lat), at(lon, lat - half_lat)
    half_width = max(np.linalg.norm(right - left) / 2.0, 1.5)
    half_height = max(np.linalg.norm(bottom - top) / 2.0, 1.5)
    angle = np.arctan2(right[1] - left[1], right[0] - left[0])
    return centre, half_width, half_height, angle


def _occluder_shape(kind, shape, centre, half_width, half_height, angle,
                    size, jitter):
    """Rasterise one occluder shape into a boolean mask."""
    height, width = shape
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    angle = angle + jitter['angle']
    du = (xs - centre[0]) * np.cos(angle) + (ys - centre[1]) * np.sin(angle)
    dv = -(xs - centre[0]) * np.sin(angle) + (ys - centre[1]) * np.cos(angle)
    a, b = half_width * size, half_height * size
    if kind == 'bar':
        return (np.abs(du) <= 1.25 * a) & (np.abs(dv) <= 1.1 * b)
    if kind == 'ellipse':
        return (du / a) ** 2 + (dv / b) ** 2 <= 1.0
    if kind == 'hand_blob':
        palm = (du / (0.8 * a)) ** 2 + ((dv - 0.3 * b) / (0.8 * b)) ** 2 <= 1.0
        fingers = np.zeros(shape, dtype=bool)
        for offset in (-0.6, -0.2, 0.2, 0.6):
            fingers |= (
                (np.abs(du - offset * a) <= 0.11 * a + 0.5) &
                (dv <= 0.0) & (dv >= -1.3 * b * jitter['reach'])
            )
        return palm | fingers
    if kind == 'mic_blob':
        radius = 0.5 * b + 1.0
        head = du ** 2 + dv ** 2 <= radius ** 2
        handle = (
            (np.abs(du) <= 0.35 * radius + 0.5) &
            (dv >= 0.0) & (dv <= 3.0 * radius)
        )
        return head | handle
    if kind == 'cloth_mask':
        return (np.abs(du) / a) ** 4 + (np.abs(dv) / b) ** 4 <= 1.0
    raise ValueError('Unknown occluder kind {!r}.'.format(kind))


def face_box(part_labels):
    """Return ``(top, bottom, left, right)`` of the non-hair face pixels."""
    face = (part_labels != BACKGROUND) & (part_labels != HAIR)
    if not face.any():
        face = part_labels != BACKGROUND
    if not face.any():
        height, width = part_labels.shape
        return 0, height - 1, 0, width - 1
    rows, cols = np.nonzero(face)
    return rows.min(), rows.max(), cols.min(), cols.max()


def occluder_mask(model, spec, points, part_labels):
    """Draw the mask of occluder ``spec`` over a rendered face.

    The mask is rescaled until its area lies within 2% and 35% of the face
    bounding box. If rescaling fails (for example because the anchor lies
    outside the image) a disk of a tenth of the box area replaces it.
    """
    rng = np.random.default_rng(spec.texture_seed)
    jitter = {
        'angle': np.radians(rng.uniform(
            -35.0 if spec.kind == 'hand_blob' else -15.0,
            35.0 if spec.kind == 'hand_blob' else 15.0,
        )),
        'reach': rng.uniform(0.9, 1.2),
    }
    anchor = 'lower_face' if spec.kind == 'cloth_mask' else spec.anchor
    centre, half_width, half_height, angle = _anchor_frame(model, points, anchor)
    top, bottom, left, right = face_box(part_labels)
    box_area = float((bottom - top + 1) * (right - left + 1))
    size = spec.size
    for _ in range(12):
        mask = _occluder_shape(spec.kind, part_labels.shape, centre,
                               half_width, half_height, angle, size, jitter)
        fraction = mask.sum() / box_area
        if fraction > _MAX_OCCLUDER_FRACTION:
            size *= np.sqrt(0.3 / fraction)
        elif fraction < _MIN_OCCLUDER_FRACTION:
            size *= np.sqrt(0.04 / fraction) if fraction else 2.0
        else:
            return mask
    ys, xs = np.mgrid[0:part_labels.shape[0], 0:part_labels.shape[1]]
    radius = np.sqrt(0.1 * box_area / np.pi)
    return (
        (xs - (left + right) / 2.0) ** 2 + (ys - (top + bottom) / 2.0) ** 2
        <= radius ** 2
    )


def occluder_texture(spec, shape):
    """Return a high-frequency noise texture for an occluder."""
    rng = np.random.default_rng([spec.texture_seed, 1])
    base = rng.uniform(0.05, 0.95, 3)
    noise = rng.uniform(-0.25, 0.25, tuple(shape) + (3,))
    return np.clip(base + noise, 0.0, 1.0)


def landmarks_covered(mask, landmarks_2d):
    """Return which landmarks fall on a pixel of ``mask``."""
    height, width = mask.shape
    cols = np.round(landmarks_2d[:, 0]).astype(np.int64)
    rows = np.round(landmarks_2d[:, 1]).astype(np.int64)
    inside = (cols >= 0) & (cols < width) & (rows >= 0) & (rows < height)
    covered = np.zeros(landmarks_2d.shape[0], dtype=bool)
    covered[inside] = mask[rows[inside], cols[inside]]
    return covered


def _compose(model, draws, regime):
    """Turn a set of draws into a sample of the given regime."""
    height, width = image_shape(draws.image_size)
    scale = default_scale(draws.image_size) * draws.scale_factor
    projection = project_face(model, draws.shape_coeffs, draws.pose,
                               draws.image_size, scale)
    albedo = vertex_albedo(model, draws.skin_tone, draws.hair_colour)
    colours = shade(albedo, projection.normals, draws.light)
    face = np.clip(
        raster.interpolate(projection.fragments, colours, model.triangles),
        0.0, 1.0,
    )
    labels = raster.majority_labels(
        projection.fragments, model.vertex_part, model.triangles
    )
    image = np.where((labels == BACKGROUND)[..., None], draws.background, face)
    landmarks = projection.points[model.landmark_vertices].copy()
    visible = landmark_visibility(model, projection)

    mask = None
    occluded = np.zeros(landmarks.shape[0], dtype=bool)
    if regime != 'clean':
        mask = occluder_mask(model, draws.occluder, projection.points, labels)
        texture = occluder_texture(draws.occluder, (height, width))
        image = np.where(mask[..., None], texture, image)
        occluded = landmarks_covered(mask, landmarks)
        if regime == 'occluded_with_mask':
            labels = labels.copy()
            labels[mask] = occlusion_class(model)

    pose = draws.pose
    if draws.flip:
        image = image[:, ::-1]
        labels = labels[:, ::-1]
        mask = None if mask is None else mask[:, ::-1]
        landmarks = np.stack(
            [width - 1 - landmarks[:, 0], landmarks[:, 1]], axis=1
        )
        order = model.landmark_symmetry
        landmarks, visible, occluded = (
            landmarks[order], visible[order], occluded[order]
        )
        pose = (-pose[0], pose[1], -pose[2])

    image = netpbm.quantize(np.clip(image, 0.0, 1.0) ** draws.gamma)
    return FaceSample(
        image=image,
        part_labels=np.ascontiguousarray(labels),
        landmarks_2d=landmarks,
        landmark_occluded=occluded,
        landmark_visible=visible,
        pose=pose,
        shape_coeffs=draws.shape_coeffs,
        occluder_mask=(
            np.ascontiguousarray(mask) if regime == 'occluded_with_mask'
            else None
        ),
        regime=regime,
    )


def sample_face(model, rng, occlusion_policy, pose_range, image_size=64,
                options=PLAIN_OPTIONS, regime=None, occluder=None):
    """Draw one synthetic face sample.

    :param model: A :class:`MorphableModel`.
    :param rng: A ``numpy.random.Generator``.
    :param occlusion_policy: Probabilities of the regimes in
        :data:`mask_fpan.constants.REGIMES`.
    :param pose_range: The largest absolute ``(yaw, pitch, roll)`` drawn.
    :param options: A :class:`SampleOptions`.
    :param regime: Force this regime. The same random draws are made, so a
        forced sample is the twin of the unforced one.
    :param occluder: Force this :class:`OccluderSpec`.
    :returns: A :class:`FaceSample`.
    :raises mask_fpan.exceptions.PolicyError: If the policy is invalid.
    """
    policy = check_policy(occlusion_policy)
    check_pose(pose_range)
    draws = _draw(model, rng, policy, pose_range, image_size, options, occluder)
    return _compose(model, draws, regime or draws.regime)


def sample_pair(model, rng, pose_range, image_size=64, options=PLAIN_OPTIONS,
                occluder=None):
    """Draw a de-occlusion training pair.

    :returns: ``(occluded_image, clean_image, occluder_mask)`` of the same
        face, pose and background.
    """
    check_pose(pose_range)
    draws = _draw(model, rng, (1.0, 0.0, 0.0), pose_range, image_size,
                  options, occluder)
    occluded = _compose(model, draws, 'occluded_with_mask')
    clean = _compose(model, draws, 'clean')
    return occluded.image, clean.image, occluded.occluder_mask


def _map(function, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            return list(executor.map(function, items))
    return [function(item) for item in items]


def generate_dataset(model, n, seed, policy, pose_range, image_size=64,
                     options=PLAIN_OPTIONS, threads=1, reveal=False,
                     start=0):
    """Generate ``n`` samples with independent per-index random streams.

    Sample ``i`` is drawn from ``numpy.random.default_rng([seed, start + i])``,
    so the result does not depend on ``threads``.

    :param reveal: If true, samples drawn as ``occluded_no_mask`` are produced
        as their ``occluded_with_mask`` twins, which makes them usable as
        evaluation ground truth.
    :returns: A :class:`Dataset`.
    :raises mask_fpan.exceptions.PolicyError: If the policy is invalid.
    :raises mask_fpan.exceptions.PoseRangeError: If ``pose_range`` exceeds the
        valid range.
    """
    policy = check_policy(policy)
    check_pose(pose_range)

    def one(index):
        rng = np.random.default_rng([seed, start + index])
        draws = _draw(model, rng, policy, pose_range, image_size, options, None)
        regime = draws.regime
        if reveal and regime == 'occluded_no_mask':
            regime = 'occluded_with_mask'
        return _compose(model, draws, regime)

    samples = _map(one, range(n), threads)
    logger.info('Generated %d samples with seed %s.', n, seed)
    meta = OrderedDict((
        ('seed', seed),
        ('policy', [float(p) for p in policy]),
        ('pose_range', [float(a) for a in pose_range]),
        ('image_size', list(image_shape(image_size))),
    ))
    return Dataset(samples, model.class_names, meta)


def generate_pairs(model, n, seed, pose_range, image_size=64,
                   options=PLAIN_OPTIONS, threads=1, start=0):
    """Generate ``n`` de-occlusion pairs. See :func:`sample_pair`.

    Pair ``i`` uses the stream ``[seed, start + i]``, like
    :func:`generate_dataset`.
    """
    check_pose(pose_range)

    def one(index):
        return sample_pair(model, np.random.default_rng([seed, start + index]),
                           pose_range, image_size, options)
    return _map(one, range(n), threads)


def _sample_files(index):
    return OrderedDict((
        ('image', 'img_{:05d}.ppm'.format(index)),
        ('labels', 'lab_{:05d}.pgm'.format(index)),
        ('landmarks', 'lm_{:05d}.csv'.format(index)),
        ('pose', 'pose_{:05d}.csv'.format(index)),
        ('occluder', 'occ_{:05d}.pgm'.format(index)),
    ))


def write_dataset(directory, dataset):
    """Write ``dataset`` in the native layout.

    The layout is ``meta.json`` plus per-sample ``img_%05d.ppm``,
    ``lab_%05d.pgm``, ``lm_%05d.csv`` (``x,y,occluded`` per landmark),
    ``pose_%05d.csv`` (``yaw,pitch,roll``) and, for samples with an occluder
    mask, ``occ_%05d.pgm``. Writing the same dataset twice gives identical
    bytes.
    """
    if not os.path.isdir(directory):
        os.makedirs(directory)
    records = []
    for index, sample in enumerate(dataset):
        files = _sample_files(index)
        netpbm.write_ppm(os.path.join(directory, files['image']), sample.image)
        netpbm.write_pgm(os.path.join(directory, files['labels']),
                         sample.part_labels)
        with open(os.path.join(directory, files['landmarks']), 'w') as handle:
            for (x, y), occluded in zip(sample.landmarks_2d,
                                        sample.landmark_occluded):
                handle.write('{!r},{!r},{}\n'.format(
                    float(x), float(y), int(occluded)
                ))
        with open(os.path.join(directory, files['pose']), 'w') as handle:
            if sample.pose is not None:
                handle.write('{!r},{!r},{!r}\n'.format(*sample.pose))
        if sample.occluder_mask is not None:
            netpbm.write_pgm(os.path.join(directory, files['occluder']),
                             sample.occluder_mask.astype(np.uint8) * 255)
        records.append(OrderedDict((
            ('regime', sample.regime),
            ('synthetic', sample.synthetic),
            ('shape_coeffs', (
                None if sample.shape_coeffs is None
                else [float(c) for c in sample.shape_coeffs]
            )),
            ('landmark_visible', [bool(v) for v in sample.landmark_visible]),
            ('has_occluder_mask', sample.occluder_mask is not None),
        )))
    meta = OrderedDict((
        ('format', 'mask-fpan-native'),
        ('format_version', DATASET_VERSION),
        ('count', len(dataset)),
        ('class_names', list(dataset.class_names)),
        ('generation', dataset.meta),
        ('samples', records),
    ))
    with open(os.path.join(directory, 'meta.json'), 'w') as handle:
        json.dump(meta, handle, indent=2, sort_keys=True)
        handle.write('\n')


def export_dataset(directory, n, seed, policy, model=None,
                   pose_range=(60.0, 25.0, 15.0), image_size=64,
                   options=PLAIN_OPTIONS, threads=1):
    """Generate ``n`` samples and write them in the native layout.

    :returns: The generated :class:`Dataset`.
    """
    if model is None:
        model = build_model(8, 68, 0)
    dataset = generate_dataset(model, n, seed, policy, pose_range,
                               image_size, options, threads)
    write_dataset(directory, dataset)
    return dataset


def _read_csv_rows(path, width):
    rows = []
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            fields = line.split(',')
            if len(fields) != width:
                raise ValueError('expected {} fields per row, found {}'
                                 .format(width, len(fields)))
            rows.append([float(field) for field in fields])
    return rows


def _load_native(directory, problems):
    meta_path = os.path.join(directory, 'meta.json')
    try:
        with open(meta_path) as handle:
            meta = json.load(handle)
        names = tuple(meta['class_names'])
        records = meta['samples']
        if meta['count'] != len(records):
            raise ValueError('count does not match the sample records')
    except (IOError, OSError, ValueError, KeyError, TypeError) as err:
        problems.append((meta_path, 'unreadable metadata: {}'.format(err)))
        return None
    samples = []
    for index, record in enumerate(records):
        files = _sample_files(index)
        paths = {key: os.path.join(directory, name)
                 for key, name in files.items()}
        wanted = ['image', 'labels', 'landmarks', 'pose']
        if record.get('has_occluder_mask'):
            wanted.append('occluder')
        loaded = {}
        for key in wanted:
            path = paths[key]
            if not os.path.isfile(path):
                problems.append((path, 'missing file'))
                continue
            try:
                if key == 'image':
                    loaded[key] = netpbm.read_ppm(path)
                elif key in ('labels', 'occluder'):
                    loaded[key] = netpbm.read_pgm(path)
                elif key == 'landmarks':
                    loaded[key] = _read_csv_rows(path, 3)
                else:
                    loaded[key] = _read_csv_rows(path, 3)
            except (IOError, OSError, ValueError) as err:
                problems.append((path, type('')(err)))
        if len(loaded) != len(wanted):
            continue
        image, labels = loaded['image'], loaded['labels']
        if labels.shape != image.shape[:2]:
            problems.append((paths['labels'], 'size differs from the image'))
            continue
        if labels.size and labels.max() >= len(names):
            problems.append((paths['labels'], 'class id {} out of range'
                             .format(labels.max())))
            continue
        landmarks = np.array(loaded['landmarks'], dtype=np.float64).reshape(-1, 3)
        visible = record.get('landmark_visible', [])
        if len(visible) != landmarks.shape[0]:
            problems.append((paths['landmarks'],
                             'landmark count differs from the metadata'))
            continue
        pose = loaded['pose'][0] if loaded['pose'] else None
        mask = None
        if 'occluder' in loaded:
            mask = loaded['occluder'] > 0
            if mask.shape != labels.shape:
                problems.append((paths['occluder'],
                                 'size differs from the image'))
                continue
        try:
            samples.append(FaceSample(
                image=image,
                part_labels=labels,
                landmarks_2d=landmarks[:, :2],
                landmark_occluded=landmarks[:, 2] > 0,
                landmark_visible=visible,
                pose=pose,
                shape_coeffs=record.get('shape_coeffs'),
                occluder_mask=mask,
                regime=record['regime'],
                synthetic=record.get('synthetic', False),
            ))
        except (KeyError, ValueError) as err:
            problems.append((os.path.join(directory, 'meta.json'),
                             'bad record {}: {}'.format(index, err)))
    return Dataset(samples, names, meta.get('generation'))


def _load_external(directory, part_table, problems):
    image_dir = os.path.join(directory, 'images')
    mask_dir = os.path.join(directory, 'masks')
    if not os.path.isdir(mask_dir):
        problems.append((mask_dir, 'missing mask directory'))
        return None
    names = sorted(
        name for name in os.listdir(image_dir) if name.endswith('.ppm')
    )
    mask_names = set(os.listdir(mask_dir))
    occlusion_id = max(class_id for _, class_id in part_table)
    num_classes = max(occlusion_id + 1, len(CLASS_NAMES))
    samples = []
    for name in names:
        stem = name[:-len('.ppm')]
        path = os.path.join(image_dir, name)
        try:
            image = netpbm.read_ppm(path)
        except (IOError, OSError, ValueError) as err:
            problems.append((path, type('')(err)))
            continue
        labels = np.zeros(image.shape[:2], dtype=np.int64)
        found = 0
        for part, class_id in part_table:
            mask_name = '{}_{}.pgm'.format(stem, part)
            if mask_name not in mask_names:
                continue
            mask_path = os.path.join(mask_dir, mask_name)
            try:
                mask = netpbm.read_pgm(mask_path) > 0
            except (IOError, OSError, ValueError) as err:
                problems.append((mask_path, type('')(err)))
                continue
            if mask.shape != labels.shape:
                problems.append((mask_path, 'size differs from the image'))
                continue
            labels[mask] = class_id
            found += 1
        if not found:
            problems.append((path, 'no part masks found in {}'.format(mask_dir)))
            continue
        occluder = labels == occlusion_id
        samples.append(FaceSample(
            image=image,
            part_labels=labels,
            landmarks_2d=np.zeros((0, 2)),
            landmark_occluded=np.zeros(0, dtype=bool),
            landmark_visible=np.zeros(0, dtype=bool),
            pose=None,
            shape_coeffs=None,
            occluder_mask=occluder if occluder.any() else None,
            regime='occluded_with_mask' if occluder.any() else 'clean',
        ))
    return Dataset(samples, class_names(num_classes), {'layout': 'external'})


def load_dataset(directory, part_table=EXTERNAL_PART_TABLE):
    """Load a dataset in the native or the external layout.

    A directory with ``meta.json`` is read as the native layout (see
    :func:`write_dataset`). A directory with ``images/`` is read as the
    external layout: ``images/<stem>.ppm`` plus ``masks/<stem>_<part>.pgm``
    where non-zero pixels belong to the part. Masks are merged in the order of
    ``part_table``, a sequence of ``(part name, class id)`` pairs whose largest
    class id is the occlusion class.

    :raises mask_fpan.exceptions.DatasetNotFoundError: If ``directory`` does
        not exist.
    :raises mask_fpan.exceptions.DatasetFormatError: If any file is missing
        or malformed. Nothing is returned in that case.
    """
    if not os.path.isdir(directory):
        raise exceptions.DatasetNotFoundError(
            'The dataset directory {} does not exist.'.format(directory)
        )
    problems = []
    if os.path.isfile(os.path.join(directory, 'meta.json')):
        dataset = _load_native(directory, problems)
    elif os.path.isdir(os.path.join(directory, 'images')):
        dataset = _load_external(directory, [tuple(row) for row in part_table],
                                 problems)
    else:
        problems.append((directory, 'neither meta.json nor images/ found'))
        dataset = None
    if problems:
        raise exceptions.DatasetFormatError(problems)
    return dataset
