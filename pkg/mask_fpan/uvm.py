# coding=utf-8
"""The UV module: pose fitting, UV unwrapping, completion and re-rendering.

A face image is mapped into the model's UV space through a fitted pose. Texels
whose surface point faces the camera and wins the depth test copy the colour
and the part label of their pixel. Texels the camera never saw are completed
from their mirror texel first and then by harmonic interpolation (colours) or
nearest observed texel (labels). Re-rendering the completed atlas at a new
pose yields a new image whose part labels are exact by construction.

Atlas texel ``(row, col)`` covers UV point
``((col + 0.5) / U, (row + 0.5) / U)``, so the mirror of a texel is the same
row at column ``U - 1 - col``.
"""
from __future__ import division, unicode_literals

import logging
import os
import warnings
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import ndimage, sparse
from scipy.optimize import least_squares
from scipy.sparse.linalg import spsolve

from mask_fpan import exceptions, netpbm, raster
from mask_fpan.constants import BACKGROUND, VALID_POSE_RANGE
from mask_fpan.faceworld import (
    Dataset,
    FaceSample,
    check_pose,
    depth_tolerance,
    front_facing,
    image_centre,
    image_shape,
    landmark_visibility,
    project,
    project_face,
    random_background,
    rotation_matrix,
    shape_vertices,
    vertex_normals,
)

logger = logging.getLogger(__name__)  # pylint:disable=invalid-name

MIN_LANDMARKS = 6
GRID_STEP = 5.0
REFINE_STEPS = (2.5, 1.25, 0.625)

PoseFit = namedtuple('PoseFit', (
    'yaw', 'pitch', 'roll', 'scale', 'translation', 'residual', 'history',
))
"""A weak-perspective pose fit.

Angles are in degrees, ``translation`` is the ``(x, y)`` pixel the model
origin projects to and ``residual`` is the root mean square landmark
reprojection error in pixels. ``history`` lists the residual after the grid
search and after every accepted refinement; it never increases.
"""


class UVAtlas(object):
    """A face texture and part-label map in UV space.

    :param texture: ``(U, U, 3)`` colours.
    :param part_labels_uv: ``(U, U)`` class ids.
    :param visibility: ``(U, U)`` booleans, true where the texel was observed.
    :param filled: ``(U, U)`` booleans, true where the texel holds a value.
    :param footprint: ``(U, U)`` booleans, true where a surface point exists.
        Hair is part of the surface, so its texels are completed like skin.
    :param source_pose: The ``(yaw, pitch, roll)`` the atlas was taken at.
    """

    FIELDS = ('texture', 'part_labels_uv', 'visibility', 'filled',
              'footprint', 'source_pose')

    def __init__(  # pylint:disable=too-many-arguments
            self, texture, part_labels_uv, visibility, filled, footprint,
            source_pose):
        """Store the fields."""
        self.texture = texture
        self.part_labels_uv = part_labels_uv
        self.visibility = visibility
        self.filled = filled
        self.footprint = footprint
        self.source_pose = tuple(source_pose)

    def __eq__(self, other):
        if not isinstance(other, UVAtlas):
            return NotImplemented
        return self.source_pose == other.source_pose and all(
            np.array_equal(getattr(self, field), getattr(other, field))
            for field in self.FIELDS[:-1]
        )

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    __hash__ = None

    @property
    def size(self):
        """The atlas side ``U``."""
        return self.texture.shape[0]

    def replace(self, **changes):
        """Return a copy with some fields replaced."""
        fields = {field: getattr(self, field) for field in self.FIELDS}
        fields.update(changes)
        for field in self.FIELDS[:-1]:
            fields[field] = np.array(fields[field])
        return type(self)(**fields)


def _model_points(model, shape_coeffs=None):
    return shape_vertices(model, shape_coeffs)[model.landmark_vertices]


def _similarity(projected, targets):
    """Fit ``targets ~ s Rot(a) projected + t`` for batches of point sets.

    Both arrays are ``(..., L, 2)`` in a y-up frame.

    :returns: ``(scale, angle, translation, rms)``.
    """
    q_mean = projected.mean(axis=-2, keepdims=True)
    t_mean = targets.mean(axis=-2, keepdims=True)
    qc, tc = projected - q_mean, targets - t_mean
    a = np.sum(qc * tc, axis=(-2, -1))
    b = np.sum(qc[..., 0] * tc[..., 1] - qc[..., 1] * tc[..., 0], axis=-1)
    norm = np.maximum(np.sum(qc * qc, axis=(-2, -1)), 1e-12)
    angle = np.arctan2(b, a)
    scale = np.sqrt(a * a + b * b) / norm
    cos, sin = np.cos(angle)[..., None], np.sin(angle)[..., None]
    rotated = np.stack([
        cos * qc[..., 0] - sin * qc[..., 1],
        sin * qc[..., 0] + cos * qc[..., 1],
    ], axis=-1)
    fitted = scale[..., None, None] * rotated + t_mean
    translation = t_mean[..., 0, :] - scale[..., None] * np.stack([
        cos[..., 0] * q_mean[..., 0, 0] - sin[..., 0] * q_mean[..., 0, 1],
        sin[..., 0] * q_mean[..., 0, 0] + cos[..., 0] * q_mean[..., 0, 1],
    ], axis=-1)
    rms = np.sqrt(np.mean(np.sum((fitted - targets) ** 2, axis=-1), axis=-1))
    return scale, angle, translation, rms


def _yaw_pitch_rotations(yaws, pitches):
    """Return ``Rx(pitch) Ry(yaw)`` for arrays of angles in degrees."""
    y, p = np.radians(yaws), np.radians(pitches)
    zeros, ones = np.zeros_like(y), np.ones_like(y)
    rot_y = np.stack([
        np.stack([np.cos(y), zeros, np.sin(y)], -1),
        np.stack([zeros, ones, zeros], -1),
        np.stack([-np.sin(y), zeros, np.cos(y)], -1),
    ], -2)
    rot_x = np.stack([
        np.stack([ones, zeros, zeros], -1),
        np.stack([zeros, np.cos(p), -np.sin(p)], -1),
        np.stack([zeros, np.sin(p), np.cos(p)], -1),
    ], -2)
    return np.matmul(rot_x, rot_y)


def _evaluate(points, targets, yaws, pitches):
    """Fit roll, scale and translation for every (yaw, pitch) candidate."""
    rotations = _yaw_pitch_rotations(np.asarray(yaws), np.asarray(pitches))
    projected = np.einsum('nij,lj->nli', rotations[..., :2, :], points)
    return _similarity(projected, np.broadcast_to(targets, projected.shape))


def _to_fit(yaw, pitch, fitted, history):
    scale, angle, translation, rms = fitted
    return PoseFit(
        yaw=float(yaw),
        pitch=float(pitch),
        roll=float(np.degrees(angle)),
        scale=float(scale),
        translation=np.array([translation[0], -translation[1]]),
        residual=float(rms),
        history=list(history),
    )


def fit_pose(landmarks_2d, model, visible=None, shape_coeffs=None):
    """Fit a weak-perspective pose to 2D landmarks.

    Yaw and pitch are searched on a 5 degree grid. For each candidate, roll,
    scale and translation follow in closed form as the best 2D similarity
    transform. The best candidate is refined by a pattern search with steps of
    2.5, 1.25 and 0.625 degrees and finally polished by nonlinear least
    squares, which is kept only if it lowers the residual.

    :param landmarks_2d: ``(L, 2)`` pixel positions.
    :param model: A :class:`mask_fpan.faceworld.MorphableModel`.
    :param visible: Optional ``(L,)`` booleans. Only these landmarks count.
    :param shape_coeffs: The face shape, or ``None`` for the mean shape.
    :returns: A :class:`PoseFit` whose ``residual`` is the root-mean-square
        pixel distance between the visible landmarks and their fitted
        projections.
    :raises mask_fpan.exceptions.InsufficientLandmarksError: If fewer than 6
        landmarks are visible.
    """
    landmarks_2d = np.asarray(landmarks_2d, dtype=np.float64)
    if visible is None:
        visible = np.ones(landmarks_2d.shape[0], dtype=bool)
    visible = np.asarray(visible, dtype=bool)
    if landmarks_2d.shape[0] != model.landmark_vertices.size:
        raise exceptions.ShapeMismatchError(
            'Expected {} landmarks, got {}.'
            .format(model.landmark_vertices.size, landmarks_2d.shape[0])
        )
    if visible.sum() < MIN_LANDMARKS:
        raise exceptions.InsufficientLandmarksError(
            'A pose fit needs at least {} visible landmarks, got {}.'
            .format(MIN_LANDMARKS, int(visible.sum()))
        )
    points = _model_points(model, shape_coeffs)[visible]
    targets = landmarks_2d[visible] * np.array([1.0, -1.0])

    yaw_limit, pitch_limit, _ = VALID_POSE_RANGE
    yaws, pitches = np.meshgrid(
        np.arange(-yaw_limit, yaw_limit + GRID_STEP / 2, GRID_STEP),
        np.arange(-pitch_limit, pitch_limit + GRID_STEP / 2, GRID_STEP),
    )
    yaws, pitches = yaws.reshape(-1), pitches.reshape(-1)
    rms = _evaluate(points, targets, yaws, pitches)[3]
    best = int(np.argmin(rms))
    yaw, pitch, residual = yaws[best], pitches[best], rms[best]
    history = [float(residual)]

    for step in REFINE_STEPS:
        improved = True
        while improved:
            improved = False
            moves = np.array([(step, 0), (-step, 0), (0, step), (0, -step)])
            cand_yaw = np.clip(yaw + moves[:, 0], -yaw_limit, yaw_limit)
            cand_pitch = np.clip(pitch + moves[:, 1], -pitch_limit, pitch_limit)
            cand_rms = _evaluate(points, targets, cand_yaw, cand_pitch)[3]
            index = int(np.argmin(cand_rms))
            if cand_rms[index] < residual:
                yaw, pitch = cand_yaw[index], cand_pitch[index]
                residual = cand_rms[index]
                history.append(float(residual))
                improved = True

    fitted = [value[0] for value in _evaluate(points, targets, [yaw], [pitch])]
    fit = _to_fit(yaw, pitch, fitted, history)
    return _polish(fit, points, landmarks_2d[visible], history)


def _polish(fit, points, landmarks, history):
    """Refine all six pose parameters jointly; keep the result if better."""
    def residuals(params):
        pose = np.clip(params[:3], -np.array(VALID_POSE_RANGE),
                       np.array(VALID_POSE_RANGE))
        projected, _, _ = project(points, pose, params[3], params[4:])
        return (projected - landmarks).reshape(-1)

    start = np.array([fit.yaw, fit.pitch, fit.roll, fit.scale,
                      fit.translation[0], fit.translation[1]])
    limits = np.array(VALID_POSE_RANGE)
    start[:3] = np.clip(start[:3], -limits, limits)
    lower = np.concatenate([-limits, [1e-6, -np.inf, -np.inf]])
    upper = np.concatenate([limits, [np.inf, np.inf, np.inf]])
    try:
        result = least_squares(residuals, start, bounds=(lower, upper),
                               method='trf', xtol=1e-10, ftol=1e-12)
    except ValueError as err:
        logger.debug('Pose polish skipped: %s', err)
        return fit
    rms = float(np.sqrt(np.mean(
        np.sum(result.fun.reshape(-1, 2) ** 2, axis=1)
    )))
    if not rms < fit.residual:
        return fit
    history = history + [rms]
    params = result.x
    return PoseFit(
        yaw=float(params[0]),
        pitch=float(params[1]),
        roll=float(params[2]),
        scale=float(params[3]),
        translation=np.array(params[4:]),
        residual=rms,
        history=history,
    )


def fit_shape(landmarks_2d, visible, model, pose_fit, ridge=1.0):
    """Fit shape coefficients by ridge regression at a fixed pose.

    :returns: A ``(K,)`` array of shape coefficients.
    """
    visible = np.asarray(visible, dtype=bool)
    pose = (pose_fit.yaw, pose_fit.pitch, pose_fit.roll)
    rotation = rotation_matrix(*pose)
    flip = np.array([1.0, -1.0])

    def image_of(vertices):
        return pose_fit.scale * vertices.dot(rotation.T)[:, :2] * flip

    index = model.landmark_vertices[visible]
    base = image_of(model.mean_shape[index]) + pose_fit.translation
    columns = [
        image_of(basis[index]).reshape(-1) for basis in model.bases
    ]
    design = np.stack(columns, axis=1)
    target = (np.asarray(landmarks_2d)[visible] - base).reshape(-1)
    gram = design.T.dot(design) + ridge * np.eye(design.shape[1])
    return np.linalg.solve(gram, design.T.dot(target))


def uv_fragments(model, atlas_size):
    """Rasterise the mesh in UV space at ``atlas_size`` texels a side."""
    points = model.uv_coords * atlas_size - 0.5
    return raster.rasterize_triangles(
        points, np.zeros(points.shape[0]), model.triangles,
        atlas_size, atlas_size,
    )


def unwrap(image, part_labels, model, pose_fit, atlas_size=128,
           shape_coeffs=None):
    """Map an image and its labels into UV space.

    A texel is visible when its triangle faces the camera, its surface point
    projects inside the image, passes the depth test with a slope-scaled
    tolerance, and lands on a pixel labelled neither background nor
    occlusion. Visible texels take a bilinear colour sample and the label of
    the nearest pixel. All other texels are zero.

    :returns: A :class:`UVAtlas`.
    """
    image = np.asarray(image, dtype=np.float64)
    part_labels = np.asarray(part_labels)
    height, width = part_labels.shape
    fragments = uv_fragments(model, atlas_size)
    footprint = fragments.triangle >= 0
    vertices = shape_vertices(model, shape_coeffs)
    pose = (pose_fit.yaw, pose_fit.pitch, pose_fit.roll)
    points, depth, rotation = project(vertices, pose, pose_fit.scale,
                                      pose_fit.translation)
    normals = vertex_normals(model, vertices).dot(rotation.T)
    facing = front_facing(points, model)
    zbuffer = raster.rasterize_triangles(
        points, depth, model.triangles, height, width, keep=facing
    ).depth

    tex_points = raster.interpolate(fragments, points, model.triangles)
    tex_depth = raster.interpolate(fragments, depth, model.triangles)
    tex_normals = raster.interpolate(fragments, normals, model.triangles)
    x, y = tex_points[..., 0], tex_points[..., 1]
    inside = (x > -0.5) & (x < width - 0.5) & (y > -0.5) & (y < height - 0.5)
    stored = raster.nearest_sample(zbuffer, x, y)
    tolerance = depth_tolerance(tex_normals, pose_fit.scale)
    labels_at = raster.nearest_sample(part_labels, x, y)
    visible = (
        footprint &
        facing[np.maximum(fragments.triangle, 0)] &
        (tex_normals[..., 2] > 0) &
        inside &
        (tex_depth >= stored - tolerance) &
        (labels_at != BACKGROUND) &
        (labels_at != model.num_classes - 1)
    )
    texture = np.where(visible[..., None],
                       raster.bilinear_sample(image, x, y), 0.0)
    labels = np.where(visible, labels_at, BACKGROUND).astype(np.int64)
    return UVAtlas(texture, labels, visible, visible.copy(), footprint, pose)


def mirror_fill(atlas):
    """Fill unfilled texels whose mirror texel was observed."""
    unfilled = atlas.footprint & ~atlas.filled
    take = unfilled & atlas.visibility[:, ::-1]
    texture = atlas.texture.copy()
    labels = atlas.part_labels_uv.copy()
    texture[take] = atlas.texture[:, ::-1][take]
    labels[take] = atlas.part_labels_uv[:, ::-1][take]
    return atlas.replace(
        texture=texture, part_labels_uv=labels, filled=atlas.filled | take
    )


_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def harmonic_fill(texture, known, region):
    """Solve Laplace's equation for the texels of ``region`` not ``known``.

    Known texels are fixed values. Neighbours are 4-connected and restricted
    to ``region``. An unknown component touching no known texel takes the
    mean known colour.
    """
    texture = np.array(texture, dtype=np.float64)
    known = known & region
    unknown = region & ~known
    if not unknown.any():
        return texture
    components, _ = ndimage.label(unknown)
    touching = ndimage.binary_dilation(known) & unknown
    reached = np.isin(components, np.unique(components[touching]))
    isolated = unknown & ~reached
    if isolated.any():
        texture[isolated] = texture[known].mean(axis=0)
        unknown &= ~isolated
        known = known | isolated
    rows, cols = np.nonzero(unknown)
    count = rows.size
    if not count:
        return texture
    index = np.full(unknown.shape, -1, dtype=np.int64)
    index[rows, cols] = np.arange(count)
    height, width = unknown.shape
    degree = np.zeros(count)
    rhs = np.zeros((count, texture.shape[-1]))
    entries_i, entries_j = [], []
    for dy, dx in _NEIGHBOURS:
        n_rows, n_cols = rows + dy, cols + dx
        ok = (n_rows >= 0) & (n_rows < height) & (n_cols >= 0) & (n_cols < width)
        ok[ok] = region[n_rows[ok], n_cols[ok]]
        degree += ok
        free = ok.copy()
        free[ok] = unknown[n_rows[ok], n_cols[ok]]
        fixed = ok & ~free
        rhs[fixed] += texture[n_rows[fixed], n_cols[fixed]]
        entries_i.append(np.flatnonzero(free))
        entries_j.append(index[n_rows[free], n_cols[free]])
    entries_i = np.concatenate(entries_i)
    entries_j = np.concatenate(entries_j)
    laplacian = sparse.csc_matrix(
        (np.full(entries_i.size, -1.0), (entries_i, entries_j)),
        shape=(count, count),
    ) + sparse.diags(degree, format='csc')
    solution = np.asarray(spsolve(laplacian, rhs)).reshape(count, -1)
    texture[rows, cols] = solution
    return texture


def nearest_fill(labels, known, region):
    """Give every texel of ``region`` not ``known`` its nearest known label."""
    labels = np.array(labels)
    unknown = region & ~known
    if not unknown.any():
        return labels
    _, (rows, cols) = ndimage.distance_transform_edt(
        ~known, return_indices=True
    )
    labels[unknown] = labels[rows[unknown], cols[unknown]]
    return labels


def complete(atlas, model=None):  # pylint:disable=unused-argument
    """Fill every texel of the footprint.

    Mirror texels come first. Remaining colours are harmonic interpolants of
    the filled texels and remaining labels copy the nearest filled texel. An
    atlas with nothing left to fill is returned as an identical copy, so
    completion is idempotent.

    :raises mask_fpan.exceptions.NoVisibleTexelsError: If no texel is visible.
    """
    if not atlas.visibility.any():
        raise exceptions.NoVisibleTexelsError(
            'An atlas with no visible texels cannot be completed.'
        )
    if not (atlas.footprint & ~atlas.filled).any():
        return atlas.replace()
    mirrored = mirror_fill(atlas)
    known = mirrored.filled
    return mirrored.replace(
        texture=harmonic_fill(mirrored.texture, known, atlas.footprint),
        part_labels_uv=nearest_fill(mirrored.part_labels_uv, known,
                                    atlas.footprint),
        filled=atlas.footprint | known,
    )


RerenderResult = namedtuple('RerenderResult', (
    'image', 'part_labels', 'landmarks_2d', 'landmark_visible',
))


def rerender_full(atlas, model, pose, image_size, shape_coeffs=None,
                  scale=None, centre=None, background=None):
    """Re-render an atlas and report landmarks too. See :func:`rerender`."""
    projection = project_face(model, shape_coeffs, pose, image_size, scale,
                               centre)
    fragments = projection.fragments
    height, width = image_shape(image_size)
    uv = raster.interpolate(fragments, model.uv_coords, model.triangles)
    x = uv[..., 0] * atlas.size - 0.5
    y = uv[..., 1] * atlas.size - 0.5
    covered = fragments.triangle >= 0
    if background is None:
        background = np.zeros((height, width, 3))
    image = np.where(covered[..., None],
                     raster.bilinear_sample(atlas.texture, x, y), background)
    labels = np.where(covered, raster.nearest_sample(atlas.part_labels_uv, x, y),
                      BACKGROUND).astype(np.int64)
    return RerenderResult(
        image=np.clip(image, 0.0, 1.0),
        part_labels=labels,
        landmarks_2d=projection.points[model.landmark_vertices].copy(),
        landmark_visible=landmark_visibility(model, projection),
    )


def rerender(atlas, model, new_pose, image_size, shape_coeffs=None,
             scale=None, centre=None, background=None):
    """Render the face at ``new_pose`` with colours and labels from ``atlas``.

    :returns: ``(image, part_labels)``. Pixels the face does not cover show
        ``background`` (black by default) and carry the background label.
    :raises mask_fpan.exceptions.PoseRangeError: If the pose is outside the
        model's valid range.
    """
    result = rerender_full(atlas, model, new_pose, image_size, shape_coeffs,
                           scale, centre, background)
    return result.image, result.part_labels


def _augment_one(sample, model, poses, atlas_size, seed):
    rng = np.random.default_rng(seed)
    fit = fit_pose(sample.landmarks_2d, model, sample.landmark_visible,
                   sample.shape_coeffs)
    coeffs = sample.shape_coeffs
    if coeffs is None:
        coeffs = fit_shape(sample.landmarks_2d, sample.landmark_visible,
                           model, fit)
    atlas = complete(unwrap(sample.image, sample.part_labels, model, fit,
                            atlas_size, coeffs))
    height, width = sample.part_labels.shape
    out = []
    for pose in poses:
        background = random_background(rng, height, width, 0.5)
        result = rerender_full(atlas, model, pose, (height, width), coeffs,
                               fit.scale, image_centre((height, width)),
                               background)
        out.append(FaceSample(
            image=netpbm.quantize(result.image),
            part_labels=result.part_labels,
            landmarks_2d=result.landmarks_2d,
            landmark_occluded=np.zeros(len(result.landmarks_2d), dtype=bool),
            landmark_visible=result.landmark_visible,
            pose=pose,
            shape_coeffs=coeffs,
            occluder_mask=None,
            regime='clean',
        ))
    return out


def augment(dataset, model, poses_per_sample, pose_range, rng,
            atlas_size=128, threads=1):
    """Add ``poses_per_sample`` re-rendered views of every clean sample.

    Each sample is followed by its new views, so ``n`` samples become
    ``n * (poses_per_sample + 1)``. Samples without landmarks cannot be
    fitted; they are kept, get no views and raise a ``RuntimeWarning``.

    :param rng: Draws the new poses and per-sample seeds.
    :raises mask_fpan.exceptions.RoutingViolationError: If a sample is not
        clean.
    :raises mask_fpan.exceptions.PoseRangeError: If ``pose_range`` exceeds the
        valid range.
    """
    check_pose(pose_range)
    for index, sample in enumerate(dataset):
        if sample.regime != 'clean':
            raise exceptions.RoutingViolationError(
                'Sample {} has regime {}. Only occlusion-free samples can be '
                'augmented.'.format(index, sample.regime)
            )
    if poses_per_sample == 0:
        return Dataset(list(dataset), dataset.class_names, dataset.meta)
    count = len(dataset)
    poses = rng.uniform(-1.0, 1.0, (count, poses_per_sample, 3)) * np.asarray(
        pose_range, dtype=float
    )
    seeds = rng.integers(2 ** 31, size=count)

    def one(index):
        sample = dataset[index]
        if not sample.has_landmarks:
            warnings.warn(
                'Sample {} has no landmarks and cannot be augmented.'
                .format(index), RuntimeWarning
            )
            return []
        pose_list = [tuple(float(a) for a in pose) for pose in poses[index]]
        return _augment_one(sample, model, pose_list, atlas_size, seeds[index])

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            views = list(executor.map(one, range(count)))
    else:
        views = [one(index) for index in range(count)]
    samples = []
    for sample, extra in zip(dataset, views):
        samples.append(sample)
        samples.extend(extra)
    logger.info('UV augmentation turned %d samples into %d.', count,
                len(samples))
    return Dataset(samples, dataset.class_names, dataset.meta)


def write_atlas(directory, atlas, prefix='atlas'):
    """Write an atlas as ``<prefix>_texture.ppm``, ``<prefix>_labels.pgm``
    and ``<prefix>_visibility.pgm``."""
    if not os.path.isdir(directory):
        os.makedirs(directory)
    netpbm.write_ppm(os.path.join(directory, prefix + '_texture.ppm'),
                     atlas.texture)
    netpbm.write_pgm(os.path.join(directory, prefix + '_labels.pgm'),
                     atlas.part_labels_uv)
    netpbm.write_pgm(os.path.join(directory, prefix + '_visibility.pgm'),
                     atlas.visibility.astype(np.uint8) * 255)
