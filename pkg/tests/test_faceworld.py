# coding=utf-8
"""Unit tests for :mod:`mask_fpan.faceworld`."""
from __future__ import division, unicode_literals

import os
import shutil
import tempfile

import numpy as np
from scipy import ndimage

from mask_fpan import exceptions, faceworld, netpbm, raster
from mask_fpan.compat import unittest
from mask_fpan.constants import (
    BACKGROUND,
    BROW,
    EYE,
    HAIR,
    LOWER_LIP,
    MOUTH_INTERIOR,
    NOSE,
    OCCLUDER_KINDS,
    REGIMES,
    SKIN,
    UPPER_LIP,
)
from tests.utils import tiny_model

_FRONTAL = (0.0, 0.0, 0.0)
_GROUP_CLASSES = {
    'contour': (SKIN, HAIR),
    'brow': (BROW,),
    'nose': (NOSE,),
    'eye': (EYE,),
    'mouth': (UPPER_LIP, LOWER_LIP, MOUTH_INTERIOR),
}


class BuildModelTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.faceworld.build_model`."""

    @classmethod
    def setUpClass(cls):
        """Build the default model twice."""
        cls.model = faceworld.build_model(8, 68, 0)
        cls.again = faceworld.build_model(8, 68, 0)

    def test_deterministic(self):
        """Assert equal seeds give bit-identical models."""
        for field in faceworld.MorphableModel._fields:
            with self.subTest(field=field):
                mine = getattr(self.model, field)
                theirs = getattr(self.again, field)
                if isinstance(mine, np.ndarray):
                    self.assertTrue(np.array_equal(mine, theirs))
                else:
                    self.assertEqual(mine, theirs)

    def test_seed_matters(self):
        """Assert another seed changes the random bases."""
        other = faceworld.build_model(8, 68, 1)
        self.assertFalse(np.array_equal(self.model.bases, other.bases))

    def test_symmetry_involution(self):
        """Assert the vertex symmetry applied twice is the identity."""
        symmetry = self.model.vertex_symmetry
        self.assertTrue(np.array_equal(
            symmetry[symmetry], np.arange(symmetry.size)
        ))

    def test_symmetry_mirrors_uv(self):
        """Assert mirrored vertices have mirrored UV coordinates."""
        uv = self.model.uv_coords
        mirrored = uv[self.model.vertex_symmetry]
        self.assertTrue(np.allclose(mirrored[:, 0], 1.0 - uv[:, 0]))
        self.assertTrue(np.array_equal(mirrored[:, 1], uv[:, 1]))

    def test_uv_not_folded(self):
        """Assert every UV triangle has the same non-zero orientation."""
        areas = raster.signed_areas(self.model.uv_coords, self.model.triangles)
        self.assertTrue(np.all(areas > 0))

    def test_uv_range(self):
        """Assert UV coordinates lie in the unit square."""
        uv = self.model.uv_coords
        self.assertTrue(np.all((uv >= 0) & (uv <= 1)))

    def test_parts(self):
        """Assert every facial part labels some vertices."""
        parts = set(self.model.vertex_part.tolist())
        for class_id in (SKIN, BROW, EYE, NOSE, UPPER_LIP, LOWER_LIP,
                         MOUTH_INTERIOR, HAIR):
            with self.subTest(class_id=class_id):
                self.assertIn(class_id, parts)

    def test_counts(self):
        """Assert the landmark and basis counts are honoured."""
        self.assertEqual(
            (self.model.landmark_vertices.size, self.model.bases.shape[0]),
            (68, 8),
        )

    def test_landmark_groups(self):
        """Assert landmarks are grouped by facial part."""
        self.assertEqual(
            set(self.model.landmark_groups), set(faceworld.LANDMARK_GROUPS)
        )

    def test_bad_arguments(self):
        """Assert too few bases, landmarks or classes are rejected."""
        with self.subTest(argument='num_bases'):
            with self.assertRaises(ValueError):
                faceworld.build_model(0, 68, 0)
        with self.subTest(argument='landmark_count'):
            with self.assertRaises(ValueError):
                faceworld.build_model(4, 4, 0)
        with self.subTest(argument='num_classes'):
            with self.assertRaises(exceptions.LabelOutOfRangeError):
                faceworld.build_model(4, 68, 0, num_classes=9)


class LandmarkLayoutTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.faceworld.landmark_layout`."""

    def test_counts(self):
        """Assert the layout has exactly the requested number of points."""
        for count in (5, 6, 21, 68, 101, 264):
            with self.subTest(count=count):
                self.assertEqual(len(faceworld.landmark_layout(count)), count)

    def test_class_names(self):
        """Assert extra classes are named and occlusion stays last."""
        names = faceworld.class_names(12)
        self.assertEqual(
            (len(names), names[-2], names[-1]), (12, 'class_10', 'occlusion')
        )


class RenderTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.faceworld.render`."""

    @classmethod
    def setUpClass(cls):
        """Render the mean face frontally and turned."""
        cls.model = faceworld.build_model(8, 68, 0)
        cls.frontal = faceworld.render(cls.model, None, _FRONTAL, 64)
        cls.turned = faceworld.render(cls.model, None, (60.0, 0.0, 0.0), 64)

    def test_shapes(self):
        """Assert image, labels and landmarks have matching shapes."""
        self.assertEqual(
            (self.frontal.image.shape, self.frontal.part_labels.shape,
             self.frontal.landmarks_2d.shape),
            ((64, 64, 3), (64, 64), (68, 2)),
        )

    def test_frontal_symmetry(self):
        """Assert mirrored vertices project symmetrically about the centre."""
        projection = faceworld.project_face(self.model, None, _FRONTAL, 64)
        points = projection.points
        mirrored = points[self.model.vertex_symmetry]
        centre = faceworld.image_centre(64)
        self.assertLess(
            np.max(np.abs(points[:, 0] + mirrored[:, 0] - 2 * centre[0])), 0.5
        )
        self.assertLess(np.max(np.abs(points[:, 1] - mirrored[:, 1])), 0.5)

    def test_frontal_landmark_symmetry(self):
        """Assert mirrored landmarks mirror about the vertical centre line."""
        landmarks = self.frontal.landmarks_2d
        order = self.model.landmark_symmetry
        paired = order != np.arange(order.size)
        centre = faceworld.image_centre(64)[0]
        gaps = landmarks[paired, 0] + landmarks[order[paired], 0] - 2 * centre
        self.assertTrue(paired.any())
        self.assertLess(np.max(np.abs(gaps)), 0.5)

    def test_self_occlusion(self):
        """Assert a turned face shows strictly fewer landmarks."""
        self.assertLess(
            self.turned.landmark_visible.sum(),
            self.frontal.landmark_visible.sum(),
        )

    def test_parts_rendered(self):
        """Assert the frontal render shows every facial part."""
        labels = set(self.frontal.part_labels.ravel().tolist())
        for class_id in (BACKGROUND, SKIN, BROW, EYE, NOSE, UPPER_LIP,
                         LOWER_LIP, HAIR):
            with self.subTest(class_id=class_id):
                self.assertIn(class_id, labels)

    def test_no_holes(self):
        """Assert the face silhouette has no unlabelled holes."""
        for name, result in (('frontal', self.frontal),
                             ('turned', self.turned)):
            with self.subTest(pose=name):
                face = result.part_labels != BACKGROUND
                self.assertTrue(np.array_equal(
                    ndimage.binary_fill_holes(face), face
                ))

    def test_background_depth(self):
        """Assert background pixels have an infinitely far depth."""
        background = self.frontal.part_labels == BACKGROUND
        self.assertTrue(np.all(np.isneginf(self.frontal.depth[background])))

    def test_landmark_parts(self):
        """Assert visible landmarks lie on or next to their own part."""
        labels = self.frontal.part_labels
        grown = {
            class_id: ndimage.binary_dilation(
                labels == class_id, structure=np.ones((3, 3), dtype=bool)
            )
            for classes in _GROUP_CLASSES.values() for class_id in classes
        }
        for index, group in enumerate(self.model.landmark_groups):
            if not self.frontal.landmark_visible[index]:
                continue
            col, row = np.round(self.frontal.landmarks_2d[index]).astype(int)
            with self.subTest(index=index, group=group):
                self.assertTrue(any(
                    grown[class_id][row, col]
                    for class_id in _GROUP_CLASSES[group]
                ))

    def test_pose_range(self):
        """Assert out-of-range poses raise ``PoseRangeError``."""
        for pose in ((95.0, 0.0, 0.0), (0.0, -50.0, 0.0), (0.0, 0.0, 46.0)):
            with self.subTest(pose=pose):
                with self.assertRaises(exceptions.PoseRangeError):
                    faceworld.render(self.model, None, pose, 32)


class SampleFaceTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.faceworld.sample_face`."""

    @classmethod
    def setUpClass(cls):
        """Build a model for 32x32 samples."""
        cls.model = tiny_model()
        cls.pose_range = (30.0, 15.0, 10.0)

    def sample(self, seed, policy, **kwargs):
        """Draw one 32x32 sample from ``default_rng(seed)``."""
        return faceworld.sample_face(
            self.model, np.random.default_rng(seed), policy,
            self.pose_range, 32, **kwargs
        )

    def test_clean_policy(self):
        """Assert the policy ``(0, 0, 1)`` yields clean samples only."""
        for seed in range(5):
            sample = self.sample(seed, (0.0, 0.0, 1.0))
            with self.subTest(seed=seed):
                self.assertEqual(sample.regime, 'clean')
                self.assertIsNone(sample.occluder_mask)
                self.assertFalse(np.any(sample.landmark_occluded))

    def test_with_mask_labels(self):
        """Assert occluder masks equal the occlusion pixels of the labels."""
        occlusion = faceworld.occlusion_class(self.model)
        for seed in range(5):
            sample = self.sample(seed, (1.0, 0.0, 0.0))
            with self.subTest(seed=seed):
                self.assertTrue(sample.occluder_mask.any())
                self.assertTrue(np.array_equal(
                    sample.occluder_mask, sample.part_labels == occlusion
                ))

    def test_no_mask_labels(self):
        """Assert withheld samples carry no occlusion labels at all."""
        occlusion = faceworld.occlusion_class(self.model)
        for seed in range(5):
            sample = self.sample(seed, (0.0, 1.0, 0.0))
            with self.subTest(seed=seed):
                self.assertIsNone(sample.occluder_mask)
                self.assertFalse(np.any(sample.part_labels == occlusion))

    def test_landmark_occluded(self):
        """Assert a landmark is occluded exactly when the mask covers it."""
        for seed in range(5):
            sample = self.sample(seed, (1.0, 0.0, 0.0))
            with self.subTest(seed=seed):
                self.assertTrue(np.array_equal(
                    sample.landmark_occluded,
                    faceworld.landmarks_covered(
                        sample.occluder_mask, sample.landmarks_2d
                    ),
                ))

    def test_twins(self):
        """Assert a forced regime reuses the draws of the unforced sample."""
        withheld = self.sample(3, (0.0, 1.0, 0.0))
        revealed = self.sample(3, (0.0, 1.0, 0.0), regime='occluded_with_mask')
        self.assertTrue(np.array_equal(withheld.image, revealed.image))
        changed = withheld.part_labels != revealed.part_labels
        self.assertTrue(np.all(revealed.occluder_mask[changed]))

    def test_bar_over_mouth(self):
        """Assert a bar over the mouth occludes every mouth landmark."""
        spec = faceworld.OccluderSpec('bar', 'mouth', 1.3, 11)
        sample = faceworld.sample_face(
            self.model, np.random.default_rng(0), (1.0, 0.0, 0.0),
            (0.0, 0.0, 0.0), 64, occluder=spec,
        )
        mouth = np.array(self.model.landmark_groups) == 'mouth'
        self.assertTrue(np.all(sample.landmark_occluded[mouth]))

    def test_quantized(self):
        """Assert images hold multiples of 1/255."""
        image = self.sample(0, (0.4, 0.3, 0.3)).image
        self.assertTrue(np.array_equal(netpbm.quantize(image), image))

    def test_bad_policy(self):
        """Assert an invalid policy raises ``PolicyError``."""
        for policy in ((0.5, 0.5, 0.5), (1.2, -0.2, 0.0), (0.5, 0.5)):
            with self.subTest(policy=policy):
                with self.assertRaises(exceptions.PolicyError):
                    self.sample(0, policy)


class OccluderTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.faceworld.occluder_mask`."""

    @classmethod
    def setUpClass(cls):
        """Render a frontal face to draw occluders over."""
        cls.model = faceworld.build_model(8, 68, 0)
        cls.projection = faceworld.project_face(cls.model, None, _FRONTAL, 64)
        cls.labels = faceworld.render(cls.model, None, _FRONTAL, 64).part_labels

    def test_area(self):
        """Assert every occluder covers 2% to 35% of the face box."""
        top, bottom, left, right = faceworld.face_box(self.labels)
        box_area = (bottom - top + 1) * (right - left + 1)
        for kind in OCCLUDER_KINDS:
            for anchor in ('mouth', 'eyes', 'left_cheek'):
                spec = faceworld.OccluderSpec(kind, anchor, 1.0, 5)
                mask = faceworld.occluder_mask(
                    self.model, spec, self.projection.points, self.labels
                )
                with self.subTest(kind=kind, anchor=anchor):
                    fraction = mask.sum() / box_area
                    self.assertGreaterEqual(fraction, 0.02)
                    self.assertLessEqual(fraction, 0.35)


class RegimeFrequencyTestCase(unittest.TestCase):
    """Count regimes drawn by :func:`mask_fpan.faceworld.draw_regime`."""

    def test_frequencies(self):
        """Assert 10 000 draws match the policy within 2%."""
        policy = (0.4, 0.3, 0.3)
        rng = np.random.default_rng(0)
        draws = [faceworld.draw_regime(rng, policy) for _ in range(10000)]
        for regime, probability in zip(REGIMES, policy):
            with self.subTest(regime=regime):
                self.assertLess(
                    abs(draws.count(regime) / 10000.0 - probability), 0.02
                )


class GenerateDatasetTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.faceworld.generate_dataset`."""

    @classmethod
    def setUpClass(cls):
        """Generate the same dataset serially and on two threads."""
        cls.model = tiny_model()
        args = (cls.model, 6, 4, (0.4, 0.3, 0.3), (30.0, 15.0, 10.0), 32)
        cls.serial = faceworld.generate_dataset(*args)
        cls.threaded = faceworld.generate_dataset(*args, threads=2)
        cls.revealed = faceworld.generate_dataset(*args, reveal=True)
        cls.shifted = faceworld.generate_dataset(
            cls.model, 3, 4, (0.4, 0.3, 0.3), (30.0, 15.0, 10.0), 32, start=3
        )

    def test_threads(self):
        """Assert the thread count does not change the samples."""
        self.assertEqual(self.serial, self.threaded)

    def test_start(self):
        """Assert ``start`` selects the per-index streams."""
        self.assertEqual(self.shifted.samples, self.serial.samples[3:])

    def test_reveal(self):
        """Assert revealing only upgrades withheld samples to their twins."""
        for mine, theirs in zip(self.serial, self.revealed):
            with self.subTest(regime=mine.regime):
                self.assertTrue(np.array_equal(mine.image, theirs.image))
                if mine.regime == 'occluded_no_mask':
                    self.assertEqual(theirs.regime, 'occluded_with_mask')
                else:
                    self.assertEqual(mine, theirs)

    def test_meta(self):
        """Assert generation facts are recorded."""
        self.assertEqual(
            (self.serial.meta['seed'], self.serial.meta['image_size']),
            (4, [32, 32]),
        )


class ExportTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.faceworld.export_dataset` and loading."""

    @classmethod
    def setUpClass(cls):
        """Export a small dataset."""
        cls.directory = tempfile.mkdtemp()
        cls.model = tiny_model()
        cls.dataset = faceworld.export_dataset(
            cls.directory, 8, 2, (0.8, 0.0, 0.2), model=cls.model,
            pose_range=(30.0, 15.0, 10.0), image_size=32,
        )

    @classmethod
    def tearDownClass(cls):
        """Delete the exported files."""
        shutil.rmtree(cls.directory)

    def copy(self):
        """Return a scratch copy of the exported directory."""
        scratch = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, scratch)
        target = os.path.join(scratch, 'data')
        shutil.copytree(self.directory, target)
        return target

    def test_round_trip(self):
        """Assert loading gives back an equal dataset."""
        self.assertEqual(faceworld.load_dataset(self.directory), self.dataset)

    def test_stable_bytes(self):
        """Assert exporting twice writes identical files."""
        again = self.copy()
        faceworld.write_dataset(again, self.dataset)
        for name in sorted(os.listdir(self.directory)):
            with self.subTest(name=name):
                with open(os.path.join(self.directory, name), 'rb') as handle:
                    mine = handle.read()
                with open(os.path.join(again, name), 'rb') as handle:
                    self.assertEqual(handle.read(), mine)

    def test_missing_mask(self):
        """Assert a missing occluder file refuses the load and is named."""
        index = next(
            index for index, sample in enumerate(self.dataset)
            if sample.occluder_mask is not None
        )
        target = self.copy()
        name = 'occ_{:05d}.pgm'.format(index)
        os.remove(os.path.join(target, name))
        with self.assertRaises(exceptions.DatasetFormatError) as ctx:
            faceworld.load_dataset(target)
        self.assertIn(name, type('')(ctx.exception))

    def test_bad_labels(self):
        """Assert a label image of the wrong size is reported."""
        target = self.copy()
        netpbm.write_pgm(os.path.join(target, 'lab_00001.pgm'),
                         np.zeros((4, 4), dtype=np.int64))
        with self.assertRaises(exceptions.DatasetFormatError) as ctx:
            faceworld.load_dataset(target)
        self.assertEqual(len(ctx.exception.problems), 1)

    def test_missing_directory(self):
        """Assert a missing directory raises ``DatasetNotFoundError``."""
        with self.assertRaises(exceptions.DatasetNotFoundError):
            faceworld.load_dataset(os.path.join(self.directory, 'nope'))


class ExternalLayoutTestCase(unittest.TestCase):
    """Load a hand-built dataset in the external layout."""

    @classmethod
    def setUpClass(cls):
        """Write two images with per-part masks."""
        cls.directory = tempfile.mkdtemp()
        os.makedirs(os.path.join(cls.directory, 'images'))
        os.makedirs(os.path.join(cls.directory, 'masks'))
        image = np.full((6, 6, 3), 0.5)
        skin = np.zeros((6, 6), dtype=np.int64)
        skin[1:5, 1:5] = 255
        eye = np.zeros((6, 6), dtype=np.int64)
        eye[2, 2] = 255
        occlusion = np.zeros((6, 6), dtype=np.int64)
        occlusion[4, 1:5] = 255
        masks = (
            ('00000', 'skin', skin), ('00000', 'l_eye', eye),
            ('00000', 'occlusion', occlusion), ('00001', 'skin', skin),
        )
        for stem in ('00000', '00001'):
            netpbm.write_ppm(
                os.path.join(cls.directory, 'images', stem + '.ppm'), image
            )
        for stem, part, mask in masks:
            netpbm.write_pgm(os.path.join(
                cls.directory, 'masks', '{}_{}.pgm'.format(stem, part)
            ), mask)
        cls.dataset = faceworld.load_dataset(cls.directory)

    @classmethod
    def tearDownClass(cls):
        """Delete the fixture."""
        shutil.rmtree(cls.directory)

    def test_count(self):
        """Assert both images are loaded."""
        self.assertEqual(len(self.dataset), 2)

    def test_labels(self):
        """Assert masks are merged in table order."""
        labels = self.dataset[0].part_labels
        self.assertEqual(
            (labels[0, 0], labels[1, 1], labels[2, 2], labels[4, 2]),
            (BACKGROUND, SKIN, EYE, 9),
        )

    def test_regimes(self):
        """Assert occlusion masks decide the label regime."""
        self.assertEqual(
            [sample.regime for sample in self.dataset],
            ['occluded_with_mask', 'clean'],
        )

    def test_no_landmarks(self):
        """Assert external samples carry no landmarks or pose."""
        sample = self.dataset[1]
        self.assertEqual((sample.has_landmarks, sample.pose), (False, None))
