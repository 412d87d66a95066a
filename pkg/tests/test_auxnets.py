# coding=utf-8
"""Unit tests for :mod:`mask_fpan.auxnets`."""
from __future__ import division, unicode_literals

import numpy as np

from mask_fpan import auxnets, exceptions, faceworld
from mask_fpan.compat import unittest
from tests.utils import tiny_config, tiny_model


def _dataset(n=8, seed=0):
    """Return ``n`` 32x32 samples of every regime."""
    return faceworld.generate_dataset(
        tiny_model(), n, seed, (0.4, 0.3, 0.3), (30.0, 15.0, 10.0), 32
    )


class TrainLomTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.auxnets.train_lom`."""

    @classmethod
    def setUpClass(cls):
        """Train with and without the second stage."""
        cls.dataset = _dataset()
        cls.config = tiny_config()
        cls.model = auxnets.train_lom(cls.dataset, cls.config, seed=1)
        cls.again = auxnets.train_lom(cls.dataset, cls.config, seed=1)
        cls.stage_one = auxnets.train_lom(
            cls.dataset, tiny_config(lom={'occlusion_steps': 0}), seed=1
        )

    def test_curves(self):
        """Assert both stages record one loss per step."""
        self.assertEqual(
            (len(self.model.curves['landmark']),
             len(self.model.curves['occlusion'])),
            (3, 3),
        )

    def test_frozen_landmark_branch(self):
        """Assert the second stage leaves the landmark branch untouched."""
        for name, tensor in self.model.landmark_parameters().items():
            with self.subTest(name=name):
                self.assertTrue(np.array_equal(
                    tensor.data,
                    self.stage_one.landmark_parameters()[name].data,
                ))

    def test_occlusion_head_trained(self):
        """Assert the second stage changes the occlusion head."""
        before = self.stage_one.occlusion_parameters()
        changed = [
            not np.array_equal(tensor.data, before[name].data)
            for name, tensor in self.model.occlusion_parameters().items()
        ]
        self.assertTrue(any(changed))

    def test_deterministic(self):
        """Assert equal seeds give bit-identical weights."""
        state = self.again.state_dict()
        for name, value in self.model.state_dict().items():
            with self.subTest(name=name):
                self.assertTrue(np.array_equal(value, state[name]))

    def test_predict(self):
        """Assert predictions have one row and one probability per landmark.
        """
        landmarks, probs = auxnets.lom_predict(self.model, self.dataset[0].image)
        self.assertEqual((landmarks.shape, probs.shape), ((68, 2), (68,)))
        self.assertTrue(np.all((probs > 0) & (probs < 1)))

    def test_predict_batch(self):
        """Assert batch prediction agrees with single-image prediction."""
        images = np.stack([sample.image for sample in self.dataset])
        landmarks, probs = auxnets.lom_predict_batch(self.model, images)
        single = auxnets.lom_predict(self.model, images[3])
        self.assertTrue(np.allclose(landmarks[3], single[0]))
        self.assertTrue(np.allclose(probs[3], single[1]))

    def test_architecture(self):
        """Assert a model rebuilt from its architecture predicts the same."""
        rebuilt = auxnets.LomModel.from_architecture(self.model.architecture())
        rebuilt.load_state_dict(self.model.state_dict())
        image = self.dataset[1].image
        mine = auxnets.lom_predict(self.model, image)
        theirs = auxnets.lom_predict(rebuilt, image)
        self.assertTrue(np.array_equal(mine[0], theirs[0]))
        self.assertTrue(np.array_equal(mine[1], theirs[1]))

    def test_evaluate(self):
        """Assert scores are a non-negative error and a fraction."""
        scores = auxnets.evaluate_lom(self.model, self.dataset)
        self.assertGreaterEqual(scores.mean_error, 0.0)
        self.assertGreaterEqual(scores.flag_accuracy, 0.0)
        self.assertLessEqual(scores.flag_accuracy, 1.0)

    def test_image_size(self):
        """Assert an image of another size raises ``ImageSizeError``."""
        with self.assertRaises(exceptions.ImageSizeError):
            auxnets.lom_predict(self.model, np.zeros((16, 16, 3)))


class LomErrorsTestCase(unittest.TestCase):
    """Test how :func:`mask_fpan.auxnets.train_lom` rejects bad data."""

    def test_missing_landmarks(self):
        """Assert a sample without landmarks raises ``MissingLabelsError``."""
        dataset = _dataset(n=3)
        dataset.samples[1] = dataset[1].replace(
            landmarks_2d=np.zeros((0, 2)),
            landmark_occluded=np.zeros(0, dtype=bool),
            landmark_visible=np.zeros(0, dtype=bool),
        )
        with self.assertRaises(exceptions.MissingLabelsError):
            auxnets.train_lom(dataset, tiny_config())

    def test_empty(self):
        """Assert an empty dataset raises ``EmptyDatasetError``."""
        with self.assertRaises(exceptions.EmptyDatasetError):
            auxnets.train_lom(faceworld.Dataset([]), tiny_config())


class VerdictTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.auxnets.lom_verdict`."""

    def test_verdicts(self):
        """Assert any probability strictly above the threshold counts."""
        for probs, expected in (([0.2, 0.6], True), ([0.5, 0.1], False),
                                ([], False)):
            with self.subTest(probs=probs):
                self.assertEqual(auxnets.lom_verdict(probs, 0.5), expected)


class OccludedRegionTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.auxnets.occluded_region`."""

    def test_disk(self):
        """Assert a flagged landmark becomes a disk of lattice pixels."""
        mask = auxnets.occluded_region([[5.0, 5.0], [1.0, 1.0]], [0.9, 0.1],
                                       0.5, 2.0, 12)
        self.assertEqual(int(mask.sum()), 13)
        self.assertTrue(mask[5, 7] and mask[7, 5] and not mask[7, 7])

    def test_nothing_flagged(self):
        """Assert an empty region when no landmark is flagged."""
        mask = auxnets.occluded_region([[5.0, 5.0]], [0.4], 0.5, 2.0, 12)
        self.assertFalse(mask.any())

    def test_rectangular(self):
        """Assert ``image_size`` may be a ``(height, width)`` pair."""
        mask = auxnets.occluded_region([[5.0, 5.0]], [0.9], 0.5, 2.0, (8, 12))
        self.assertEqual(mask.shape, (8, 12))

    def test_threshold(self):
        """Assert a threshold outside ``(0, 1)`` is rejected."""
        for threshold in (0.0, 1.0):
            with self.subTest(threshold=threshold):
                with self.assertRaises(ValueError):
                    auxnets.occluded_region([[5.0, 5.0]], [0.9], threshold,
                                            2.0, 12)


class TrainPpmTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.auxnets.train_ppm`."""

    @classmethod
    def setUpClass(cls):
        """Train a pose model."""
        cls.dataset = _dataset()
        cls.model = auxnets.train_ppm(cls.dataset, tiny_config(), seed=2)

    def test_curve(self):
        """Assert one loss is recorded per step."""
        self.assertEqual(len(self.model.curves['pose']), 3)

    def test_predict(self):
        """Assert predictions are three angles inside the pose range."""
        pose = auxnets.ppm_predict(self.model, self.dataset[0].image)
        self.assertEqual(len(pose), 3)
        for angle, limit in zip(pose, self.model.pose_range):
            with self.subTest(limit=limit):
                self.assertLessEqual(abs(angle), limit)

    def test_clamped(self):
        """Assert predictions are clamped to the pose range."""
        bias = self.model.head.param('bias')
        original = bias.data.copy()
        bias.data = np.full_like(original, 100.0)
        try:
            pose = auxnets.ppm_predict(self.model, self.dataset[0].image)
        finally:
            bias.data = original
        self.assertEqual(list(pose), self.model.pose_range)

    def test_evaluate(self):
        """Assert the evaluation returns one error per axis."""
        errors = auxnets.evaluate_ppm(self.model, self.dataset)
        self.assertEqual(len(errors), 3)
        self.assertTrue(all(error >= 0 for error in errors))

    def test_missing_pose(self):
        """Assert a sample without a pose raises ``MissingLabelsError``."""
        dataset = self.dataset.subset([0, 1])
        dataset.samples[0] = dataset[0].replace(pose=None)
        with self.assertRaises(exceptions.MissingLabelsError):
            auxnets.train_ppm(dataset, tiny_config())


class PoseWeightTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.auxnets.pose_weight`."""

    def test_values(self):
        """Assert ``p = 1 + lambda (|yaw| + |pitch|) / 90``."""
        for pose, expected in (((0.0, 0.0, 0.0), 1.0),
                               ((90.0, 0.0, 0.0), 1.5),
                               ((-45.0, 45.0, 0.0), 1.5),
                               ((0.0, 0.0, 40.0), 1.0),
                               ((30.0, -15.0, 10.0), 1.25)):
            with self.subTest(pose=pose):
                self.assertAlmostEqual(
                    auxnets.pose_weight(*(pose + (0.5,))).p, expected
                )

    def test_at_least_one(self):
        """Assert the weight never drops below one."""
        rng = np.random.default_rng(0)
        for pose in rng.uniform(-90.0, 90.0, (20, 3)):
            with self.subTest(pose=pose.tolist()):
                self.assertGreaterEqual(
                    auxnets.pose_weight(pose[0], pose[1], pose[2], 0.5).p, 1.0
                )
