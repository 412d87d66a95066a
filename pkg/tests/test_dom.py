# coding=utf-8
"""Unit tests for :mod:`mask_fpan.dom`."""
from __future__ import division, unicode_literals

import os
import shutil
import tempfile

import numpy as np

from mask_fpan import dom, exceptions, faceworld, netpbm
from mask_fpan.compat import unittest
from mask_fpan.gradcore import Tensor, grad_check
from tests.utils import tiny_config, tiny_model


class PatchifyTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.dom.patchify` and its inverse."""

    def test_counts(self):
        """Assert a 64x64 image on an 8x8 grid gives 64 patches of 8x8."""
        seq = dom.patchify(np.zeros((64, 64, 3)), 8, 8)
        self.assertEqual(
            (seq.patches.shape, seq.grid, seq.patch_size),
            ((64, 192), (8, 8), (8, 8, 3)),
        )

    def test_round_trip(self):
        """Assert unpatchify inverts patchify bitwise for divisible sizes."""
        rng = np.random.default_rng(0)
        for rows, cols, patch_h, patch_w in ((1, 1, 5, 3), (2, 3, 4, 2),
                                             (8, 8, 8, 8), (3, 2, 1, 7)):
            image = rng.uniform(size=(rows * patch_h, cols * patch_w, 3))
            with self.subTest(grid=(rows, cols)):
                self.assertTrue(np.array_equal(
                    dom.unpatchify(dom.patchify(image, rows, cols)), image
                ))

    def test_grey_round_trip(self):
        """Assert single-channel images keep their shape and type."""
        mask = np.random.default_rng(1).random((8, 6)) > 0.5
        back = dom.unpatchify(dom.patchify(mask, 2, 3))
        self.assertEqual(back.dtype, np.bool_)
        self.assertTrue(np.array_equal(back[..., 0], mask))

    def test_raster_order(self):
        """Assert patches run row-major over a left-black, right-white image.
        """
        image = np.zeros((8, 8, 3))
        image[:, 4:] = 1.0
        seq = dom.patchify(image, 2, 2)
        self.assertEqual(
            [float(patch.mean()) for patch in seq.patches],
            [0.0, 1.0, 0.0, 1.0],
        )

    def test_not_divisible(self):
        """Assert sizes that do not divide evenly are rejected."""
        with self.assertRaises(exceptions.ShapeMismatchError):
            dom.patchify(np.zeros((10, 8, 3)), 3, 2)


class ToyModelTestCase(unittest.TestCase):
    """Exercise encode and decode on a 16x16 toy model."""

    @classmethod
    def setUpClass(cls):
        """Build a toy model and two images."""
        cls.model = dom.DomModel(16, (2, 2), 3, 4, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        cls.images = rng.uniform(size=(2, 16, 16, 3))
        cls.masks = rng.random((2, 16, 16)) > 0.7

    def test_hidden_length(self):
        """Assert the description concatenates both encoder states."""
        self.assertEqual(dom.encode(self.model, self.images[0]).shape, (6,))

    def test_encode_deterministic(self):
        """Assert identical images give identical descriptions."""
        self.assertTrue(np.array_equal(
            dom.encode(self.model, self.images[0]),
            dom.encode(self.model, self.images[0].copy()),
        ))

    def test_decode_shapes(self):
        """Assert decode emits an image and a single-channel map."""
        recon, prob = dom.decode(self.model, dom.encode(self.model,
                                                        self.images[0]))
        self.assertEqual((recon.shape, prob.shape), ((16, 16, 3), (16, 16)))

    def test_decode_range(self):
        """Assert both outputs are sigmoid values."""
        recon, prob = dom.decode(self.model, dom.encode(self.model,
                                                        self.images[1]))
        for name, values in (('recon', recon), ('prob', prob)):
            with self.subTest(output=name):
                self.assertTrue(np.all((values >= 0) & (values <= 1)))

    def test_decode_deterministic(self):
        """Assert decoding the same description twice gives equal outputs."""
        hidden = dom.encode(self.model, self.images[0])
        first = dom.decode(self.model, hidden)
        second = dom.decode(self.model, hidden)
        self.assertTrue(np.array_equal(first[0], second[0]))
        self.assertTrue(np.array_equal(first[1], second[1]))

    def test_image_size(self):
        """Assert images of another size raise ``ImageSizeError``."""
        with self.assertRaises(exceptions.ImageSizeError):
            dom.encode(self.model, np.zeros((32, 32, 3)))

    def test_odd_patches(self):
        """Assert patches that cannot be pooled by 2 are rejected."""
        with self.assertRaises(exceptions.ShapeMismatchError):
            dom.DomModel(12, (4, 4), 3, 4, np.random.default_rng(0))

    def test_grad_check(self):
        """Assert gradients through the whole encoder-decoder are exact."""
        targets = dom.patch_batch(self.images, self.model.grid).reshape(2, -1)
        mask_targets = dom.patch_batch(
            self.masks[..., None].astype(float), self.model.grid
        ).reshape(2, -1) > 0.5
        for child, name in (('encoder_full', 'bias'),
                            ('encoder_coarse', 'bias'),
                            ('decoder', 'bias'),
                            ('mask_head', 'bias')):
            module = getattr(self.model, child)
            original = module.param(name)

            def loss(probe):
                module.set_param(name, probe)
                recon, logits = dom.decode_batch(
                    self.model, dom.encode_batch(self.model, self.images)
                )
                return dom.dom_loss(recon, logits, targets, mask_targets,
                                    1.0).total

            try:
                error = grad_check(loss, original.data)
            finally:
                module.set_param(name, original)
            with self.subTest(param='{}.{}'.format(child, name)):
                self.assertLess(error, 1e-5)


class LossTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.dom.dom_loss` and the reconstruction term."""

    @classmethod
    def setUpClass(cls):
        """Draw a batch of reconstructions, targets and masks."""
        rng = np.random.default_rng(2)
        cls.recon = Tensor(rng.uniform(size=(2, 12)))
        cls.logits = Tensor(rng.normal(size=(2, 4)))
        cls.target = rng.uniform(size=(2, 12))
        cls.mask = rng.random((2, 4)) > 0.5

    def test_zero_point(self):
        """Assert the reconstruction term vanishes for a perfect copy."""
        image = np.random.default_rng(3).uniform(size=(8, 8, 3))
        self.assertEqual(dom.reconstruction_loss(image, image.copy()), 0.0)

    def test_positive(self):
        """Assert the reconstruction term is positive for any difference."""
        image = np.zeros((4, 4, 3))
        other = image.copy()
        other[1, 2, 0] = 0.1
        self.assertGreater(dom.reconstruction_loss(other, image), 0.0)

    def test_beta_zero(self):
        """Assert ``beta = 0`` reduces the total to the reconstruction term.
        """
        loss = dom.dom_loss(self.recon, self.logits, self.target, self.mask,
                            0.0)
        self.assertIsNone(loss.mask)
        self.assertEqual(loss.total.item(),
                         dom.reconstruction_loss(self.recon.data, self.target))

    def test_beta(self):
        """Assert the total adds ``beta`` times the mask term."""
        loss = dom.dom_loss(self.recon, self.logits, self.target, self.mask,
                            2.5)
        self.assertAlmostEqual(
            loss.total.item(),
            loss.reconstruction.item() + 2.5 * loss.mask.item(),
            delta=1e-12,
        )

    def test_mask_term(self):
        """Assert the mask term is the mean binary cross-entropy."""
        loss = dom.dom_loss(self.recon, self.logits, self.target, self.mask,
                            1.0)
        prob = 1.0 / (1.0 + np.exp(-self.logits.data))
        expected = -np.mean(np.where(self.mask, np.log(prob),
                                     np.log(1.0 - prob)))
        self.assertAlmostEqual(loss.mask.item(), expected, places=10)


class TrainDomTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.dom.train_dom`."""

    @classmethod
    def setUpClass(cls):
        """Train on a few 32x32 pairs."""
        cls.pairs = faceworld.generate_pairs(
            tiny_model(), 4, 0, (30.0, 15.0, 10.0), image_size=32
        )
        cls.config = tiny_config()
        cls.model = dom.train_dom(cls.pairs, cls.config, seed=0)
        cls.directory = tempfile.mkdtemp()

    @classmethod
    def tearDownClass(cls):
        """Delete the temporary directory."""
        shutil.rmtree(cls.directory)

    def test_trained(self):
        """Assert the model is marked trained with one loss per step."""
        self.assertTrue(self.model.trained)
        self.assertEqual(len(self.model.curves['total']), 3)

    def test_pairs(self):
        """Assert pairs share everything but the occluder pixels."""
        for occluded, clean, mask in self.pairs:
            with self.subTest(pixels=int(mask.sum())):
                self.assertTrue(mask.any())
                self.assertTrue(np.array_equal(occluded[~mask], clean[~mask]))

    def test_deocclude(self):
        """Assert de-occlusion is repeatable and thresholds the map."""
        first = dom.deocclude(self.model, self.pairs[0][0])
        second = dom.deocclude(self.model, self.pairs[0][0])
        self.assertTrue(np.array_equal(first.recon, second.recon))
        self.assertTrue(np.array_equal(first.occ_mask, first.occ_prob > 0.5))

    def test_evaluate(self):
        """Assert the copy-input baseline sees the occluders."""
        scores = dom.evaluate_dom(self.model, self.pairs)
        self.assertGreater(scores.baseline_mse, 0.0)
        self.assertGreaterEqual(scores.mask_iou, 0.0)
        self.assertLessEqual(scores.mask_iou, 1.0)

    def test_mask_head_unused(self):
        """Assert ``beta = 0`` leaves the mask head at its initial weights."""
        config = tiny_config(dom={'beta': 0.0})
        model = dom.train_dom(self.pairs, config, seed=0)
        initial = dom.DomModel(
            32, config.dom.grid, config.dom.hidden, config.dom.decoder_hidden,
            np.random.default_rng([0, 17]),
        )
        for name, value in initial.mask_head.state_dict().items():
            with self.subTest(name=name):
                self.assertTrue(np.array_equal(
                    model.mask_head.state_dict()[name], value
                ))

    def test_empty(self):
        """Assert training without pairs raises ``EmptyDatasetError``."""
        with self.assertRaises(exceptions.EmptyDatasetError):
            dom.train_dom([], self.config)

    def test_triptych(self):
        """Assert the triptych places three images side by side."""
        occluded, clean, mask = self.pairs[0]
        path = os.path.join(self.directory, 'triptych.ppm')
        dom.write_triptych(path, occluded, clean, mask)
        self.assertEqual(netpbm.read_ppm(path).shape, (32, 96, 3))


class ArchitectureTestCase(unittest.TestCase):
    """Test :meth:`mask_fpan.dom.DomModel.architecture`."""

    def test_round_trip(self):
        """Assert a rebuilt model accepts the original's parameters."""
        model = dom.DomModel(16, (2, 2), 3, 4, np.random.default_rng(4))
        rebuilt = dom.DomModel.from_architecture(model.architecture())
        rebuilt.load_state_dict(model.state_dict())
        image = np.random.default_rng(5).uniform(size=(16, 16, 3))
        self.assertTrue(np.array_equal(
            dom.encode(model, image), dom.encode(rebuilt, image)
        ))
