import unittest

import numpy as np

from scoreflow.utils.rng import make_rng


class TestRng(unittest.TestCase):

    def test_same_keys_same_stream(self) -> None:
        np.testing.assert_array_equal(make_rng(42, 'train', 3).standard_normal(10),
                                      make_rng(42, 'train', 3).standard_normal(10))

    def test_different_keys_different_streams(self) -> None:
        draws = [make_rng(*args).standard_normal(10) for args in [(42,), (42, 'train'), (42, 'test'), (43, 'train')]]
        for i in range(len(draws)):
            for j in range(i + 1, len(draws)):
                self.assertFalse(np.allclose(draws[i], draws[j]))

    def test_bit_generator(self) -> None:
        self.assertIsInstance(make_rng(0).bit_generator, np.random.Philox)
