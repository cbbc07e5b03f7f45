import numpy as np
import tensorflow as tf


class DatasetGenerator:

    def __init__(self,
                 batch_size: int,
                 shuffle_buffer_size=None,
                 seed=0):
        self.batch_size = batch_size
        self.shuffle_buffer_size = shuffle_buffer_size
        self.seed = seed

    def __call__(self, samples: np.ndarray) -> tf.data.Dataset:
        """
        Creates a dataset of float64 batches of shape (batch_size, D) that reshuffles on every pass.

        Args:
            samples: Training samples of shape (N, D), integer data is cast to float64.
        """

        dataset = tf.data.Dataset.from_tensor_slices(np.asarray(samples, dtype=np.float64))
        if self.shuffle_buffer_size is not None:
            dataset = dataset.shuffle(self.shuffle_buffer_size, seed=self.seed, reshuffle_each_iteration=True)
        return dataset.batch(batch_size=self.batch_size, drop_remainder=True)
