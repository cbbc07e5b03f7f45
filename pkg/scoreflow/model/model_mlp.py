import numpy as np
import tensorflow as tf


class TimeEmbedding(tf.keras.layers.Layer):
    """
    Sinusoidal Fourier features of the log-scaled time, of dimension 2 * num_frequencies.
    """

    def __init__(self, num_frequencies=8, scale=1., **kwargs) -> None:
        super().__init__(dtype='float64', **kwargs)
        if num_frequencies < 1 or scale <= 0.:
            raise ValueError('Expected num_frequencies >= 1 and scale > 0, got {} and {}.'.format(
                num_frequencies, scale))
        self.num_frequencies = num_frequencies
        self.scale = scale
        self.frequencies = tf.constant(np.geomspace(1. / 16., 4., num_frequencies), dtype=tf.float64)

    def call(self, t: tf.Tensor) -> tf.Tensor:
        log_t = self.scale * tf.math.log(tf.reshape(t, (-1, 1)))
        phases = log_t * self.frequencies[None, :]
        return tf.concat([tf.sin(phases), tf.cos(phases)], axis=-1)


class ScoreNetwork(tf.keras.Model):
    """
    MLP on [x, embedding(t)] with smooth activations and a bias-free output layer.
    """

    def __init__(self,
                 dim: int,
                 hidden_units=64,
                 num_layers=3,
                 num_frequencies=8,
                 embedding_scale=1.,
                 seed=0) -> None:
        super(ScoreNetwork, self).__init__(dtype='float64')
        self.embedding = TimeEmbedding(num_frequencies, embedding_scale)
        self.hidden = [tf.keras.layers.Dense(hidden_units,
                                             activation='swish',
                                             dtype='float64',
                                             kernel_initializer=tf.keras.initializers.GlorotUniform(seed=seed + i))
                       for i in range(num_layers)]
        self.dense = tf.keras.layers.Dense(dim,
                                           use_bias=False,
                                           dtype='float64',
                                           kernel_initializer=tf.keras.initializers.GlorotUniform(
                                               seed=seed + num_layers))

    def call(self, x: tf.Tensor, t: tf.Tensor) -> tf.Tensor:
        hidden = tf.concat([x, self.embedding(t)], axis=-1)
        for layer in self.hidden:
            hidden = layer(hidden)
        return self.dense(hidden)


class ConditionerNetwork(tf.keras.Model):
    """
    MLP producing log-scale and shift of an elementwise affine transform, initialized to the identity.
    """

    def __init__(self, out_dim: int, hidden_units=64, seed=0) -> None:
        super(ConditionerNetwork, self).__init__(dtype='float64')
        self.hidden = [tf.keras.layers.Dense(hidden_units,
                                             activation='swish',
                                             dtype='float64',
                                             kernel_initializer=tf.keras.initializers.GlorotUniform(seed=seed + i))
                       for i in range(2)]
        self.dense = tf.keras.layers.Dense(2 * out_dim,
                                           dtype='float64',
                                           kernel_initializer='zeros',
                                           bias_initializer='zeros')

    def call(self, inputs: tf.Tensor):
        hidden = inputs
        for layer in self.hidden:
            hidden = layer(hidden)
        log_scale, shift = tf.split(self.dense(hidden), 2, axis=-1)
        return tf.tanh(log_scale), shift
