import tensorflow as tf


def weighted_score_loss(targets: tf.Tensor, scores: tf.Tensor, factors: tf.Tensor) -> tf.Tensor:
    """
    Batch mean of 0.5 * factor * ||target - score||^2, the Monte Carlo denoising score matching objective.
    """

    squared_error = tf.reduce_sum(tf.square(targets - scores), axis=-1)
    return tf.reduce_mean(0.5 * factors * squared_error)
