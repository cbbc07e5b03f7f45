import unittest
from unittest.mock import Mock

import numpy as np

from scoreflow.callbacks.validation_callback import ValidationCallback
from scoreflow.objectives import Proposal
from scoreflow.sde.sde import VpSde
from scoreflow.sde.weighting import WeightingScheme


class TestValidationCallback(unittest.TestCase):

    def setUp(self) -> None:
        self.sde = VpSde()
        self.val_data = np.zeros((4, 2))

    def _callback(self, mock_model, batch_size):
        return ValidationCallback(model=mock_model,
                                  val_data=self.val_data,
                                  sde=self.sde,
                                  scheme=WeightingScheme.likelihood(),
                                  proposal=Proposal.IMPORTANCE,
                                  loss_function=Mock(),
                                  batch_size=batch_size)

    def test_on_epoch_end(self):
        mock_model = Mock()
        mock_model.new_train_step.return_value = lambda x_t, t, targets, factors: 0.5
        validation_callback = self._callback(mock_model, batch_size=2)
        logs = {}
        validation_callback.on_epoch_end(0, logs=logs)
        self.assertEqual({'loss_val'}, logs.keys())
        self.assertAlmostEqual(0.5, logs['loss_val'], places=10)
        _, kwargs = mock_model.new_train_step.call_args
        self.assertFalse(kwargs['apply_gradients'])

    def test_same_batch_every_epoch(self):
        seen = []

        def train_step(x_t, t, targets, factors):
            seen.append(np.copy(t))
            return 0.

        mock_model = Mock()
        mock_model.new_train_step.return_value = train_step
        validation_callback = self._callback(mock_model, batch_size=4)
        validation_callback.on_epoch_end(0, logs={})
        validation_callback.on_epoch_end(1, logs={})
        np.testing.assert_array_equal(seen[0], seen[1])

    def test_batch_size_exceeding_data(self):
        mock_model = Mock()
        mock_model.new_train_step.return_value = lambda *args: 0.5
        validation_callback = self._callback(mock_model, batch_size=5)
        with self.assertRaises(ValueError):
            validation_callback.on_epoch_end(0, logs={})
