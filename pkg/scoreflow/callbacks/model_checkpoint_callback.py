import tensorflow as tf

from scoreflow.model.checkpoint import load_checkpoint, params_hash, save_checkpoint
from scoreflow.utils.logger import get_logger


class ModelCheckpointCallback(tf.keras.callbacks.Callback):
    """
    Callback for keeping the best parameters of a trainable model by a monitored log value.

    The checkpoint uses the header plus params.npy layout of the model's own save(), with an extra
    'best' header entry recording the monitored value, the epoch and the sha256 of the stored parameters.
    """

    def __init__(self,
                 file_path: str,
                 model,
                 monitor='loss_val',
                 mode='min') -> None:
        """
        Initializes the Callback.

        Args:
            file_path: Checkpoint directory. If existing, its header and parameters will be overwritten.
            model: Model to checkpoint, e.g. a ScoreMlp or a DequantFlow, anything with header() and
                get_flat_params().
            monitor: Name of the score monitor for improvements.
            mode: If set to 'min' a decrease of the monitored score is seen as an improvement, otherwise an increase.
        """

        super().__init__()
        if mode not in ('min', 'max'):
            raise ValueError('Checkpoint mode must be min or max, got {}.'.format(mode))
        self.file_path = file_path
        self.score_model = model
        self.monitor = monitor
        self.mode = mode
        self.best_score = None
        self.logger = get_logger(__name__)

    def _is_improvement(self, score: float) -> bool:
        if self.best_score is None:
            return True
        if self.mode == 'min':
            return score < self.best_score
        return score > self.best_score

    def on_epoch_end(self, epoch, logs=None) -> None:
        if logs is None:
            logs = {}
        if self.file_path is None:
            return
        score = float(logs[self.monitor])
        if not self._is_improvement(score):
            self.logger.info('{} did not improve from {}.'.format(self.monitor, self.best_score))
            return
        params = self.score_model.get_flat_params()
        header = dict(self.score_model.header())
        header['best'] = {'monitor': self.monitor,
                          'mode': self.mode,
                          'value': score,
                          'epoch': int(epoch),
                          'params_sha256': params_hash(params)}
        self.logger.info('{} improved from {} to {}, saving {} to {}'.format(
            self.monitor, self.best_score, score, header['tag'], self.file_path))
        self.best_score = score
        save_checkpoint(self.file_path, header, params)


def load_best_record(in_path: str) -> dict:
    """
    Reads the 'best' entry of a checkpoint written by ModelCheckpointCallback and checks the parameter hash.
    """

    header, params = load_checkpoint(in_path)
    record = header.get('best')
    if record is None:
        raise ValueError('Checkpoint {} has no best record.'.format(in_path))
    if record['params_sha256'] != params_hash(params):
        raise ValueError('Parameters in {} do not match the recorded hash.'.format(in_path))
    return record
