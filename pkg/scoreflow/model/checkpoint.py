import hashlib
import os
from typing import Any, Dict, Tuple

import numpy as np
import yaml

from scoreflow.errors import CheckpointMismatchError

HEADER_FILE = 'header.yaml'
PARAMS_FILE = 'params.npy'


def save_checkpoint(out_path: str, header: Dict[str, Any], params: np.ndarray) -> None:
    """
    Saves a flat float64 parameter vector together with a yaml header describing its layout.

    Args:
        out_path: Directory for the checkpoint, created if missing. Existing files are overwritten.
        header: Plain-data description of the model, must contain a 'tag' entry.
        params: Flat parameter vector.
    """

    if not os.path.exists(out_path):
        os.makedirs(out_path)
    with open(os.path.join(out_path, HEADER_FILE), 'w', encoding='utf-8') as f:
        yaml.safe_dump(header, f, default_flow_style=None, sort_keys=True)
    np.save(os.path.join(out_path, PARAMS_FILE), np.asarray(params, dtype=np.float64), allow_pickle=False)


def load_checkpoint(in_path: str, expected_tag: str = None) -> Tuple[Dict[str, Any], np.ndarray]:
    with open(os.path.join(in_path, HEADER_FILE), 'r', encoding='utf-8') as f:
        header = yaml.safe_load(f)
    if expected_tag is not None and header.get('tag') != expected_tag:
        raise CheckpointMismatchError('Expected a checkpoint tagged {}, found {}.'.format(
            expected_tag, header.get('tag')))
    params = np.load(os.path.join(in_path, PARAMS_FILE), allow_pickle=False)
    num_params = sum(int(np.prod(shape)) for shape in header['layout'])
    if params.shape != (num_params,):
        raise CheckpointMismatchError('Header layout describes {} parameters, file holds {}.'.format(
            num_params, params.shape))
    return header, params


def check_header(header: Dict[str, Any], expected: Dict[str, Any]) -> None:
    """
    Raises a CheckpointMismatchError naming the first key whose value differs from the expectation.
    """

    for key, value in expected.items():
        if header.get(key) != value:
            raise CheckpointMismatchError('Checkpoint {key}={found} does not match configured {key}={value}.'.format(
                key=key, found=header.get(key), value=value))


def params_hash(params: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(params, dtype=np.float64).tobytes()).hexdigest()


def get_flat_weights(variables) -> np.ndarray:
    return np.concatenate([v.numpy().ravel() for v in variables])


def set_flat_weights(variables, params: np.ndarray) -> None:
    params = np.asarray(params, dtype=np.float64)
    num_params = sum(int(np.prod(v.shape)) for v in variables)
    if params.shape != (num_params,):
        raise ValueError('Expected {} parameters, got array of shape {}.'.format(num_params, params.shape))
    offset = 0
    for variable in variables:
        size = int(np.prod(variable.shape))
        variable.assign(params[offset:offset + size].reshape(variable.shape))
        offset += size
