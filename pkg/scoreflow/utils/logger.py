import logging
import sys
from typing import Union

ROOT_LOGGER = 'scoreflow'

LOGGING_LEVELS = {'debug': logging.DEBUG,
                  'info': logging.INFO,
                  'error': logging.ERROR}


def _root_logger() -> logging.Logger:
    root = logging.getLogger(ROOT_LOGGER)
    root.propagate = False
    if not root.handlers:
        # single stdout handler, module loggers only set levels
        handler = logging.StreamHandler(sys.stdout)
        handler.setFormatter(logging.Formatter('%(message)s'))
        root.addHandler(handler)
        root.setLevel(logging.INFO)
    return root


def get_logger(name: str) -> logging.Logger:
    """
    Returns a logger in the scoreflow hierarchy, names outside of it are nested below the root.
    """

    _root_logger()
    if name != ROOT_LOGGER and not name.startswith(ROOT_LOGGER + '.'):
        name = '{}.{}'.format(ROOT_LOGGER, name)
    return logging.getLogger(name)


def parse_logging_level(level_string: str) -> int:
    """
    Maps the config strings 'debug', 'info' and 'error' to logging levels, defaults to INFO.
    """

    return LOGGING_LEVELS.get(level_string, logging.INFO)


def set_logging_level(level: Union[str, int]) -> None:
    """
    Sets the level of every scoreflow logger that does not set its own.
    """

    if isinstance(level, str):
        level = parse_logging_level(level)
    _root_logger().setLevel(level)
