#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Small helpers shared across the package: logging setup, config hashing and
atomic file output.
"""

import hashlib
import json
import logging
import os
import sys
import tempfile

import numpy as np

MACHINE_EPSILON = np.finfo(float).eps


def set_logger(level=logging.INFO):
    """Install a stream handler on the package logger and return it.

    Calling the function several times never adds a second handler.

    Examples
    --------
    >>> log = set_logger()
    >>> log.name
    'mgmd_gan'
    >>> len(set_logger().handlers)
    1
    """
    log = logging.getLogger("mgmd_gan")
    log.setLevel(level)

    # https://docs.python.org/3/library/logging.html#logging.Logger
    log.propagate = False  # Do not propagate to top-level logger

    # Create handler
    stream_handler = logging.StreamHandler(stream=sys.stdout)
    stream_handler.setLevel(logging.DEBUG)

    # Create and set formatter
    formatter = logging.Formatter("%(levelname)-8s: %(message)s")
    stream_handler.setFormatter(formatter)

    # Set handler
    if not log.handlers:
        log.addHandler(stream_handler)

    return log


def canonical_json(obj):
    """Serialize to JSON with sorted keys and no insignificant whitespace.

    Examples
    --------
    >>> canonical_json({"b": 1, "a": [1.5, None]})
    '{"a":[1.5,null],"b":1}'
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config):
    """SHA-256 hex digest of the canonical JSON form of a config dict.

    Examples
    --------
    >>> config_hash({"k": 2, "method": "mgmd"}) == config_hash({"method": "mgmd", "k": 2})
    True
    >>> len(config_hash({}))
    64
    """
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def atomic_write(path, data):
    """Write `data` (str or bytes) to `path` through a temporary file.

    The temporary file lives in the destination directory and is renamed over
    the target, so a failure never leaves a partial file behind.
    """
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    if isinstance(data, str):
        data = data.encode("utf-8")

    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as file:
            file.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def format_float(value):
    """Format a float the way the training logs print losses.

    Examples
    --------
    >>> format_float(0.5)
    '5.0000e-01'
    """
    return np.format_float_scientific(value, precision=4, min_digits=4, exp_digits=2)


if __name__ == "__main__":
    import pytest

    pytest.main(args=[__file__, "--capture=sys", "--doctest-modules", "--maxfail=1"])
