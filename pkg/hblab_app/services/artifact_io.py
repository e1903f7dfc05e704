"""Single-writer artifact files: locked temp file, then an atomic rename."""

from __future__ import annotations

import logging
import os
from typing import Callable, IO

import portalocker

logger = logging.getLogger(__name__)

LOCK_TIMEOUT_SEC = 30.0


def write_artifact(path: str, write: Callable[[IO[bytes]], None]) -> str:
    """Run ``write`` against ``path + '.tmp'`` under an exclusive lock and move it into place.

    On any failure the temp file is removed and ``path`` is left as it was.
    """
    path = os.fspath(path)
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    tmp = path + ".tmp"
    try:
        with portalocker.Lock(tmp, mode="wb", timeout=LOCK_TIMEOUT_SEC) as fh:
            write(fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.remove(tmp)
        except FileNotFoundError:
            pass
        raise
    logger.debug("wrote %s", path)
    return path


def write_text_artifact(path: str, text: str) -> str:
    return write_artifact(path, lambda fh: fh.write(text.encode("utf-8")))


def remove_quietly(paths) -> None:
    for p in paths:
        try:
            os.remove(p)
        except FileNotFoundError:
            pass
