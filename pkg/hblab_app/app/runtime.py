import logging
import os
import sys

from hblab_app.app.constants import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK
from hblab_app.core.errors import ConfigError, ContractError, FormatError, NumericFailureError

_BLAS_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")

logger = logging.getLogger(__name__)


def configure_logging(level: str = "INFO") -> None:
    """Log records to stderr; stdout carries only command products."""
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )


def resolve_threads(requested: int) -> int:
    return requested if requested and requested > 0 else (os.cpu_count() or 1)


def configure_threads(requested: int) -> int:
    """Pin BLAS pools when an explicit count is given. Only effective before numpy loads."""
    workers = resolve_threads(requested)
    if requested and requested > 0:
        if "numpy" in sys.modules:
            logger.debug("numpy already loaded; BLAS thread count left unchanged")
        for var in _BLAS_THREAD_VARS:
            os.environ[var] = str(requested)
    return workers


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, NumericFailureError):
        return EXIT_NUMERIC
    if isinstance(exc, (FormatError, OSError)):
        return EXIT_IO
    if isinstance(exc, (ConfigError, ContractError, ValueError)):
        return EXIT_CONFIG
    raise exc


def run_guarded(command, args) -> int:
    """Run one CLI command; known failures become an exit code and a one-line message on stderr."""
    try:
        command(args)
    except (NumericFailureError, FormatError, OSError, ConfigError, ContractError, ValueError) as exc:
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        logger.debug("command failed", exc_info=True)
        return code
    return EXIT_OK
