import logging
import os
from pathlib import Path
from typing import Union

from ..errors import ConfigurationError

logger = logging.getLogger(__name__)

PLOTS_DIRNAME = "plots"


def prepare_run_directory(path: Union[str, Path]) -> Path:
    """
    Create an artifact directory with its plots/ subdirectory

    Args:
        path: Directory for one run

    Returns:
        The directory as a Path

    Raises:
        ConfigurationError: If the directory cannot be created or written
    """
    directory = Path(path)
    try:
        (directory / PLOTS_DIRNAME).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(f"cannot create output directory {directory}: {e}", module="store") from e

    if not os.access(directory, os.W_OK):
        raise ConfigurationError(f"No write permission for directory: {directory}", module="store")
    logger.debug(f"Artifact directory ready: {directory}")
    return directory
