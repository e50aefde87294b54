"""Configuration utilities for run defaults and logging.

This module parses the sectioned ``config.txt`` file that ships next to the
executable, exposes the parsed defaults, and sets up the bracketed component
logging used across the toolkit. It is intended to be imported by the core
modules and the command line.
"""

import logging
import os
import sys
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Optional

from .errors import UsageError

SECTION_NAMES = {
    "edge classifier": "edge",
    "refinement": "refine",
    "node classifier": "clf",
    "recommendation": "reco",
    "synthetic data": "synth",
    "simulation": "simulate",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def resource_path(relative_path):
    """
    Get the absolute path to a resource, compatible with development and PyInstaller.

    Args:
        relative_path (str): The relative path to the resource.

    Returns:
        str: The absolute path to the resource.
    """
    try:
        base_path = sys._MEIPASS
    except AttributeError:
        base_path = os.path.abspath(".")

    return os.path.join(base_path, relative_path)


def parse_config_file(paths: Optional[Iterable[Path]] = None) -> Dict[str, Dict[str, str]]:
    """
    Parse the defaults file into ``{section: {key: raw value}}``.

    Searches the candidate locations in order and reads the first file that
    exists. Section headers are comment lines naming one of the known
    sections; other comment lines close the current section.

    Args:
        paths (Optional[Iterable[Path]]): Candidate files. Defaults to
            ``./config.txt`` and the copy bundled into the executable.

    Returns:
        Dict[str, Dict[str, str]]: Raw string values keyed by section short name.
    """
    if paths is None:
        paths = [
            Path.cwd() / "config.txt",
            Path(resource_path("config.txt")),
        ]

    sections: Dict[str, Dict[str, str]] = {name: {} for name in SECTION_NAMES.values()}
    current_section = None

    for path in paths:
        path = Path(path)
        if not path.exists():
            continue

        with path.open(encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    header = line.lstrip("#").strip().lower()
                    current_section = SECTION_NAMES.get(header) if line else current_section
                    continue

                if current_section is None:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{line_number}: expected 'key = value', got {line!r}")
                key, value = line.split("=", 1)
                sections[current_section][key.strip()] = value.strip()

        break

    return sections


def coerce(raw: str, like):
    """
    Convert a raw config string to the type of ``like``.

    Args:
        raw (str): Value read from the config file or a JSON run config.
        like: Example value whose type is the target (bool, int, float, str, tuple).

    Returns:
        The converted value.
    """
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(like, bool):
            lowered = raw.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, tuple):
            return tuple(type(like[0])(part) for part in raw.split(",") if part.strip())
    except ValueError as e:
        raise UsageError(f"cannot read config value {raw!r}: {e}") from e
    return raw


def section_defaults(section: str, builtin: Dict[str, object]) -> Dict[str, object]:
    """
    Overlay the ``config.txt`` values of one section on built-in defaults.

    Unknown keys in the file are rejected so typos do not pass silently.
    """
    merged = dict(builtin)
    for key, raw in defaults().get(section, {}).items():
        if key not in builtin:
            raise UsageError(f"config.txt [{section}]: unknown key {key!r}")
        merged[key] = coerce(raw, builtin[key])
    return merged


def configure_logging(verbosity: int = 0) -> None:
    """
    Route component loggers to stderr with the ``[Component] message`` format.

    Args:
        verbosity (int): -1 for warnings only, 0 for info, 1 or more for debug.
    """
    level = logging.INFO
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity > 0:
        level = logging.DEBUG

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("[%(name)s] %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)


@lru_cache(maxsize=None)
def defaults() -> Dict[str, Dict[str, str]]:
    """The parsed defaults file, read once per process."""
    return parse_config_file()
