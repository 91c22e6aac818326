"""
Artifact writers. Every CSV starts with '#'-prefixed header lines carrying
the config hash, the seed and the package version; no timestamps, so equal
inputs give byte-identical files.
"""
import logging
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import pandas as pd

from src import __version__

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def header_lines(config_hash: str, seed: Optional[int], extra: Optional[Mapping[str, Any]] = None) -> str:
    lines = [
        f"# config_hash={config_hash}",
        f"# seed={'none' if seed is None else seed}",
        f"# version={__version__}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"# {key}={value}")
    return "\n".join(lines) + "\n"


def write_csv(
    frame: pd.DataFrame,
    path: Union[str, Path],
    config_hash: str,
    seed: Optional[int] = None,
    extra: Optional[Mapping[str, Any]] = None,
) -> Path:
    """
    Write a long-format table with the artifact header.

    Args:
        frame: Table to write (index is dropped)
        path: Target file; parent directories are created
        config_hash: Run-config hash for the header
        seed: Seed used for the run (None for deterministic artifacts)
        extra: Additional header entries, in insertion order

    Returns:
        Path: The written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(header_lines(config_hash, seed, extra))
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Read an artifact CSV, skipping its header lines."""
    return pd.read_csv(path, comment="#")


def read_header(path: Union[str, Path]) -> dict:
    """Header entries of an artifact CSV as a dict of strings."""
    header = {}
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
    return header


def append_line(path: Union[str, Path], line: str) -> Path:
    """Append one line to a summary file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as f:
        f.write(line.rstrip("\n") + "\n")
    return path
