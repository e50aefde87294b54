"""
Per-run configuration and report provenance.

Settings are merged in this order, later sources winning:
built-in defaults, ``config.txt``, a ``--config`` JSON document and the
flags given on the command line. The effective settings and the content
hashes of all inputs are embedded in every report.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from .bundle_io import REPORT_SCHEMA_VERSION
from .config import coerce, section_defaults
from .errors import UsageError

BUILTIN_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "edge": {
        "dim": 64,
        "hidden": (64,),
        "epochs": 200,
        "batch_size": 256,
        "lr": 0.05,
        "momentum": 0.9,
        "weight_decay": 0.0,
        "balance_tol": 0.05,
        "mix_observed_negatives": True,
        "val_fraction": 0.2,
        "restarts": 1,
    },
    "refine": {
        "threshold": 0.5,
        "n_max": 10,
    },
    "clf": {
        "k": 2,
        "epochs": 500,
        "lr": 1.0,
        "momentum": 0.9,
        "weight_decay": 5e-6,
        "patience": 30,
        "normalize_features": True,
    },
    "reco": {
        "policy": "negcn",
        "k_neighbors": 5,
        "top_k": 20,
        "alpha": 0.5,
        "walks": 100,
        "walk_length": 3,
    },
    "synth": {
        "num_nodes": 2000,
        "num_classes": 4,
        "target_ratio": 0.7,
        "mean_degree": 4.0,
        "feature_dim": 32,
        "class_separation": 1.0,
    },
    "simulate": {
        "seeds": 5,
        "num_classes": 2,
    },
}


def section(name: str) -> Dict[str, Any]:
    """Built-in defaults of one section overlaid with ``config.txt``."""
    return section_defaults(name, BUILTIN_DEFAULTS[name])


def load_run_json(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise UsageError(f"cannot read run config {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from e
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: run config must be a JSON object")
    return doc


def _jsonable(value):
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


@dataclass
class RunContext:
    """
    Effective settings of one command invocation plus its input fingerprints.

    Attributes:
        command (str): Subcommand name.
        settings (Dict[str, Any]): Merged flat settings.
        inputs (Dict[str, str]): Input name to sha256 content hash.
    """

    command: str
    settings: Dict[str, Any]
    inputs: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def resolve(
        cls,
        command: str,
        sections: Iterable[str],
        own: Dict[str, Any],
        run_json: Dict[str, Any],
        flags: Dict[str, Any],
    ) -> "RunContext":
        """
        Merge defaults, ``config.txt``, the run JSON and explicit flags.

        Args:
            command (str): Subcommand name.
            sections (Iterable[str]): Config sections the command reads.
            own (Dict[str, Any]): Command-specific built-ins (paths, seed, ...).
            run_json (Dict[str, Any]): Parsed ``--config`` document.
            flags (Dict[str, Any]): Parsed flags; ``None`` means "not given".
        """
        merged: Dict[str, Any] = {}
        for name in sections:
            merged.update(section(name))
        merged.update(own)

        for key, value in run_json.items():
            if key not in merged:
                raise UsageError(f"run config: unknown key {key!r} for '{command}'")
            like = merged[key]
            if isinstance(like, tuple) and isinstance(value, list):
                value = tuple(value)
            elif isinstance(value, str):
                value = coerce(value, like) if like is not None else value
            merged[key] = value

        for key, value in flags.items():
            if value is not None:
                merged[key] = value
        return cls(command, merged)

    def __getitem__(self, key: str):
        return self.settings[key]

    def require_seed(self) -> int:
        seed = self.settings.get("seed")
        if seed is None:
            raise UsageError(f"'{self.command}' produces a report and needs --seed")
        if int(seed) < 0:
            raise UsageError(f"--seed must be >= 0, got {seed}")
        return int(seed)

    def record_input(self, name: str, digest: str) -> None:
        self.inputs[name] = digest

    def report(self, result: dict) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "command": self.command,
            "config": _jsonable(self.settings),
            "inputs": dict(sorted(self.inputs.items())),
            "result": _jsonable(result),
        }
