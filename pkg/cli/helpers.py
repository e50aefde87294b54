"""Shared argument plumbing, summaries and report emitters for the subcommands."""

import argparse
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from core.bundle_io import bundle_digest, load_bundle, write_report
from core.errors import UsageError
from core.graph import Graph, LabelVector, ratio_stats
from core.node_clf import Dataset
from core.run_context import RunContext, load_run_json, section


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors become ``UsageError`` (exit code 1)."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def common_options() -> argparse.ArgumentParser:
    """Flags shared by every subcommand."""
    common = CliArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="seed for all randomness of the run")
    common.add_argument("--config", metavar="JSON", help="run config overriding config.txt")
    common.add_argument("--out", metavar="FILE", help="write the JSON report here (default: stdout)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="debug logging")
    common.add_argument("-q", "--quiet", action="count", default=0, help="warnings only")
    return common


def float_list(text: str) -> Tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def add_section_flags(parser: argparse.ArgumentParser, name: str, flags: Dict[str, Tuple[type, str]]) -> None:
    """
    Add one flag per setting of a config section, showing the effective default.

    Flags default to ``None`` so the merge can tell given from omitted.
    """
    defaults = section(name)
    for key, (kind, text) in flags.items():
        default = defaults[key]
        if isinstance(default, tuple):
            default = ",".join(str(v) for v in default)
        option = "--" + key.replace("_", "-")
        if kind is bool:
            toggle = parser.add_mutually_exclusive_group()
            toggle.add_argument(
                option, dest=key, action="store_const", const=True, default=None,
                help=f"{text} (default: {default})",
            )
            toggle.add_argument("--no-" + key.replace("_", "-"), dest=key, action="store_const", const=False)
        else:
            parser.add_argument(option, dest=key, type=kind, default=None, help=f"{text} (default: {default})")


def context(
    args: argparse.Namespace,
    sections: Sequence[str],
    own: Optional[Dict[str, Any]] = None,
) -> RunContext:
    """
    Build the run context of a parsed invocation.

    Every section setting and every key of ``own`` (command-specific settings
    with their built-in values) can be overridden by a flag of the same name.
    """
    own = {"seed": None, **(own or {})}
    keys = set(own)
    for name in sections:
        keys |= set(section(name))
    flags = {key: getattr(args, key, None) for key in sorted(keys)}
    return RunContext.resolve(args.command, sections, own, load_run_json(args.config), flags)


def load_input_bundle(ctx: RunContext, name: str, path: str) -> Dataset:
    dataset = load_bundle(path)
    ctx.record_input(name, bundle_digest(path))
    return dataset


def graph_summary(g: Graph, y: Optional[LabelVector] = None) -> Dict[str, Any]:
    """Edge counts, mean degree and (with full labels) the positive-ratio statistics."""
    degree = g.non_self_degrees()
    summary: Dict[str, Any] = {
        "num_nodes": g.num_nodes,
        "undirected_edges": int(g.undirected_edges().shape[0]),
        "mean_degree": float(np.mean(degree)),
        "isolated_nodes": int(np.count_nonzero(degree == 0)),
    }
    if y is not None and y.all_known:
        stats = ratio_stats(g, y)
        summary.update(stats.summary())
        summary["mean_node_ratio"] = float(np.mean(stats.per_node_ratio))
    return summary


def emit(ctx: RunContext, result: dict, out: Optional[str] = None) -> int:
    write_report(ctx.report(result), out)
    return 0
