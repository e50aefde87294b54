"""``simulate``: accuracy of refined graphs built with oracles of known quality.

Filter cells sweep ``d = p - q`` with the better side pinned at 1: ``p = 1``,
``q = 1 - d`` for ``d >= 0`` and ``p = 1 + d``, ``q = 1`` below zero, so
``d = 0`` keeps the graph unchanged. Add cells sweep the oracle precision over
the 2-hop candidates that can still be connected. Every cell is averaged over
``seeds`` synthetic graphs, two-class by default.
"""

import csv
import io
from pathlib import Path
from typing import List, NamedTuple, Optional

import numpy as np

from core.errors import DataError, UsageError
from core.graph import ratio_stats
from core.jobs import run_jobs
from core.node_clf import evaluate, train_sgc
from core.refine import RefineConfig, add_neighbors, filter_graph, make_noisy_oracle, oracle_for_precision
from core.synth import SynthSpec, generate_labeled_graph

from ..helpers import add_section_flags, context, emit, float_list
from .synth import SYNTH_FLAGS
from .train_clf import sgc_config

DEFAULT_PQ = (-0.4, -0.2, -0.1, 0.0, 0.1, 0.2, 0.4)
DEFAULT_P_PRE = (0.3, 0.5, 0.6, 0.7, 0.8, 0.9)
CSV_COLUMNS = (
    "mode",
    "p_minus_q",
    "p",
    "q",
    "p_pre",
    "ratio",
    "ne_ratio",
    "origin_acc",
    "ne_acc",
    "delta",
    "seeds",
)


class Cell(NamedTuple):
    mode: str
    p_minus_q: Optional[float]
    p_pre: Optional[float]

    @property
    def p(self) -> Optional[float]:
        if self.p_minus_q is None:
            return None
        return 1.0 + min(self.p_minus_q, 0.0)

    @property
    def q(self) -> Optional[float]:
        if self.p_minus_q is None:
            return None
        return 1.0 - max(self.p_minus_q, 0.0)


def register(subparsers, common):
    parser = subparsers.add_parser(
        "simulate",
        parents=[common],
        help="sweep oracle quality on synthetic graphs",
    )
    parser.add_argument("--mode", choices=("filter", "add", "both"), help="which refinement step to sweep (default: filter)")
    parser.add_argument("--pq", type=float_list, help=f"p - q values (default: {','.join(map(str, DEFAULT_PQ))})")
    parser.add_argument(
        "--p-pre", dest="p_pre", type=float_list, help=f"precision values (default: {','.join(map(str, DEFAULT_P_PRE))})"
    )
    parser.add_argument("--csv", help="also write the grid as CSV")
    parser.add_argument("--jobs", type=int, default=1, help="seeds run in parallel (default: 1)")
    add_section_flags(
        parser,
        "simulate",
        {"seeds": (int, "synthetic graphs per cell"), "num_classes": (int, "number of classes")},
    )
    add_section_flags(parser, "synth", {key: flag for key, flag in SYNTH_FLAGS.items() if key != "num_classes"})
    add_section_flags(parser, "refine", {"threshold": (float, "oracle acceptance threshold"), "n_max": (int, "degree budget")})
    add_section_flags(
        parser,
        "clf",
        {
            "k": (int, "propagation steps"),
            "epochs": (int, "maximum epochs"),
            "lr": (float, "learning rate"),
            "patience": (int, "early-stopping patience"),
        },
    )
    parser.set_defaults(handler=run)


def grid(mode: str, pq, p_pre) -> List[Cell]:
    for d in pq:
        if not -1.0 <= d <= 1.0:
            raise UsageError(f"p - q must lie in [-1, 1], got {d}")
    for value in p_pre:
        if not 0.0 < value < 1.0:
            raise UsageError(f"p_pre must lie in (0, 1), got {value}")
    if mode == "filter":
        return [Cell("filter", float(d), None) for d in pq]
    if mode == "add":
        return [Cell("add", None, float(v)) for v in p_pre]
    return [Cell("both", float(d), float(v)) for d in pq for v in p_pre]


def simulate_seed(ctx, cells: List[Cell], data_seed: int) -> List[tuple]:
    """``(ratio, ne_ratio, origin_acc, ne_acc)`` for every cell on one synthetic graph."""
    spec = SynthSpec(**{key: ctx[key] for key in SYNTH_FLAGS}, seed=data_seed)
    g, X, y, split = generate_labeled_graph(spec)
    cfg = sgc_config(ctx, data_seed)
    origin = evaluate(train_sgc(g, X, y, split, cfg), g, X, y, split.test).accuracy
    ratio = ratio_stats(g, y).global_ratio

    rows = []
    for index, cell in enumerate(cells):
        oracle_seed = int(np.random.SeedSequence([data_seed, index]).generate_state(1)[0])
        refine_cfg = RefineConfig(
            do_filter=cell.p_minus_q is not None,
            do_add=cell.p_pre is not None,
            n_max=ctx["n_max"],
            threshold=ctx["threshold"],
        )
        refined = g
        if refine_cfg.do_filter:
            refined = filter_graph(refined, make_noisy_oracle(y, cell.p, cell.q, oracle_seed), None, refine_cfg)
        if refine_cfg.do_add:
            oracle = oracle_for_precision(refined, y, cell.p_pre, oracle_seed, n_max=ctx["n_max"])
            refined = add_neighbors(refined, oracle, None, refine_cfg)
        ne = evaluate(train_sgc(refined, X, y, split, cfg), refined, X, y, split.test).accuracy
        rows.append((ratio, ratio_stats(refined, y).global_ratio, origin, ne))
    return rows


def to_csv(rows: List[dict]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(
            "" if row[c] is None else (f"{row[c]:.6f}" if isinstance(row[c], float) else row[c])
            for c in CSV_COLUMNS
        )
    return buffer.getvalue()


def run(args) -> int:
    ctx = context(
        args,
        ["synth", "refine", "clf", "simulate"],
        {"mode": "filter", "pq": DEFAULT_PQ, "p_pre": DEFAULT_P_PRE, "csv": None},
    )
    seed = ctx.require_seed()
    if ctx["seeds"] < 1:
        raise UsageError("--seeds must be >= 1")
    cells = grid(ctx["mode"], ctx["pq"], ctx["p_pre"])

    per_seed = run_jobs(
        lambda s: simulate_seed(ctx, cells, seed + s),
        range(ctx["seeds"]),
        jobs=args.jobs,
        desc="seeds",
    )

    rows = []
    for index, cell in enumerate(cells):
        values = np.array([seed_rows[index] for seed_rows in per_seed])
        ratio, ne_ratio, origin, ne = values.mean(axis=0).tolist()
        rows.append(
            {
                "mode": cell.mode,
                "p_minus_q": cell.p_minus_q,
                "p": cell.p,
                "q": cell.q,
                "p_pre": cell.p_pre,
                "ratio": ratio,
                "ne_ratio": ne_ratio,
                "origin_acc": origin,
                "ne_acc": ne,
                "delta": ne - origin,
                "seeds": len(per_seed),
            }
        )

    if ctx["csv"] is not None:
        try:
            Path(ctx["csv"]).write_text(to_csv(rows), encoding="utf-8", newline="\n")
        except OSError as e:
            raise DataError(f"cannot write {ctx['csv']}: {e.strerror}") from e
    return emit(ctx, {"rows": rows}, args.out)
