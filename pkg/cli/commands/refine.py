"""``refine``: filter and add edges with a trained classifier or a noisy oracle."""

from core.bundle_io import file_sha256, load_edge_checkpoint, save_bundle
from core.errors import UsageError
from core.node_clf import Dataset
from core.propagate import parameter_free_embedding
from core.refine import (
    EdgeClassifierScorer,
    RefineConfig,
    enhance,
    make_noisy_oracle,
    oracle_for_precision,
    refine_provenance,
)

from ..helpers import add_section_flags, context, emit, graph_summary, load_input_bundle


def register(subparsers, common):
    parser = subparsers.add_parser(
        "refine",
        parents=[common],
        help="build the neighbor-enhanced graph",
    )
    parser.add_argument("bundle", help="graph bundle directory")
    parser.add_argument("--out-bundle", dest="out_bundle", required=True, help="refined bundle directory")
    scorer = parser.add_mutually_exclusive_group(required=True)
    scorer.add_argument("--checkpoint", help="edge classifier JSON from train-edge")
    scorer.add_argument("--oracle-p", dest="oracle_p", type=float, help="noisy oracle P(accept | same label)")
    scorer.add_argument(
        "--oracle-precision",
        dest="oracle_precision",
        type=float,
        help="noisy oracle tuned to this precision over 2-hop candidates",
    )
    parser.add_argument("--oracle-q", dest="oracle_q", type=float, help="noisy oracle P(accept | different label)")
    steps = parser.add_mutually_exclusive_group()
    steps.add_argument("--filter-only", dest="filter_only", action="store_true", help="skip adding")
    steps.add_argument("--add-only", dest="add_only", action="store_true", help="skip filtering")
    add_section_flags(
        parser,
        "refine",
        {
            "threshold": (float, "accept a pair when its score exceeds this"),
            "n_max": (int, "degree budget for adding"),
        },
    )
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = context(
        args,
        ["refine"],
        {
            "bundle": None,
            "out_bundle": None,
            "checkpoint": None,
            "oracle_p": None,
            "oracle_q": None,
            "oracle_precision": None,
            "filter_only": False,
            "add_only": False,
        },
    )
    seed = ctx.require_seed()
    g, X, y, split = load_input_bundle(ctx, "bundle", ctx["bundle"])

    if ctx["checkpoint"] is not None:
        digest = file_sha256(ctx["checkpoint"])
        ctx.record_input("checkpoint", digest)
        scorer = EdgeClassifierScorer(load_edge_checkpoint(ctx["checkpoint"]), digest)
    elif ctx["oracle_precision"] is not None:
        n_max = ctx["n_max"] if ctx["add_only"] else None
        scorer = oracle_for_precision(g, y, ctx["oracle_precision"], seed, n_max=n_max)
    else:
        if ctx["oracle_q"] is None:
            raise UsageError("--oracle-p needs --oracle-q")
        scorer = make_noisy_oracle(y, ctx["oracle_p"], ctx["oracle_q"], seed)

    cfg = RefineConfig(
        do_filter=not ctx["add_only"],
        do_add=not ctx["filter_only"],
        n_max=ctx["n_max"],
        threshold=ctx["threshold"],
    )
    embeddings = parameter_free_embedding(g, X)
    refined = enhance(g, scorer, embeddings, cfg)

    provenance = refine_provenance(scorer, cfg)
    provenance["source_bundle"] = ctx.inputs["bundle"]
    before, after = graph_summary(g, y), graph_summary(refined, y)
    manifest = save_bundle(
        Dataset(refined, X, y, split),
        ctx["out_bundle"],
        extra={"refine": {**provenance, "before": before, "after": after}},
    )

    return emit(
        ctx,
        {
            "before": before,
            "after": after,
            "refine": provenance,
            "output_checksums": manifest["checksums"],
        },
        args.out,
    )
