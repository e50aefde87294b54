"""``degrade``: add different-label neighbors to every node."""

from core.bundle_io import save_bundle
from core.node_clf import Dataset
from core.synth import degrade_graph

from ..helpers import context, emit, graph_summary, load_input_bundle


def register(subparsers, common):
    parser = subparsers.add_parser(
        "degrade",
        parents=[common],
        help="lower the positive ratio by adding different-label edges",
    )
    parser.add_argument("bundle", help="graph bundle directory")
    parser.add_argument("--out-bundle", dest="out_bundle", required=True, help="degraded bundle directory")
    parser.add_argument("--per-node", dest="per_node", type=int, help="new edges per node (default: 5)")
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = context(args, [], {"bundle": None, "out_bundle": None, "per_node": 5})
    seed = ctx.require_seed()
    g, X, y, split = load_input_bundle(ctx, "bundle", ctx["bundle"])

    degraded = degrade_graph(g, y, ctx["per_node"], seed)
    manifest = save_bundle(
        Dataset(degraded, X, y, split),
        ctx["out_bundle"],
        extra={"degrade": {"per_node": ctx["per_node"], "seed": seed, "source_bundle": ctx.inputs["bundle"]}},
    )
    return emit(
        ctx,
        {
            "before": graph_summary(g, y),
            "after": graph_summary(degraded, y),
            "output_checksums": manifest["checksums"],
        },
        args.out,
    )
