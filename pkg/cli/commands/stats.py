"""``stats``: positive/negative neighbor counts of a bundle."""

from ..helpers import context, emit, graph_summary, load_input_bundle


def register(subparsers, common):
    parser = subparsers.add_parser(
        "stats",
        parents=[common],
        help="positive-ratio statistics of a labeled graph bundle",
    )
    parser.add_argument("bundle", help="graph bundle directory")
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = context(args, [], {"bundle": None})
    g, _, y, _ = load_input_bundle(ctx, "bundle", ctx["bundle"])
    return emit(ctx, graph_summary(g, y), args.out)
