"""``convert``: turn a raw citation dataset into a bundle."""

from core.bundle_io import convert_citation_dataset, file_sha256, save_bundle

from ..helpers import context, emit, graph_summary


def register(subparsers, common):
    parser = subparsers.add_parser(
        "convert",
        parents=[common],
        help="convert <name>.content/<name>.cites into a graph bundle",
    )
    parser.add_argument("raw_dir", help="directory holding the raw files")
    parser.add_argument("--name", required=True, help="dataset stem, e.g. cora")
    parser.add_argument("--out-bundle", dest="out_bundle", required=True, help="bundle directory to write")
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = context(args, [], {"raw_dir": None, "name": None, "out_bundle": None})
    seed = ctx.require_seed()
    dataset, summary = convert_citation_dataset(ctx["raw_dir"], ctx["name"], seed)
    for suffix in ("content", "cites"):
        ctx.record_input(suffix, file_sha256(f"{ctx['raw_dir']}/{ctx['name']}.{suffix}"))

    manifest = save_bundle(dataset, ctx["out_bundle"], extra={"converted": summary})
    return emit(
        ctx,
        {
            "conversion": summary,
            "graph": graph_summary(dataset.graph, dataset.labels),
            "output_checksums": manifest["checksums"],
        },
        args.out,
    )
