"""``synth``: write a synthetic labeled-graph or interaction bundle."""

from core.bundle_io import save_bundle, save_reco_bundle
from core.errors import UsageError
from core.synth import SynthSpec, generate_bipartite, generate_labeled_graph

from ..helpers import add_section_flags, context, emit, graph_summary

BIPARTITE_DEFAULTS = {
    "users": 500,
    "items": 1000,
    "groups": 5,
    "noise": 0.1,
    "embed_noise": 0.2,
    "dim": 64,
    "mean_interactions": 15.0,
}

SYNTH_FLAGS = {
    "num_nodes": (int, "number of nodes"),
    "num_classes": (int, "number of classes"),
    "target_ratio": (float, "probability that an edge joins same-class nodes"),
    "mean_degree": (float, "expected node degree"),
    "feature_dim": (int, "feature width"),
    "class_separation": (float, "distance between class feature means"),
}


def register(subparsers, common):
    parser = subparsers.add_parser(
        "synth",
        parents=[common],
        help="generate a synthetic bundle",
    )
    parser.add_argument("--kind", choices=("labeled", "bipartite"), default="labeled")
    parser.add_argument("--out-bundle", dest="out_bundle", required=True, help="bundle directory to write")
    add_section_flags(parser, "synth", SYNTH_FLAGS)
    bipartite = parser.add_argument_group("bipartite")
    bipartite.add_argument("--users", type=int, help="number of users (default: 500)")
    bipartite.add_argument("--items", type=int, help="number of items (default: 1000)")
    bipartite.add_argument("--groups", type=int, help="latent preference groups (default: 5)")
    bipartite.add_argument("--noise", type=float, help="cross-group interaction weight (default: 0.1)")
    bipartite.add_argument("--embed-noise", dest="embed_noise", type=float, help="embedding noise sigma (default: 0.2)")
    bipartite.add_argument("--dim", type=int, help="embedding width (default: 64)")
    bipartite.add_argument(
        "--mean-interactions", dest="mean_interactions", type=float, help="interactions per user (default: 15)"
    )
    parser.set_defaults(handler=run)


def run(args) -> int:
    if args.kind == "labeled":
        return _run_labeled(args)
    return _run_bipartite(args)


def _run_labeled(args) -> int:
    ctx = context(args, ["synth"], {"kind": "labeled", "out_bundle": None})
    seed = ctx.require_seed()
    spec = SynthSpec(**{key: ctx[key] for key in SYNTH_FLAGS}, seed=seed)
    dataset = generate_labeled_graph(spec)
    manifest = save_bundle(dataset, ctx["out_bundle"], extra={"synth": spec.to_dict()})
    return emit(
        ctx,
        {"graph": graph_summary(dataset.graph, dataset.labels), "output_checksums": manifest["checksums"]},
        args.out,
    )


def _run_bipartite(args) -> int:
    ctx = context(args, [], {"kind": "bipartite", "out_bundle": None, **BIPARTITE_DEFAULTS})
    seed = ctx.require_seed()
    if ctx["users"] < 1 or ctx["items"] < 1:
        raise UsageError("--users and --items must be >= 1")
    data = generate_bipartite(
        ctx["users"],
        ctx["items"],
        ctx["groups"],
        ctx["noise"],
        seed,
        embed_noise=ctx["embed_noise"],
        dim=ctx["dim"],
        mean_interactions=ctx["mean_interactions"],
    )
    spec = {key: ctx[key] for key in BIPARTITE_DEFAULTS}
    spec["seed"] = seed
    manifest = save_reco_bundle(
        data.graph.interactions(), data.test, data.embeddings, ctx["out_bundle"], extra={"synth": spec}
    )
    return emit(
        ctx,
        {
            "train_interactions": data.graph.num_interactions,
            "test_interactions": len(data.test),
            "output_checksums": manifest["checksums"],
        },
        args.out,
    )
