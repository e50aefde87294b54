"""``reco``: rank items with neighbor-aggregated embeddings and report PRE/REC/NDCG@k."""

from core.bundle_io import bundle_digest, file_sha256, load_embeddings, load_interactions, load_reco_bundle
from core.errors import UsageError
from core.reco import (
    POLICIES,
    aggregate_and_score,
    graph_from_interactions,
    rank_and_evaluate,
    select_neighbors,
    split_interactions,
    tune_alpha,
)

from ..helpers import add_section_flags, context, emit


def register(subparsers, common):
    parser = subparsers.add_parser(
        "reco",
        parents=[common],
        help="evaluate neighbor sampling policies for recommendation",
    )
    source = parser.add_argument_group("inputs (a bundle, or --train/--test/--embeddings)")
    source.add_argument("bundle", nargs="?", help="interaction bundle directory from synth --kind bipartite")
    source.add_argument("--train", help="training interactions file")
    source.add_argument("--test", help="test interactions file")
    source.add_argument("--embeddings", help="embedding header JSON")
    source.add_argument(
        "--interactions-format",
        dest="interactions_format",
        choices=("tsv", "adjacency"),
        help="user<TAB>item[<TAB>weight] lines or 'user item item ...' lines (default: tsv)",
    )
    parser.add_argument("--tune", dest="tune", action="store_true", default=None, help="choose alpha on a tuning slice")
    add_section_flags(
        parser,
        "reco",
        {
            "policy": (str, f"one of {', '.join(POLICIES)} or 'all'"),
            "k_neighbors": (int, "neighbors kept per node"),
            "top_k": (int, "ranking cutoff"),
            "alpha": (float, "weight of the node's own embedding"),
            "walks": (int, "random walks per node"),
            "walk_length": (int, "steps per random walk"),
        },
    )
    parser.set_defaults(handler=run)


def _load(ctx):
    if ctx["bundle"] is not None:
        bundle = load_reco_bundle(ctx["bundle"])
        ctx.record_input("bundle", bundle_digest(ctx["bundle"]))
        return bundle.train, bundle.test, bundle.embeddings
    if not (ctx["train"] and ctx["test"] and ctx["embeddings"]):
        raise UsageError("give an interaction bundle or all of --train, --test and --embeddings")
    fmt = ctx["interactions_format"]
    train = load_interactions(ctx["train"], fmt)
    test = load_interactions(ctx["test"], fmt)
    embeddings = load_embeddings(ctx["embeddings"])
    for name in ("train", "test", "embeddings"):
        ctx.record_input(name, file_sha256(ctx[name]))
    return train, test, embeddings


def evaluate_policy(policy, g_train, embeddings, test, ctx, seed, alpha):
    selection = select_neighbors(
        g_train, embeddings, policy, ctx["k_neighbors"], seed, ctx["walks"], ctx["walk_length"]
    )
    return rank_and_evaluate(aggregate_and_score(embeddings, selection, alpha), g_train, test, ctx["top_k"])


def run(args) -> int:
    ctx = context(
        args,
        ["reco"],
        {
            "bundle": None,
            "train": None,
            "test": None,
            "embeddings": None,
            "interactions_format": "tsv",
            "tune": False,
        },
    )
    seed = ctx.require_seed()
    policies = POLICIES if ctx["policy"] == "all" else (ctx["policy"],)
    if ctx["policy"] != "all" and ctx["policy"] not in POLICIES:
        raise UsageError(f"unknown policy {ctx['policy']!r}; choose from {', '.join(POLICIES)} or 'all'")

    train, test, embeddings = _load(ctx)
    num_users, num_items = embeddings.num_users, embeddings.num_items
    g_train = graph_from_interactions(train, num_users, num_items)

    raw = aggregate_and_score(embeddings, select_neighbors(g_train, embeddings, "intuitive", 1, seed), 1.0)
    result = {"raw": rank_and_evaluate(raw, g_train, test, ctx["top_k"]).to_dict(), "policies": {}}

    for policy in policies:
        alpha = ctx["alpha"]
        entry = {}
        if ctx["tune"]:
            fit, tune = split_interactions(train, num_items, fractions=(0.8125, 0.1875), seed=seed)
            g_fit = graph_from_interactions(fit, num_users, num_items)
            selection = select_neighbors(
                g_fit, embeddings, policy, ctx["k_neighbors"], seed, ctx["walks"], ctx["walk_length"]
            )
            alpha, curve = tune_alpha(embeddings, selection, g_fit, tune, ctx["top_k"])
            entry["tuning"] = {f"{a:.2f}": ndcg for a, ndcg in curve.items()}
        report = evaluate_policy(policy, g_train, embeddings, test, ctx, seed, alpha)
        entry.update(report.to_dict())
        entry["alpha"] = alpha
        result["policies"][policy] = entry

    return emit(ctx, result, args.out)
