"""``train-clf``: SGC accuracy on a bundle, optionally against a refined copy."""

import numpy as np

from core.errors import DataError
from core.node_clf import SgcTrainConfig, compare_origin_vs_ne, evaluate, train_sgc

from ..helpers import add_section_flags, context, emit, load_input_bundle


def register(subparsers, common):
    parser = subparsers.add_parser(
        "train-clf",
        parents=[common],
        help="train and evaluate the SGC node classifier",
    )
    parser.add_argument("bundle", help="graph bundle directory")
    parser.add_argument("--refined", help="refined bundle over the same nodes to compare against")
    add_section_flags(
        parser,
        "clf",
        {
            "k": (int, "propagation steps"),
            "epochs": (int, "maximum epochs"),
            "lr": (float, "learning rate"),
            "momentum": (float, "momentum"),
            "weight_decay": (float, "L2 penalty"),
            "patience": (int, "epochs without validation gain before stopping"),
            "normalize_features": (bool, "L2-normalize feature rows"),
        },
    )
    parser.set_defaults(handler=run)


def sgc_config(ctx, seed: int) -> SgcTrainConfig:
    return SgcTrainConfig(
        K=ctx["k"],
        epochs=ctx["epochs"],
        lr=ctx["lr"],
        momentum=ctx["momentum"],
        weight_decay=ctx["weight_decay"],
        patience=ctx["patience"],
        normalize_features=ctx["normalize_features"],
        seed=seed,
    )


def run(args) -> int:
    ctx = context(args, ["clf"], {"bundle": None, "refined": None})
    seed = ctx.require_seed()
    g, X, y, split = load_input_bundle(ctx, "bundle", ctx["bundle"])
    cfg = sgc_config(ctx, seed)

    if ctx["refined"] is None:
        model = train_sgc(g, X, y, split, cfg)
        return emit(ctx, {"origin": evaluate(model, g, X, y, split.test).to_dict()}, args.out)

    g_ne, X_ne, y_ne, _ = load_input_bundle(ctx, "refined", ctx["refined"])
    if g_ne.num_nodes != g.num_nodes or not np.array_equal(y_ne.labels, y.labels):
        raise DataError("refined bundle does not cover the same labeled nodes")
    if not np.array_equal(X_ne, X):
        raise DataError("refined bundle carries different node features")
    report = compare_origin_vs_ne(g, g_ne, X, y, split, cfg)
    return emit(ctx, report.to_dict(), args.out)
