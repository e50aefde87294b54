"""``train-edge``: fit the edge classifier on a bundle and save a checkpoint."""

from core.bundle_io import save_edge_checkpoint
from core.edge_model import (
    EdgeTrainConfig,
    evaluate_edge_classifier,
    held_out_edge_samples,
    params_summary,
    select_best_edge_classifier,
    split_training_nodes,
)
from core.propagate import parameter_free_embedding

from ..helpers import add_section_flags, context, emit, int_list, load_input_bundle


def register(subparsers, common):
    parser = subparsers.add_parser(
        "train-edge",
        parents=[common],
        help="train the pairwise same-label classifier",
    )
    parser.add_argument("bundle", help="graph bundle directory")
    parser.add_argument("--checkpoint", required=True, help="where to write the classifier JSON")
    add_section_flags(
        parser,
        "edge",
        {
            "dim": (int, "projection width"),
            "hidden": (int_list, "hidden layer widths, comma separated"),
            "epochs": (int, "training epochs"),
            "batch_size": (int, "mini-batch size"),
            "lr": (float, "learning rate"),
            "momentum": (float, "momentum"),
            "weight_decay": (float, "L2 penalty"),
            "balance_tol": (float, "tolerated positive/negative imbalance"),
            "mix_observed_negatives": (bool, "use observed different-label edges as negatives"),
            "val_fraction": (float, "share of training nodes held out for selection"),
            "restarts": (int, "seeds tried; the best held-out accuracy wins"),
        },
    )
    add_section_flags(parser, "refine", {"threshold": (float, "decision threshold")})
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = context(args, ["edge", "refine"], {"bundle": None, "checkpoint": None})
    seed = ctx.require_seed()
    g, X, y, split = load_input_bundle(ctx, "bundle", ctx["bundle"])

    embeddings = parameter_free_embedding(g, X)
    visible = y.restricted_to(split.train)
    fit, held_out = split_training_nodes(split.train, ctx["val_fraction"], seed)
    cfg = EdgeTrainConfig(
        dim=ctx["dim"],
        hidden=tuple(ctx["hidden"]),
        epochs=ctx["epochs"],
        batch_size=ctx["batch_size"],
        lr=ctx["lr"],
        momentum=ctx["momentum"],
        weight_decay=ctx["weight_decay"],
        balance_tol=ctx["balance_tol"],
        mix_observed_negatives=ctx["mix_observed_negatives"],
        seed=seed,
    )
    params, held_report = select_best_edge_classifier(
        embeddings, g, visible, fit, held_out, cfg, ctx["restarts"], ctx["threshold"]
    )

    test_samples = held_out_edge_samples(g, y, split.test)
    test_report = (
        evaluate_edge_classifier(params, test_samples, embeddings, ctx["threshold"])
        if test_samples
        else None
    )

    save_edge_checkpoint(
        params,
        ctx["checkpoint"],
        {"bundle": ctx.inputs["bundle"], "embedding": "A_hat^2 X"},
    )
    return emit(
        ctx,
        {
            "classifier": params_summary(params),
            "final_loss": params.train_losses[-1] if params.train_losses else None,
            "held_out": held_report.to_dict() if held_report else None,
            "test": test_report.to_dict() if test_report else None,
        },
        args.out,
    )
