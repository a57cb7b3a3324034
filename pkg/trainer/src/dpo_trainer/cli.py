"""Command line: train an artifact from preference JSONL, or serve one."""

from __future__ import annotations

import argparse
import json
import sys

from .data import load_prefs, split_holdout
from .errors import TrainerError
from .model import load_artifact, save_artifact
from .serve import ScoreServer
from .train import TrainConfig, build_model, evaluate_loss, mean_reciprocal_rank, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpo-trainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit adapters on a preference JSONL")
    p_train.add_argument("--prefs", required=True, help="preference JSONL path")
    p_train.add_argument("--out", required=True, help="artifact output path")
    p_train.add_argument("--holdout", type=float, default=0.2, help="held-out fraction")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--learning-rate", type=float)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--precision", choices=("bf16", "fp32"))

    p_serve = sub.add_parser("serve", help="serve an artifact's /score endpoint")
    p_serve.add_argument("--model", required=True, help="artifact path")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8200)

    return parser


def _cmd_train(args) -> int:
    config = TrainConfig()
    for name in ("epochs", "learning_rate", "seed", "precision"):
        value = getattr(args, name)
        if value is not None:
            setattr(config, name, value)
    pairs = load_prefs(args.prefs)
    train_pairs, holdout = split_holdout(pairs, args.holdout, config.seed)

    baseline = build_model(config)
    initial_loss = evaluate_loss(baseline, holdout)
    initial_mrr = mean_reciprocal_rank(baseline, holdout)

    result = train(train_pairs, config)
    final_loss = evaluate_loss(result.model, holdout)
    final_mrr = mean_reciprocal_rank(result.model, holdout)
    save_artifact(result.model, args.out, result.loss_curve)

    print(
        json.dumps(
            {
                "artifact": args.out,
                "pairs": {"train": len(train_pairs), "holdout": len(holdout)},
                "holdout_loss": {"initial": initial_loss, "final": final_loss},
                "holdout_mrr": {"initial": initial_mrr, "final": final_mrr},
                "loss_curve": result.loss_curve,
            },
            ensure_ascii=False,
        )
    )
    return 0


def _cmd_serve(args) -> int:
    model, _ = load_artifact(args.model)
    server = ScoreServer(model, host=args.host, port=args.port)
    print(json.dumps({"serving": server.endpoint}), flush=True)
    server.serve_forever()
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_train(args)
        return _cmd_serve(args)
    except TrainerError as exc:
        sys.stderr.write(json.dumps({"error": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
