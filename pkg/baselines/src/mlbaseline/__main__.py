"""Run one baseline on a pair of containers and write the JSON result.

    python3 -m mlbaseline mlp --train train.hai1 --val val.hai1 --out r.json
    python3 -m mlbaseline rf2 --train train.hai1 --val val.hai1 \
        --trees 300 --threshold 0.5 --special 6 --out r.json
"""

import argparse
import sys

from .models import run_mlp, run_rf_twostep


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mlbaseline")
    sub = parser.add_subparsers(dest="model", required=True)

    p = sub.add_parser("mlp", help="three-layer perceptron")
    p.add_argument("--epochs", type=int, default=30)

    p = sub.add_parser("rf2", help="two-step random forest")
    p.add_argument("--trees", type=int, default=1_500)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--special", type=int, nargs="*", default=[6])

    for p in sub.choices.values():
        p.add_argument("--train", required=True)
        p.add_argument("--val", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.model == "mlp":
            result = run_mlp(args.train, args.val, epochs=args.epochs, seed=args.seed)
        else:
            result = run_rf_twostep(
                args.train, args.val, trees=args.trees, threshold=args.threshold,
                special_classes=args.special, seed=args.seed,
            )
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    text = result.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
