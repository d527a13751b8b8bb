"""Command-line entry points: data generation, training, evaluation, serving."""

from __future__ import annotations

import argparse
import sys

import numpy as np


def _cmd_generate_data(args) -> int:
    from .dataset import generate_shapes, write_dataset
    samples = generate_shapes(args.seed, args.count, size=args.size)
    manifest = write_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples, manifest at {manifest}")
    return 0


def _cmd_train(args) -> int:
    from .dataset import read_dataset
    from .training import ModelConfig, TrainConfig, load_config, train
    if args.config:
        model_cfg, train_cfg = load_config(args.config)
    else:
        model_cfg, train_cfg = ModelConfig(), TrainConfig()
    samples = read_dataset(args.data)
    train(model_cfg, train_cfg, samples, out_checkpoint=args.out,
          log_path=args.log, quiet=False)
    print(f"checkpoint written to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    from .dataset import read_dataset
    from .evaluation import evaluate_noc, write_report
    from .interaction import synthesize_initial_mask
    from .model.checkpoint import load_checkpoint
    model, _ = load_checkpoint(args.checkpoint)
    samples = read_dataset(args.data)
    initial_masks = None
    if args.correction_mode:
        rng = np.random.default_rng(args.correction_seed)
        initial_masks = [synthesize_initial_mask(s.gt, rng) for s in samples]
    report = evaluate_noc(model, samples, target_iou=args.target,
                          initial_masks=initial_masks)
    write_report(report, args.out)
    print(f"NoC@85 {report.noc85:.3f}  NoC@90 {report.noc90:.3f}  "
          f"NoF@85 {report.nof85}  NoF@90 {report.nof90}")
    print(f"report written to {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve
    serve(args.checkpoint, port=args.port, host=args.host,
          max_sessions=args.max_sessions)
    return 0


def _cmd_ablation(args) -> int:
    from .ablation import run_ablation
    summary = run_ablation(args.out, seeds=tuple(args.seeds),
                           n_train=args.n_train, n_eval=args.n_eval,
                           quiet=False)
    for variant, data in summary["variants"].items():
        print(f"{variant}: mean NoC@85 {data['mean_noc85']:.3f}")
    print(f"ordering holds: {summary['ordering_holds']}")
    return 0 if summary["ordering_holds"] else 1


def _cmd_bench(args) -> int:
    import importlib.util
    import os
    path = os.path.join(os.path.dirname(__file__), os.pardir, os.pardir,
                        "benchmarks", "bench_kernels.py")
    path = os.path.abspath(path)
    if not os.path.exists(path):
        print("benchmarks/bench_kernels.py not found; run from a source "
              "checkout or invoke it directly", file=sys.stderr)
        return 1
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main()
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="clickseg",
        description="Interactive click-guided segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a synthetic shape dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate_data)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--config", help="key=value config file (model.* / train.*)")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--log", help="loss log path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="run the NoC benchmark")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", type=float, default=0.85)
    p.add_argument("--out", required=True, help="report path")
    p.add_argument("--correction-mode", action="store_true",
                   help="start from synthesized imperfect masks")
    p.add_argument("--correction-seed", type=int, default=0)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("serve", help="start the HTTP session service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--max-sessions", type=int, default=64)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("ablation", help="train and compare the three variants")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--n-train", type=int, default=120)
    p.add_argument("--n-eval", type=int, default=100)
    p.set_defaults(func=_cmd_ablation)

    p = sub.add_parser("bench", help="compare compiled and python kernels")
    p.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
