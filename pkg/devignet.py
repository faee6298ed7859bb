#!/usr/bin/env python3
"""
DeVigNet Command Line
synth | train | eval | infer | ablate | serve

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from config import TOY_MODEL_OVERRIDES, TrainConfig, load_train_config
from utils.errors import DevignetError, UsageError
from utils.logging_utils import setup_logger

logger = setup_logger("devignet")

EXIT_OK = 0
EXIT_USAGE = 1


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; usage errors here are exit 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_resolutions(raw: str) -> List[Optional[int]]:
    resolutions: List[Optional[int]] = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if part == "native":
            resolutions.append(None)
            continue
        try:
            value = int(part)
        except ValueError:
            raise UsageError(f"resolution must be an integer or 'native', got {part!r}")
        if value < 8:
            raise UsageError(f"resolution must be >= 8, got {value}")
        resolutions.append(value)
    if not resolutions:
        raise UsageError("no resolutions given")
    return resolutions


def _train_config(args) -> TrainConfig:
    """Config file, then --toy, then --override/--steps/--output-dir, then DEVIGNET_SEED"""
    overrides = []
    if getattr(args, "toy", False):
        overrides.extend(f"{k}={json.dumps(v)}" for k, v in TOY_MODEL_OVERRIDES.items())
    overrides.extend(args.override or [])
    if args.steps is not None:
        overrides.append(f"steps={args.steps}")
    if args.output_dir:
        overrides.append(f"output_dir={json.dumps(args.output_dir)}")
    return load_train_config(args.config, overrides)


def cmd_synth(args) -> int:
    from services.dataset_service import make_synthetic_dataset

    make_synthetic_dataset(args.n, args.size, args.seed, args.out, clean_dir=args.clean)
    print(json.dumps({"out": str(args.out), "pairs": args.n, "size": args.size}))
    return EXIT_OK


def cmd_train(args) -> int:
    from services.training_service import run_training

    cfg = _train_config(args)
    result = run_training(cfg, resume_from=args.resume)
    print(json.dumps({
        "step": result.checkpoint.step,
        "output_dir": str(result.output_dir),
        "final_loss": result.losses[-1] if result.losses else None,
    }))
    return EXIT_OK


def cmd_eval(args) -> int:
    from services.evaluation_service import evaluate, write_reports

    reports = evaluate(args.ckpt, args.data, _parse_resolutions(args.res), split=args.split)
    for r in reports:
        size = r.resolution or "native"
        for row in (r.baseline, r.model):
            agg = row.aggregate
            print(f"{size}\t{row.label}\tpsnr_db={agg.psnr_db:.4f}\tssim={agg.ssim:.4f}\tmae_255={agg.mae_255:.4f}")
    if args.report:
        write_reports(reports, args.report)
    return EXIT_OK


def cmd_infer(args) -> int:
    from services.inference_service import infer

    out = infer(args.ckpt, args.input, args.output, grid=args.grid)
    print(str(out))
    return EXIT_OK


def cmd_ablate(args) -> int:
    from services.ablation_service import run_ablation

    cfg = _train_config(args)
    report = run_ablation(cfg, args.val, variants=args.variants, train_dir=args.train)
    for name, psnr_db in report.psnr_table().items():
        print(f"{name}\tpsnr_db={psnr_db:.4f}")
    if args.report:
        path = Path(args.report)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "baseline": report.baseline.to_dict(),
            "variants": {k: v.to_dict() for k, v in report.variants.items()},
        }
        with open(path, "w") as f:
            json.dump(payload, f, indent=2)
    return EXIT_OK


def cmd_serve(args) -> int:
    from services.inference_service import serve

    serve(host=args.host, port=args.port)
    return EXIT_OK


def _add_train_options(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="TrainConfig JSON file")
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="dotted config override, repeatable (model.daft.channels=16)")
    p.add_argument("--toy", action="store_true", help="toy scale: C=16, 128x128 crops")
    p.add_argument("--steps", type=int, help="shortcut for --override steps=N")
    p.add_argument("--output-dir", dest="output_dir", help="shortcut for --override output_dir=...")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="devignet", description="DeVigNet vignetting removal")
    sub = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic vignetting dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--clean", type=Path, help="folder of clean images to use instead of procedural textures")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    _add_train_options(p)
    p.add_argument("--resume", type=Path, help="checkpoint directory to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint at one or more resolutions")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--res", default="512,1024,2048", help="comma separated sizes, or 'native'")
    p.add_argument("--split", default="test")
    p.add_argument("--report", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="devignet a single image")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", dest="output", type=Path, required=True)
    p.add_argument("--grid", action="store_true", help="also write an input|output comparison")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="train and compare the structural variants")
    _add_train_options(p)
    p.add_argument("--val", type=Path, required=True)
    p.add_argument("--train", type=Path, help="training dataset, overrides dataset_path")
    p.add_argument("--variants", nargs="+", help="subset of full depth3 depth4 no_acem no_daft")
    p.add_argument("--report", type=Path)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DevignetError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except (ValueError, FileNotFoundError) as e:
        # pydantic ValidationError and JSONDecodeError are ValueErrors
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
