"""Command-line entry points: curate, train, evaluate, optimize-thresholds,
predict, report, and synthetic fixture generation."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import curation, fixtures
from .config import RunConfig
from .evaluation import default_threshold_grid, render_comparison
from .tasks import Task
from .training import Manifest, evaluate_task, predict_frames, train_task


def _split_out_path(template: str, split: str) -> Path:
    if "{split}" in template:
        return Path(template.format(split=split))
    p = Path(template)
    return p.with_name(f"{p.stem}.{split}{p.suffix}")


def cmd_curate(args) -> int:
    task = Task(args.task)
    va_range = tuple(args.va_range)
    root = Path(args.annotations)
    if not root.is_dir():
        print(f"error: {root} is not a directory", file=sys.stderr)
        return 2
    split_dirs = sorted(d for d in root.iterdir() if d.is_dir() and list(d.glob("*.txt")))
    if list(root.glob("*.txt")):
        split_dirs = [root]

    indices = {}
    for directory in split_dirs:
        split = "all" if directory == root else directory.name
        indices[split] = curation.curate_directory(directory, task, va_range)
    if not indices:
        print(f"error: no annotation files under {root}", file=sys.stderr)
        return 2

    for split, index in indices.items():
        out = Path(args.out) if split == "all" else _split_out_path(args.out, split)
        curation.save_index(index, out)
        print(f"{split}: kept {len(index)} / {index.total_parsed} frames -> {out}")

    summary = curation.summarize(indices)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(summary.render() + "\n")
    print(summary.render())
    return 0


def _load_run_config(args) -> RunConfig:
    overrides = {
        "task": args.task,
        "head": args.head,
        "seed": args.seed,
        "steps": args.steps,
    }
    if args.clip:
        overrides["clip"] = True
    if args.data_root:
        overrides.setdefault("data", {})
    if args.config:
        cfg = RunConfig.from_yaml(args.config, **overrides)
    else:
        cfg = RunConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
    if args.data_root:
        cfg.data.root = args.data_root
    return cfg


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    train_index = curation.load_index(cfg.data.train_index_path(cfg.task), cfg.task)
    val_index = curation.load_index(cfg.data.val_index_path(cfg.task), cfg.task)
    out = args.out or f"{cfg.task.value}_{cfg.architecture_label().replace('+', '_')}.ckpt"
    manifest = train_task(cfg, train_index, val_index, out)
    print(f"trained {manifest.meta['architecture']} on {cfg.task.value}: "
          f"best {manifest.best_metric:.4f} at step {manifest.step} -> {manifest.path}")
    return 0


def _index_for(args, cfg: RunConfig):
    if args.index:
        return curation.load_index(args.index, cfg.task)
    path = (cfg.data.train_index_path(cfg.task) if args.split == "train"
            else cfg.data.val_index_path(cfg.task))
    return curation.load_index(path, cfg.task)


def cmd_evaluate(args) -> int:
    manifest = Manifest.load(args.checkpoint)
    cfg = RunConfig.from_dict(manifest.config["run"])
    index = _index_for(args, cfg)
    result = evaluate_task(manifest, index, images_dir=args.images)

    payload = {
        "architecture": manifest.meta["architecture"],
        "task": cfg.task.value,
        "split": args.split,
        "report": result["report"].to_dict(),
    }
    if "report_opt" in result:
        payload["report_opt"] = result["report_opt"].to_dict()
        payload["thresholds"] = result["thresholds"]
    print(result["report"].render())
    if "report_opt" in result:
        print("after per-AU threshold optimization:")
        print(result["report_opt"].render())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(f"report -> {args.out}")
    return 0


def cmd_optimize_thresholds(args) -> int:
    manifest = Manifest.load(args.checkpoint)
    cfg = RunConfig.from_dict(manifest.config["run"])
    if cfg.task is not Task.AU:
        print("error: threshold optimization applies to the AU task", file=sys.stderr)
        return 2
    index = _index_for(args, cfg)
    grid = None
    if args.grid_step:
        step = args.grid_step
        grid = np.arange(step, 1.0 - step / 2, step)
    result = evaluate_task(manifest, index, images_dir=args.images, threshold_grid=grid)
    print(f"macro F1 at 0.5:       {result['report'].score:.6f}")
    print(f"macro F1 optimized:    {result['report_opt'].score:.6f}")
    print("thresholds:", " ".join(f"{t:.2f}" for t in result["thresholds"]))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(
            {"thresholds": result["thresholds"],
             "f1_at_default": result["report"].score,
             "f1_optimized": result["report_opt"].score},
            indent=2, sort_keys=True) + "\n")
        print(f"thresholds -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    thresholds = None
    if args.thresholds:
        thresholds = json.loads(Path(args.thresholds).read_text())["thresholds"]
    manifest = Manifest.load(args.checkpoint)
    task = Task(manifest.meta["task"])
    preds = predict_frames(manifest, args.images, thresholds)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for video, values in preds.items():
        lines = []
        for row in np.atleast_1d(values):
            if task is Task.VA:
                lines.append(f"{row[0]:.6f},{row[1]:.6f}")
            elif task is Task.EXPR:
                lines.append(str(int(row)))
            else:
                lines.append(",".join(str(int(v)) for v in row))
        (out_dir / f"{video}.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote predictions for {len(preds)} video(s) -> {out_dir}")
    return 0


def _report_rows(runs_dir: Path):
    by_arch = {}
    for path in sorted(runs_dir.rglob("*.json")):
        try:
            payload = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError):
            continue
        if not isinstance(payload, dict) or "report" not in payload or "task" not in payload:
            continue
        arch = payload.get("architecture", path.stem)
        row = by_arch.setdefault(arch, {"architecture": arch})
        task = payload["task"]
        score = payload["report"]["score"]
        if task == "va":
            row["CCC_VA"] = score
        elif task == "expr":
            row["F1_Expr"] = score
        else:
            row["F1_AU"] = score
            if "report_opt" in payload:
                row["F1_AUopt"] = payload["report_opt"]["score"]
    return [by_arch[a] for a in sorted(by_arch)]


def cmd_report(args) -> int:
    rows = _report_rows(Path(args.runs))
    if not rows:
        print(f"error: no evaluation reports under {args.runs}", file=sys.stderr)
        return 2
    table = render_comparison(rows)
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n")
    return 0


def cmd_fixtures(args) -> int:
    specs = {}
    tasks = [Task(t) for t in args.task] if args.task else list(fixtures.DEFAULT_SPECS)
    for task in tasks:
        base = fixtures.DEFAULT_SPECS[task]
        spec = fixtures.FixtureSpec(
            task=task,
            train_videos=args.train_videos or base.train_videos,
            val_videos=args.val_videos or base.val_videos,
            frames_per_video=args.frames_per_video or base.frames_per_video,
            image_size=args.image_size or base.image_size,
            noise=base.noise if args.noise is None else args.noise,
            mode=args.mode if task is Task.EXPR else "static",
            invalid_fraction=(base.invalid_fraction if args.invalid_fraction is None
                              else args.invalid_fraction),
        )
        specs[task] = spec
    manifest = fixtures.generate_fixtures(args.out, args.seed, specs)
    total = sum(t["splits"][s]["frames"] for t in manifest["tasks"].values()
                for s in t["splits"])
    print(f"generated {total} frames for {len(specs)} task(s) -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affectkit",
        description="Desk-scale affect pipeline: curation, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="parse annotations, drop sentinel frames, "
                                      "write curated indices and a summary")
    p.add_argument("--task", required=True, choices=[t.value for t in Task])
    p.add_argument("--annotations", required=True,
                   help="task annotation directory (optionally with split subdirs)")
    p.add_argument("--out", required=True, help="index path; split name is inserted "
                                                "before the extension for split layouts")
    p.add_argument("--report", help="write the per-split summary table here")
    p.add_argument("--va-range", nargs=2, type=float, default=[-1.0, 1.0],
                   metavar=("LO", "HI"))
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("train", help="train one task head (optionally the "
                                     "contrastive vision-language route)")
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--task", choices=[t.value for t in Task])
    p.add_argument("--head", choices=["fc", "lstm"])
    p.add_argument("--clip", action="store_true",
                   help="train the prompt-alignment adapter instead of a backbone head")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--data-root", help="dataset root (else config or AFFECTKIT_DATA)")
    p.add_argument("--out", help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a curated split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "val"], default="val")
    p.add_argument("--index", help="explicit index path (overrides --split)")
    p.add_argument("--images", help="images root override")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize-thresholds",
                       help="sweep per-AU decision thresholds on validation data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "val"], default="val")
    p.add_argument("--index")
    p.add_argument("--images")
    p.add_argument("--grid-step", type=float,
                   help="grid resolution in (0,1); default 0.05")
    p.add_argument("--out", help="write the threshold vector JSON here")
    p.set_defaults(func=cmd_optimize_thresholds)

    p = sub.add_parser("predict", help="write per-frame predictions in the "
                                       "annotation text format")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True, help="root containing video subdirectories")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--thresholds", help="thresholds JSON from optimize-thresholds")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="aggregate evaluation reports into the "
                                      "four-column comparison table")
    p.add_argument("--runs", required=True, help="directory of evaluation JSON reports")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fixtures", help="generate the synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", nargs="*", choices=[t.value for t in Task])
    p.add_argument("--mode", choices=["static", "temporal"], default="static")
    p.add_argument("--train-videos", type=int)
    p.add_argument("--val-videos", type=int)
    p.add_argument("--frames-per-video", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--invalid-fraction", type=float)
    p.set_defaults(func=cmd_fixtures)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
