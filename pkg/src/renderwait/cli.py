"""Command-line entry point: ``renderwait <command> ...``."""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys

from renderwait import __version__
from renderwait.augment import DEFAULT_RATIO
from renderwait.errors import InvalidArgument, RenderWaitError
from renderwait.sampling import DEFAULT_EPSILON

log = logging.getLogger("renderwait")

SEED_ENV = "RENDERWAIT_SEED"
DEFAULTS = {
    "seed": 0,
    "epsilon": DEFAULT_EPSILON,
    "ratio": DEFAULT_RATIO,
    "epochs": 20,
    "poll_interval_ms": 100,
    "max_wait_ms": 60_000,
    "confirm": 2,
    "input_width": 56,
    "input_height": 96,
}
_CASTS = {"seed": int, "epsilon": float, "ratio": float, "epochs": int, "poll_interval_ms": int,
          "max_wait_ms": int, "confirm": int, "input_width": int, "input_height": int}


class UsageError(Exception):
    """Bad invocation; reported with exit status 2."""


def read_config(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _CASTS:
                raise UsageError(f"{path}:{n}: unknown key {key!r}")
            try:
                out[key] = _CASTS[key](value.strip("\"'"))
            except ValueError:
                raise UsageError(f"{path}:{n}: bad value for {key}: {value!r}") from None
    return out


def _settings(args: argparse.Namespace) -> dict:
    """Flags win over the environment (seed only), which wins over the config file."""
    conf = read_config(args.config) if getattr(args, "config", None) else {}
    out = dict(DEFAULTS)
    out.update(conf)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            out["seed"] = int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    if not (0.0 < out["epsilon"] <= 1.0):
        raise UsageError(f"epsilon must lie in (0, 1], got {out['epsilon']}")
    if out["ratio"] < 0:
        raise UsageError(f"ratio must be non-negative, got {out['ratio']}")
    if out["seed"] < 0:
        raise UsageError("seed must be non-negative")
    for key in ("epochs", "poll_interval_ms", "max_wait_ms", "confirm", "input_width", "input_height"):
        if out[key] <= 0:
            raise UsageError(f"{key} must be positive")
    return out


def _epsilon(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (0.0 < v <= 1.0):
        raise argparse.ArgumentTypeError(f"epsilon must lie in (0, 1], got {v}")
    return v


def _write_text(path: str, text: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _expand_screencasts(paths: list[str]) -> list[str]:
    """Accept screencast directories or directories that contain them."""
    out = []
    for p in paths:
        if os.path.isfile(os.path.join(p, "labels.csv")):
            out.append(p)
        else:
            found = sorted(os.path.dirname(x) for x in glob.glob(os.path.join(p, "*", "labels.csv")))
            if not found:
                raise InvalidArgument(f"{p}: no screencasts (labels.csv) found")
            out.extend(found)
    return out


# --- commands ------------------------------------------------------------------


def cmd_simulate(args, cfg) -> int:
    from renderwait import suites

    if args.what == "suite":
        for path in suites.write_suite(args.out, args.name):
            print(path)
    else:
        paths = suites.generate_screencasts(args.out, args.count, cfg["seed"], n_actions=args.actions)
        for path in paths:
            print(path)
    return 0


def cmd_dataset(args, cfg) -> int:
    from renderwait import renderstate
    from renderwait.imaging import frame_filename, write_frame

    if args.what == "sample":
        frames = renderstate._read_screencast(args.input)
        kept = renderstate.sample_screencast(frames, cfg["epsilon"])
        os.makedirs(args.out, exist_ok=True)
        lines = []
        for frame, label in kept:
            write_frame(frame, os.path.join(args.out, frame_filename(frame)))
            lines.append(f"{frame.timestamp_ms},{label.value},")
        _write_text(os.path.join(args.out, "labels.csv"), "".join(x + "\n" for x in lines))
        kept_names = {frame_filename(f) for f, _ in kept}
        names = [frame_filename(f) for f, _ in frames]
        sidecar = {
            "epsilon": cfg["epsilon"],
            "kept": sorted(kept_names),
            "discarded": [n for n in names if n not in kept_names],
        }
        _write_text(os.path.join(args.out, "sample.json"), json.dumps(sidecar, indent=1) + "\n")
        print(f"kept {len(kept)} of {len(frames)} frames")
        return 0
    if args.what == "augment":
        captured = []
        for d in _expand_screencasts(args.input):
            captured.extend((f, s.label) for f, s in renderstate._read_screencast(d))
        manifest = renderstate.assemble_dataset(captured, args.out, cfg["ratio"], cfg["seed"])
    else:
        manifest = renderstate.build_dataset(
            _expand_screencasts(args.input), args.out, cfg["epsilon"], cfg["ratio"], cfg["seed"]
        )
    for split, counts in manifest.counts().items():
        print(f"{split},{counts['FullyRendered']},{counts['Partial']}")
    return 0


def cmd_train(args, cfg) -> int:
    from renderwait.nn import ModelConfig
    from renderwait.plotting import training_figure
    from renderwait.renderstate import DatasetManifest, train_classifier

    manifest = DatasetManifest.load(args.manifest)
    config = ModelConfig(input_width=cfg["input_width"], input_height=cfg["input_height"])
    result = train_classifier(manifest, cfg["epochs"], cfg["seed"], config=config)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "wb") as fh:
        fh.write(result.checkpoint)
    stem = os.path.splitext(args.out)[0]
    rows = ["epoch,lr,train_loss,val_loss"]
    rows += [f"{h['epoch']},{h['lr']:.6g},{h['train_loss']:.6f},{h['val_loss']:.6f}" for h in result.history]
    _write_text(stem + "_history.csv", "\n".join(rows) + "\n")
    training_figure(result.history, stem + "_history.png")
    print(f"best epoch {result.best_epoch}")
    return 0


def _read_checkpoint(path: str):
    from renderwait.renderstate import Predictor

    with open(path, "rb") as fh:
        return Predictor(fh.read())


def cmd_eval(args, cfg) -> int:
    from renderwait.renderstate import DatasetManifest, evaluate

    s = evaluate(_read_checkpoint(args.checkpoint), DatasetManifest.load(args.manifest), args.split)
    print("precision,recall,f1,precision_defined,tp,fp,fn,tn")
    print(f"{s.precision:.6f},{s.recall:.6f},{s.f1:.6f},{str(s.precision_defined).lower()},"
          f"{s.tp},{s.fp},{s.fn},{s.tn}")
    return 0


def cmd_classify(args, cfg) -> int:
    from renderwait.imaging import read_frame

    predictor = _read_checkpoint(args.checkpoint)
    for path in args.frames:
        state, conf = predictor.predict(read_frame(path))
        print(f"{path},{state.label.value},{conf:.6f}")
    return 0


def cmd_record(args, cfg) -> int:
    from renderwait.devicesim import load_scenario_file
    from renderwait.replay import record_scenario

    app, scenario = load_scenario_file(args.scenario)
    if scenario is None:
        raise InvalidArgument(f"{args.scenario}: file defines no scenario")
    script = record_scenario(app, scenario)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    script.save(args.out)
    print(f"recorded {len(script.events)} events, {script.total_recorded_ms} ms")
    return 0


def _strategies(texts: list[str], cfg):
    from renderwait.replay import WaitStrategy

    return [WaitStrategy.parse(t, cfg["poll_interval_ms"], cfg["max_wait_ms"], cfg["confirm"]) for t in texts]


def cmd_replay(args, cfg) -> int:
    from renderwait.devicesim import Simulator, load_scenario_file
    from renderwait.replay import EventScript, replay

    app, _ = load_scenario_file(args.scenario)
    script = EventScript.load(args.script)
    (strategy,) = _strategies([args.strategy], cfg)
    predictor = _read_checkpoint(args.checkpoint) if args.checkpoint else None
    if strategy.kind == "adaptive" and predictor is None:
        raise UsageError("--strategy adaptive needs --checkpoint")
    report = replay(Simulator(app, args.profile or script.profile, cfg["seed"]), script, strategy, predictor,
                    cfg["seed"])
    print(json.dumps(report.__dict__, sort_keys=True))
    return 0


def cmd_bench(args, cfg) -> int:
    from renderwait.devicesim import load_scenario_file
    from renderwait.plotting import bench_figure
    from renderwait.replay import bench

    files = sorted(glob.glob(os.path.join(args.suite, "*.json")))
    suite = []
    for path in files:
        app, scenario = load_scenario_file(path)
        if scenario is not None:
            suite.append((app, scenario))
    if not suite:
        raise InvalidArgument(f"{args.suite}: no scenario files")
    predictor = _read_checkpoint(args.checkpoint) if args.checkpoint else None
    names = args.strategies.split(",") if args.strategies else ["fixed:1", "fixed:2", "fixed:5", "fixed:10", "oracle"]
    if predictor is not None and not args.strategies:
        names.append("adaptive")
    strategies = _strategies(names, cfg)
    if any(s.kind == "adaptive" for s in strategies) and predictor is None:
        raise UsageError("the adaptive strategy needs --checkpoint")
    profiles = args.profiles.split(",") if args.profiles else None
    seeds = [cfg["seed"] + i for i in range(args.runs)]
    result = bench(suite, profiles, strategies, seeds, predictor)
    _write_text(args.out, result.to_csv())
    stem = os.path.splitext(args.out)[0]
    _write_text(stem + "_summary.csv", result.summary_csv())
    if not args.no_figure:
        bench_figure(result.aggregates, stem + ".png")
    sys.stdout.write(result.summary_csv())
    return 0


# --- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"RNG seed (fallback: ${SEED_ENV}, then config)")
    common.add_argument("--config", default=None, help="key = value settings file; flags take precedence")
    common.add_argument("-v", "--verbose", action="store_true", help="progress logging on standard error")

    p = argparse.ArgumentParser(prog="renderwait", description="Rendering-aware record and replay toolkit.")
    p.add_argument("--version", action="version", version=f"renderwait {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    sim = sub.add_parser("simulate", help="write scenario suites or simulator screencasts")
    sim_sub = sim.add_subparsers(dest="what", required=True, metavar="target")
    s = sim_sub.add_parser("suite", parents=[common], help="write a scenario suite")
    s.add_argument("--name", default="standard", choices=("standard", "smoke"))
    s.add_argument("--out", required=True)
    s = sim_sub.add_parser("screencasts", parents=[common], help="record labelled random sessions")
    s.add_argument("--count", type=int, default=28)
    s.add_argument("--actions", type=int, default=16)
    s.add_argument("--out", required=True)

    ds = sub.add_parser("dataset", help="sampling, augmentation and dataset assembly")
    ds_sub = ds.add_subparsers(dest="what", required=True, metavar="stage")
    s = ds_sub.add_parser("sample", parents=[common], help="HAC-sample one screencast")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epsilon", type=_epsilon, default=None)
    s = ds_sub.add_parser("augment", parents=[common], help="augment sampled frames into a dataset")
    s.add_argument("--in", dest="input", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--ratio", type=float, default=None)
    s = ds_sub.add_parser("build", parents=[common], help="sample, augment and split screencasts")
    s.add_argument("--in", dest="input", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epsilon", type=_epsilon, default=None)
    s.add_argument("--ratio", type=float, default=None)

    s = sub.add_parser("train", parents=[common], help="train the rendering-state classifier")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--input-width", dest="input_width", type=int, default=None)
    s.add_argument("--input-height", dest="input_height", type=int, default=None)

    s = sub.add_parser("eval", parents=[common], help="precision/recall/F1 on a dataset split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", default="test", choices=("train", "val", "test"))

    s = sub.add_parser("classify", parents=[common], help="predict the rendering state of frames")
    s.add_argument("frames", nargs="+")
    s.add_argument("--checkpoint", required=True)

    s = sub.add_parser("record", parents=[common], help="record a scenario into an event script")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("replay", parents=[common], help="replay an event script")
    s.add_argument("--script", required=True)
    s.add_argument("--scenario", required=True, help="scenario file providing the app definition")
    s.add_argument("--profile", default=None)
    s.add_argument("--strategy", default="adaptive")
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--poll-interval-ms", dest="poll_interval_ms", type=int, default=None)
    s.add_argument("--max-wait-ms", dest="max_wait_ms", type=int, default=None)
    s.add_argument("--confirm", type=int, default=None, help="consecutive FullyRendered polls before dispatch")

    s = sub.add_parser("bench", parents=[common], help="replay a suite under several strategies")
    s.add_argument("--suite", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--strategies", default=None, help="comma list, e.g. fixed:1,fixed:10,adaptive")
    s.add_argument("--profiles", default=None, help="comma list of profile names")
    s.add_argument("--runs", type=int, default=3, help="seeds per cell, starting at --seed")
    s.add_argument("--no-figure", action="store_true")
    s.add_argument("--poll-interval-ms", dest="poll_interval_ms", type=int, default=None)
    s.add_argument("--max-wait-ms", dest="max_wait_ms", type=int, default=None)
    s.add_argument("--confirm", type=int, default=None, help="consecutive FullyRendered polls before dispatch")
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "classify": cmd_classify,
    "record": cmd_record,
    "replay": cmd_replay,
    "bench": cmd_bench,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _settings(args)
        if args.command == "bench" and args.runs < 1:
            raise UsageError("--runs must be at least 1")
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"renderwait: error: {exc}", file=sys.stderr)
        return 2
    except (RenderWaitError, OSError) as exc:
        print(f"renderwait: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
