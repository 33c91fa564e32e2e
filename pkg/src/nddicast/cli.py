"""Command-line entry point: ``nddicast <subcommand> [options]``.

Subcommands: synth, indices, train, predict, compare, gradcheck.

Options may also come from ``--config FILE``: either ``key = value`` lines
(``#`` starts a comment; keys are option names with ``-`` or ``_``) or a
``manifest.json`` written by an earlier run. Flags given on the command line
win over the file. Every run writes ``manifest.json`` into ``--out``.

Exit codes: 0 success, 1 failed check, 2 usage or data error, 3 training
divergence. ``NDDI_THREADS`` caps worker and BLAS threads.
"""

from __future__ import annotations

import argparse
import ast
import contextlib
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DivergenceError, NddiError
from .forecast.model import ModelConfig, TdCnnModel
from .forecast.training import TrainConfig, train
from .forecast.workflows import compare_workflows_detailed
from .indices import IndexKind, compute_index
from .plotting import PREDICTION_CMAP, save_comparison_figure, save_loss_curves, save_raster_png
from .raster_io import BandStack, build_dataset, load_directory, save_band_stack, tile_raster, untile
from .synth import write_synth
from .tensor_nn.gradcheck import corrupted_backward, gradient_check

log = logging.getLogger("nddicast")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


# -- config handling ---------------------------------------------------------


def _parse_value(text: str):
    text = text.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip("\"'")


def read_config(path) -> dict:
    """Load ``key = value`` lines, or the ``config`` block of a manifest."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        data = data.get("config", data)
        return {k.replace("-", "_"): v for k, v in data.items() if k != "command"}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = _parse_value(value)
    return out


def _size(text) -> tuple[int, int]:
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return int(text[0]), int(text[1])
    try:
        h, w = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 300x300, got {text!r}") from None
    return h, w


def _filters(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"filters must be comma-separated integers, got {text!r}") from None


def _kind(text: str) -> str:
    kind = str(text).upper()
    if kind not in IndexKind.__members__:
        raise argparse.ArgumentTypeError(f"invalid kind {text!r} (choose from NDVI, NDMI, NDDI)")
    return kind


def _optional_int(text):
    if text is None or str(text).lower() in ("", "none", "all"):
        return None
    return int(text)


# -- parser ------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="key=value config file or a previous manifest.json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _training_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", type=Path, required=True, help="directory of .s2dw band files")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--window", type=_optional_int, default=None,
                   help="frames per sample including the target (default: whole series)")
    p.add_argument("--sliding", action="store_true", help="add every stride-1 window to the training split")
    p.add_argument("--patience", type=int, default=0)
    p.add_argument("--split", type=float, default=0.8, help="training fraction of tile sequences")
    p.add_argument("--td-filters", type=_filters, default=(16, 32))
    p.add_argument("--hidden", type=int, default=32)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nddicast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("synth", parents=[common], help="generate synthetic band stacks")
    p.add_argument("--locations", type=int, default=1)
    p.add_argument("--frames", type=int, default=39)
    p.add_argument("--size", type=_size, default=(300, 300))
    p.add_argument("--water-fraction", type=float, default=0.1)

    p = sub.add_parser("indices", parents=[common], help="compute index rasters and heat maps")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--kind", type=_kind, required=True)

    p = sub.add_parser("train", parents=[common], help="train one TD-CNN on an index")
    _training_args(p)
    p.add_argument("--kind", type=_kind, required=True)

    p = sub.add_parser("predict", parents=[common], help="predict the frame after each series")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--kind", type=_kind, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--window", type=_optional_int, default=None)

    p = sub.add_parser("compare", parents=[common], help="early vs late NDDI workflow comparison")
    _training_args(p)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient verification")
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--size", type=int, default=8, help="square frame size of the probe sample")
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--td-filters", type=_filters, default=(4,))
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--negative-control", action="store_true",
                   help="also run with a deliberately corrupted backward pass (must fail)")
    return parser


def _peek_config(argv) -> tuple[str | None, str | None]:
    """Find the subcommand and ``--config`` value without enforcing required flags."""
    command = config = None
    it = iter(argv)
    for tok in it:
        if tok == "--config":
            config = next(it, None)
        elif tok.startswith("--config="):
            config = tok.split("=", 1)[1]
        elif command is None and not tok.startswith("-"):
            command = tok
    return command, config


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    command, config = _peek_config(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if config is not None and command in subparsers:
        try:
            values = read_config(config)
        except (OSError, ValueError, NddiError) as exc:
            parser.error(f"cannot read config {config}: {exc}")
        subparser = subparsers[command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            parser.error(f"unknown config keys for {command}: {', '.join(unknown)}")
        values.pop("config", None)
        # file values become defaults, so explicit flags still win
        for action in subparser._actions:
            value = values.get(action.dest)
            if value is not None and action.type is not None:
                values[action.dest] = action.type(value if isinstance(value, (list, tuple)) else str(value))
            if action.dest in values:
                action.required = False
        subparser.set_defaults(**values)
    return parser.parse_args(argv)


# -- helpers -----------------------------------------------------------------


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    return value


def write_manifest(args: argparse.Namespace, extra: dict | None = None) -> Path:
    config = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("config", "verbose")}
    manifest = {"tool": "nddicast", "version": __version__, "command": args.command, "config": config}
    if extra:
        manifest.update(extra)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
                       seed=args.seed, window=args.window, patience=args.patience)


def _model_config(args) -> ModelConfig:
    return ModelConfig(td_filters=tuple(args.td_filters), hidden=args.hidden)


def _next_date(dates: list[dt.date]) -> dt.date:
    if len(dates) < 2:
        return dates[-1] + dt.timedelta(days=1)
    return dates[-1] + (dates[-1] - dates[-2])


# -- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    h, w = args.size
    paths = write_synth(args.out, locations=args.locations, frames=args.frames, height=h, width=w,
                        seed=args.seed, water_fraction=args.water_fraction)
    write_manifest(args, {"files": len(paths)})
    log.info("wrote %d band files to %s", len(paths), args.out)
    return EXIT_OK


def cmd_indices(args) -> int:
    stacks = load_directory(args.input)
    kind = IndexKind(args.kind)
    masked_total = 0
    count = 0
    for location, series in stacks.items():
        for stack in series:
            raster = compute_index(stack, kind)
            out = BandStack(location, stack.timestamp, {kind.value: raster.values})
            path = save_band_stack(out, args.out)
            save_raster_png(path.with_suffix(".png"), raster.values, raster.valid)
            masked_total += raster.invalid_count
            count += 1
            print(f"{path.name}: {raster.invalid_count} masked pixel(s)", file=sys.stderr)
    print(f"{kind.value}: {count} frame(s), {masked_total} masked pixel(s) in total", file=sys.stderr)
    write_manifest(args, {"frames": count, "masked_pixels": masked_total})
    return EXIT_OK


def cmd_train(args) -> int:
    stacks = load_directory(args.input)
    dataset = build_dataset(stacks, args.kind, args.split, args.seed, window=args.window, sliding=args.sliding)
    model = TdCnnModel.initialize(_model_config(args), seed=args.seed)
    model, history = train(model, dataset, _train_config(args))
    args.out.mkdir(parents=True, exist_ok=True)
    model.save(args.out / "model.tdnn")
    (args.out / "history.csv").write_text(history.to_csv())
    save_loss_curves(args.out / "loss.png", {args.kind: history})
    write_manifest(args, {"train_samples": len(dataset.train), "val_samples": len(dataset.val)})
    log.info("final train loss %.6g", history.train_loss[-1])
    return EXIT_OK


def cmd_predict(args) -> int:
    model = TdCnnModel.load(args.checkpoint)
    kind = IndexKind(args.kind)
    stacks = load_directory(args.input)
    written = []
    for location, series in stacks.items():
        rasters = [compute_index(s, kind) for s in series]
        if args.window is not None:
            rasters = rasters[-(args.window - 1):]
        values = [tile_raster(r.values) for r in rasters]
        valid = tile_raster(rasters[-1].valid)
        pred_tiles = [model.predict(np.stack([frames[t] for frames in values])[:, None])[0]
                      for t in range(len(valid))]
        pred = untile(pred_tiles).astype(np.float32)
        pred_valid = untile(valid)
        stamp = _next_date([s.timestamp for s in series])
        path = save_band_stack(BandStack(location, stamp, {kind.value: pred}), args.out)
        save_raster_png(path.with_name(path.stem + "_pred.png"), pred, pred_valid, cmap=PREDICTION_CMAP)
        written.append(path.name)
    write_manifest(args, {"predictions": written})
    return EXIT_OK


def cmd_compare(args) -> int:
    stacks = load_directory(args.input)
    datasets = {k: build_dataset(stacks, k, args.split, args.seed, window=args.window, sliding=args.sliding)
                for k in IndexKind}
    result = compare_workflows_detailed(datasets, _train_config(args), _model_config(args))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.csv").write_text(result.report.to_csv())
    (args.out / "report.json").write_text(result.report.to_json())
    for name, model in result.models.items():
        model.save(args.out / "checkpoints" / f"{name}.tdnn")
    save_loss_curves(args.out / "loss.png", result.histories)
    for tile in result.tiles:
        save_comparison_figure(args.out / "figures" / f"{tile.location_id}_tile{tile.tile_index:02d}.png", tile)
    write_manifest(args, {"val_tiles": len(result.tiles)})
    sys.stdout.write(result.report.to_csv())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = ModelConfig(td_filters=tuple(args.td_filters), hidden=args.hidden)
    model = TdCnnModel.initialize(cfg, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    inputs = rng.uniform(-1, 1, (args.frames, 1, args.size, args.size))
    target = rng.uniform(-1, 1, (1, args.size, args.size))
    report = gradient_check(model, (inputs, target, None), args.tolerance)
    print(f"parameters: {model.parameter_count}")
    print(report.format())
    ok = report.passed
    result = {"passed": report.passed, "layers": {k: v[0] for k, v in report.layers().items()}}
    if args.negative_control:
        with corrupted_backward():
            control = gradient_check(model, (inputs, target, None), args.tolerance)
        print("negative control (corrupted padding in conv backward):")
        print(control.format())
        ok = ok and not control.passed
        result["negative_control_failed"] = not control.passed
    write_manifest(args, {"result": result})
    return EXIT_OK if ok else EXIT_CHECK_FAILED


COMMANDS = {
    "synth": cmd_synth,
    "indices": cmd_indices,
    "train": cmd_train,
    "predict": cmd_predict,
    "compare": cmd_compare,
    "gradcheck": cmd_gradcheck,
}


@contextlib.contextmanager
def _thread_limit():
    threads = os.environ.get("NDDI_THREADS")
    if not threads:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=max(1, int(threads))):
        yield


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        with _thread_limit():
            return COMMANDS[args.command](args)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (NddiError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
