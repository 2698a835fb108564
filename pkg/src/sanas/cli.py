"""``sanas`` command line: prepare-data, train, eval, pareto.

Exit codes: 0 success, 2 bad arguments or config, 3 I/O problem, 4 numeric
abort, 5 malformed artifact.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .audio.dataset import (
    SPLITS,
    ToyConfig,
    load_speech_commands,
    make_toy_dataset,
    manifest,
    read_split,
    split_records,
    synthesize_from_catalog,
    to_frames,
    to_sequences,
    write_split,
)
from .audio.features import FeatureNormalizer
from .audio.labels import LABEL_INDEX
from .audio.stream import WordSpan
from .audio.wav import read_wav
from .checkpoint import Checkpoint, check_graph, load_checkpoint, restore, save_checkpoint
from .config import Config, load_config
from .controller import SanasModel
from .errors import ConfigurationError, FormatError, InputError, NonFiniteError, UsageError
from .eval import GroundTruthWord, ParetoPoint, evaluate_checkpoint, pareto_front, write_points_csv
from .supernet import ArchSample
from .training import NumericAbort, TrainResult, train, train_static

log = logging.getLogger("sanas")

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_NUMERIC, EXIT_FORMAT = 0, 2, 3, 4, 5
RUN_LOG = "run.jsonl"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ARGS)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ----------------------------------------------------------------- prepare


def cmd_prepare_data(args) -> int:
    if args.min_dur > args.max_dur or args.min_dur < 1.0 or args.max_dur > 3.0:
        raise ConfigurationError("durations must satisfy 1.0 <= min-dur <= max-dur <= 3.0")
    if args.min_snr_db > args.max_snr_db:
        raise ConfigurationError("min-snr-db must not exceed max-snr-db")
    out = Path(args.out)
    params = {
        "seed": args.seed,
        "min_snr_db": args.min_snr_db,
        "max_snr_db": args.max_snr_db,
        "min_dur": args.min_dur,
        "max_dur": args.max_dur,
    }
    if args.toy:
        cfg = ToyConfig(classes=args.classes, streams_per_class=args.streams_per_class,
                        min_dur=args.min_dur, max_dur=args.max_dur,
                        min_snr_db=args.min_snr_db, max_snr_db=args.max_snr_db)
        records = make_toy_dataset(cfg, np.random.default_rng(args.seed))
        splits = split_records(records, np.random.default_rng([args.seed, 1]))
        params.update(source="toy", classes=args.classes, streams_per_class=args.streams_per_class)
    else:
        cat = load_speech_commands(args.speech_commands)
        sizes = {"train": int(round(0.8 * args.streams)), "val": int(round(0.1 * args.streams))}
        sizes["test"] = args.streams - sizes["train"] - sizes["val"]
        splits = {s: synthesize_from_catalog(cat, s, sizes[s], args.seed, args.min_snr_db, args.max_snr_db,
                                             args.min_dur, args.max_dur) for s in SPLITS}
        params.update(source="speech-commands", streams=args.streams, skipped_files=cat.skipped,
                      clips=cat.counts())
    for name, recs in splits.items():
        write_split(out / name, recs)
    man = manifest(splits, params)
    _dump(out / "manifest.json", man)
    print(f"wrote {man['streams']} streams to {out} "
          + ", ".join(f"{k}={v['streams']}" for k, v in man["splits"].items()))
    return EXIT_OK


# ------------------------------------------------------------------- train


def _resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("SANAS_THREADS")
    if env:
        try:
            return int(env)
        except ValueError as err:
            raise ConfigurationError(f"SANAS_THREADS must be an integer, got {env!r}") from err
    return os.cpu_count() or 1


def load_prepared(cfg: Config, splits=("train", "val")):
    """Records of the requested splits plus a normalizer fitted on train."""
    root = cfg.data_dir()
    if not (root / "manifest.json").is_file():
        raise InputError(f"{root} is not a prepared dataset (no manifest.json)")
    records = {s: read_split(root / s) for s in splits}
    train_recs = records.get("train") or read_split(root / "train")
    if not train_recs:
        raise InputError(f"{root / 'train'} holds no streams")
    norm = FeatureNormalizer.fit([r.samples for r in train_recs], cfg.features.dct)
    return records, norm


def _static_arch(spec, static: str | None) -> ArchSample | None:
    if static is None:
        return None
    return ArchSample(spec.backbone_mask() if static == "backbone" else spec.full_mask())


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else Config()
    overrides = {k: getattr(args, k) for k in ("lam", "lr", "epochs", "batch_size", "seed")}
    overrides["threads"] = _resolve_threads(args.threads)
    cfg = cfg.with_overrides(training=overrides, graph=args.graph,
                             data=str(Path(args.data).resolve()) if args.data else None, static=args.static)
    if cfg.data is not None and not Path(cfg.data).is_absolute():
        cfg = cfg.with_overrides(data=str(cfg.data_dir().resolve()))
    spec = cfg.load_graph()
    model = SanasModel(spec, cfg.model)
    records, norm = load_prepared(cfg)
    train_set = to_sequences(records["train"], norm, cfg.features.dct)
    val_set = to_sequences(records["val"], norm, cfg.features.dct)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / RUN_LOG
    if not args.resume:
        log_path.write_text("")
    stored = cfg.to_dict(runtime=False)
    _dump(out / "config.json", stored)
    graph_json = spec.to_json()
    norm_arrays = {"mean": norm.mean, "std": norm.std}

    def snapshot(epoch: int, res: TrainResult) -> Checkpoint:
        return Checkpoint(graph_json, stored, res.store, res.baseline, epoch, res.rng_state, norm_arrays)

    def on_epoch(epoch: int, res: TrainResult) -> None:
        ck = snapshot(epoch, res)
        save_checkpoint(out / f"epoch-{epoch:03d}.ckpt", ck)
        save_checkpoint(out / "last.ckpt", ck)

    arch = _static_arch(spec, cfg.static)
    resume = {}
    store = None
    if args.resume:
        ck = load_checkpoint(args.resume)
        check_graph(ck, spec)
        store = ck.store
        resume = {"start_epoch": ck.epoch, "baseline": ck.baseline, "rng_state": ck.rng_state}
    try:
        if arch is None:
            res = train(model, train_set, val_set, cfg.training, store, log_path, on_epoch, **resume)
        else:
            res = train_static(model, train_set, val_set, cfg.training, arch, store, log_path, on_epoch, **resume)
    except NumericAbort as err:
        bad = TrainResult(err.store, [], 0.0, None)
        save_checkpoint(out / "last-good.ckpt", snapshot(err.epoch, bad))
        print(f"numeric abort: {err}; last good state saved to {out / 'last-good.ckpt'}", file=sys.stderr)
        return EXIT_NUMERIC
    if cfg.training.epochs == 0 or not res.records:
        save_checkpoint(out / "last.ckpt", snapshot(0, res))
    val = [r for r in res.records if r["split"] == "val"]
    if val:
        print(f"final validation: accuracy={val[-1]['accuracy']:.4f} mean_flops={val[-1]['mean_flops']:.1f}")
    else:
        print("no validation records (zero epochs or empty validation split)")
    return EXIT_OK


# -------------------------------------------------------------------- eval


def _read_spans(path: Path) -> list[WordSpan]:
    try:
        raw = json.loads(path.read_text())
    except OSError as err:
        raise InputError(f"cannot read spans {path}: {err}") from err
    except ValueError as err:
        raise FormatError(f"{path}: invalid JSON ({err})") from err
    items = raw["spans"] if isinstance(raw, dict) and "spans" in raw else raw
    if not isinstance(items, list):
        raise FormatError(f"{path}: expected a list of spans or {{\"spans\": [...]}}")
    try:
        return [WordSpan.from_json(s) for s in items]
    except (KeyError, TypeError) as err:
        raise FormatError(f"{path}: malformed span ({err})") from err


def cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.is_file():
        raise InputError(f"checkpoint {ckpt_path} not found")
    if bool(args.stream) != bool(args.spans):
        raise ConfigurationError("--stream and --spans go together")
    ckpt = load_checkpoint(ckpt_path)
    spec = None
    if args.config:
        spec = load_config(args.config).load_graph()
    elif args.graph:
        spec = Config(graph=args.graph, base_dir=Path.cwd()).load_graph()
    restored = restore(ckpt, spec)
    cfg = Config.from_dict(ckpt.config)
    if args.data:
        cfg = cfg.with_overrides(data=str(Path(args.data).resolve()))
    dct = cfg.features.dct
    sequences = None
    if args.split:
        root = cfg.data_dir()
        recs = read_split(root / args.split)
        sequences = to_sequences(recs, restored.normalizer, dct)
    stream = None
    if args.stream:
        samples = read_wav(args.stream)
        spans = _read_spans(Path(args.spans))
        from .audio.dataset import StreamRecord
        rec = StreamRecord(Path(args.stream).stem, samples, spans, None, 0)
        frames = to_frames(rec, restored.normalizer, dct)
        words = [GroundTruthWord(LABEL_INDEX[s.label], s.start, s.end) for s in spans]
        stream = (frames, words)
    if sequences is None and stream is None:
        raise ConfigurationError("nothing to evaluate: give --split and/or --stream")
    bundle = evaluate_checkpoint(restored, sequences, args.mode, stream, cfg.streaming, args.seed)
    bundle["checkpoint"] = str(ckpt_path)
    bundle["split"] = args.split
    out = Path(args.out) if args.out else ckpt_path.with_name(
        f"{ckpt_path.stem}.eval-{args.split or 'stream'}.json")
    _dump(out, bundle)
    if "frames" in bundle:
        f = bundle["frames"]
        print(f"{args.split}: accuracy={f['accuracy']:.4f} mean_flops={f['mean_flops']:.1f} frames={f['count']}")
    if "stream" in bundle:
        r = bundle["stream"]["report"]
        print(f"stream: matched={r['matched_pct']:.1f}% correct={r['correct_pct']:.1f}% "
              f"wrong={r['wrong_pct']:.1f}% fa={r['fa_pct']:.1f}% ({r['words']} words, {r['detections']} detections)")
    print(f"metrics written to {out}")
    return EXIT_OK


# ------------------------------------------------------------------ pareto


def collect_points(runs: Path) -> list[ParetoPoint]:
    """Last validation record of every run log found below ``runs``."""
    points = []
    for logf in sorted(runs.rglob(RUN_LOG)):
        val = None
        with open(logf) as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    if rec.get("split") == "val":
                        val = rec
        if val is not None:
            model_id = str(logf.parent.relative_to(runs)) or "."
            points.append(ParetoPoint(float(val["accuracy"]), float(val["mean_flops"]), model_id))
    return points


def cmd_pareto(args) -> int:
    runs = Path(args.runs)
    if not runs.is_dir():
        raise InputError(f"{runs} is not a directory")
    points = collect_points(runs)
    if not points:
        raise InputError(f"no run logs with validation records under {runs}")
    front = pareto_front(points)
    out = Path(args.out)
    scatter = Path(args.scatter) if args.scatter else out.with_name(out.stem + "-all" + out.suffix)
    write_points_csv(out, front)
    write_points_csv(scatter, sorted(points, key=lambda p: p.model_id))
    print(f"{len(front)} of {len(points)} models on the front -> {out} (all points: {scatter})")
    return EXIT_OK


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sanas", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    prep = sub.add_parser("prepare-data", help="synthesize train/val/test streams")
    src = prep.add_mutually_exclusive_group(required=True)
    src.add_argument("--speech-commands", metavar="DIR")
    src.add_argument("--toy", action="store_true")
    prep.add_argument("--out", required=True, metavar="DIR")
    prep.add_argument("--seed", type=int, default=0)
    prep.add_argument("--min-snr-db", type=float, default=5.0)
    prep.add_argument("--max-snr-db", type=float, default=20.0)
    prep.add_argument("--min-dur", type=float, default=1.0)
    prep.add_argument("--max-dur", type=float, default=3.0)
    prep.add_argument("--streams", type=int, default=30000, help="speech commands: total stream count")
    prep.add_argument("--classes", type=int, default=4, help="toy: number of word classes")
    prep.add_argument("--streams-per-class", type=int, default=100, help="toy: streams per class")
    prep.set_defaults(func=cmd_prepare_data)

    tr = sub.add_parser("train", help="train an adaptive or static model")
    tr.add_argument("--config", metavar="FILE")
    tr.add_argument("--out", required=True, metavar="DIR")
    tr.add_argument("--static", choices=("backbone", "full"))
    tr.add_argument("--data", metavar="DIR")
    tr.add_argument("--graph")
    tr.add_argument("--lam", type=float)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--batch-size", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--threads", type=int)
    tr.add_argument("--resume", metavar="CKPT")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True, metavar="FILE")
    ev.add_argument("--split", choices=("val", "test"))
    ev.add_argument("--data", metavar="DIR")
    ev.add_argument("--stream", metavar="WAV")
    ev.add_argument("--spans", metavar="JSON")
    ev.add_argument("--mode", choices=("argmax", "sample"), default="argmax")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--config", metavar="FILE", help="check the checkpoint against this config's graph")
    ev.add_argument("--graph", help="check the checkpoint against this graph")
    ev.add_argument("--out", metavar="FILE")
    ev.set_defaults(func=cmd_eval)

    pa = sub.add_parser("pareto", help="Pareto front over run directories")
    pa.add_argument("--runs", required=True, metavar="DIR")
    pa.add_argument("--out", required=True, metavar="CSV")
    pa.add_argument("--scatter", metavar="CSV")
    pa.set_defaults(func=cmd_pareto)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, UsageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ARGS
    except FormatError as err:
        print(f"format error: {err}", file=sys.stderr)
        return EXIT_FORMAT
    except (InputError, OSError) as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except NonFiniteError as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
