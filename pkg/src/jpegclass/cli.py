"""Command line entry point.

Exit codes: 0 success, 1 batch produced nothing, 2 usage/parse/config
error.  All randomness flows from --seed; machine-readable output is
JSON or CSV, with figures rendered alongside.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import entropy, features, jpeg_parser, models, train_eval
from .errors import JpegClassError
from .nn import checkpoint as ckpt
from .nn.gradcheck import grad_check
from .nn.layers import Conv2D, Dense, MultiHeadAttention, PointwiseSeparableConv, ResidualBlock
from .nn.optim import TrainConfig

JPEG_SUFFIXES = {".jpg", ".jpeg"}


def _inspect_payload(parsed, with_coeffs: bool):
    payload = {
        "geometry": {
            "width": parsed.frame.width,
            "height": parsed.frame.height,
            "precision": parsed.frame.precision,
            "components": [
                {"id": c.id, "h": c.h_sampling, "v": c.v_sampling,
                 "quantTable": c.quant_table_id}
                for c in parsed.frame.components
            ],
        },
        "restartInterval": parsed.restart_interval,
        "quantTables": [
            {"id": t.id, "precision": t.precision, "values": list(t.values)}
            for t in sorted(parsed.quant_tables.values(), key=lambda t: t.id)
        ],
        "huffTables": [
            {"class": "DC" if tc == jpeg_parser.DC else "AC", "id": tid,
             "counts": list(spec.counts), "symbols": list(spec.symbols)}
            for (tc, tid), spec in sorted(parsed.huff_tables.items())
        ],
        "scanBytes": len(parsed.scan_bytes),
    }
    if with_coeffs:
        grid = entropy.decode_scan(parsed)
        payload["coefficients"] = [
            {"component": features.COMPONENT_NAMES[ci],
             "gridW": g.grid_w, "gridH": g.grid_h,
             "blocks": g.coeffs.reshape(-1, 64).tolist()}
            for ci, g in enumerate(grid.components)
        ]
    return payload


def cmd_inspect(args) -> int:
    try:
        data = Path(args.file).read_bytes()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        parsed = jpeg_parser.parse_jpeg(data)
        payload = _inspect_payload(parsed, args.coeffs)
    except JpegClassError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    if args.format == "text":
        print(f"{args.file}: {parsed.frame.width}x{parsed.frame.height} baseline JPEG")
        for offset, name, length in parsed.marker_list:
            print(f"  {offset:8d}  {name:5s}  {length} bytes")
        for marker, seg in parsed.app_segments:
            print(f"  APP{marker - 0xE0}: {len(seg)} bytes")
    print(json.dumps(payload))
    return 0


def _extract_one(src: str, dst: str, mode: str, crop: int):
    data = Path(src).read_bytes()
    parsed = jpeg_parser.parse_jpeg(data)
    grid = entropy.decode_scan(parsed)
    if mode == "transform":
        tables = [parsed.quant_tables[c.quant_table_id]
                  for c in parsed.frame.components]
        cubes = features.build_frequency_cubes(grid, tables)
        features.write_jtfx(dst, features.KIND_TRANSFORM, cubes.tensors)
        return 0, 0
    bits, _ = jpeg_parser.destuff_scan(parsed.scan_bytes)
    config = features.ExtractionConfig(mode="bitstream", crop_width=crop)
    bitset = features.build_bit_features(grid, bits, config)
    features.write_jtfx(dst, features.KIND_BITSTREAM, bitset.tensors)
    return bitset.truncated_count, bitset.padded_count


def cmd_extract(args) -> int:
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for class_dir in sorted(p for p in in_dir.iterdir() if p.is_dir()):
        for src in sorted(class_dir.iterdir()):
            if src.suffix.lower() in JPEG_SUFFIXES:
                dst = out_dir / class_dir.name / (src.stem + ".jtfx")
                jobs.append((src, dst, class_dir.name))
    if not jobs:
        print("error: no JPEG files found", file=sys.stderr)
        return 1

    workers = int(os.environ.get("JPEGCLASS_THREADS", "1"))
    results = [None] * len(jobs)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {}
            for i, (src, dst, _) in enumerate(jobs):
                dst.parent.mkdir(parents=True, exist_ok=True)
                futures[pool.submit(_extract_one, str(src), str(dst),
                                    args.mode, args.crop)] = i
            for fut, i in futures.items():
                try:
                    results[i] = fut.result()
                except JpegClassError as e:
                    results[i] = e
    else:
        for i, (src, dst, _) in enumerate(jobs):
            dst.parent.mkdir(parents=True, exist_ok=True)
            try:
                results[i] = _extract_one(str(src), str(dst), args.mode, args.crop)
            except JpegClassError as e:
                results[i] = e

    ok = 0
    truncated = padded = 0
    fragment_path = out_dir / "extracted.jsonl"
    class_names = sorted({cls for _, _, cls in jobs})
    extraction = {"mode": args.mode, "cropWidth": args.crop, "quality": args.quality}
    with open(fragment_path, "w") as f:
        f.write(json.dumps({"classNames": class_names, "extraction": extraction},
                           sort_keys=True) + "\n")
        for (src, dst, cls), res in zip(jobs, results):
            if isinstance(res, Exception):
                print(f"skip {src}: {type(res).__name__}: {res}", file=sys.stderr)
                continue
            ok += 1
            truncated += res[0]
            padded += res[1]
            f.write(json.dumps({"path": str(dst), "class": cls}) + "\n")
    print(f"extracted {ok}/{len(jobs)} files (mode={args.mode}, "
          f"truncated blocks={truncated}, padded blocks={padded})")
    return 0 if ok else 1


def cmd_split(args) -> int:
    fragment = Path(args.in_dir) / "extracted.jsonl"
    try:
        with open(fragment) as f:
            lines = [json.loads(line) for line in f if line.strip()]
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    meta, rows = lines[0], lines[1:]
    items = {}
    for row in rows:
        items.setdefault(row["class"], []).append(row["path"])
    try:
        manifest = train_eval.split_dataset(items, seed=args.seed,
                                            extraction=meta.get("extraction", {}))
    except JpegClassError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(args.in_dir) / "manifest.jsonl"
    train_eval.write_manifest(manifest, out)
    counts = {s: len(manifest.for_split(s)) for s in train_eval.SPLITS}
    print(f"wrote {out} ({counts['train']} train / {counts['val']} val / "
          f"{counts['test']} test)")
    return 0


def _spec_from_manifest(manifest, method: int, args) -> models.MethodSpec:
    first = manifest.entries[0]
    kind, tensors = features.read_jtfx(first.path)
    want_kind = features.KIND_TRANSFORM if method == 1 else features.KIND_BITSTREAM
    if kind != want_kind:
        raise JpegClassError(
            f"method {method} needs "
            f"{'transform' if method == 1 else 'bitstream'} features")
    lh, lw, cin = tensors[0].shape
    ch, cw, _ = tensors[1].shape
    return models.MethodSpec(
        method_id=method,
        num_classes=len(manifest.class_names),
        luma_grid=(lh, lw),
        chroma_grid=(ch, cw),
        crop_width=cin if method != 1 else 128,
        stem_channels=args.stem_channels,
        trunk_channels=args.trunk_channels,
        residual_blocks=args.residual_blocks,
        attention_heads=args.heads,
        attention_layers=args.attention_layers,
    )


def cmd_train(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        manifest = train_eval.read_manifest(args.manifest)
        config = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                             max_epochs=args.epochs,
                             early_stop_patience=args.patience, seed=args.seed)
        spec = _spec_from_manifest(manifest, args.method, args)
        model = models.build_model(spec, seed=args.seed)
        model, history = train_eval.train(model, manifest, config)
    except (JpegClassError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    ckpt.save_checkpoint(out_dir / "checkpoint.jckp",
                         {"methodSpec": spec.to_dict(),
                          "trainConfig": config.to_dict()},
                         model.named_params())
    train_eval.write_history_csv(history, out_dir / "history.csv")
    from .report import save_history_figure
    save_history_figure(history, out_dir / "history.png")
    last = history[-1]
    print(f"trained method {args.method}: {len(history)} epochs, "
          f"final trainAcc={last['trainAcc']:.3f} valAcc={last['valAcc']:.3f}")
    return 0


def cmd_eval(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        config, tensors = ckpt.load_checkpoint(args.checkpoint)
        spec = models.MethodSpec.from_dict(config["methodSpec"])
        model = models.build_model(spec, seed=0)
        model.load_state(tensors)
        manifest = train_eval.read_manifest(args.manifest)
        report = train_eval.evaluate(model, manifest, args.split)
    except (JpegClassError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    train_eval.write_metrics_json(
        report, out_dir / "metrics.json",
        extra={"methodSpec": spec.to_dict(), "split": args.split})
    from .report import save_confusion_figure
    save_confusion_figure(report.confusion, manifest.class_names,
                          out_dir / "confusion.png")
    print(f"split={args.split} accuracy={report.accuracy:.4f} "
          f"macroF1={report.macro_f1:.4f} macroPrecision={report.macro_precision:.4f} "
          f"macroRecall={report.macro_recall:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    checks = [
        ("Conv2D 3x3", Conv2D(3, 2, 3, stride=1, rng=rng), rng.standard_normal((5, 5, 2))),
        ("Conv2D stride2", Conv2D(3, 2, 3, stride=2, rng=rng), rng.standard_normal((5, 5, 2))),
        ("PointwiseSeparableConv", PointwiseSeparableConv(3, 4, 3, 2, rng=rng),
         rng.standard_normal((4, 4, 4))),
        ("ResidualBlock", ResidualBlock(3, rng=rng), rng.standard_normal((4, 4, 3))),
        ("Dense", Dense(4, 3, rng=rng), rng.standard_normal(4)),
        ("MultiHeadAttention", MultiHeadAttention(8, 2, rng=rng),
         rng.standard_normal((3, 8))),
    ]
    all_ok = True
    for name, layer, x in checks:
        report = grad_check(layer, x, dtype=np.float64, seed=args.seed)
        status = "PASS" if report else "FAIL"
        all_ok &= bool(report)
        print(f"{status} {name}: max rel err {report.max_error:.2e}")
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jpegclass",
        description="JPEG transform/bitstream-domain image classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="dump marker structure and tables")
    p.add_argument("file")
    p.add_argument("--coeffs", action="store_true",
                   help="include per-block coefficient dump")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("extract", help="extract features from a class-per-dir tree")
    p.add_argument("--mode", choices=("transform", "bitstream"), required=True)
    p.add_argument("--crop", type=int, default=128, help="bitstream crop width C")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quality", type=int, default=95, help="metadata tag")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("split", help="stratified 70/10/20 manifest")
    p.add_argument("--in", dest="in_dir", required=True,
                   help="extract output dir (holds extracted.jsonl)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_split)

    for name in ("train", "eval"):
        p = sub.add_parser(name)
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True)
        if name == "train":
            p.add_argument("--method", type=int, choices=range(1, 6), required=True)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--lr", type=float, default=1e-3)
            p.add_argument("--epochs", type=int, default=100)
            p.add_argument("--batch-size", type=int, default=32)
            p.add_argument("--patience", type=int, default=10)
            p.add_argument("--stem-channels", type=int, default=64)
            p.add_argument("--trunk-channels", type=int, default=256)
            p.add_argument("--residual-blocks", type=int, default=4)
            p.add_argument("--heads", type=int, default=4)
            p.add_argument("--attention-layers", type=int, default=2)
            p.set_defaults(func=cmd_train)
        else:
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--split", choices=train_eval.SPLITS, default="test")
            p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference layer checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
