"""Command-line surface: fuse, analyze, bench, train, eval, pair.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation or
assertion failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import cost_model, fusion, metrics, model, tensor_core, training

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_VALIDATION = 3

TRAIN_PATCH = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _dims(text):
    try:
        h_txt, w_txt = text.lower().split("x")
        h, w = int(h_txt), int(w_txt)
    except ValueError:
        raise argparse.ArgumentTypeError("dims must look like 256x256") from None
    if h < 8 or w < 8 or h % 8 or w % 8:
        raise argparse.ArgumentTypeError("dims must be positive and divisible by 8")
    return h, w


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lightfuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fuse", help="fuse an exposure pair into one image")
    p.add_argument("under", help="underexposed input (PPM)")
    p.add_argument("over", help="overexposed input (PPM)")
    p.add_argument("out", help="output path (PPM)")
    p.add_argument("--weights", required=True, help="LFW1 weight file")
    p.add_argument("--tile-size", type=_positive_int, default=32)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("analyze", help="print the cost report for a model")
    p.add_argument("model", choices=("lightfuse", "tcnn"))
    p.add_argument("--convention", choices=sorted(cost_model.CONVENTIONS), default="table4")
    p.add_argument("--format", choices=("text", "kv"), default="text")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench", help="compare fused and unfused detail-branch runs")
    p.add_argument("dims", type=_dims, help="input size, e.g. 256x256")
    p.add_argument("--tile-size", type=_positive_int, default=32)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train", help="toy-train on a directory of scenes")
    p.add_argument("data_dir", help="directory of scene subdirectories")
    p.add_argument("out", help="output LFW1 weight file")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--curve", help="loss-curve CSV path (default: <out>.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score one image against another")
    p.add_argument("a", help="image to score (PPM)")
    p.add_argument("b", help="reference image (PPM)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pair", help="select the extreme exposure pair in a directory")
    p.add_argument("scene_dir")
    p.set_defaults(func=cmd_pair)
    return parser


def _read_image(path) -> np.ndarray:
    return tensor_core.decode_ppm(Path(path).read_bytes())


def cmd_fuse(args) -> int:
    under = _read_image(args.under)
    over = _read_image(args.over)
    if under.shape != over.shape:
        raise ValueError(f"dimension mismatch: {under.shape[:2]} vs {over.shape[:2]}")
    graph = model.build_lightfuse()
    weights = model.load_weights(Path(args.weights).read_bytes(), graph)
    h, w = under.shape[:2]
    pad_h = (-h) % 8
    pad_w = (-w) % 8
    u = tensor_core.normalize(under)
    o = tensor_core.normalize(over)
    if pad_h or pad_w:
        u = np.pad(u, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
        o = np.pad(o, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    tile = min(args.tile_size, u.shape[0], u.shape[1])
    out, traffic = fusion.fused_forward(graph, weights, u, o, tile)
    out = out[:h, :w]
    Path(args.out).write_bytes(tensor_core.encode_ppm(tensor_core.denormalize(out)))
    print(traffic.dump())
    return EXIT_OK


def cmd_analyze(args) -> int:
    graph = model.build_lightfuse() if args.model == "lightfuse" else model.build_tcnn()
    report = cost_model.analyze(graph, cost_model.CONVENTIONS[args.convention])
    if args.format == "kv":
        print(cost_model.render_kv(report))
    else:
        print(cost_model.render_report(report))
    return EXIT_OK


def cmd_bench(args) -> int:
    h, w = args.dims
    rng = np.random.default_rng(args.seed)
    x = rng.uniform(-1.0, 1.0, size=(h, w, 6)).astype(np.float32)
    weights = model.init_weights(model.build_lightfuse(), args.seed)
    tile = min(args.tile_size, h, w)
    fused_out, fused_traffic = fusion.run_detailnet_fused(x, weights, tile)
    unfused_out, unfused_traffic = fusion.run_detailnet_unfused(x, weights)
    if fused_out.tobytes() != unfused_out.tobytes():
        print("error: fused and unfused outputs differ", file=sys.stderr)
        return EXIT_VALIDATION
    print("bit-equal: true")
    print(fused_traffic.dump())
    print(unfused_traffic.dump())
    if args.repetitions > 0:
        timings = fusion.time_paths(x, weights, tile, args.repetitions)
        for label in ("fused", "unfused"):
            print(f"{label}: {timings[label]:.6f} s/run")
    return EXIT_OK


def _load_training_triples(data_dir):
    root = Path(data_dir)
    if not root.is_dir():
        raise NotADirectoryError(f"not a directory: {root}")
    scenes = [root] if (root / "label.ppm").exists() else sorted(
        p for p in root.iterdir() if p.is_dir()
    )
    triples = []
    for scene in scenes:
        label_path = scene / "label.ppm"
        if not label_path.exists():
            print(f"warning: {scene}: no label.ppm, skipped", file=sys.stderr)
            continue
        exposures = []
        for f in sorted(scene.glob("*.ppm")):
            if f.name == "label.ppm":
                continue
            try:
                exposures.append(tensor_core.decode_ppm(f.read_bytes()))
            except tensor_core.PpmParseError as exc:
                print(f"warning: {f}: not a valid PPM ({exc}), skipped", file=sys.stderr)
        if len(exposures) < 2:
            print(f"warning: {scene}: fewer than two exposures, skipped", file=sys.stderr)
            continue
        label_img = tensor_core.decode_ppm(label_path.read_bytes())
        if any(img.shape != label_img.shape for img in exposures):
            print(f"warning: {scene}: image dimensions differ, skipped", file=sys.stderr)
            continue
        if min(label_img.shape[0], label_img.shape[1]) < TRAIN_PATCH:
            print(f"warning: {scene}: smaller than {TRAIN_PATCH}x{TRAIN_PATCH}, skipped", file=sys.stderr)
            continue
        ui, oi = metrics.select_extreme_pair(exposures)
        parts = [
            [tensor_core.normalize(p) for p in metrics.extract_patches(img, TRAIN_PATCH, TRAIN_PATCH)]
            for img in (exposures[ui], exposures[oi], label_img)
        ]
        triples.extend(zip(*parts))
    return triples


def cmd_train(args) -> int:
    triples = _load_training_triples(args.data_dir)
    if not triples:
        raise ValueError("no usable training triples found")
    graph = model.build_lightfuse()
    initial = model.init_weights(graph, args.seed)
    trained, curve = training.train_toy(graph, initial, triples, args.steps, seed=args.seed)
    Path(args.out).write_bytes(model.save_weights(trained, graph))
    curve_path = args.curve if args.curve else f"{args.out}.csv"
    Path(curve_path).write_text(training.curve_to_csv(curve))
    if curve:
        print(f"steps={len(curve)} triples={len(triples)} final_mse={curve[-1].l_mse:.6g}")
    else:
        print(f"steps=0 triples={len(triples)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    a = _read_image(args.a)
    b = _read_image(args.b)
    print(metrics.format_scores(metrics.psnr(a, b), metrics.ssim(a, b)))
    return EXIT_OK


def cmd_pair(args) -> int:
    scene = Path(args.scene_dir)
    if not scene.is_dir():
        raise NotADirectoryError(f"not a directory: {scene}")
    names = []
    images = []
    for f in sorted(p for p in scene.iterdir() if p.is_file()):
        if f.suffix.lower() != ".ppm":
            print(f"warning: {f.name}: not a PPM file, skipped", file=sys.stderr)
            continue
        try:
            images.append(tensor_core.decode_ppm(f.read_bytes()))
        except tensor_core.PpmParseError as exc:
            print(f"warning: {f.name}: not a valid PPM ({exc}), skipped", file=sys.stderr)
            continue
        names.append(f.name)
    if len(images) < 2:
        raise ValueError("need at least two decodable PPM images")
    ui, oi = metrics.select_extreme_pair(images)
    print(f"under={names[ui]}")
    print(f"over={names[oi]}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
