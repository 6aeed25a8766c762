"""Command-line interface.

Subcommands: gen-model, gen-data, train, fit, eval, analyze, render, augment.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
All randomness flows from --seed through named streams, so repeated runs
with the same seed produce byte-identical outputs.
"""

import argparse
import json
import os
import shutil
import sys

import numpy as np

from . import complexity, evaluation
from .augment import rotate_labels, synthesize_virtual_sample
from .dataset import (
    SampleRecord,
    read_dataset,
    read_predictions,
    write_dataset,
    write_predictions,
)
from .errors import DamdnetError, DataError, NumericError
from .morphable import ParamVector, generate_synthetic_model, load_model, save_model
from .pipeline import TrainConfig, load_net, run_fit, run_training
from .ppm import read_ppm, write_ppm
from .renderer import overlay_landmarks, rasterize
from .rng import stream

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser():
    parser = _Parser(prog="damdnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-model", help="write a synthetic 3D face model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-vertices", type=int, default=500)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gen-data", help="render a virtual-sample dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--out", required=True, help="dataset directory")

    p = sub.add_parser("train", help="train the regressor")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="weights file")
    p.add_argument("--log", help="loss CSV path (default: <out>.csv)")
    p.add_argument("--variant", default="damdnet", choices=("mdnet", "amdnet", "damdnet"))
    p.add_argument("--width", type=float, default=0.125)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--lambda1", type=float, default=0.5)
    p.add_argument("--lambda2", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=10.0)
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--milestones",
        default="0.375,0.625,0.75",
        help="learning-rate decay points as fractions of the run",
    )

    p = sub.add_parser("fit", help="predict landmarks for a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="predictions JSONL")
    p.add_argument("--width", type=float, help="override inferred width")
    p.add_argument("--variant", choices=("mdnet", "amdnet", "damdnet"))
    p.add_argument("--render-dir", help="also write fitted renders here")

    p = sub.add_parser("eval", help="score predictions against a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--ced", help="CED curve CSV path")
    p.add_argument("--ced-max", type=float, default=10.0)
    p.add_argument("--ced-points", type=int, default=101)

    p = sub.add_parser("analyze", help="parameter/GFLOP table")
    p.add_argument("--out", help="write JSON here (prints text table)")
    p.add_argument("--input-size", type=int, default=120)

    p = sub.add_parser("render", help="render a dataset sample")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--weights", help="render the fitted pose instead of ground truth")
    p.add_argument("--out", required=True, help="output PPM")

    p = sub.add_parser("augment", help="profile-rotate dataset labels")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--deltas", default="10,30,60,90", help="yaw deltas in degrees")
    return parser


def cmd_gen_model(args):
    model = generate_synthetic_model(args.seed, args.n_vertices)
    save_model(model, args.out)
    print(f"wrote model ({model.n_vertices} vertices, "
          f"{model.triangles.shape[0]} triangles) to {args.out}")
    return EXIT_OK


def cmd_gen_data(args):
    model = load_model(args.model)
    os.makedirs(args.out, exist_ok=True)
    seeds = stream(args.seed, "data-gen").integers(0, 2**62, size=args.count)
    records = []
    for i, s in enumerate(seeds):
        sample = synthesize_virtual_sample(model, int(s))
        name = f"img_{i:05d}.ppm"
        write_ppm(os.path.join(args.out, name), (sample.crop.image + 1.0) / 2.0)
        records.append(
            SampleRecord(
                image_path=name,
                bbox=sample.crop.bbox,
                landmarks=sample.landmarks,
                visibility=sample.visibility,
                yaw_deg=sample.yaw_deg,
                params=sample.p_gt,
            )
        )
    write_dataset(records, args.out)
    print(f"wrote {len(records)} samples to {args.out}")
    return EXIT_OK


def cmd_train(args):
    model = load_model(args.model)
    milestones = tuple(float(v) for v in args.milestones.split(",") if v)
    cfg = TrainConfig(
        variant=args.variant,
        width=args.width,
        steps=args.steps,
        batch=args.batch,
        lr=args.lr,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        omega=args.omega,
        epsilon=args.epsilon,
        seed=args.seed,
        milestones=milestones,
    )
    log_path = args.log or args.out + ".csv"
    rows, _ = run_training(model, args.data, cfg, args.out, log_path)
    first, last = rows[0][2], rows[-1][2]
    print(f"trained {len(rows)} steps; loss {first:.4f} -> {last:.4f}; "
          f"weights at {args.out}, log at {log_path}")
    return EXIT_OK


def cmd_fit(args):
    model = load_model(args.model)
    net, mu, sd = load_net(args.weights, width=args.width, variant=args.variant)
    preds, skipped = run_fit(model, net, mu, sd, args.data)
    write_predictions([(path, lm) for path, lm, _, _ in preds], args.out)
    for path in skipped:
        print(f"warning: skipped {path} (no usable bbox)", file=sys.stderr)
    if args.render_dir:
        os.makedirs(args.render_dir, exist_ok=True)
        for path, lm_src, p_crop, crop in preds:
            img = read_ppm(os.path.join(args.data, path))
            fb = rasterize(
                model,
                _params_to_source(p_crop, crop),
                background=img,
                width=img.shape[1],
                height=img.shape[0],
            )
            out = overlay_landmarks(fb.color, lm_src)
            write_ppm(os.path.join(args.render_dir, os.path.basename(path)), out)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return EXIT_OK


def _params_to_source(p_crop, crop):
    """Invert the crop remap (crop -> source coordinates)."""
    p = np.asarray(p_crop, dtype=np.float64).copy()
    m = p[:9].reshape(3, 3) * crop.scale
    x0 = np.array([crop.offset[0], crop.offset[1], 0.0])
    t = p[9:12] + np.linalg.solve(m, x0)
    p[:9] = m.reshape(-1)
    p[9:12] = t
    return ParamVector(p)


def cmd_eval(args):
    records = read_dataset(args.data)
    preds = read_predictions(args.preds)
    samples = []
    for rec in records:
        if rec.image_path not in preds:
            raise DataError(f"no prediction for {rec.image_path}")
        samples.append(
            evaluation.EvalSample(
                landmarks_gt=rec.landmarks,
                visibility=rec.visibility,
                landmarks_pred=preds[rec.image_path],
                d=float(np.sqrt(rec.bbox[2] * rec.bbox[3])),
                yaw_deg=rec.yaw_deg,
                name=rec.image_path,
            )
        )
    report = evaluation.yaw_bin_report(samples)
    overall = evaluation.nme(samples)
    payload = {"overall_nme": overall, "report": evaluation.report_to_dict(report)}
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")
    print(evaluation.format_report(report))
    print(f"overall NME: {overall:.3f}%")
    if args.ced:
        thresholds = np.linspace(0.0, args.ced_max, args.ced_points)
        curve = evaluation.ced_curve(samples, thresholds)
        with open(args.ced, "w", encoding="utf-8") as fh:
            fh.write("threshold,fraction\n")
            for t, fr in curve:
                fh.write(f"{t:.10g},{fr:.10g}\n")
    return EXIT_OK


def cmd_analyze(args):
    rows = complexity.analysis_table(args.input_size)
    header = f"{'Method':<14}{'GFLOPs':>10}{'Params(M)':>12}"
    print(header)
    for row in rows:
        print(f"{row['name']:<14}{row['gflops']:>10.4f}{row['params_m']:>12.3f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(rows, sort_keys=True, separators=(",", ":")) + "\n")
    return EXIT_OK


def cmd_render(args):
    model = load_model(args.model)
    records = read_dataset(args.data)
    if not 0 <= args.index < len(records):
        raise DataError(f"sample index {args.index} out of range (0..{len(records) - 1})")
    rec = records[args.index]
    img = read_ppm(os.path.join(args.data, rec.image_path))
    if args.weights:
        net, mu, sd = load_net(args.weights)
        preds, _ = run_fit(model, net, mu, sd, args.data)
        match = [p for p in preds if p[0] == rec.image_path]
        _, lm, p_crop, crop = match[0]
        pv = _params_to_source(p_crop, crop)
        visibility = rec.visibility
    elif rec.params is not None:
        pv = ParamVector(rec.params)
        lm = rec.landmarks
        visibility = rec.visibility
    else:
        raise DataError(f"{rec.image_path} has no parameters and no --weights given")
    fb = rasterize(model, pv, background=img, width=img.shape[1], height=img.shape[0])
    out = overlay_landmarks(fb.color, lm, visibility)
    write_ppm(args.out, out)
    print(f"rendered sample {args.index} to {args.out} "
          f"({fb.degenerate_count} degenerate triangles skipped)")
    return EXIT_OK


def cmd_augment(args):
    model = load_model(args.model)
    records = read_dataset(args.data)
    deltas = [float(v) for v in args.deltas.split(",") if v]
    os.makedirs(args.out, exist_ok=True)
    out_records = []
    for rec in records:
        shutil.copyfile(
            os.path.join(args.data, rec.image_path),
            os.path.join(args.out, rec.image_path),
        )
        out_records.append(rec)
        if rec.params is None:
            print(f"warning: {rec.image_path} has no parameters; not rotated",
                  file=sys.stderr)
            continue
        for delta in deltas:
            p_new, lm, vis, yaw = rotate_labels(model, rec.params, delta)
            out_records.append(
                SampleRecord(
                    image_path=rec.image_path,
                    bbox=rec.bbox,
                    landmarks=lm,
                    visibility=vis,
                    yaw_deg=yaw,
                    params=p_new,
                )
            )
    write_dataset(out_records, args.out)
    print(f"wrote {len(out_records)} records to {args.out}")
    return EXIT_OK


_HANDLERS = {
    "gen-model": cmd_gen_model,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "render": cmd_render,
    "augment": cmd_augment,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _HANDLERS[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DamdnetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
