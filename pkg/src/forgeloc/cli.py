"""Command-line interface.

Subcommands: gt-map, decode, eval, plan, gradcheck, train, synth-fixtures,
stats, snms-search.  Options may also come from a text config file of
KEY=VALUE lines (--config); explicit flags always win.  Errors exit nonzero
with a single machine-readable JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import evaluation, fixtures, gradcheck, model, planner, postprocess
from .boundary import gt_boundary_map, load_boundary_map, save_boundary_map
from .losses import LossWeights
from .types import VideoAnnotation, read_manifest


def default_max_duration(anns: list[VideoAnnotation]) -> int:
    """Dataset-level D: ceil of the longest fake segment in frames."""
    longest = max(
        (seg.duration * ann.fps for ann in anns for seg in ann.fake_segments), default=0.0
    )
    if longest <= 0:
        raise ValueError("manifest has no fake segments; pass --max-duration explicitly")
    return math.ceil(longest)


def _snms_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--method", choices=(postprocess.GAUSSIAN, postprocess.LINEAR),
                    default=postprocess.GAUSSIAN)
    sp.add_argument("--sigma", type=float, default=0.3)
    sp.add_argument("--iou-cut", type=float, default=0.3)
    sp.add_argument("--score-floor", type=float, default=0.01)
    sp.add_argument("--top-k", type=int, default=100)


def _snms_config(args) -> postprocess.SnmsConfig:
    return postprocess.SnmsConfig(
        method=args.method, sigma=args.sigma, iou_cut=args.iou_cut,
        score_floor=args.score_floor, top_k=args.top_k,
    )


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_gt_map(args) -> int:
    anns = read_manifest(args.manifest)
    by_id = {a.video_id: a for a in anns}
    if args.video_id not in by_id:
        raise ValueError(f"unknown video_id {args.video_id!r}")
    ann = by_id[args.video_id]
    d = args.max_duration or default_max_duration(anns)
    bmap = gt_boundary_map(ann, ann.n_frames, d)
    save_boundary_map(args.out, bmap, ann.fps)
    return 0


def cmd_decode(args) -> int:
    config = _snms_config(args)
    predictions = {}
    if args.maps_dir:
        for path in sorted(Path(args.maps_dir).glob("*.json")):
            bmap, fps = load_boundary_map(path)
            predictions[path.stem] = postprocess.decode(bmap, fps, config)
    else:
        if not args.map or not args.video_id:
            raise ValueError("decode needs either --maps-dir or both --map and --video-id")
        bmap, fps = load_boundary_map(args.map)
        predictions[args.video_id] = postprocess.decode(bmap, fps, config)
    postprocess.write_predictions(args.out, predictions)
    return 0


def cmd_eval(args) -> int:
    anns = read_manifest(args.manifest)
    if args.subset:
        anns = evaluation.filter_subset(anns)
    predictions = postprocess.read_predictions(args.predictions)
    predictions = {vid: segs for vid, segs in predictions.items()
                   if vid in {a.video_id for a in anns}} if args.subset else predictions
    report = evaluation.evaluate(predictions, anns)
    _emit(evaluation.report_to_dict(report), args.out)
    return 0


def cmd_plan(args) -> int:
    transcript = planner.read_transcript(args.transcript)
    lexicon = planner.SentimentLexicon.from_tsv(args.lexicon)
    antonyms = planner.AntonymDictionary.from_tsv(args.antonyms)
    result = planner.plan(transcript, lexicon, antonyms)
    _emit(planner.plan_to_dict(result), args.out)
    return 0


def cmd_gradcheck(args) -> int:
    rows = gradcheck.run_all(seed=args.seed, instances=args.instances)
    if args.json:
        print(json.dumps([
            {"name": r.name, "instances": r.instances, "max_rel_err": r.max_rel_err,
             "tolerance": r.tolerance, "passed": r.passed}
            for r in rows
        ], indent=2))
    else:
        width = max(len(r.name) for r in rows)
        for r in rows:
            status = "PASS" if r.passed else "FAIL"
            print(f"{r.name:<{width}}  n={r.instances:<3d}  "
                  f"max_rel_err={r.max_rel_err:.3e}  tol={r.tolerance:.0e}  {status}")
    return 0 if all(r.passed for r in rows) else 1


def cmd_train(args) -> int:
    fx = fixtures.load_fixtures(args.fixtures)
    feature_dim = args.feature_dim or int(fx.config["feature_dim"])
    max_duration = args.max_duration or int(fx.config["max_duration"])
    config = model.ModelConfig(
        encoder=model.EncoderConfig(
            feature_dim=feature_dim,
            video_input_dim=int(fx.config["feature_dim"]),
            audio_input_dim=int(fx.config["feature_dim"]),
            temporal_kernel=args.kernel,
            n_layers=args.layers,
        ),
        max_duration=max_duration,
        seed=args.seed,
    )
    weights = LossWeights(lambda_c=args.lambda_c, lambda_f=args.lambda_f,
                          lambda_b=args.lambda_b, lambda_bm=args.lambda_bm,
                          delta=args.delta)
    anns = fx.split(args.split)
    if not anns:
        raise ValueError(f"no videos in split {args.split!r}")
    batch = model.build_batch(
        anns,
        np.stack([fx.video_features[a.video_id] for a in anns]),
        np.stack([fx.spectrograms[a.video_id] for a in anns]),
        config.max_duration,
    )
    params = model.init_params(config)
    params, trace = model.train(params, config, batch, weights, args.steps, args.learning_rate)
    model.save_params(args.out, params, config)
    print(json.dumps({
        "steps": len(trace),
        "loss_first": trace[0] if trace else None,
        "loss_last": trace[-1] if trace else None,
        "checkpoint": str(args.out),
    }))

    if args.predictions_out:
        eval_anns = fx.split(args.predict_split)
        snms = _snms_config(args)
        predictions = {}
        for ann in eval_anns:
            fused, _, _ = model.predict_video(
                params, config, fx.video_features[ann.video_id],
                fx.spectrograms[ann.video_id],
            )
            predictions[ann.video_id] = postprocess.decode(fused, ann.fps, snms)
        postprocess.write_predictions(args.predictions_out, predictions)
    return 0


def cmd_synth_fixtures(args) -> int:
    fx = fixtures.synth_fixtures(
        seed=args.seed, n_videos=args.n_videos, frames=args.frames,
        feature_dim=args.feature_dim, max_duration=args.max_duration,
        separability=args.separability, fps=args.fps, pool_ratio=args.pool_ratio,
        noise=args.noise, two_segment_prob=args.two_segment_prob,
    )
    fixtures.save_fixtures(args.out, fx)
    print(json.dumps({"videos": len(fx.annotations), "out": str(args.out)}))
    return 0


def cmd_stats(args) -> int:
    anns = read_manifest(args.manifest)
    _emit(fixtures.manifest_stats(anns), args.out)
    return 0


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v)


def cmd_snms_search(args) -> int:
    anns = read_manifest(args.manifest)
    maps = {}
    for path in sorted(Path(args.maps_dir).glob("*.json")):
        maps[path.stem] = load_boundary_map(path)
    results = postprocess.search_snms(
        maps, anns, sigmas=args.sigmas, score_floors=args.score_floors,
        top_ks=args.top_ks, methods=args.methods.split(","),
        iou_cuts=args.iou_cuts, iou_thr=args.iou_thr,
    )
    payload = {
        "best": {"config": vars(results[0][0]).copy(), "ap": results[0][1]},
        "table": [{"config": vars(c).copy(), "ap": ap} for c, ap in results],
    }
    _emit(payload, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forgeloc")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gt-map", help="write a ground-truth boundary map for one video")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--video-id", required=True)
    sp.add_argument("--max-duration", type=int, default=0,
                    help="D in frames; default: longest fake segment in the manifest")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_gt_map)

    sp = sub.add_parser("decode", help="boundary map file(s) -> prediction file")
    sp.add_argument("--map")
    sp.add_argument("--video-id")
    sp.add_argument("--maps-dir")
    sp.add_argument("--out", required=True)
    _snms_flags(sp)
    sp.set_defaults(fn=cmd_decode)

    sp = sub.add_parser("eval", help="score a prediction file against a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--predictions", required=True)
    sp.add_argument("--subset", action="store_true",
                    help="drop audio-only modified videos before scoring")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("plan", help="plan transcript manipulations")
    sp.add_argument("--transcript", required=True)
    sp.add_argument("--lexicon", required=True)
    sp.add_argument("--antonyms", required=True)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_plan)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--instances", type=int, default=20)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("train", help="full-batch gradient descent on a fixture set")
    sp.add_argument("--fixtures", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--steps", type=int, default=1000)
    sp.add_argument("--learning-rate", type=float, default=1.0)
    sp.add_argument("--split", default="train")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--feature-dim", type=int, default=0)
    sp.add_argument("--max-duration", type=int, default=0)
    sp.add_argument("--kernel", type=int, default=3)
    sp.add_argument("--layers", type=int, default=2)
    sp.add_argument("--lambda-c", type=float, default=0.1)
    sp.add_argument("--lambda-f", type=float, default=2.0)
    sp.add_argument("--lambda-b", type=float, default=1.0)
    sp.add_argument("--lambda-bm", type=float, default=1.0)
    sp.add_argument("--delta", type=float, default=0.99)
    sp.add_argument("--predictions-out")
    sp.add_argument("--predict-split", default="test")
    _snms_flags(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("synth-fixtures", help="generate a synthetic fixture bundle")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-videos", type=int, default=400)
    sp.add_argument("--frames", type=int, default=32)
    sp.add_argument("--feature-dim", type=int, default=8)
    sp.add_argument("--max-duration", type=int, default=8)
    sp.add_argument("--separability", type=float, default=3.0)
    sp.add_argument("--fps", type=float, default=4.0)
    sp.add_argument("--pool-ratio", type=int, default=4)
    sp.add_argument("--noise", type=float, default=0.3)
    sp.add_argument("--two-segment-prob", type=float, default=0.3)
    sp.set_defaults(fn=cmd_synth_fixtures)

    sp = sub.add_parser("stats", help="manifest distribution summary")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_stats)

    sp = sub.add_parser("snms-search", help="grid-search soft-nms parameters")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--maps-dir", required=True)
    sp.add_argument("--sigmas", type=_float_list, default=(0.1, 0.3, 0.5, 1.0))
    sp.add_argument("--score-floors", type=_float_list, default=(0.01, 0.1, 0.3))
    sp.add_argument("--top-ks", type=_int_list, default=(100,))
    sp.add_argument("--methods", default=postprocess.GAUSSIAN)
    sp.add_argument("--iou-cuts", type=_float_list, default=(0.3,))
    sp.add_argument("--iou-thr", type=float, default=0.5)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_snms_search)

    for action in sub.choices.values():
        action.add_argument("--config", help="text config file of KEY=VALUE defaults")
    return parser


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{line_no}: expected KEY=VALUE")
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


def _apply_config_defaults(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    """Install config values as parser defaults so explicit flags still win."""
    for action in parser._actions:  # noqa: SLF001 - argparse has no public hook
        if action.dest in values:
            raw = values[action.dest]
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                converted = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                converted = action.type(raw)
            else:
                converted = raw
            parser.set_defaults(**{action.dest: converted})


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)

    parser = build_parser()
    if known.config:
        values = _read_config_file(known.config)
        sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        for sp in set(sub_action.choices.values()):
            _apply_config_defaults(sp, values)

    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # surface a machine-readable error line
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
