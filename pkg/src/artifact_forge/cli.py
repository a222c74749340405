"""``artifact-forge`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import promptgen
from .config import load_config
from .errors import ConfigError, DataError, SegmentTooShort
from .gaussians import load_ply, save_ply
from .heatmap import annotate, write_heatmaps
from .images import read_frames, read_image, write_frames, write_image
from .latent import IdentityEncoder, PatchifyEncoder, heatmap_latent, read_latent, write_latent
from .metrics import l1, psnr, ssim
from .render import render
from .schedule import (MaskWeights, ScheduleConfig, TruthOracle, ZeroOracle, assemble_triplet, blend_mask,
                       build_reference, fm_path, preset, sample, schedule_csv, schedule_weights)
from .seeding import derive_seed
from .trajectory import CameraTrajectory, FilterConfig, filter_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("artifact_forge")


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _encoder(name: str):
    if name == "identity":
        return IdentityEncoder()
    if name.startswith("patchify"):
        try:
            return PatchifyEncoder(int(name[len("patchify"):] or 2))
        except ValueError:
            pass
    raise ConfigError(f"unknown encoder {name!r} (identity | patchify<N>)")


def _latent(path, encoder):
    """A latent container file, or a frame directory / single image encoded on the fly."""
    p = Path(path)
    if p.is_dir():
        return encoder.encode(read_frames(p))
    if p.suffix.lower() in (".png", ".pfm"):
        return encoder.encode(read_image(p)[None])
    return read_latent(p)


def _schedule(args) -> ScheduleConfig:
    if args.preset == "piecewise":
        return ScheduleConfig.from_thresholds(args.steps, args.tau1, args.tau2)
    try:
        return ScheduleConfig(preset(args.preset))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


# ------------------------------------------------------------ commands

def cmd_qc(args, cfg):
    qc_cfg = FilterConfig(lam=args.lam if args.lam is not None else cfg.qc.lam,
                          use_jerk=cfg.qc.use_jerk, use_angular=cfg.qc.use_angular,
                          use_direction=cfg.qc.use_direction, use_direction_mad=cfg.qc.use_direction_mad,
                          min_segment_length=args.min_seg if args.min_seg is not None else cfg.qc.min_segment_length)
    traj = CameraTrajectory.load(args.traj)
    try:
        result = filter_trajectory(traj, qc_cfg)
    except SegmentTooShort as exc:
        # the report is still useful when the clip is rejected
        _dump_json(exc.result.to_json(), args.report)
        raise
    _dump_json(result.to_json(), args.report)
    return EXIT_OK


def cmd_render(args, cfg):
    cloud = load_ply(args.ply)
    traj = CameraTrajectory.load(args.camera)
    if not 0 <= args.frame < len(traj):
        raise DataError(f"frame {args.frame} outside trajectory of {len(traj)} frames")
    write_image(args.out, render(cloud, traj.camera(args.frame), cfg.render))
    return EXIT_OK


def cmd_degrade(args, cfg):
    from dataclasses import replace

    from .degrade import compose

    cloud = load_ply(args.ply)
    cams = CameraTrajectory.load(args.camera).cameras() if args.camera else None
    deg = compose(cloud, cams, replace(cfg.degrade, seed=args.seed), cfg.render)
    save_ply(deg.cloud, args.out)
    if deg.video is not None and args.frames:
        write_frames(args.frames, deg.video)
    _dump_json(deg.report(), args.report)
    return EXIT_OK


def cmd_annotate(args, cfg):
    degraded, clean = read_frames(args.degraded), read_frames(args.clean)
    volume = annotate(degraded, clean, cfg.metric())
    write_heatmaps(args.out, volume, cfg.metric().name)
    return EXIT_OK


def cmd_assemble(args, cfg):
    enc = _encoder(args.encoder)
    video = read_frames(args.video)
    z_ref = build_reference(read_image(args.gt_first), read_image(args.gt_last), video, args.k, enc)
    z0 = enc.encode(read_frames(args.target)) if args.target else z_ref
    rng = np.random.default_rng(derive_seed(args.seed, "assemble", "noise"))
    z1 = z0.with_data(rng.standard_normal(z0.shape))
    zt = fm_path(z0, z1, args.t)
    if args.heatmap:
        vol = read_frames(args.heatmap)
        hm = heatmap_latent(vol.mean(axis=-1) if vol.ndim == 4 else vol, z_ref)
    else:
        hm = z_ref.with_data(np.zeros(z_ref.shape))
    weights = schedule_weights(args.step, _schedule(args)) if args.step is not None else MaskWeights(0, 0, 1)
    triplet = assemble_triplet(z_ref, zt, blend_mask(weights, hm), args.t)
    write_latent(args.out, triplet.as_latent())
    meta = {"t": args.t, "encoder": enc.tag, "k": args.k, "weights": [weights.full, weights.null, weights.heatmap],
            "spans": {k: [s.start, s.stop] for k, s in triplet.spans.items()},
            "t_seq": triplet.t_seq.tolist()}
    _dump_json(meta, args.meta)
    for path, seq in ((args.ref_out, z_ref), (args.heatmap_out, hm)):
        if path:
            write_latent(path, seq)
    return EXIT_OK


def cmd_schedule_dump(args, cfg):
    text = schedule_csv(_schedule(args))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sample(args, cfg):
    enc = _encoder(args.encoder)
    z_ref = _latent(args.ref, enc)
    hm = _latent(args.heatmap, enc) if args.heatmap else z_ref.with_data(np.zeros(z_ref.shape))
    if hm.shape != z_ref.shape:
        hm = heatmap_latent(hm.data.mean(axis=1), z_ref)
    rng = np.random.default_rng(derive_seed(args.seed, "sample", "noise"))
    z1 = z_ref.with_data(rng.standard_normal(z_ref.shape))
    if args.oracle == "truth":
        if not args.target:
            raise ConfigError("--oracle truth needs --target")
        oracle = TruthOracle.from_endpoints(_latent(args.target, enc), z1)
    elif args.oracle == "zero":
        oracle = ZeroOracle()
    else:
        if not args.velocity:
            raise ConfigError("--oracle file needs --velocity")
        oracle = TruthOracle(_latent(args.velocity, enc))
    out = sample(oracle, z_ref, hm, _schedule(args), z1)
    write_latent(args.out, out)
    if args.frames:
        write_frames(args.frames, enc.decode(out))
    return EXIT_OK


def cmd_recon_demo(args, cfg):
    from . import recon, toy
    from .render import render_video

    fit_cfg = recon.LossConfig(cfg.loss.lambda_gen, cfg.loss.lambda_l1, cfg.loss.lambda_ssim)
    if args.views:
        spec = json.loads(Path(args.views).read_text())
        traj = CameraTrajectory.from_json(spec)
        base = Path(args.views).parent
        cams = traj.cameras()
        images = [read_image(base / p) for p in spec.get("images", [])]
        gt = load_ply(args.gt_ply) if args.gt_ply else None
        if not images:
            if gt is None:
                raise ConfigError("views file lists no images and no --gt-ply was given to render them")
            images = list(render_video(gt, cams, cfg.render))
        if len(images) != len(cams):
            raise DataError(f"{len(images)} images for {len(cams)} cameras")
        if not args.ply:
            raise ConfigError("--views needs --ply with the cloud to fit")
        init = load_ply(args.ply)
    else:
        seed = derive_seed(args.seed, "recon-demo", "toy")
        gt, cams = toy.toy_scene(seed=seed % (2**32))
        images = list(render_video(gt, cams, cfg.render))
        init = load_ply(args.ply) if args.ply else toy.perturbed(gt, seed=seed % (2**32) + 1)
    if args.restorer == "gt-oracle":
        if gt is None:
            raise ConfigError("--restorer gt-oracle needs --gt-ply")
        restorer = recon.GroundTruthRestorer(gt, cfg.render)
    else:
        restorer = recon.identity_restorer
    history = recon.FitHistory()
    fitted = recon.closed_loop(init, recon.Views(list(cams), images), restorer, iterations=args.iters,
                               cfg=fit_cfg, steps_per_iteration=args.steps or cfg.recon.steps_per_iteration,
                               lr=cfg.recon.lr, method=cfg.recon.method, n_novel=cfg.recon.n_novel,
                               settings=cfg.render, history=history)
    if args.out:
        save_ply(fitted, args.out)
    if args.curve:
        Path(args.curve).write_text(history.to_csv())
    _dump_json({"initial_loss": history.losses[0], "final_loss": history.losses[-1],
                "final_recon": history.recon[-1], "steps": len(history.losses) - 1})
    return EXIT_OK


def cmd_prompt(args, cfg):
    seed = args.seed
    records = []
    if args.mode == "inference":
        rng = np.random.default_rng(derive_seed(seed, "prompt", "inference"))
        for i in range(args.n):
            p = promptgen.inference_prompt(rng, k=args.k, labels=args.labels or None)
            records.append({"scene_id": f"{args.id_prefix}{i:05d}", "prompt": p})
    elif args.mode == "training":
        if not args.labels:
            raise ConfigError("--mode training needs --labels")
        rng = np.random.default_rng(derive_seed(seed, "prompt", "training"))
        for i in range(args.n):
            p = promptgen.training_prompt(args.labels, rng, args.template)
            records.append({"scene_id": f"{args.id_prefix}{i:05d}", "prompt": p})
    else:
        matrix = promptgen.ExclusivityMatrix.load(args.matrix or cfg.prompt.exclusivity or None)
        rng = np.random.default_rng(derive_seed(seed, "prompt", "vqa"))
        labels = args.labels or [promptgen.NORMAL]
        for i in range(args.n):
            vid = f"{args.id_prefix}{i:05d}"
            pairs = (promptgen.vqa_pairs(labels[0], matrix, rng) if len(labels) == 1
                     else promptgen.video_vqa_pairs(labels, matrix, rng))
            records += [{"video_id": vid, **p} for p in pairs]
    if args.out:
        promptgen.write_jsonl(args.out, records)
    else:
        for r in records:
            sys.stdout.write(json.dumps(r, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_pipeline(args, cfg):
    from dataclasses import replace

    from .pipeline import run_pipeline

    if args.out:
        cfg = replace(cfg, output=args.out)
    status, report = run_pipeline(cfg, args.jobs)
    sys.stdout.write(f"{report['n_scenes']} scenes, {report['n_failed']} failed, "
                     f"{report['n_rejected']} rejected -> {cfg.output}\n")
    return status


def cmd_metrics(args, cfg):
    def load(p):
        p = Path(p)
        return read_frames(p) if p.is_dir() else read_image(p)

    a, b = load(args.a), load(args.b)
    if a.shape != b.shape:
        raise DataError(f"shapes differ: {a.shape} vs {b.shape}")
    out = {"l1": l1(a, b), "psnr": psnr(a, b), "ssim": ssim(a, b)}
    out = {k: np.asarray(v).tolist() for k, v in out.items()}
    # JSON has no infinity; identical images report the string "inf"
    fin = lambda x: x if np.isfinite(x) else "inf"
    out["psnr"] = [fin(x) for x in out["psnr"]] if isinstance(out["psnr"], list) else fin(out["psnr"])
    _dump_json(out, args.out)
    return EXIT_OK


# -------------------------------------------------------------- parser

def _add_schedule_args(p):
    p.add_argument("--preset", default="exp7", help="exp1..exp7, exp2-pure, ... or 'piecewise'")
    p.add_argument("--steps", type=int, default=8, help="steps for the piecewise schedule")
    p.add_argument("--tau1", type=float, default=0.55)
    p.add_argument("--tau2", type=float, default=0.9)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="global seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI configuration file")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    ap = argparse.ArgumentParser(prog="artifact-forge", parents=[common],
                                 description="Gaussian-splat artifact simulation and data tooling.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("qc", parents=[common], help="kinematic trajectory filter")
    p.add_argument("--traj", required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--min-seg", type=int)
    p.add_argument("--report")
    p.set_defaults(func=cmd_qc)

    p = sub.add_parser("render", parents=[common], help="render one frame of a trajectory")
    p.add_argument("--ply", required=True)
    p.add_argument("--camera", required=True, help="trajectory JSON")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--out", required=True, help=".png or .pfm")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("degrade", parents=[common], help="apply random perturbations to a cloud")
    p.add_argument("--ply", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--camera", help="trajectory JSON; renders the degraded video into --frames")
    p.add_argument("--frames")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("annotate", parents=[common], help="pseudo ground-truth heatmaps")
    p.add_argument("--degraded", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("assemble", parents=[common], help="build a reference/target/heatmap triplet")
    p.add_argument("--video", required=True, help="artifact frames")
    p.add_argument("--gt-first", required=True)
    p.add_argument("--gt-last", required=True)
    p.add_argument("--target", help="clean target frames (defaults to the reference)")
    p.add_argument("--heatmap", help="heatmap frames")
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--step", type=int, help="blend the heatmap with this schedule step's weights")
    p.add_argument("--encoder", default="identity")
    p.add_argument("--out", required=True)
    p.add_argument("--meta")
    p.add_argument("--ref-out")
    p.add_argument("--heatmap-out")
    _add_schedule_args(p)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("schedule-dump", parents=[common], help="print a mask-weight schedule as CSV")
    _add_schedule_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_schedule_dump)

    p = sub.add_parser("sample", parents=[common], help="Euler sampling with an oracle velocity")
    p.add_argument("--oracle", choices=("truth", "zero", "file"), default="truth")
    p.add_argument("--ref", required=True, help="latent file or frame directory")
    p.add_argument("--heatmap")
    p.add_argument("--target", help="clean target (truth oracle)")
    p.add_argument("--velocity", help="velocity latent (file oracle)")
    p.add_argument("--encoder", default="identity")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", help="also decode the result into frames here")
    _add_schedule_args(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("recon-demo", parents=[common], help="closed-loop fit on a tiny scene")
    p.add_argument("--ply", help="cloud to fit (default: perturbed toy scene)")
    p.add_argument("--views", help="trajectory JSON with an 'images' list")
    p.add_argument("--gt-ply", help="ground-truth cloud (gt-oracle restorer)")
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--steps", type=int, help="steps per iteration")
    p.add_argument("--restorer", choices=("identity", "gt-oracle"), default="gt-oracle")
    p.add_argument("--out")
    p.add_argument("--curve")
    p.set_defaults(func=cmd_recon_demo)

    p = sub.add_parser("prompt", parents=[common], help="text prompts and VQA pairs")
    p.add_argument("--mode", choices=("inference", "training", "vqa"), default="inference")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--k", type=int)
    p.add_argument("--labels", nargs="*", help="artifact labels, e.g. Cracks 'Color Outliers'")
    p.add_argument("--template", type=int)
    p.add_argument("--matrix", help="exclusivity matrix JSON")
    p.add_argument("--id-prefix", default="item-")
    p.add_argument("--out")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("pipeline", parents=[common], help="run every configured scene end to end")
    p.add_argument("--out", help="override [run] output")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("metrics", parents=[common], help="L1 / PSNR / SSIM between images or frame dirs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        if hasattr(args, "seed"):
            overrides["run.seed"] = args.seed
        if hasattr(args, "jobs"):
            overrides["run.jobs"] = args.jobs
        cfg = load_config(getattr(args, "config", None), overrides)
        args.seed = cfg.seed
        args.jobs = cfg.jobs
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # invariant violations raised by value constructors are bad input values
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
