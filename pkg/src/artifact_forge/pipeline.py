"""Per-scene data pipeline: QC -> clean render -> degrade -> annotate -> prompts.

Every stage writes into its own content-addressed directory
``<output>/scenes/<scene>/<stage>-<digest>`` where the digest covers the
stage parameters, its seed and the digests of its inputs, so no stage can
clobber another stage's inputs and identical reruns land on identical paths.
Wall-clock timings go to ``timings.json``; ``report.json`` holds only
deterministic content.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import promptgen
from .config import PipelineConfig
from .degrade import compose
from .errors import ArtifactForgeError, DataError, SegmentTooShort
from .gaussians import load_ply, save_ply
from .heatmap import annotate, write_heatmaps
from .images import write_frames
from .render import render_video
from .seeding import derive_seed
from .toy import orbit_trajectory, random_cloud
from .trajectory import CameraTrajectory, filter_trajectory

log = logging.getLogger(__name__)

STAGES = ("input", "qc", "render_clean", "degrade", "annotate", "prompts")


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode("utf-8")).hexdigest()


def _file_digest(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


class _Scene:
    """Bookkeeping for one scene: stage directories, digests and timings."""

    def __init__(self, root: Path, scene_id: str):
        self.root = root / "scenes" / scene_id
        self.id = scene_id
        self.outputs = {}
        self.digests = {}
        self.timings = {}

    def stage_dir(self, stage, params, inputs) -> Path:
        d = _digest({"stage": stage, "params": params, "inputs": [self.digests[i] for i in inputs]})
        self.digests[stage] = d
        path = self.root / f"{stage}-{d[:12]}"
        path.mkdir(parents=True, exist_ok=True)
        self.outputs[stage] = path.relative_to(self.root.parent.parent).as_posix()
        return path


def load_scene(cfg: PipelineConfig, scene_id: str, source: str):
    """Return ``(cloud, trajectory, provenance)`` for a scene entry."""
    if source == "toy":
        seed = derive_seed(cfg.seed, scene_id, "toy")
        t = cfg.toy
        cloud = random_cloud(t.n_gaussians, seed=seed)
        traj = orbit_trajectory(t.n_frames, -t.arc_degrees / 2, t.arc_degrees / 2, size=t.image_size)
        return cloud, traj, {"kind": "toy", "seed": seed, **vars(t)}
    src = Path(source)
    ply, tj = src / "scene.ply", src / "trajectory.json"
    for p in (ply, tj):
        if not p.is_file():
            raise DataError(f"scene {scene_id!r}: missing {p}")
    return load_ply(ply), CameraTrajectory.load(tj), {"kind": "files", "sha256": _file_digest(ply, tj)}


def process_scene(cfg: PipelineConfig, scene_id: str, source: str) -> tuple[dict, dict]:
    """Run every stage for one scene; returns ``(report entry, timings)``."""
    sc = _Scene(Path(cfg.output), scene_id)
    params = cfg.stage_params()
    entry = {"scene_id": scene_id, "source": source, "status": "ok"}
    clock = time.perf_counter()

    def lap(stage):
        nonlocal clock
        now = time.perf_counter()
        sc.timings[stage] = round(now - clock, 6)
        clock = now

    try:
        cloud, traj, prov = load_scene(cfg, scene_id, source)
        d = sc.stage_dir("input", prov, [])
        save_ply(cloud, d / "scene.ply")
        traj.save(d / "trajectory.json")
        lap("input")

        d = sc.stage_dir("qc", params["qc"], ["input"])
        try:
            qc = filter_trajectory(traj, cfg.qc)
        except SegmentTooShort as exc:
            _dump(d / "qc.json", exc.result.to_json())
            entry.update(status="rejected", reason=str(exc), segment=list(exc.result.segment))
            lap("qc")
            return _finish(entry, sc)
        _dump(d / "qc.json", qc.to_json())
        a, b = qc.segment
        entry["segment"] = [a, b]
        cams = traj.slice(a, b).cameras()
        lap("qc")

        d = sc.stage_dir("render_clean", params["render"], ["qc"])
        clean = render_video(cloud, cams, cfg.render)
        write_frames(d / "frames", clean)
        lap("render_clean")

        seed = derive_seed(cfg.seed, scene_id, "degrade")
        d = sc.stage_dir("degrade", {**params["degrade"], "render": params["render"], "seed": seed}, ["qc"])
        deg = compose(cloud, cams, dataclasses.replace(cfg.degrade, seed=seed), cfg.render)
        save_ply(deg.cloud, d / "degraded.ply")
        write_frames(d / "frames", deg.video)
        rep = deg.report()
        _dump(d / "degradation.json", rep)
        entry.update(rep)
        lap("degrade")

        d = sc.stage_dir("annotate", params["heatmap"], ["render_clean", "degrade"])
        volume = annotate(deg.video, clean, cfg.metric())
        write_heatmaps(d, volume, cfg.metric().name)
        lap("annotate")

        pseeds = {k: derive_seed(cfg.seed, scene_id, f"prompt-{k}") for k in ("train", "infer", "vqa")}
        d = sc.stage_dir("prompts", {**params["prompt"], "seeds": pseeds}, ["degrade"])
        entry["prompts"] = _write_prompts(cfg, scene_id, deg.labels, pseeds, d)
        lap("prompts")
    except ArtifactForgeError as exc:
        entry.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        log.error("scene %s failed: %s", scene_id, exc)
    return _finish(entry, sc)


def _write_prompts(cfg, scene_id, labels, seeds, directory) -> dict:
    matrix = promptgen.ExclusivityMatrix.load(cfg.prompt.exclusivity or None)
    prompts = []
    if labels:
        prompts.append({"scene_id": scene_id, "kind": "training",
                        "prompt": promptgen.training_prompt(labels, seeds["train"])})
    rng = np.random.default_rng(seeds["infer"])
    for _ in range(cfg.prompt.n_inference):
        prompts.append({"scene_id": scene_id, "kind": "inference", "prompt": promptgen.inference_prompt(rng)})
    pairs = [{"video_id": scene_id, **p} for p in promptgen.video_vqa_pairs(labels, matrix, seeds["vqa"])]
    promptgen.write_jsonl(directory / "prompts.jsonl", prompts)
    promptgen.write_jsonl(directory / "vqa.jsonl", pairs)
    return {"n_prompts": len(prompts), "n_vqa": len(pairs)}


def _finish(entry, sc):
    entry["outputs"] = dict(sc.outputs)
    return entry, {"scene_id": sc.id, "stages": sc.timings}


def _run_one(args):
    return process_scene(*args)


def run_pipeline(cfg: PipelineConfig, jobs: int | None = None) -> tuple[int, dict]:
    """Process every configured scene with a bounded worker pool.

    Returns ``(exit_status, report)``; the status is 0 when no scene hit a hard
    failure (QC rejections are not failures) and 3 otherwise.
    """
    jobs = jobs or cfg.jobs
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from None
    tasks = [(cfg, sid, src) for sid, src in cfg.scenes.items()]
    start = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    entries = [r[0] for r in results]
    failed = [e["scene_id"] for e in entries if e["status"] == "failed"]
    report = {
        "seed": cfg.seed,
        "config_digest": _digest(cfg.stage_params()),
        "n_scenes": len(entries),
        "n_failed": len(failed),
        "n_rejected": sum(e["status"] == "rejected" for e in entries),
        "scenes": entries,
    }
    _dump(out / "report.json", report)
    _dump(out / "timings.json", {"total_seconds": round(time.perf_counter() - start, 6),
                                 "jobs": jobs, "scenes": [r[1] for r in results]})
    return (3 if failed else 0), report
