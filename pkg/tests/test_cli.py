import json
import subprocess
import sys

import numpy as np
import pytest

from artifact_forge.cli import main
from artifact_forge.gaussians import load_ply, save_ply
from artifact_forge.images import read_frames, read_image, write_frames, write_image
from artifact_forge.latent import IdentityEncoder, read_latent
from artifact_forge.render import render_video
from artifact_forge.toy import orbit_trajectory, random_cloud


@pytest.fixture
def ws(tmp_path):
    cloud = random_cloud(6, seed=2)
    traj = orbit_trajectory(12, size=16)
    save_ply(cloud, tmp_path / "scene.ply")
    traj.save(tmp_path / "traj.json")
    clean = render_video(cloud, traj.cameras())
    write_frames(tmp_path / "clean", clean)
    dark = clean.copy()
    dark[3:9, 4:12, 4:12] *= 0.2
    write_frames(tmp_path / "deg", dark)
    write_image(tmp_path / "first.png", clean[0])
    write_image(tmp_path / "last.png", clean[-1])
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_schedule_dump_matches_presets(capsys):
    assert run("schedule-dump", "--preset", "exp7") == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "step,w_full,w_null,w_heatmap" and out[-1] == "8,0.0,1.0,0.0"
    assert run("schedule-dump", "--preset", "exp9") == 2
    assert run("schedule-dump", "--preset", "piecewise", "--steps", "4", "--tau1", "0.5", "--tau2", "0.9") == 0


def test_qc_report_and_rejection(ws):
    assert run("qc", "--traj", ws / "traj.json", "--min-seg", "4", "--report", ws / "qc.json") == 0
    rep = json.loads((ws / "qc.json").read_text())
    assert rep["segment"] == [0, 12]
    assert run("qc", "--traj", ws / "traj.json", "--min-seg", "40", "--report", ws / "rej.json") == 3
    assert json.loads((ws / "rej.json").read_text())["segment"] == [0, 12]
    assert run("qc", "--traj", ws / "missing.json") == 3


def test_render_and_metrics(ws, capsys):
    assert run("render", "--ply", ws / "scene.ply", "--camera", ws / "traj.json", "--frame", 3,
               "--out", ws / "f3.pfm") == 0
    np.testing.assert_allclose(read_image(ws / "f3.pfm"), read_frames(ws / "clean")[3], atol=1 / 255)
    assert run("render", "--ply", ws / "scene.ply", "--camera", ws / "traj.json", "--frame", 99,
               "--out", ws / "x.png") == 3
    assert run("metrics", "--a", ws / "first.png", "--b", ws / "first.png") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["l1"] == 0.0 and doc["psnr"] == "inf"
    # frame directories give one value per frame
    assert run("metrics", "--a", ws / "clean", "--b", ws / "clean") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["psnr"] == ["inf"] * 12 and doc["ssim"] == [1.0] * 12


def test_degrade_is_seeded(ws):
    for name in ("a", "b"):
        assert run("--seed", 5, "degrade", "--ply", ws / "scene.ply", "--out", ws / f"{name}.ply",
                   "--report", ws / f"{name}.json") == 0
    assert (ws / "a.ply").read_bytes() == (ws / "b.ply").read_bytes()
    cfg = ws / "all.ini"
    cfg.write_text("[degrade]\nprobability.RandomDropout = 1\nprobability.Aliasing = 1\n")
    assert run("degrade", "--config", cfg, "--ply", ws / "scene.ply", "--out", ws / "c.ply",
               "--report", ws / "c.json", "--camera", ws / "traj.json", "--frames", ws / "cf") == 0
    assert load_ply(ws / "c.ply").n == 4
    assert read_frames(ws / "cf").shape == (12, 16, 16, 3)
    bad = ws / "bad.ini"
    bad.write_text("[degrade]\nopacity_factor = 2\n")
    assert run("degrade", "--config", bad, "--ply", ws / "scene.ply", "--out", ws / "d.ply") == 2


def test_annotate(ws):
    assert run("annotate", "--degraded", ws / "deg", "--clean", ws / "clean", "--out", ws / "hm") == 0
    hm = read_frames(ws / "hm")
    assert hm.shape[:3] == (12, 16, 16)
    assert not hm[0].any() and not hm[-1].any() and hm[5].max() > 0
    assert run("annotate", "--degraded", ws / "deg", "--clean", ws / "nowhere", "--out", ws / "x") == 3


def test_assemble_and_sample(ws):
    assert run("assemble", "--video", ws / "deg", "--gt-first", ws / "first.png", "--gt-last", ws / "last.png",
               "--target", ws / "clean", "--heatmap", ws / "deg", "--t", 0.3, "--k", 4, "--step", 0,
               "--out", ws / "tri.afl", "--meta", ws / "meta.json", "--ref-out", ws / "ref.afl") == 0
    meta = json.loads((ws / "meta.json").read_text())
    assert meta["spans"] == {"reference": [0, 12], "target": [12, 24], "heatmap": [24, 36]}
    assert meta["t_seq"] == [0.0] * 12 + [0.3] * 12 + [0.0] * 12 and meta["weights"] == [0.8, 0.0, 0.2]
    tri = read_latent(ws / "tri.afl")
    enc = IdentityEncoder()
    first = enc.encode_frame(read_image(ws / "first.png"))
    assert np.array_equal(tri.data[0], first.astype(np.float32))
    assert run("sample", "--ref", ws / "ref.afl", "--target", ws / "clean", "--out", ws / "z0.afl",
               "--frames", ws / "restored") == 0
    np.testing.assert_allclose(read_latent(ws / "z0.afl").data, enc.encode(read_frames(ws / "clean")).data,
                               atol=1e-5)
    assert run("sample", "--ref", ws / "ref.afl", "--out", ws / "z.afl") == 2
    assert run("assemble", "--video", ws / "deg", "--gt-first", ws / "first.png", "--gt-last", ws / "last.png",
               "--k", 20, "--out", ws / "t.afl") == 3


def test_prompt_modes(ws, capsys):
    assert run("prompt", "--mode", "inference", "--labels", "Cracks", "Floaters") == 0
    assert json.loads(capsys.readouterr().out)["prompt"] == "Apply crack artifacts, floater artifacts to the scene."
    assert run("prompt", "--mode", "training", "--labels", "Ghosting", "--template", 2, "--out", ws / "t.jsonl") == 0
    assert "Add translucent" in (ws / "t.jsonl").read_text()
    assert run("prompt", "--mode", "vqa", "--labels", "Aliasing", "--n", 2) == 0
    lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert [x["answer"] for x in lines] == ["Yes", "No", "No"] * 2
    assert run("prompt", "--mode", "training") == 2
    assert run("prompt", "--mode", "inference", "--k", 12) == 2


def test_recon_demo_small(ws, capsys):
    views = {**json.loads((ws / "traj.json").read_text())}
    (ws / "views.json").write_text(json.dumps(views))
    target = random_cloud(2, seed=4)
    save_ply(target, ws / "gt.ply")
    save_ply(target.replace(positions=target.positions + 0.05), ws / "init.ply")
    assert run("recon-demo", "--ply", ws / "init.ply", "--views", ws / "views.json", "--gt-ply", ws / "gt.ply",
               "--iters", 1, "--steps", 2, "--out", ws / "fit.ply", "--curve", ws / "loss.csv") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["final_loss"] <= doc["initial_loss"] and doc["steps"] == 2
    assert (ws / "loss.csv").read_text().startswith("row,phase,loss,l_recon,l_gen")
    assert run("recon-demo", "--views", ws / "views.json", "--restorer", "identity") == 2


def test_pipeline_command(ws, capsys):
    cfg = ws / "p.ini"
    cfg.write_text(f"[run]\noutput = {ws / 'out'}\n[scenes]\ns = {ws / 'nowhere'}\n")
    assert run("pipeline", "--config", cfg) == 2
    cfg.write_text("[scenes]\ns = toy\n[toy]\nimage_size = 16\nn_frames = 20\n[qc]\nmin_segment_length = 8\n")
    assert run("pipeline", "--config", cfg, "--out", ws / "out") == 0
    assert "1 scenes, 0 failed" in capsys.readouterr().out
    assert (ws / "out" / "report.json").is_file()


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "artifact_forge.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "schedule-dump" in res.stdout
    res = subprocess.run([sys.executable, "-m", "artifact_forge.cli", "nope"], capture_output=True, text=True)
    assert res.returncode == 2
