"""Fit a small Gaussian scene from three views, with and without restored novel views.

GroundTruthRestorer plays the part of a perfect restoration model: it
re-renders the true scene from the novel cameras. Takes about a minute.

Run: python demos/closed_loop.py
"""
from artifact_forge import recon, toy
from artifact_forge.render import render

gt, cams = toy.toy_scene(n=6, size=24)
sparse = recon.Views(cams, [render(gt, c) for c in cams])
start = toy.perturbed(gt, seed=1)

base = recon.FitHistory()
recon.optimize(start, sparse, None, steps=60, history=base)
print(f"sparse only : L_recon {base.recon[0]:.4f} -> {base.recon[-1]:.4f}")

loop = recon.FitHistory()
recon.closed_loop(start, sparse, recon.GroundTruthRestorer(gt), iterations=3, steps_per_iteration=20,
                  n_novel=3, history=loop)
print(f"closed loop : L_recon {loop.recon[0]:.4f} -> {loop.recon[-1]:.4f}  "
      f"(combined {loop.losses[0]:.4f} -> {loop.losses[-1]:.4f})")
print("per-iteration start losses:",
      [round(loop.losses[i], 4) for i, p in enumerate(loop.phase) if i == 0 or p != loop.phase[i - 1]])
