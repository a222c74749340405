"""From a clean/degraded clip pair to a restored latent.

The clip pair gives a pseudo ground-truth heatmap. The heatmap and the
boundary-anchored reference are assembled into triplets. A velocity oracle
stands in for the network and is integrated over the scheduled masks.

Run: python demos/heatmap_to_sampler.py
"""
import numpy as np

from artifact_forge.degrade import DegradeConfig, compose
from artifact_forge.heatmap import annotate
from artifact_forge.latent import PatchifyEncoder, heatmap_latent
from artifact_forge.render import render_video
from artifact_forge.schedule import ScheduleConfig, TruthOracle, build_reference, masked_fm_loss, sample, schedule_csv
from artifact_forge.toy import orbit_trajectory, random_cloud

cloud = random_cloud(40, seed=8)
cams = orbit_trajectory(16, -30.0, 30.0, size=32).cameras()
clean = render_video(cloud, cams)
cfg = DegradeConfig(per_kind_probability=0.0, probabilities={"RandomDropout": 1.0, "ScaleCompression": 1.0})
degraded = compose(cloud, cams, cfg).video

heat = annotate(degraded, clean)
print("heatmap mean per frame:", np.round(heat.mean(axis=(1, 2)), 3))

enc = PatchifyEncoder(2)
z_ref = build_reference(clean[0], clean[-1], degraded, k=4, encoder=enc)
z0 = enc.encode(clean)
z_heat = heatmap_latent(heat, z0)
print("latent shape (T, C, H, W):", z0.shape)

schedule = ScheduleConfig.from_preset("exp7")
print(schedule_csv(schedule))

rng = np.random.default_rng(0)
noise = z0.with_data(rng.standard_normal(z0.shape))
oracle = TruthOracle.from_endpoints(z0, noise)
print("masked loss of the exact oracle:", masked_fm_loss(oracle, z_ref, z0, noise, 0.6, z_heat))
restored = sample(oracle, z_ref, z_heat, schedule, noise)
print("max error after 8 Euler steps:", np.abs(enc.decode(restored) - clean).max())
