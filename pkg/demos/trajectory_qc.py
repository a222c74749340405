"""Score a camera path for smoothness and keep its longest clean stretch.

Run: python demos/trajectory_qc.py
"""
import numpy as np

from artifact_forge.trajectory import CameraTrajectory, FilterConfig, filter_trajectory, kinematics
from artifact_forge.toy import orbit_trajectory

smooth = orbit_trajectory(60, -40.0, 40.0)
result = filter_trajectory(smooth, FilterConfig(min_segment_length=16))
print("smooth orbit: segment", result.segment, "of", len(smooth), "frames")

# knock two frames off the path, as a tracking glitch would
centers = smooth.centers.copy()
centers[18] += (0.0, 0.15, 0.0)
centers[41] += (0.1, 0.0, -0.1)
glitchy = CameraTrajectory(smooth.rotations, centers, smooth.intrinsics)
rep = kinematics(glitchy)
print("normalised jerk peaks near frames", np.argsort(rep.jerk_norm)[-4:][::-1])

result = filter_trajectory(glitchy, FilterConfig(min_segment_length=16))
print("glitchy orbit: segment", result.segment)
for metric, flags in result.rejected_by.items():
    print(f"  {metric:>10} rejects frames {np.flatnonzero(flags).tolist()}")

# the filter only looks at shape, so scaling the whole path changes nothing
scaled = CameraTrajectory(glitchy.rotations, 7.5 * glitchy.centers, glitchy.intrinsics)
same = np.array_equal(filter_trajectory(scaled, FilterConfig(min_segment_length=16)).valid, result.valid)
print("flags unchanged after scaling by 7.5:", same)
