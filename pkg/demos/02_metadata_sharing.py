"""
Putting every vehicle in the ego frame
======================================

Each connected vehicle reports its pose; the ego builds a rigid transform per
neighbour and projects that neighbour's points into its own frame.
"""

import math

import numpy as np

from v2vlc.detection import Box3D
from v2vlc.geometry import CAV, Pose, Scene, project_points

ego = Pose(100.0, 50.0, 0.0, yaw=math.pi / 2)
cavs = [CAV(1, Pose(120.0, 50.0, 0.0, yaw=math.pi)), CAV(2, Pose(100.0, 20.0, 0.0))]
scene = Scene(ego, cavs, gt_boxes=[Box3D(110.0, 45.0, 0.8, 4.4, 1.9, 1.6, 0.0)])

for cav_id, t in scene.transforms().items():
    origin = project_points(np.array([[0.0, 0.0, 0.0, 1.0]]), t)[0]
    print(f"CAV {cav_id} sits at ego-frame ({origin[0]:6.2f}, {origin[1]:6.2f})")

# A point 5 m ahead of CAV 1 (which faces -x in the world) lands 15 m to the
# ego's right once both headings are accounted for.
ahead = np.array([[5.0, 0.0, 0.0, 1.0]])
print("5 m ahead of CAV 1 ->", project_points(ahead, scene.transforms()[1])[0, :3].round(6))

# Scenes round-trip through JSON.
print(sorted(scene.to_dict()))
