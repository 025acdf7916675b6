"""
Boxes, IoU and average precision
================================

Bird's-eye-view IoU of rotated boxes, and AP by all-point interpolation over
a greedy score-ordered matching.
"""

import math

from v2vlc.detection import Box3D, DetectionSet, format_boxes, iou_bev, parse_boxes, precision_recall

a = Box3D(0, 0, 0, 2, 2, 1, 0)
print("offset squares:", iou_bev(a, Box3D(1, 0, 0, 2, 2, 1, 0)))
print("rotated by 45 deg:", round(iou_bev(a, Box3D(0, 0, 0, 2, 2, 1, math.pi / 4)), 4))

gt = [Box3D(0, 0, 0.8, 4.4, 1.9, 1.6, 0), Box3D(20, 0, 0.8, 4.4, 1.9, 1.6, 0)]
dets = DetectionSet([gt[0], Box3D(-30, 0, 0.8, 4.4, 1.9, 1.6, 0), gt[1]], [0.9, 0.8, 0.7])
curve = precision_recall([(dets, gt)], iou_thresh=0.5)
print("precision", curve.precision.round(3), "recall", curve.recall, "AP", round(curve.ap, 4))

# Detections and ground truth are exchanged as plain text, one box per line.
text = format_boxes(dets.boxes, dets.scores)
print(text, end="")
boxes, scores = parse_boxes(text)
print(len(boxes), "boxes parsed, scores", scores)
