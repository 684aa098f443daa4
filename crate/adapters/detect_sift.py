#!/usr/bin/env python3
"""Keypoint detector: gray PNG on stdin, one `x y score d0 d1 ...` line per
keypoint on stdout.

Stand-in for a learned detector such as ALIKE. Usage: detect_sift.py [max_kp]
"""
import sys

import cv2
import numpy as np

max_kp = int(sys.argv[1]) if len(sys.argv) > 1 else 500
data = np.frombuffer(sys.stdin.buffer.read(), dtype=np.uint8)
img = cv2.imdecode(data, cv2.IMREAD_GRAYSCALE)
h, w = img.shape
sift = cv2.SIFT_create(nfeatures=max_kp)
kps, desc = sift.detectAndCompute(img, None)
out = []
for kp, d in zip(kps, desc if desc is not None else []):
    x = min(max(kp.pt[0], 0.0), w - 1)
    y = min(max(kp.pt[1], 0.0), h - 1)
    out.append(f"{x:.3f} {y:.3f} {kp.response:.6g} " + " ".join(f"{v:.0f}" for v in d))
sys.stdout.write("\n".join(out) + ("\n" if out else ""))
