"""palmforge: synthetic aerial training images and detector-output evaluation.

Composites alpha-channel plant cut-outs onto background imagery with random
rotation/scale/flip and non-overlapping placement, writes YOLO-style label
files and dataset manifests, and evaluates external detector output (IoU
matching, PR curves, AP, mAP, thresholded counting) with a config-driven
experiment harness on top.
"""

__version__ = "0.1.0"
