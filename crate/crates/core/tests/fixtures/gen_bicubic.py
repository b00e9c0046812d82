"""Regenerates bicubic.txt from Pillow's float-mode bicubic resampler."""
import numpy as np
from PIL import Image

rng = np.random.default_rng(11)
h, w = 23, 19
src = rng.random((h, w), dtype=np.float64).astype(np.float32)
sizes = [(46, 38), (69, 57), (12, 10), (8, 7), (17, 11)]
with open("bicubic.txt", "w") as f:
    f.write(f"input {h} {w}\n")
    f.write(" ".join(repr(float(v)) for v in src.ravel()) + "\n")
    for oh, ow in sizes:
        out = np.asarray(Image.fromarray(src, mode="F").resize((ow, oh), Image.BICUBIC), dtype=np.float64)
        f.write(f"output {oh} {ow}\n")
        f.write(" ".join(repr(float(v)) for v in out.ravel()) + "\n")
