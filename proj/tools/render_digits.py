#!/usr/bin/env python3
"""Renders a deterministic 28x28 digit corpus into IDX files.

Stands in for MNIST in offline environments: digits 0-9 drawn with the
DejaVu font family under randomized font, size, position and rotation,
written as standard IDX image/label pairs that the balltrain loaders read
directly.  Output is a pure function of --seed.
"""

import argparse
import glob
import struct
import sys

import numpy as np
from PIL import Image, ImageDraw, ImageFont

FONT_DIRS = [
    "/usr/share/fonts/truetype/dejavu",
    "/usr/share/fonts/dejavu",
    "/usr/share/fonts/TTF",
]


def find_fonts():
    for d in FONT_DIRS:
        fonts = sorted(glob.glob(f"{d}/DejaVu*.ttf"))
        if fonts:
            return fonts
    sys.exit("no DejaVu fonts found; install fonts-dejavu")


def render_digit(digit, font_path, size, dx, dy, angle):
    canvas = Image.new("L", (56, 56), 0)
    draw = ImageDraw.Draw(canvas)
    font = ImageFont.truetype(font_path, size)
    left, top, right, bottom = draw.textbbox((0, 0), str(digit), font=font)
    x = 28 - (left + right) / 2 + dx
    y = 28 - (top + bottom) / 2 + dy
    draw.text((x, y), str(digit), fill=255, font=font)
    canvas = canvas.rotate(angle, resample=Image.BILINEAR, center=(28, 28))
    return np.asarray(canvas.resize((28, 28), Image.LANCZOS), dtype=np.uint8)


def make_split(n, fonts, rng):
    images = np.zeros((n, 28, 28), dtype=np.uint8)
    labels = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        digit = i % 10  # balanced classes
        font = fonts[rng.integers(len(fonts))]
        size = int(rng.integers(34, 47))
        dx = float(rng.uniform(-4, 4))
        dy = float(rng.uniform(-4, 4))
        angle = float(rng.uniform(-14, 14))
        images[i] = render_digit(digit, font, size, dx, dy, angle)
        labels[i] = digit
    perm = rng.permutation(n)
    return images[perm], labels[perm]


def write_idx(images, labels, images_path, labels_path):
    n = images.shape[0]
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--train", type=int, default=12000)
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    fonts = find_fonts()
    rng = np.random.default_rng(args.seed)
    import os

    os.makedirs(args.out, exist_ok=True)
    tr_img, tr_lab = make_split(args.train, fonts, rng)
    te_img, te_lab = make_split(args.test, fonts, rng)
    write_idx(tr_img, tr_lab, f"{args.out}/train-images-idx3-ubyte",
              f"{args.out}/train-labels-idx1-ubyte")
    write_idx(te_img, te_lab, f"{args.out}/t10k-images-idx3-ubyte",
              f"{args.out}/t10k-labels-idx1-ubyte")
    print(f"wrote {args.train} train / {args.test} test digits to {args.out}")


if __name__ == "__main__":
    main()
