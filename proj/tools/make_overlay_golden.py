#!/usr/bin/env python3
"""Regenerates tests/data/overlay_* with PIL and numpy as an independent reference."""
import pathlib

import numpy as np
from PIL import Image


def voc_palette():
    pal = []
    for i in range(256):
        r = g = b = 0
        c = i
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal += [r, g, b]
    return pal


def main():
    out = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"
    w, h = 9, 7
    ys, xs = np.mgrid[0:h, 0:w]
    img = np.stack([(xs * 29 + ys * 7) % 256, (ys * 37 + 11) % 256, (xs * ys * 13 + 5) % 256], -1).astype(np.uint8)
    mask = np.zeros((h, w), np.uint8)
    mask[1:4, 2:6] = 1
    mask[4:, 0:3] = 15
    mask[5, 7] = 20
    mask[0, 8] = 255
    mask[6, 4:7] = 255
    pal = np.array(voc_palette(), np.uint16).reshape(256, 3)

    expected = img.astype(np.uint16)
    fg = (mask != 0) & (mask != 255)
    expected[fg] = (expected[fg] + pal[mask[fg]] + 1) // 2
    expected[mask == 255] = [255, 0, 0]

    Image.fromarray(img, "RGB").save(out / "overlay_image.png")
    m = Image.fromarray(mask, "P")
    m.putpalette(voc_palette())
    m.save(out / "overlay_mask.png")
    Image.fromarray(expected.astype(np.uint8), "RGB").save(out / "overlay_expected.png")


if __name__ == "__main__":
    main()
