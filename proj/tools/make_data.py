#!/usr/bin/env python3
"""Regenerate the bundled test images in data/.

Sources are the public-domain / CC0 sample images shipped with scikit-image:
camera (cameraman), astronaut (converted to grayscale with BT.601 luma) and
text. Each is center-cropped to a square and area-resampled to 64x64 and
128x128 8-bit binary PGM.

To use your own images, convert them the same way, e.g.

    python3 tools/make_data.py --input photo.jpg --name photo
"""

import argparse
import pathlib

import numpy as np
from PIL import Image
from skimage import data as skdata


def luma601(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def center_square(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    s = min(h, w)
    y0, x0 = (h - s) // 2, (w - s) // 2
    return img[y0 : y0 + s, x0 : x0 + s]


def write_sizes(gray: np.ndarray, name: str, out: pathlib.Path, sizes) -> None:
    square = Image.fromarray(np.clip(np.rint(center_square(gray)), 0, 255).astype(np.uint8), mode="L")
    for size in sizes:
        path = out / f"{name}{size}.pgm"
        square.resize((size, size), Image.Resampling.BOX).save(path, format="PPM")
        print(path)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    parser.add_argument("--input", help="convert this image instead of the bundled set")
    parser.add_argument("--name", help="output stem for --input")
    parser.add_argument("--sizes", default="64,128")
    args = parser.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sizes = [int(s) for s in args.sizes.split(",")]

    if args.input:
        img = np.asarray(Image.open(args.input).convert("RGB"))
        write_sizes(luma601(img), args.name or pathlib.Path(args.input).stem, out, sizes)
        return

    write_sizes(skdata.camera(), "camera", out, sizes)
    write_sizes(luma601(skdata.astronaut()), "astronaut", out, sizes)
    write_sizes(skdata.text(), "text", out, sizes)


if __name__ == "__main__":
    main()
