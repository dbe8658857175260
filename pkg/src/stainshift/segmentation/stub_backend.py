"""Stand-in exchange backend for tests and dry runs.

Usage: python -m stainshift.segmentation.stub_backend INPUT_DIR OUTPUT_DIR
           [--mode classical|empty] [--skip BASENAME]

Modes: `classical` runs the built-in classical segmenter, `empty` writes
all-background masks. `--skip` omits one output (for exercising the
contract-violation path).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..imaging import read_image, write_label_map
from .classical import ClassicalParams, segment_classical


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stub_backend")
    parser.add_argument("input_dir")
    parser.add_argument("output_dir")
    parser.add_argument("--mode", choices=("classical", "empty"),
                        default="classical")
    parser.add_argument("--skip", default=None,
                        help="basename to leave unwritten")
    args = parser.parse_args(argv)

    input_dir = Path(args.input_dir)
    output_dir = Path(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    for path in sorted(input_dir.glob("*.png")):
        if args.skip and path.name == args.skip:
            continue
        image = read_image(path)
        if args.mode == "classical":
            labels = segment_classical(image, ClassicalParams())
        else:
            labels = np.zeros(image.shape[:2], dtype=np.int32)
        write_label_map(output_dir / path.name, labels)
    return 0


if __name__ == "__main__":
    sys.exit(main())
