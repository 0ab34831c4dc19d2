"""Minimal JPEG2000 command-line codec backed by Pillow/OpenJPEG.

Drop-in stand-in for opj_compress / opj_decompress when those binaries are
not installed: same -i/-o/-r flag shape, PGM on the image side, a JPEG2000
codestream on the other.  Used as the default subprocess target of the
"j2k" backend.
"""

from __future__ import annotations

import argparse
import sys


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cscodec-pil-j2k", description=__doc__)
    parser.add_argument("mode", choices=["compress", "decompress"])
    parser.add_argument("-i", dest="input", required=True)
    parser.add_argument("-o", dest="output", required=True)
    parser.add_argument("-r", dest="ratio", type=float, default=20.0,
                        help="target compression ratio (compress mode)")
    args = parser.parse_args(argv)

    from PIL import Image

    try:
        if args.mode == "compress":
            if args.ratio < 1.0:
                parser.error("compression ratio must be >= 1")
            with Image.open(args.input) as im:
                im = im.convert("L")
                im.save(
                    args.output,
                    format="JPEG2000",
                    quality_mode="rates",
                    quality_layers=[args.ratio],
                    irreversible=True,
                )
        else:
            with Image.open(args.input) as im:
                im.convert("L").save(args.output, format="PPM")
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero like a codec tool
        print(f"cscodec-pil-j2k: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
