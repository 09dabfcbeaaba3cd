"""CLI: matconvert <in.mat> <out.csv> [--report report.json]"""

from __future__ import annotations

import argparse
import sys

from .convert import ConversionError, convert


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="matconvert",
        description="Convert a NASA battery aging .mat container to the canonical CSV schema.",
    )
    parser.add_argument("mat_file")
    parser.add_argument("out_csv")
    parser.add_argument("--report", default=None, help="write the conversion report JSON here")
    args = parser.parse_args(argv)

    try:
        report = convert(args.mat_file, args.out_csv)
    except (ConversionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.report:
        report.save(args.report)
    print(
        f"{report.cell_id}: emitted {report.cycles_emitted} entries "
        f"({report.cycles_emitted // 2} cycle pairs), dropped {report.cycles_dropped}, "
        f"skipped {report.impedance_skipped} impedance entries -> {args.out_csv}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
