#!/usr/bin/env python3
"""Dump a key distribution's initial per-cell arrays to disk.

Writes one little-endian unsigned-32-bit file per cell, named cell<id>.u32,
so external tools can inspect or replay exactly what the sorter saw.

    python scripts/dump_keys.py --key 5 --n 1048576 --cells 16 --seed 7 --out /tmp/key5
"""

import argparse
import sys

from cellsort.keygen import KeySpec, generate, write_cells


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--key", type=int, required=True, help="key distribution 1..5")
    parser.add_argument("--n", type=int, required=True, help="total element count")
    parser.add_argument("--cells", type=int, required=True, help="cell count")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    dist = generate(KeySpec(key_id=args.key, n_total=args.n, p=args.cells,
                            seed=args.seed))
    paths = write_cells(dist, args.out)
    counts = dist.counts
    print(f"wrote {len(paths)} files to {args.out} "
          f"(counts min={min(counts)} max={max(counts)})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
