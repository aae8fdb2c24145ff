#!/usr/bin/env python3
"""Convert public highway trajectory exports into the packaged CSV schema.

This repository does not redistribute recorded trajectory data. The US-101
dataset is public: search for "NGSIM Vehicle Trajectories" on data.gov and
download the US-101 vehicle trajectory CSV (columns Vehicle_ID, Frame_ID,
Lane_ID, Local_Y, v_Vel among others, units in feet). Then run:

    python scripts/fetch_trajectories.py raw_us101.csv data/us101.csv

and point the simulator at the output directory:

    export PLATOONSIM_DATA_DIR=data
    platoonsim sweep --config configs/sweep_synthetic.json --out sweep/

Optionally restrict to a frame window (10 Hz frames), e.g. the first
15 minutes: --max-frame 9000.
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from platoonsim.trajectory import parse_trajectories, serialize_trajectories


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("raw", help="raw trajectory export (feet units accepted)")
    ap.add_argument("out", help="output CSV in the packaged schema")
    ap.add_argument("--min-frame", type=int, default=None)
    ap.add_argument("--max-frame", type=int, default=None)
    args = ap.parse_args()
    records = parse_trajectories(args.raw)
    if args.min_frame is not None:
        records = [r for r in records if r.frame >= args.min_frame]
    if args.max_frame is not None:
        records = [r for r in records if r.frame <= args.max_frame]
    if not records:
        print("no records after filtering", file=sys.stderr)
        return 1
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    serialize_trajectories(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
