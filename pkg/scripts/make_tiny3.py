"""Write the tiny3 fixture bundle (three regions on a chain, two years)."""

import argparse
from pathlib import Path

from hipv.data import bundle_hash, write_case_bundle
from hipv.synthetic import TINY3_CONFIG, tiny3_case


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "cases" / "tiny3"))
    ap.add_argument("--seed", type=int, default=2024, help="series generator seed")
    args = ap.parse_args()
    path = write_case_bundle(tiny3_case(args.seed), args.out, TINY3_CONFIG)
    print(f"wrote {path}  sha256 {bundle_hash(path)}")


if __name__ == "__main__":
    main()
