"""Write a synthetic two-batch association trace for trace_slow_predator.yaml.

    python scenarios/make_synthetic_trace.py [out.csv] [--seed N]

The default parameters give about 100k encounters over 20 days (roughly 10 MB),
which is why the file is generated rather than shipped.
"""
import argparse

from wormnet.trace import associations_to_csv, synthetic_two_group


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", nargs="?", default="synthetic_two_group.csv")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    recs = synthetic_two_group(seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(associations_to_csv(recs))
    print(f"{args.out}: {len(recs)} records")


if __name__ == "__main__":
    main()
