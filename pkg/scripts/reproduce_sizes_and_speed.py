"""Model sizes and single-thread RTF for every variant, plus the speed ratio.

    python scripts/reproduce_sizes_and_speed.py --duration 10 --repeats 5 --out sizes.csv
"""

import argparse

from lvcnet.bench import DEFAULT_VARIANTS, parse_variant, run_bench, speed_ratio, write_report
from lvcnet.generator import count_params

REFERENCE_SIZES = {
    "lvcnet-4": 0.47e6,
    "lvcnet-6": 0.84e6,
    "lvcnet-8": 1.34e6,
    "pwg-32": 0.44e6,
    "pwg-48": 0.83e6,
    "pwg-64": 1.35e6,
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--duration", type=float, default=10.0)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()

    print(f"{'variant':<10s} {'params':>9s} {'ref':>7s} {'diff':>7s}")
    for v in DEFAULT_VARIANTS:
        n = count_params(parse_variant(v))
        ref = REFERENCE_SIZES[v]
        print(f"{v:<10s} {n:>9d} {ref / 1e6:>6.2f}M {n / ref - 1:>+7.1%}")

    results = run_bench(DEFAULT_VARIANTS, args.duration, args.repeats, args.threads)
    print()
    for r in results:
        print(f"{r.variant:<10s} rtf_median={r.rtf_median:.4f} rtf_p90={r.rtf_p90:.4f}")
    print(f"\npwg-64 / lvcnet-8 = {speed_ratio(results):.2f}")
    if args.out:
        write_report(args.out, results)


if __name__ == "__main__":
    main()
