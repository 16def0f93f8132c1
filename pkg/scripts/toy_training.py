"""Generator-only warm-up followed by adversarial steps on one synthetic clip.

    python scripts/toy_training.py --warmup 500 --adversarial 200 --out toy_run
"""

import argparse
import dataclasses
import logging
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from lvcnet.audio import save_wav
from lvcnet.generator import lvcnet_config
from lvcnet.params import save_checkpoint
from lvcnet.training import TrainConfig, clip_from_waveform, make_toy_clip, train_toy


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--width", type=int, default=8)
    ap.add_argument("--warmup", type=int, default=500)
    ap.add_argument("--adversarial", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="toy_run")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clip = make_toy_clip(3.0, seed=args.seed)
    save_wav(out / "clip.wav", clip)
    dataset = [clip_from_waveform(clip)]

    warm = TrainConfig(generator=lvcnet_config(args.width), lambda_adv=0.0)
    adv = dataclasses.replace(warm, lambda_adv=4.0, disc_start=args.warmup)
    csv_path = out / "losses.csv"
    with threadpool_limits(limits=args.threads):
        rows, state = train_toy(dataset, warm, args.warmup, args.seed, csv_path=csv_path)
        more, state = train_toy(dataset, adv, args.warmup + args.adversarial, state=state, csv_path=csv_path)

    combined = np.array([r[1] + r[2] for r in rows])
    print(f"STFT loss: first 10 steps {combined[:10].mean():.3f}, last 10 {combined[-10:].mean():.3f}")
    if more:
        print(f"final adversarial step: g_adv={more[-1][3]:.4f} d_loss={more[-1][4]:.4f}")
    state.save(out / "state.npz")
    save_checkpoint(out / "generator.lvc", state.gen)


if __name__ == "__main__":
    main()
