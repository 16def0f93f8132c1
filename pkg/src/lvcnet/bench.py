"""Real-time-factor benchmark on synthetic conditioning."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .audio import SAMPLE_RATE
from .generator import count_params, init_params, lvcnet_config, pwg_config, synthesize

FAMILIES = {"lvcnet": (4, 6, 8), "pwg": (32, 48, 64)}
DEFAULT_VARIANTS = ("lvcnet-4", "lvcnet-6", "lvcnet-8", "pwg-32", "pwg-48", "pwg-64")
REPORT_HEADER = ("variant", "params", "rtf_median", "rtf_p90")


def parse_variant(variant: str):
    family, _, width = variant.partition("-")
    if family not in FAMILIES or not width.isdigit():
        raise ValueError(f"unknown variant {variant!r}; expected e.g. lvcnet-8 or pwg-64")
    w = int(width)
    if w not in FAMILIES[family]:
        raise ValueError(f"width {w} not valid for {family} (choose from {FAMILIES[family]})")
    return lvcnet_config(w) if family == "lvcnet" else pwg_config(w)


@dataclass
class BenchResult:
    variant: str
    params: int
    rtf: list[float]

    @property
    def rtf_median(self) -> float:
        return float(np.median(self.rtf))

    @property
    def rtf_p90(self) -> float:
        return float(np.percentile(self.rtf, 90))


def bench_variant(
    variant: str,
    duration: float = 10.0,
    repeats: int = 5,
    warmup: int = 1,
    seed: int = 0,
) -> BenchResult:
    """Median-able RTF samples: wall-clock seconds per second of generated audio."""
    cfg = parse_variant(variant)
    rng = np.random.default_rng(seed)
    frames = int(np.ceil(duration * SAMPLE_RATE / cfg.hop))
    mel = rng.normal(-2.0, 1.0, (1, cfg.cond_channels, frames + cfg.context_frames)).astype(np.float32)
    noise = rng.standard_normal((1, 1, frames * cfg.hop)).astype(np.float32)
    params = init_params(cfg, seed).astype(np.float32).bind()
    audio_seconds = frames * cfg.hop / SAMPLE_RATE
    for _ in range(warmup):
        synthesize(noise, mel, params, cfg)
    rtf = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        synthesize(noise, mel, params, cfg)
        rtf.append((time.perf_counter() - t0) / audio_seconds)
    return BenchResult(variant, count_params(cfg), rtf)


def run_bench(
    variants=DEFAULT_VARIANTS,
    duration: float = 10.0,
    repeats: int = 5,
    threads: int = 1,
    seed: int = 0,
    progress=None,
) -> list[BenchResult]:
    results = []
    with threadpool_limits(limits=threads):
        for v in variants:
            r = bench_variant(v, duration, repeats, seed=seed)
            if progress is not None:
                progress(r)
            results.append(r)
    return results


def speed_ratio(results: list[BenchResult], slow: str = "pwg-64", fast: str = "lvcnet-8") -> float | None:
    by = {r.variant: r for r in results}
    if slow not in by or fast not in by:
        return None
    return by[slow].rtf_median / by[fast].rtf_median


def write_report(path: str | Path, results: list[BenchResult]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REPORT_HEADER)
        for r in results:
            w.writerow([r.variant, r.params, f"{r.rtf_median:.6f}", f"{r.rtf_p90:.6f}"])
