"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 data/format error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import audio
from .bench import DEFAULT_VARIANTS, FAMILIES, parse_variant, run_bench, speed_ratio, write_report
from .checks import CHECKS
from .generator import count_params, init_params, param_breakdown, synthesize
from .params import CheckpointError, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainState, TrainingDiverged, load_dataset, train_toy

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("lvcnet")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    model: str = "lvcnet"
    width: int = 8
    seed: int = 0
    steps: int = 500
    threads: int = 1
    out: str | None = None
    # training knobs, settable from a key=value config file
    segment_frames: int = 16
    batch_size: int = 1
    lr_g: float = 1e-4
    lr_d: float = 5e-5
    lambda_adv: float = 4.0
    disc_start: int = 100
    dtype: str = "float64"
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in FAMILIES:
            raise UsageError(f"--model must be one of {sorted(FAMILIES)}")
        if self.width not in FAMILIES[self.model]:
            raise UsageError(f"--width {self.width} invalid for {self.model}; choose {FAMILIES[self.model]}")

    @property
    def variant(self) -> str:
        return f"{self.model}-{self.width}"

    def generator_config(self):
        return parse_variant(self.variant)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            generator=self.generator_config(),
            segment_frames=self.segment_frames,
            batch_size=self.batch_size,
            lr_g=self.lr_g,
            lr_d=self.lr_d,
            lambda_adv=self.lambda_adv,
            disc_start=self.disc_start,
            dtype=self.dtype,
        )


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def build_run_config(args: argparse.Namespace) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values: dict = {}
    if getattr(args, "config", None):
        for k, v in read_config_file(args.config).items():
            if k not in types or k == "paths":
                raise UsageError(f"unknown config key {k!r}")
            values[k] = v
    for k in ("model", "width", "seed", "steps", "threads", "out"):
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    conv = {"int": int, "float": float, "str": str, "str | None": str}
    try:
        typed = {k: conv[types[k]](v) for k, v in values.items()}
    except (ValueError, KeyError) as e:
        raise UsageError(f"bad config value: {e}") from e
    return RunConfig(**typed)


# -- commands --------------------------------------------------------------
def cmd_extract_mel(wav_in: str, mel_out: str) -> None:
    mel = audio.mel_spectrogram(audio.load_wav(wav_in))
    audio.save_mel(mel_out, mel)
    print(f"wrote {mel.frames} frames to {mel_out}")


def _load_generator(ckpt: str, rc: RunConfig):
    cfg = rc.generator_config()
    store = load_checkpoint(ckpt)
    store.check_shapes(init_params(cfg, 0))
    return cfg, store


def cmd_init(rc: RunConfig, out: str) -> None:
    save_checkpoint(out, init_params(rc.generator_config(), rc.seed))
    print(f"wrote {rc.variant} checkpoint to {out}")


def cmd_synth(mel_in: str, ckpt: str, wav_out: str, rc: RunConfig) -> None:
    cfg, store = _load_generator(ckpt, rc)
    mel = audio.load_mel(mel_in)
    if mel.hop != cfg.hop:
        raise ValueError(f"mel hop {mel.hop} does not match model hop {cfg.hop}")
    if mel.frames < cfg.context_frames + 1:
        raise ValueError(f"need at least {cfg.context_frames + 1} mel frames, got {mel.frames}")
    rng = np.random.default_rng(rc.seed)
    n = (mel.frames - cfg.context_frames) * cfg.hop
    noise = rng.standard_normal((1, 1, n)).astype(np.float32)
    y = synthesize(noise, mel.as_conditioning(np.float32), store.astype(np.float32).bind(), cfg)
    audio.save_wav(wav_out, audio.Waveform(y.data.reshape(-1).astype(np.float64)))
    print(f"wrote {n} samples to {wav_out}")


def cmd_params(rc: RunConfig) -> int:
    cfg = rc.generator_config()
    total = count_params(cfg)
    print(f"{rc.variant}: {total} parameters ({total / 1e6:.3f} M)")
    for name, n in param_breakdown(cfg).items():
        print(f"  {name:<12s} {n:>10d}")
    return total


def cmd_gradcheck(component: str) -> float:
    err = CHECKS[component]()
    print(f"{component}: max relative error {err:.3e}")
    return err


def cmd_bench(variants, duration: float, repeats: int, threads: int, out: str | None, seed: int = 0):
    def show(r):
        print(f"{r.variant:<10s} params={r.params:>8d} rtf_median={r.rtf_median:.4f} rtf_p90={r.rtf_p90:.4f}")

    results = run_bench(variants, duration, repeats, threads, seed, progress=show)
    ratio = speed_ratio(results)
    if ratio is not None:
        print(f"RTF ratio pwg-64 / lvcnet-8 = {ratio:.2f}")
    if out:
        write_report(out, results)
    return results


def cmd_train(data_dir: str, rc: RunConfig, resume: str | None = None) -> None:
    out = Path(rc.out or "train_out")
    out.mkdir(parents=True, exist_ok=True)
    cfg = rc.train_config()
    dataset = load_dataset(data_dir)
    state = TrainState.load(resume, cfg) if resume else None
    _, state = train_toy(dataset, cfg, rc.steps, rc.seed, state=state, csv_path=out / "losses.csv")
    state.save(out / "state.npz")
    save_checkpoint(out / "generator.lvc", state.gen)
    print(f"trained to step {state.step}; outputs in {out}")


# -- argument parsing ------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _model_flags(p, with_out=True):
    p.add_argument("--model", choices=sorted(FAMILIES))
    p.add_argument("--width", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="key=value file; flags override it")
    if with_out:
        p.add_argument("--out")


def make_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lvcnet", description="Location-variable convolution vocoder toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract-mel", help="WAV -> MEL1 log-mel features")
    p.add_argument("wav")
    p.add_argument("--out", required=True)

    p = sub.add_parser("init", help="write a randomly initialised generator checkpoint")
    _model_flags(p)

    p = sub.add_parser("synth", help="MEL1 + checkpoint -> WAV")
    p.add_argument("mel")
    p.add_argument("--ckpt", required=True)
    _model_flags(p)

    p = sub.add_parser("params", help="parameter count with per-module breakdown")
    _model_flags(p, with_out=False)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("component", choices=sorted(CHECKS))

    p = sub.add_parser("bench", help="CPU real-time-factor benchmark")
    p.add_argument("--variants", default=",".join(DEFAULT_VARIANTS))
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("train", help="desk-scale adversarial training")
    p.add_argument("data_dir")
    p.add_argument("--steps", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--resume", help="state.npz from a previous run")
    _model_flags(p)
    return ap


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "extract-mel":
            cmd_extract_mel(args.wav, args.out)
        elif args.command == "gradcheck":
            err = cmd_gradcheck(args.component)
            if not np.isfinite(err):
                return EXIT_NUMERIC
        elif args.command == "bench":
            variants = [v.strip() for v in args.variants.split(",") if v.strip()]
            for v in variants:
                try:
                    parse_variant(v)
                except ValueError as e:
                    raise UsageError(str(e)) from e
            cmd_bench(variants, args.duration, args.repeats, args.threads, args.out, args.seed)
        else:
            rc = build_run_config(args)
            if args.command == "init":
                if not rc.out:
                    raise UsageError("init needs --out")
                cmd_init(rc, rc.out)
            elif args.command == "synth":
                if not rc.out:
                    raise UsageError("synth needs --out")
                cmd_synth(args.mel, args.ckpt, rc.out, rc)
            elif args.command == "params":
                cmd_params(rc)
            elif args.command == "train":
                from threadpoolctl import threadpool_limits

                with threadpool_limits(limits=rc.threads):
                    cmd_train(args.data_dir, rc, args.resume)
    except UsageError as e:
        print(f"lvcnet: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, FloatingPointError) as e:
        print(f"lvcnet: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as e:
        print(f"lvcnet: file not found: {e.filename or e}", file=sys.stderr)
        return EXIT_DATA
    except (audio.AudioFormatError, CheckpointError, ValueError, OSError) as e:
        print(f"lvcnet: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
