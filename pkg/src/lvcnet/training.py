"""Desk-scale adversarial training in the Parallel WaveGAN style.

Generator objective: multi-resolution STFT loss (spectral convergence +
log-magnitude L1) plus ``lambda_adv`` times the least-squares adversarial
term once the discriminator warm-up has passed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .audio import MelSpectrogram, Waveform, frame_starts, hann_window, load_wav, mel_spectrogram
from .generator import GeneratorConfig, PWGConfig, init_params, synthesize
from .numerics import (
    DTYPES,
    Tensor,
    absolute,
    clamp_min,
    conv1d,
    gradients,
    l2norm,
    leaky_relu,
    log,
    mean,
    square,
    weight_norm,
)
from .params import ParamStore, init_wn_conv

log_ = logging.getLogger(__name__)

CSV_HEADER = ("step", "stft_sc", "stft_mag", "g_adv", "d_loss")


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, term: str):
        super().__init__(f"non-finite {term} at step {step}")
        self.step = step
        self.term = term


# -- discriminator ---------------------------------------------------------
@dataclass(frozen=True)
class DiscriminatorConfig:
    layers: int = 10
    kernel_size: int = 3
    channels: int = 64
    leaky_alpha: float = 0.2

    @property
    def dilations(self) -> list[int]:
        # first conv undilated, then 1, 2, ..., layers-2, then a 1-channel head
        return [1] + list(range(1, self.layers - 1)) + [1]


def init_discriminator(cfg: DiscriminatorConfig, seed: int = 0) -> ParamStore:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    for i in range(cfg.layers):
        cin = 1 if i == 0 else cfg.channels
        cout = 1 if i == cfg.layers - 1 else cfg.channels
        init_wn_conv(store, f"conv{i}", cout, cin, cfg.kernel_size, rng)
    return store


def discriminator_forward(x: Tensor, params, cfg: DiscriminatorConfig) -> Tensor:
    """Per-sample realness scores (B, 1, T) for a waveform (B, 1, T)."""
    if x.ndim != 3 or x.shape[1] != 1:
        raise ValueError(f"discriminator expects (B, 1, T) input, got {x.shape}")
    h = x
    for i, d in enumerate(cfg.dilations):
        w = weight_norm(params[f"conv{i}.v"], params[f"conv{i}.g"])
        h = conv1d(h, w, params[f"conv{i}.b"], dilation=d)
        if i < cfg.layers - 1:
            h = leaky_relu(h, cfg.leaky_alpha)
    return h


# -- losses ----------------------------------------------------------------
@dataclass(frozen=True)
class StftLossConfig:
    resolutions: tuple[tuple[int, int, int], ...] = (
        (1024, 120, 600),
        (2048, 240, 1200),
        (512, 50, 240),
    )

    def __post_init__(self):
        for n_fft, hop, win in self.resolutions:
            if win > n_fft:
                raise ValueError(f"window {win} longer than FFT size {n_fft}")


POWER_FLOOR = 1e-7


def stft_mag(x: Tensor, n_fft: int, hop: int, win: int) -> Tensor:
    """Differentiable centred STFT magnitude of (B, T) signals -> (B, frames, bins).

    Magnitude is ``sqrt(max(re^2 + im^2, 1e-7))``.
    """
    B, T = x.shape
    pad = n_fft // 2
    if T <= pad:
        raise ValueError(f"signal of {T} samples too short for n_fft={n_fft}")
    src_pad = np.pad(np.arange(T), pad, mode="reflect")
    starts = frame_starts(T, n_fft, hop)
    src = src_pad[starts[:, None] + np.arange(n_fft)]
    window = hann_window(win, n_fft).astype(x.dtype)
    spectrum = np.fft.rfft(x.data[:, src] * window, axis=-1)
    power = spectrum.real**2 + spectrum.imag**2
    keep = power > POWER_FLOOR
    # np.maximum, unlike a where() on the mask, lets NaN through to the finiteness checks
    mag = np.sqrt(np.maximum(power, POWER_FLOOR)).astype(x.dtype)

    def bw(g):
        z = np.where(keep, g / mag, 0.0) * spectrum
        z[..., 1 : n_fft // 2] *= 0.5
        dframes = np.fft.irfft(z, n=n_fft, axis=-1) * n_fft * window
        dx = np.empty((B, T), dtype=x.dtype)
        flat = src.ravel()
        for b in range(B):
            dx[b] = np.bincount(flat, weights=dframes[b].ravel(), minlength=T)
        return (dx,)

    return Tensor._make(mag, (x,), bw, "stft_mag")


def multires_stft_loss(y: Tensor, y_hat: Tensor, cfg: StftLossConfig = StftLossConfig()):
    """(spectral convergence, log-magnitude L1), each averaged over resolutions.

    ``y`` is the reference; its Frobenius norm is floored at 1e-7.
    """
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    B = y.shape[0]
    y2, yh2 = y.reshape(B, -1), y_hat.reshape(B, -1)
    sc_terms, mag_terms = [], []
    for n_fft, hop, win in cfg.resolutions:
        Y = stft_mag(y2, n_fft, hop, win)
        Yh = stft_mag(yh2, n_fft, hop, win)
        sc_terms.append(l2norm(Y - Yh) / clamp_min(l2norm(Y), 1e-7))
        mag_terms.append(mean(absolute(log(Y) - log(Yh))))
    n = float(len(cfg.resolutions))
    return sum(sc_terms[1:], sc_terms[0]) * (1.0 / n), sum(mag_terms[1:], mag_terms[0]) * (1.0 / n)


def gan_losses(scores_real: Tensor, scores_fake: Tensor):
    """Least-squares GAN: ``(E[(1-D(y))^2] + E[D(y_hat)^2], E[(1-D(y_hat))^2])``."""
    d_loss = mean(square(1.0 - scores_real)) + mean(square(scores_fake))
    g_loss = mean(square(1.0 - scores_fake))
    return d_loss, g_loss


# -- optimiser -------------------------------------------------------------
class Adam:
    def __init__(self, params: ParamStore, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = params.zeros_like()
        self.v = params.zeros_like()

    def step(self, params: ParamStore, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for name in params:
            g = grads[name]
            m = self.b1 * self.m[name] + (1.0 - self.b1) * g
            v = self.b2 * self.v[name] + (1.0 - self.b2) * g * g
            self.m[name], self.v[name] = m, v
            params[name] = params[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- training loop ---------------------------------------------------------
@dataclass
class TrainConfig:
    generator: GeneratorConfig | PWGConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    stft: StftLossConfig = field(default_factory=StftLossConfig)
    segment_frames: int = 16  # generated frames per crop; the mel crop adds context frames
    batch_size: int = 1
    lr_g: float = 1e-4
    lr_d: float = 5e-5
    lambda_adv: float = 4.0
    disc_start: int = 100
    dtype: str = "float64"


@dataclass
class TrainState:
    gen: ParamStore
    disc: ParamStore
    opt_g: Adam
    opt_d: Adam
    step: int
    rng: np.random.Generator

    @classmethod
    def fresh(cls, cfg: TrainConfig, seed: int) -> "TrainState":
        dtype = DTYPES[cfg.dtype]
        gen = init_params(cfg.generator, seed).astype(dtype)
        disc = init_discriminator(cfg.discriminator, seed + 1).astype(dtype)
        return cls(
            gen,
            disc,
            Adam(gen, cfg.lr_g),
            Adam(disc, cfg.lr_d),
            0,
            np.random.default_rng(seed),
        )

    def save(self, path: str | Path) -> None:
        arrays: dict[str, np.ndarray] = {}
        for prefix, store in (
            ("g", self.gen),
            ("d", self.disc),
            ("gm", self.opt_g.m),
            ("gv", self.opt_g.v),
            ("dm", self.opt_d.m),
            ("dv", self.opt_d.v),
        ):
            for name, arr in store.items():
                arrays[f"{prefix}/{name}"] = arr
        meta = {
            "step": self.step,
            "opt_g_t": self.opt_g.t,
            "opt_d_t": self.opt_d.t,
            "rng": self.rng.bit_generator.state,
            "gen_names": self.gen.names(),
            "disc_names": self.disc.names(),
        }
        arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        with open(path, "wb") as f:
            np.savez(f, **arrays)

    @classmethod
    def load(cls, path: str | Path, cfg: TrainConfig) -> "TrainState":
        with np.load(path) as z:
            meta = json.loads(bytes(z["__meta__"]).decode())

            def store(prefix, names):
                return ParamStore({n: z[f"{prefix}/{n}"].copy() for n in names})

            gen = store("g", meta["gen_names"])
            disc = store("d", meta["disc_names"])
            opt_g, opt_d = Adam(gen, cfg.lr_g), Adam(disc, cfg.lr_d)
            opt_g.m, opt_g.v = store("gm", meta["gen_names"]), store("gv", meta["gen_names"])
            opt_d.m, opt_d.v = store("dm", meta["disc_names"]), store("dv", meta["disc_names"])
        opt_g.t, opt_d.t = meta["opt_g_t"], meta["opt_d_t"]
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng"]
        return cls(gen, disc, opt_g, opt_d, meta["step"], rng)


Clip = tuple[Waveform, MelSpectrogram]


def sample_batch(dataset: Sequence[Clip], cfg: TrainConfig, rng: np.random.Generator):
    """Random aligned crops: mel (B, cond, m), target and noise (B, 1, (m-ctx)*hop)."""
    gcfg = cfg.generator
    ctx, hop = gcfg.context_frames, gcfg.hop
    m = cfg.segment_frames + ctx
    T = cfg.segment_frames * hop
    dtype = DTYPES[cfg.dtype]
    mels, targets = [], []
    for _ in range(cfg.batch_size):
        wav, mel = dataset[int(rng.integers(len(dataset)))]
        if mel.frames < m:
            raise ValueError(f"clip with {mel.frames} frames shorter than a {m}-frame crop")
        s = int(rng.integers(0, mel.frames - m + 1))
        mels.append(mel.values[s : s + m].T)
        # drop half the trimmed context on each side of the crop
        t0 = (s + ctx // 2) * hop
        targets.append(wav.samples[t0 : t0 + T])
    noise = rng.standard_normal((cfg.batch_size, 1, T))
    return (
        np.stack(mels).astype(dtype),
        np.stack(targets)[:, None, :].astype(dtype),
        noise.astype(dtype),
    )


def _finite(value: float, step: int, term: str) -> float:
    if not math.isfinite(value):
        raise TrainingDiverged(step, term)
    return value


def train_step(dataset: Sequence[Clip], cfg: TrainConfig, state: TrainState) -> tuple:
    step = state.step
    mel, y, noise = sample_batch(dataset, cfg, state.rng)
    gp = state.gen.bind(requires_grad=True)
    y_hat = synthesize(noise, mel, gp, cfg.generator)
    target = Tensor(y)
    sc, mag = multires_stft_loss(target, y_hat, cfg.stft)
    loss = sc + mag
    adversarial = step >= cfg.disc_start and cfg.lambda_adv > 0
    g_adv = d_val = 0.0
    if adversarial:
        dp = state.disc.bind(requires_grad=False)
        g_loss = mean(square(1.0 - discriminator_forward(y_hat, dp, cfg.discriminator)))
        g_adv = _finite(g_loss.item(), step, "g_adv")
        loss = loss + g_loss * cfg.lambda_adv
    _finite(sc.item(), step, "stft_sc")
    _finite(mag.item(), step, "stft_mag")
    state.opt_g.step(state.gen, gradients(loss, gp))
    if adversarial:
        dp = state.disc.bind(requires_grad=True)
        d_loss, _ = gan_losses(
            discriminator_forward(target, dp, cfg.discriminator),
            discriminator_forward(y_hat.detach(), dp, cfg.discriminator),
        )
        d_val = _finite(d_loss.item(), step, "d_loss")
        state.opt_d.step(state.disc, gradients(d_loss, dp))
    state.step += 1
    return (step, sc.item(), mag.item(), g_adv, d_val)


def train_toy(
    dataset: Sequence[Clip],
    cfg: TrainConfig,
    steps: int,
    seed: int = 0,
    state: TrainState | None = None,
    csv_path: str | Path | None = None,
    on_step: Callable[[tuple], None] | None = None,
) -> tuple[list[tuple], TrainState]:
    """Run until ``state.step == steps``; returns the per-step loss rows and final state."""
    if not dataset:
        raise ValueError("training needs at least one clip")
    state = state or TrainState.fresh(cfg, seed)
    rows = []
    writer = None
    fh = None
    if csv_path is not None:
        resume = state.step > 0 and Path(csv_path).exists()
        fh = open(csv_path, "a" if resume else "w", newline="")
        writer = csv.writer(fh)
        if not resume:
            writer.writerow(CSV_HEADER)
    try:
        while state.step < steps:
            row = train_step(dataset, cfg, state)
            rows.append(row)
            if writer is not None:
                writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
            if on_step is not None:
                on_step(row)
            if row[0] % 50 == 0:
                log_.info("step %d sc=%.4f mag=%.4f g_adv=%.4f d=%.4f", *row)
    finally:
        if fh is not None:
            fh.close()
    return rows, state


# -- data ------------------------------------------------------------------
def make_toy_clip(seconds: float = 3.0, seed: int = 0, sample_rate: int = 22050) -> Waveform:
    """Deterministic voiced-speech stand-in: a vibrato harmonic source under a slow envelope."""
    rng = np.random.default_rng(seed)
    t = np.arange(int(seconds * sample_rate)) / sample_rate
    f0 = 140.0 + 30.0 * np.sin(2 * np.pi * 0.7 * t) + 8.0 * np.sin(2 * np.pi * 5.0 * t)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    x = np.zeros_like(t)
    for h in range(1, 25):
        amp = 1.0 / h * np.exp(-((h * 140.0 - 700.0) ** 2) / (2 * 900.0**2))
        x += amp * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    env = 0.55 + 0.45 * np.sin(2 * np.pi * 1.3 * t) ** 2
    x = x * env
    x += 0.01 * rng.standard_normal(t.size)
    x = 0.6 * x / np.max(np.abs(x))
    # round-trip through PCM16 so in-memory and on-disk clips agree
    return Waveform(np.round(x * 32768.0) / 32768.0, sample_rate)


def clip_from_waveform(wav: Waveform) -> Clip:
    return wav, mel_spectrogram(wav)


def load_dataset(data_dir: str | Path) -> list[Clip]:
    paths = sorted(Path(data_dir).glob("*.wav"))
    if not paths:
        raise FileNotFoundError(f"no .wav files in {data_dir}")
    return [clip_from_waveform(load_wav(p)) for p in paths]


def read_loss_csv(path: str | Path) -> list[tuple]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return [(int(r[0]),) + tuple(float(v) for v in r[1:]) for r in reader]
