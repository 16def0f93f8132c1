"""Audio front-end: PCM16 WAV I/O, STFT, mel filterbank, log-mel features, MEL1 files."""

from __future__ import annotations

import struct
import warnings
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SAMPLE_RATE = 22050
N_FFT = 1024
WIN_LENGTH = 1024
HOP_LENGTH = 256
N_MELS = 80
FMIN = 80.0
FMAX = 7600.0
LOG_FLOOR = 1e-5

MEL_MAGIC = b"MEL1"


class AudioFormatError(ValueError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MelSpectrogram:
    values: np.ndarray  # (frames, n_mels)
    hop: int = HOP_LENGTH
    win: int = WIN_LENGTH
    fft: int = N_FFT
    fmin: float = FMIN
    fmax: float = FMAX

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    def as_conditioning(self, dtype=np.float32) -> np.ndarray:
        """(1, n_mels, frames) array ready for a generator."""
        return np.ascontiguousarray(self.values.T[None], dtype=dtype)


# -- WAV -------------------------------------------------------------------
def load_wav(path: str | Path, expected_rate: int | None = SAMPLE_RATE) -> Waveform:
    """Read 16-bit PCM mono RIFF; samples are ``int16 / 32768``."""
    try:
        with wave.open(str(path), "rb") as f:
            channels, width, rate, n = (
                f.getnchannels(),
                f.getsampwidth(),
                f.getframerate(),
                f.getnframes(),
            )
            raw = f.readframes(n)
    except (wave.Error, EOFError, struct.error) as e:
        raise AudioFormatError(f"{path}: malformed or unsupported WAV ({e})") from e
    if width != 2:
        raise AudioFormatError(f"{path}: only 16-bit PCM is supported (got {8 * width}-bit)")
    if channels != 1:
        raise AudioFormatError(f"{path}: only mono is supported (got {channels} channels)")
    if expected_rate is not None and rate != expected_rate:
        warnings.warn(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz; not resampling")
        raise AudioFormatError(f"{path}: sample rate {rate} != {expected_rate} (resampling refused)")
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise AudioFormatError("cannot quantize non-finite samples")
    if np.any(np.abs(x) > 1.0):
        warnings.warn("waveform exceeds [-1, 1]; clipping")
    return np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")


def save_wav(path: str | Path, wav: Waveform) -> None:
    pcm = quantize_pcm16(wav.samples)
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(int(wav.sample_rate))
        f.writeframes(pcm.tobytes())


# -- spectral analysis -----------------------------------------------------
def hann_window(win: int, n_fft: int | None = None) -> np.ndarray:
    """Periodic Hann window, zero-padded symmetrically to ``n_fft``."""
    n = np.arange(win)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / win)
    n_fft = n_fft or win
    if n_fft > win:
        left = (n_fft - win) // 2
        w = np.pad(w, (left, n_fft - win - left))
    return w


def frame_starts(length: int, n_fft: int, hop: int) -> np.ndarray:
    """Start offsets of centred frames in a signal reflect-padded by ``n_fft // 2``."""
    n_frames = 1 + (length + 2 * (n_fft // 2) - n_fft) // hop
    return np.arange(n_frames) * hop


def stft_magnitude(
    x: np.ndarray,
    n_fft: int = N_FFT,
    hop: int = HOP_LENGTH,
    win: int = WIN_LENGTH,
) -> np.ndarray:
    """Centred, reflect-padded magnitude STFT of a 1-D signal: (frames, n_fft//2 + 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("stft expects a non-empty 1-D signal")
    pad = n_fft // 2
    if x.size <= pad:
        raise ValueError(f"signal of {x.size} samples too short for reflect padding of {pad}")
    xp = np.pad(x, pad, mode="reflect")
    frames = np.lib.stride_tricks.sliding_window_view(xp, n_fft)[::hop]
    return np.abs(np.fft.rfft(frames * hann_window(win, n_fft), axis=-1))


def stft(wav: Waveform | np.ndarray, **kw) -> np.ndarray:
    samples = wav.samples if isinstance(wav, Waveform) else wav
    return stft_magnitude(samples, **kw)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    sample_rate: int = SAMPLE_RATE,
    n_fft: int = N_FFT,
    n_mels: int = N_MELS,
    fmin: float = FMIN,
    fmax: float = FMAX,
) -> np.ndarray:
    """Unnormalised triangular HTK-mel filters, shape (n_mels, n_fft//2 + 1)."""
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


_FB_CACHE: dict[tuple, np.ndarray] = {}


def mel_spectrogram(wav: Waveform) -> MelSpectrogram:
    """``log10(max(mel @ |STFT|, 1e-5))``, one row per frame."""
    if wav.sample_rate != SAMPLE_RATE:
        raise AudioFormatError(f"expected {SAMPLE_RATE} Hz audio, got {wav.sample_rate}")
    key = (SAMPLE_RATE, N_FFT, N_MELS, FMIN, FMAX)
    if key not in _FB_CACHE:
        _FB_CACHE[key] = mel_filterbank()
    mag = stft_magnitude(wav.samples)
    mel = mag @ _FB_CACHE[key].T
    return MelSpectrogram(np.log10(np.maximum(mel, LOG_FLOOR)))


# -- MEL1 files ------------------------------------------------------------
def encode_mel(mel: MelSpectrogram) -> bytes:
    frames, bins = mel.values.shape
    head = MEL_MAGIC + struct.pack("<III", frames, bins, mel.hop)
    return head + np.ascontiguousarray(mel.values, dtype="<f4").tobytes()


def decode_mel(buf: bytes) -> MelSpectrogram:
    if len(buf) < 16 or buf[:4] != MEL_MAGIC:
        raise AudioFormatError("not a MEL1 file")
    frames, bins, hop = struct.unpack_from("<III", buf, 4)
    if len(buf) != 16 + 4 * frames * bins:
        raise AudioFormatError(f"MEL1 payload size mismatch for {frames}x{bins}")
    values = np.frombuffer(buf, dtype="<f4", offset=16).reshape(frames, bins).astype(np.float32)
    return MelSpectrogram(values, hop=hop)


def save_mel(path: str | Path, mel: MelSpectrogram) -> None:
    Path(path).write_bytes(encode_mel(mel))


def load_mel(path: str | Path) -> MelSpectrogram:
    return decode_mel(Path(path).read_bytes())
