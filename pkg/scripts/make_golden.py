"""Regenerate the committed golden chirp WAV and its MEL1 features.

    python scripts/make_golden.py tests/data
"""

import sys
from pathlib import Path

import numpy as np

from lvcnet import audio


def chirp(seconds: float = 1.0, f0: float = 100.0, f1: float = 8000.0, sr: int = audio.SAMPLE_RATE):
    t = np.arange(int(seconds * sr)) / sr
    phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / seconds * t * t)
    return 0.5 * np.sin(phase)


def main(out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    audio.save_wav(out / "chirp.wav", audio.Waveform(chirp()))
    audio.save_wav(out / "zero.wav", audio.Waveform(np.zeros(4096)))
    mel = audio.mel_spectrogram(audio.load_wav(out / "chirp.wav"))
    audio.save_mel(out / "chirp.mel", mel)
    print(f"chirp: {mel.frames} frames")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
