"""16-bit PCM mono WAV at 16 kHz, via the stdlib ``wave`` module."""
from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from ..errors import InputError

SAMPLE_RATE = 16000


def read_wav(path: str | Path) -> np.ndarray:
    """Samples scaled to [-1, 1). Anything but 16-bit mono 16 kHz is rejected."""
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            n = w.getnframes()
            raw = w.readframes(n)
    except (wave.Error, EOFError) as err:
        raise InputError(f"{path}: not a readable WAV file ({err})") from err
    if channels != 1 or width != 2:
        raise InputError(f"{path}: expected 16-bit mono PCM, got {channels} channel(s) x {8 * width} bit")
    if rate != SAMPLE_RATE:
        raise InputError(f"{path}: sample rate {rate} Hz, only {SAMPLE_RATE} Hz is supported")
    if len(raw) != 2 * n:
        raise InputError(f"{path}: truncated payload ({len(raw)} bytes for {n} frames)")
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def check_wav(path: str | Path) -> None:
    """Header-only validation, cheap enough for a whole dataset scan."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1 or w.getsampwidth() != 2 or w.getframerate() != SAMPLE_RATE:
                raise InputError(f"{path}: not 16-bit mono 16 kHz")
            if w.getnframes() == 0:
                raise InputError(f"{path}: empty")
    except (wave.Error, EOFError) as err:
        raise InputError(f"{path}: not a readable WAV file ({err})") from err


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    return np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path: str | Path, samples: np.ndarray) -> None:
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SAMPLE_RATE)
        w.writeframes(to_pcm16(samples).tobytes())
