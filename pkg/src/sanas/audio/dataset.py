"""Stream datasets: the synthetic toy task, Speech Commands, on-disk splits."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigurationError, FormatError, InputError
from .features import FeatureNormalizer, stream_windows
from .labels import BG_NOISE, LABEL_INDEX, TARGET_WORDS, UNKNOWN
from .stream import HOP, WINDOW, WordSpan, label_frame_samples, synthesize_long_stream, synthesize_stream
from .wav import SAMPLE_RATE, check_wav, read_wav, write_wav

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
NOISE_DIR = "_background_noise_"


@dataclass
class Frame:
    start: float
    features: np.ndarray
    label: int | None


@dataclass
class StreamRecord:
    """One prepared stream: audio, its single word span and provenance."""

    stream_id: str
    samples: np.ndarray
    spans: list[WordSpan]
    snr_db: float | None
    seed: int

    @property
    def duration(self) -> float:
        return len(self.samples) / SAMPLE_RATE

    def sidecar(self) -> dict:
        snr = self.snr_db if self.snr_db is not None and np.isfinite(self.snr_db) else None
        return {"spans": [s.to_json() for s in self.spans], "snr_db": snr, "seed": self.seed}


def frame_labels(record: StreamRecord) -> list[int]:
    n = (len(record.samples) - WINDOW) // HOP + 1
    out = []
    for k in range(n):
        label = BG_NOISE
        for s in record.spans:
            a = int(round(s.start * SAMPLE_RATE))
            b = int(round(s.end * SAMPLE_RATE))
            hit = label_frame_samples(s.label, a, b, k * HOP)
            if hit != BG_NOISE:
                label = hit
        out.append(LABEL_INDEX[label])
    return out


def to_frames(record: StreamRecord, normalizer: FeatureNormalizer | None = None,
              n_dct: int | None = None) -> list[Frame]:
    maps = stream_windows(record.samples, n_dct)
    if normalizer is not None:
        maps = normalizer(maps)
    labels = frame_labels(record)
    return [Frame(k * HOP / SAMPLE_RATE, maps[k], labels[k]) for k in range(len(labels))]


def to_sequences(records: Iterable[StreamRecord], normalizer: FeatureNormalizer | None = None,
                 n_dct: int | None = None) -> list[list[Frame]]:
    return [to_frames(r, normalizer, n_dct) for r in records]


def stream_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


# ------------------------------------------------------------------ toy task

# (start Hz, end Hz) of the class-specific sweeps, one per target word
TOY_SWEEPS = (
    (300.0, 1200.0), (1200.0, 300.0), (1500.0, 3000.0), (3000.0, 1500.0), (600.0, 2400.0),
    (2400.0, 600.0), (500.0, 900.0), (2000.0, 4000.0), (4000.0, 2000.0), (900.0, 500.0),
)


@dataclass(frozen=True)
class ToyConfig:
    classes: int = 3
    streams_per_class: int = 100
    min_dur: float = 1.0
    max_dur: float = 3.0
    min_snr_db: float = 5.0
    max_snr_db: float = 20.0
    word_min: float = 0.3
    word_max: float = 0.8
    noise_clips: int = 8
    noise_seconds: float = 10.0

    def __post_init__(self):
        if not 1 <= self.classes <= len(TARGET_WORDS):
            raise ConfigurationError(f"toy classes must be in [1, {len(TARGET_WORDS)}]")
        if not 0 < self.min_dur <= self.max_dur:
            raise ConfigurationError("need 0 < min_dur <= max_dur")
        if self.min_dur < 1.0:
            raise ConfigurationError("streams must last at least one window (1 s)")
        if not 0 < self.word_min <= self.word_max <= self.min_dur:
            raise ConfigurationError("word length must be positive and fit the shortest stream")
        if self.noise_seconds < self.max_dur:
            raise ConfigurationError("noise clips must be at least max_dur long")


def toy_word(cls: int, rng: np.random.Generator, word_min: float = 0.3, word_max: float = 0.8) -> np.ndarray:
    """A log-frequency sweep with a Hann envelope, specific to class ``cls``."""
    f0, f1 = TOY_SWEEPS[cls]
    jitter = rng.uniform(0.95, 1.05)
    dur = rng.uniform(word_min, word_max)
    n = int(round(dur * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    # instantaneous frequency f0 * (f1/f0)^(t/dur)
    k = np.log(f1 / f0) / dur
    phase = 2 * np.pi * f0 * jitter * (np.expm1(k * t) / k)
    return np.hanning(n) * (np.sin(phase) + 0.5 * np.sin(2 * phase))


def toy_noise_pool(cfg: ToyConfig, rng: np.random.Generator) -> list[np.ndarray]:
    n = int(round(cfg.noise_seconds * SAMPLE_RATE))
    return [rng.uniform(0.005, 0.03) * rng.standard_normal(n) for _ in range(cfg.noise_clips)]


def make_toy_dataset(cfg: ToyConfig, rng: np.random.Generator) -> list[StreamRecord]:
    """``classes * streams_per_class`` streams, each one sweep in white noise.

    Stream i holds class ``i % classes``; every stream gets its own generator
    derived from one draw of ``rng``.
    """
    base = int(rng.integers(0, 2 ** 63 - 1))
    pool = toy_noise_pool(cfg, np.random.default_rng([base, 0]))
    out = []
    for i in range(cfg.classes * cfg.streams_per_class):
        cls = i % cfg.classes
        seed = stream_seed(base, 1, i)
        srng = np.random.default_rng(seed)
        word = toy_word(cls, srng, cfg.word_min, cfg.word_max)
        noise = pool[int(srng.integers(len(pool)))]
        res = synthesize_stream(noise, word, srng, TARGET_WORDS[cls], cfg.min_snr_db, cfg.max_snr_db,
                                cfg.min_dur, cfg.max_dur)
        out.append(StreamRecord(f"toy-{i:05d}", res.samples, [res.span], res.snr_db, seed))
    return out


def make_toy_stream(cfg: ToyConfig, rng: np.random.Generator, seconds: float = 60.0,
                    n_words: int | None = None, stream_id: str = "toy-stream") -> StreamRecord:
    """One long recording with ``n_words`` toy words (default: one per 3 s)."""
    n = int(round(seconds * SAMPLE_RATE))
    n_words = max(1, int(seconds // 3)) if n_words is None else n_words
    seed = int(rng.integers(0, 2 ** 63 - 1))
    srng = np.random.default_rng(seed)
    noise = srng.uniform(0.005, 0.03) * srng.standard_normal(n)
    words = []
    for _ in range(n_words):
        cls = int(srng.integers(cfg.classes))
        words.append((TARGET_WORDS[cls], toy_word(cls, srng, cfg.word_min, cfg.word_max)))
    mix, spans, snrs = synthesize_long_stream(noise, words, srng, cfg.min_snr_db, cfg.max_snr_db)
    return StreamRecord(stream_id, mix, spans, float(np.mean(snrs)), seed)


def split_records(records: Sequence[StreamRecord], rng: np.random.Generator,
                  ratios=(0.8, 0.1, 0.1)) -> dict[str, list[StreamRecord]]:
    """Shuffled 80:10:10 split (train, val, test)."""
    order = rng.permutation(len(records))
    n_train = int(round(ratios[0] * len(records)))
    n_val = int(round(ratios[1] * len(records)))
    parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    return {name: [records[i] for i in sorted(idx)] for name, idx in zip(SPLITS, parts)}


# ------------------------------------------------------------ speech commands


@dataclass
class Clip:
    path: Path
    label: str
    split: str


@dataclass
class ClipCatalog:
    root: Path
    clips: list[Clip] = field(default_factory=list)
    noise: list[Path] = field(default_factory=list)
    skipped: int = 0

    def by_split(self, split: str) -> list[Clip]:
        return [c for c in self.clips if c.split == split]

    def counts(self) -> dict[str, int]:
        return dict(sorted(Counter(c.label for c in self.clips).items()))


_NOHASH = re.compile(r"_nohash_.*$")


def split_of(relpath: str) -> str:
    """80:10:10 bucket from a hash of the path (speaker suffix stripped)."""
    key = _NOHASH.sub("", relpath.replace(os.sep, "/"))
    bucket = int(hashlib.sha1(key.encode("utf-8")).hexdigest(), 16) % 100
    return "train" if bucket < 80 else "val" if bucket < 90 else "test"


def load_speech_commands(root: str | Path) -> ClipCatalog:
    """Scan ``<root>/<word>/*.wav`` and ``<root>/_background_noise_/*.wav``.

    Words outside the ten targets map to ``unknown``. Malformed files are
    skipped and counted; a target word, ``unknown`` or the noise pool ending
    up empty is an error.
    """
    root = Path(root)
    if not root.is_dir():
        raise InputError(f"{root} is not a directory")
    cat = ClipCatalog(root)
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        for wav in sorted(sub.glob("*.wav")):
            try:
                check_wav(wav)
            except InputError as err:
                log.warning("skipping %s", err)
                cat.skipped += 1
                continue
            if sub.name == NOISE_DIR:
                cat.noise.append(wav)
            else:
                label = sub.name if sub.name in TARGET_WORDS else UNKNOWN
                cat.clips.append(Clip(wav, label, split_of(str(wav.relative_to(root)))))
    counts = cat.counts()
    missing = [w for w in TARGET_WORDS + (UNKNOWN,) if counts.get(w, 0) == 0]
    if missing:
        raise InputError(f"no usable clips for categories {missing}")
    if not cat.noise:
        raise InputError(f"no usable background noise under {root / NOISE_DIR}")
    return cat


def synthesize_from_catalog(cat: ClipCatalog, split: str, n_streams: int, seed: int, min_snr_db: float = 5.0,
                            max_snr_db: float = 20.0, min_dur: float = 1.0,
                            max_dur: float = 3.0) -> list[StreamRecord]:
    clips = cat.by_split(split)
    if not clips:
        raise InputError(f"split {split!r} has no clips")
    noises = [read_wav(p) for p in cat.noise]
    noises = [n for n in noises if len(n) >= int(round(max_dur * SAMPLE_RATE))]
    if not noises:
        raise InputError(f"no background noise clip lasts {max_dur} s")
    split_key = SPLITS.index(split)
    out = []
    for i in range(n_streams):
        s = stream_seed(seed, split_key, i)
        rng = np.random.default_rng(s)
        clip = clips[int(rng.integers(len(clips)))]
        word = read_wav(clip.path)[:SAMPLE_RATE]
        noise = noises[int(rng.integers(len(noises)))]
        res = synthesize_stream(noise, word, rng, clip.label, min_snr_db, max_snr_db, min_dur, max_dur)
        out.append(StreamRecord(f"{split}-{i:06d}", res.samples, [res.span], res.snr_db, s))
    return out


# ------------------------------------------------------------- disk format


def write_split(directory: str | Path, records: Sequence[StreamRecord]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for r in records:
        write_wav(d / f"{r.stream_id}.wav", r.samples)
        (d / f"{r.stream_id}.json").write_text(json.dumps(r.sidecar(), sort_keys=True) + "\n")


def read_split(directory: str | Path) -> list[StreamRecord]:
    d = Path(directory)
    if not d.is_dir():
        raise InputError(f"missing split directory {d}")
    out = []
    for wav in sorted(d.glob("*.wav")):
        side = wav.with_suffix(".json")
        try:
            meta = json.loads(side.read_text())
            spans = [WordSpan.from_json(s) for s in meta["spans"]]
        except (OSError, KeyError, ValueError) as err:
            raise FormatError(f"{side}: bad sidecar ({err})") from err
        out.append(StreamRecord(wav.stem, read_wav(wav), spans, meta.get("snr_db"), int(meta["seed"])))
    return out


def manifest(splits: dict[str, list[StreamRecord]], params: dict) -> dict:
    per_split = {}
    for name, recs in splits.items():
        hist = Counter(s.label for r in recs for s in r.spans)
        per_split[name] = {"streams": len(recs), "labels": dict(sorted(hist.items()))}
    total = Counter()
    for v in per_split.values():
        total.update(v["labels"])
    return {
        "streams": sum(v["streams"] for v in per_split.values()),
        "labels": dict(sorted(total.items())),
        "splits": per_split,
        "params": params,
    }
