from .labels import BG_NOISE, BG_NOISE_ID, LABELS, LABEL_INDEX, NUM_CLASSES, TARGET_WORDS, UNKNOWN, UNKNOWN_ID
from .wav import SAMPLE_RATE, read_wav, write_wav
from .stream import (
    HOP,
    WINDOW,
    SynthResult,
    WordSpan,
    frame_count,
    frame_stream,
    label_frame,
    label_frame_samples,
    measure_snr_db,
    synthesize_long_stream,
    synthesize_stream,
)
from .features import FeatureNormalizer, log_mel_columns, mel_center_frequencies, mel_filterbank, mfcc, stream_windows
from .dataset import (
    ClipCatalog,
    Frame,
    StreamRecord,
    ToyConfig,
    frame_labels,
    load_speech_commands,
    make_toy_dataset,
    make_toy_stream,
    manifest,
    read_split,
    split_of,
    split_records,
    synthesize_from_catalog,
    to_frames,
    to_sequences,
    write_split,
)
