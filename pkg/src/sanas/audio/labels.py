"""The twelve output classes; index in ``LABELS`` is the class id."""

TARGET_WORDS = ("yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go")
BG_NOISE = "bg-noise"
UNKNOWN = "unknown"
LABELS = TARGET_WORDS + (BG_NOISE, UNKNOWN)
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}
BG_NOISE_ID = LABEL_INDEX[BG_NOISE]
UNKNOWN_ID = LABEL_INDEX[UNKNOWN]
NUM_CLASSES = len(LABELS)


def label_id(name: str) -> int:
    try:
        return LABEL_INDEX[name]
    except KeyError:
        raise ValueError(f"unknown label {name!r}; expected one of {LABELS}") from None


def label_name(i: int) -> str:
    return LABELS[i]
