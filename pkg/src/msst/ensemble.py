"""Per-stream score files and equal-weight softmax-score fusion."""
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError

FOUR_STREAM = frozenset({"J", "B", "JM", "BM"})
SIX_STREAM = FOUR_STREAM | {"B2", "B2M"}
STREAM_SETS = {"4s": FOUR_STREAM, "6s": SIX_STREAM}


@dataclass
class ScoreFile:
    """Softmax scores of one modality stream over an ordered list of samples.

    ``labels`` is optional; when present the fused accuracy can be computed.
    """

    tag: str
    ids: list
    scores: np.ndarray
    labels: list = None
    source: str = "<memory>"

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or self.scores.shape[0] != len(self.ids):
            raise DataError(f"{self.source}: scores shape {self.scores.shape} does not match "
                            f"{len(self.ids)} ids")
        if self.scores.size:
            dev = np.abs(self.scores.sum(axis=1) - 1.0).max()
            if dev > 1e-6:
                raise DataError(f"{self.source}: score rows must be softmax probabilities "
                                f"(row sums off by {dev:.2e})")
        if self.labels is not None and len(self.labels) != len(self.ids):
            raise DataError(f"{self.source}: {len(self.labels)} labels for {len(self.ids)} ids")

    @property
    def classes(self):
        return self.scores.shape[1]

    def to_json(self):
        obj = {"tag": self.tag, "ids": list(self.ids), "classes": self.classes,
               "scores": self.scores.tolist()}
        if self.labels is not None:
            obj["labels"] = [int(v) for v in self.labels]
        return obj


def write_scores(sf, path):
    with open(path, "w") as fh:
        json.dump(sf.to_json(), fh)


def read_scores(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
        sf = ScoreFile(obj["tag"], obj["ids"], np.asarray(obj["scores"], dtype=np.float64),
                       obj.get("labels"), source=str(path))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: unreadable score file ({exc})") from exc
    if sf.scores.size and sf.classes != obj["classes"]:
        raise DataError(f"{path}: 'classes'={obj['classes']} but score rows have {sf.classes}")
    return sf


def check_stream_set(tags, recipe):
    expected = STREAM_SETS[recipe]
    got = set(tags)
    if got != expected:
        raise DataError(f"{recipe} ensemble expects streams {sorted(expected)}, got {sorted(got)}")


def ensemble(files):
    """Sum softmax scores (in sorted-tag order) and take the argmax.

    Returns ``(accuracy, predictions)``; accuracy is ``None`` when no file
    carries labels.
    """
    if not files:
        raise DataError("nothing to ensemble")
    files = sorted(files, key=lambda f: f.tag)
    ref = files[0]
    for f in files[1:]:
        if list(f.ids) != list(ref.ids):
            raise DataError(f"sample ids differ between {ref.source} ({ref.tag}) and "
                            f"{f.source} ({f.tag})")
        if f.classes != ref.classes:
            raise DataError(f"class counts differ between {ref.source} ({ref.classes}) and "
                            f"{f.source} ({f.classes})")
    labelled = [f for f in files if f.labels is not None]
    for f in labelled[1:]:
        if list(f.labels) != list(labelled[0].labels):
            raise DataError(f"labels differ between {labelled[0].source} and {f.source}")
    total = np.zeros_like(ref.scores)
    for f in files:
        total = total + f.scores
    pred = total.argmax(axis=1)
    acc = None
    if labelled:
        acc = float(np.mean(pred == np.asarray(labelled[0].labels))) if len(pred) else 0.0
    return acc, pred
