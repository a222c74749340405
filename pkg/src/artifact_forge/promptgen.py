"""Text generators: artifact descriptions, training and inference prompts, VQA pairs.

Every generator is a pure function of its inputs and a seed (or a numpy
``Generator``), so the same call always returns the same text.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .degrade import ArtifactLabel
from .errors import ConfigError, EmptyLabelSet

LABELS = tuple(ArtifactLabel)

DESCRIPTIONS = {
    ArtifactLabel.FLOATERS: "floater artifacts",
    ArtifactLabel.DILATION: "oversized blurry dilated patches",
    ArtifactLabel.NEEDLES: "elongated needle-like geometric spikes",
    ArtifactLabel.CRACKS: "crack artifacts",
    ArtifactLabel.ALIASING: "jagged aliasing patterns and shimmering",
    ArtifactLabel.BLURRING: "over-smoothed gaussian blurring artifacts",
    ArtifactLabel.POPPING: "temporal depth popping and flickering",
    ArtifactLabel.GHOSTING: "translucent semi-transparent ghosting artifacts",
    ArtifactLabel.COLOR_OUTLIERS: "random RGB color noise",
}

TRAINING_TEMPLATES = (
    "Apply {artifacts} to the scene.",
    "Render the video with {artifacts}.",
    "Add {artifacts} to the video.",
    "Distort the video with {artifacts}.",
)
INFERENCE_TEMPLATE = TRAINING_TEMPLATES[0]
QUESTION = "Does this video suffer from {artifact}?"
NORMAL = "normal"


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def label(value) -> ArtifactLabel:
    """Parse a label from its display name, enum name or the enum itself."""
    if isinstance(value, ArtifactLabel):
        return value
    text = str(value).strip()
    for lab in LABELS:
        if text.lower() in (lab.value.lower(), lab.name.lower()):
            return lab
    raise ConfigError(f"unknown artifact label {value!r}")


def description(lab) -> str:
    return DESCRIPTIONS[label(lab)]


def join_descriptions(labels) -> str:
    return ", ".join(description(lab) for lab in labels)


def inference_prompt(seed=None, k: int | None = None, labels=None) -> str:
    """Combinatorial inference prompt.

    K is uniform on 1..9 unless forced; K descriptions are drawn without
    replacement and kept in draw order.  Passing ``labels`` skips sampling.
    """
    if labels is None:
        labels = sample_labels(seed, k)
    return INFERENCE_TEMPLATE.format(artifacts=join_descriptions(labels))


def sample_labels(seed=None, k: int | None = None) -> list:
    rng = _rng(seed)
    if k is None:
        k = int(rng.integers(1, len(LABELS) + 1))
    if not 1 <= k <= len(LABELS):
        raise ConfigError(f"k must lie in 1..{len(LABELS)}, got {k}")
    idx = rng.choice(len(LABELS), size=k, replace=False)
    return [LABELS[i] for i in idx]


def training_prompt(labels, seed=None, template: int | None = None) -> str:
    """One of the four training templates (uniform unless ``template`` is given)
    filled with the labels' descriptions in the given order."""
    labels = [label(x) for x in labels]
    if not labels:
        raise EmptyLabelSet("training prompts need at least one artifact label")
    if template is None:
        template = int(_rng(seed).integers(len(TRAINING_TEMPLATES)))
    if not 0 <= template < len(TRAINING_TEMPLATES):
        raise ConfigError(f"template index must lie in 0..{len(TRAINING_TEMPLATES) - 1}")
    return TRAINING_TEMPLATES[template].format(artifacts=join_descriptions(labels))


class ExclusivityMatrix:
    """Symmetric 9x9 boolean relation; ``True`` means the two labels are mutually exclusive."""

    def __init__(self, matrix=None):
        m = np.zeros((len(LABELS), len(LABELS)), dtype=bool) if matrix is None else np.asarray(matrix)
        if m.shape != (len(LABELS), len(LABELS)):
            raise ConfigError(f"exclusivity matrix must be {len(LABELS)}x{len(LABELS)}, got {m.shape}")
        if m.dtype != bool:
            if not np.all((m == 0) | (m == 1)):
                raise ConfigError("exclusivity matrix entries must be boolean")
            m = m.astype(bool)
        if not np.array_equal(m, m.T):
            raise ConfigError("exclusivity matrix must be symmetric")
        if m.diagonal().any():
            raise ConfigError("exclusivity matrix must have a false diagonal")
        self.matrix = m.copy()
        self.matrix.flags.writeable = False

    @classmethod
    def from_pairs(cls, pairs) -> "ExclusivityMatrix":
        m = np.zeros((len(LABELS), len(LABELS)), dtype=bool)
        for a, b in pairs:
            i, j = LABELS.index(label(a)), LABELS.index(label(b))
            if i == j:
                raise ConfigError(f"a label cannot exclude itself: {a!r}")
            m[i, j] = m[j, i] = True
        return cls(m)

    @classmethod
    def load(cls, path=None) -> "ExclusivityMatrix":
        """Read ``{"pairs": [[a, b], ...]}`` or ``{"matrix": [[...]]}``; default is the bundled example."""
        if path is None:
            text = resources.files("artifact_forge.data").joinpath("exclusivity_example.json").read_text()
        else:
            text = Path(path).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"exclusivity matrix file is not valid JSON: {exc}") from None
        if "matrix" in doc:
            return cls(np.asarray(doc["matrix"], dtype=int))
        if "pairs" in doc:
            return cls.from_pairs(doc["pairs"])
        raise ConfigError("exclusivity matrix file needs a 'pairs' or 'matrix' key")

    def exclusive_with(self, lab) -> list:
        i = LABELS.index(label(lab))
        return [LABELS[j] for j in np.flatnonzero(self.matrix[i])]

    def pairs(self) -> list:
        i, j = np.nonzero(np.triu(self.matrix))
        return [(LABELS[a].value, LABELS[b].value) for a, b in zip(i, j)]


def question(lab) -> str:
    return QUESTION.format(artifact=label(lab).value)


def vqa_pairs(video_label, matrix: ExclusivityMatrix | None = None, seed=None) -> list:
    """Question/answer pairs for one labelled video.

    An artifact video yields one "Yes" pair for its own label plus one "No"
    pair per mutually exclusive label.  A normal video gets a single "No"
    query about a randomly chosen artifact.
    """
    matrix = matrix if matrix is not None else ExclusivityMatrix()
    if isinstance(video_label, str) and video_label.strip().lower() == NORMAL:
        pick = LABELS[int(_rng(seed).integers(len(LABELS)))]
        return [{"question": question(pick), "answer": "No"}]
    lab = label(video_label)
    out = [{"question": question(lab), "answer": "Yes"}]
    out += [{"question": question(b), "answer": "No"} for b in matrix.exclusive_with(lab)]
    return out


def video_vqa_pairs(labels, matrix: ExclusivityMatrix | None = None, seed=None) -> list:
    """VQA pairs for a video carrying several labels (or none, i.e. normal).

    Per-label pairs are merged; a "No" query about a label the video does
    carry is dropped, as are repeated questions.
    """
    labels = [label(x) for x in labels]
    if not labels:
        return vqa_pairs(NORMAL, matrix, seed)
    present = {question(lab) for lab in labels}
    out, seen = [], set()
    for lab in labels:
        for pair in vqa_pairs(lab, matrix):
            q = pair["question"]
            if q in seen or (pair["answer"] == "No" and q in present):
                continue
            seen.add(q)
            out.append(pair)
    return out


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
