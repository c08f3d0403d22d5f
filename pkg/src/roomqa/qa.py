"""Templated question-answer generation, filtering rules, and answer vocab.

Questions are emitted only when unambiguous: attribute questions require all
matching objects to share the attribute, and relational questions require a
unique referent with a clear nearest neighbor. Every emitted question passes
the rule-based filter.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .geometry import Box3D
from .scenes import ScenePackage
from .textproc import normalize_answer, tokenize


class QuestionType(Enum):
    OBJECT = "object"
    COLOR = "color"
    OBJECT_NATURE = "object_nature"
    PLACE = "place"
    NUMBER = "number"
    OTHER = "other"


@dataclass
class QASample:
    question_id: str
    scene_id: str
    question: str
    answers: list[str]
    object_ids: list[int]
    object_names: list[str]
    object_boxes: list[Box3D]
    object_classes: list[int]

    def __post_init__(self):
        if not self.answers:
            raise ValueError("answer set must be non-empty")
        lengths = {
            len(self.object_ids),
            len(self.object_names),
            len(self.object_boxes),
            len(self.object_classes),
        }
        if len(lengths) != 1:
            raise ValueError("object annotation lists must have equal lengths")
        if any(not 0 <= c < 18 for c in self.object_classes):
            raise ValueError("object class index out of range")

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "scene_id": self.scene_id,
            "question": self.question,
            "answers": list(self.answers),
            "object_ids": list(self.object_ids),
            "object_names": list(self.object_names),
            "object_boxes": [b.to_dict() for b in self.object_boxes],
            "object_classes": list(self.object_classes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QASample":
        return cls(
            question_id=d["question_id"],
            scene_id=d["scene_id"],
            question=d["question"],
            answers=list(d["answers"]),
            object_ids=list(d["object_ids"]),
            object_names=list(d["object_names"]),
            object_boxes=[Box3D.from_dict(b) for b in d["object_boxes"]],
            object_classes=list(d["object_classes"]),
        )


# ---------------------------------------------------------------------------
# filtering and taxonomy
# ---------------------------------------------------------------------------

BANNED_TOKENS = ("this", "image")
DIRECTION_TOKENS = ("north", "west", "south", "east")
BANNED_PREFIXES = ("what is the name of",)


def filter_question(question: str) -> tuple[bool, str]:
    """Rule-based filter for underspecified or noisy questions.

    Returns (keep, reason); reason is empty when kept. Token matching is
    case-insensitive on word boundaries.
    """
    tokens = set(tokenize(question))
    for tok in BANNED_TOKENS:
        if tok in tokens:
            return False, f"banned-token:{tok}"
    for tok in DIRECTION_TOKENS:
        if tok in tokens:
            return False, "direction-word"
    lowered = " ".join(tokenize(question))
    for prefix in BANNED_PREFIXES:
        if lowered.startswith(prefix):
            return False, "name-pattern"
    return True, ""


def classify_question_type(question: str) -> QuestionType:
    """Assign one of six types from the beginning of the question."""
    q = " ".join(tokenize(question))
    if q.startswith("what color") or q.startswith("what is the color"):
        return QuestionType.COLOR
    if q.startswith(("what type", "what shape", "what kind")):
        return QuestionType.OBJECT_NATURE
    if q.startswith("where is"):
        return QuestionType.PLACE
    if q.startswith("how many"):
        return QuestionType.NUMBER
    if q.startswith("what is"):
        return QuestionType.OBJECT
    return QuestionType.OTHER


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _plural(name: str) -> str:
    return name + "s"


def room_region(center: np.ndarray, room_size) -> str:
    """Coarse location phrase: corner, wall, or middle of the room."""
    w, d, _ = room_size
    margin = 0.22 * min(w, d)
    near_x = min(center[0], w - center[0]) < margin
    near_y = min(center[1], d - center[1]) < margin
    if near_x and near_y:
        return "in the corner of the room"
    if near_x or near_y:
        return "next to the wall"
    return "in the middle of the room"


def _nearest_neighbor(scene: ScenePackage, idx: int) -> tuple[int, float, float]:
    """Index of the nearest other object plus the two smallest distances."""
    centers = np.stack([b.center for b in scene.gt_boxes])
    dists = np.linalg.norm(centers - centers[idx], axis=1)
    dists[idx] = np.inf
    order = np.argsort(dists, kind="stable")
    nearest = int(order[0])
    second = float(dists[order[1]]) if len(order) > 1 and np.isfinite(dists[order[1]]) else np.inf
    return nearest, float(dists[nearest]), second


def _sample_annotation(scene: ScenePackage, indices: list[int]) -> dict:
    return {
        "object_ids": list(indices),
        "object_names": [scene.gt_object_names[i] for i in indices],
        "object_boxes": [scene.gt_boxes[i] for i in indices],
        "object_classes": [scene.gt_classes[i] for i in indices],
    }


def generate_qa(scene: ScenePackage, seed: int) -> list[QASample]:
    """Emit templated questions over all six types for one scene.

    Answers are derived from the scene ground truth. Deterministic per seed;
    every emitted sample passes filter_question.
    """
    rng = np.random.default_rng(seed)
    samples: list[QASample] = []
    by_name: dict[str, list[int]] = {}
    for i, name in enumerate(scene.gt_object_names):
        by_name.setdefault(name, []).append(i)

    def emit(question: str, answers: list[str], indices: list[int]):
        keep, _ = filter_question(question)
        if not keep:
            return
        samples.append(
            QASample(
                question_id=f"{scene.scene_id}-q{len(samples):04d}",
                scene_id=scene.scene_id,
                question=question,
                answers=answers,
                **_sample_annotation(scene, indices),
            )
        )

    for name in sorted(by_name):
        idxs = by_name[name]
        unique = len(idxs) == 1

        # color: only when all matching objects share the color
        colors = {scene.gt_colors[i] for i in idxs}
        if len(colors) == 1:
            color = next(iter(colors))
            if unique:
                phrasing = rng.integers(0, 2)
                q = (
                    f"What color is the {name}?"
                    if phrasing == 0
                    else f"What is the color of the {name}?"
                )
            else:
                q = f"What color are the {_plural(name)}?"
            emit(q, [color], idxs)

        # number: count of the class
        emit(f"How many {_plural(name)} are there?", [str(len(idxs))], idxs)

        if unique:
            i = idxs[0]
            # place: coarse region of a unique object, with a short paraphrase
            region = room_region(scene.gt_boxes[i].center, scene.room_size)
            emit(
                f"Where is the {name} located?",
                [region, region.replace("in the ", "").replace("next to the ", "")],
                [i],
            )

            # object / object nature: nearest distinct neighbor, unambiguous
            if len(scene.gt_boxes) > 1:
                j, dist, second = _nearest_neighbor(scene, i)
                if second - dist > 0.3 and scene.gt_object_names[j] != name:
                    answer = scene.gt_object_names[j]
                    variant = rng.integers(0, 3)
                    if variant == 0:
                        q = f"What is next to the {name}?"
                    elif variant == 1:
                        q = f"What is the object closest to the {name}?"
                    else:
                        q = f"What kind of object is next to the {name}?"
                    emit(q, [answer], [j, i])

        # other: presence question, answer yes
        emit(f"Is there a {name} in the room?", ["yes"], idxs)

    # other: presence questions for a couple of absent classes, answer no
    absent = [c for c in scene.class_palette if c not in by_name]
    rng.shuffle(absent)
    for name in absent[:2]:
        emit(f"Is there a {name} in the room?", ["no"], [])

    return samples


# ---------------------------------------------------------------------------
# answer vocabulary
# ---------------------------------------------------------------------------

@dataclass
class AnswerVocab:
    answers: list[str]
    frequencies: list[int]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {a: i for i, a in enumerate(self.answers)}
        if len(self.index) != len(self.answers):
            raise ValueError("duplicate answers in vocabulary")

    def __len__(self) -> int:
        return len(self.answers)

    def lookup(self, answer: str) -> int | None:
        return self.index.get(normalize_answer(answer))

    def to_dict(self) -> dict:
        return {"answers": self.answers, "frequencies": self.frequencies}

    @classmethod
    def from_dict(cls, d: dict) -> "AnswerVocab":
        return cls(answers=list(d["answers"]), frequencies=list(d["frequencies"]))


def build_answer_vocab(train: list[QASample]) -> AnswerVocab:
    """Distinct normalized answers ordered by descending frequency, then name."""
    if not train:
        raise ValueError("cannot build a vocabulary from an empty training set")
    counts = Counter()
    for s in train:
        for a in s.answers:
            counts[normalize_answer(a)] += 1
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return AnswerVocab(
        answers=[a for a, _ in ordered], frequencies=[c for _, c in ordered]
    )


# ---------------------------------------------------------------------------
# split statistics
# ---------------------------------------------------------------------------

def split_stats(splits: dict[str, list[QASample]]) -> dict:
    """Question / unique-question / scene counts per split plus totals."""
    rows = {}
    for name, samples in splits.items():
        rows[name] = {
            "questions": len(samples),
            "unique_questions": len({s.question for s in samples}),
            "scenes": len({s.scene_id for s in samples}),
        }
    all_samples = [s for samples in splits.values() for s in samples]
    rows["total"] = {
        "questions": len(all_samples),
        "unique_questions": len({s.question for s in all_samples}),
        "scenes": len({s.scene_id for s in all_samples}),
    }
    return rows


def render_split_stats(stats: dict) -> str:
    headers = ["Split", "# Question", "# Unique Question", "# 3D Scenes"]
    rows = [
        [name, str(r["questions"]), str(r["unique_questions"]), str(r["scenes"])]
        for name, r in stats.items()
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# JSON Lines I/O
# ---------------------------------------------------------------------------

def save_qa(samples: list[QASample], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict()) + "\n")


def load_qa(path: str | Path) -> list[QASample]:
    samples = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                samples.append(QASample.from_dict(json.loads(line)))
    return samples


def save_predictions(predictions: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(json.dumps(p) + "\n")


def load_predictions(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
