"""Per-frame annotation parsing and sentinel filtering.

Annotation layout: one directory per task, one UTF-8 text file per video,
one line per frame (LF or CRLF). The first line may be a header, detected
by a non-numeric first token. Line formats:

    va    "valence,arousal"        two reals
    expr  "label"                  one integer
    au    "a1,a2,...,a12"          twelve integers, order AU1..AU26

Frames carrying sentinel values (-5 for valence/arousal, -1 for expression
or any action-unit slot) are unannotated and removed by ``filter_invalid``.
Curated indices persist as line-delimited JSON records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Union

from .tasks import NUM_AUS, NUM_EXPRESSIONS, TASK_TITLES, Task, VA_SENTINEL

DEFAULT_VA_RANGE = (-1.0, 1.0)

_TASK_ARITY = {Task.VA: 2, Task.EXPR: 1, Task.AU: NUM_AUS}


class AnnotationParseError(ValueError):
    """Malformed annotation line; message names the offending line."""


@dataclass(frozen=True)
class VAPair:
    valence: float
    arousal: float

    def is_valid(self, va_range=DEFAULT_VA_RANGE) -> bool:
        lo, hi = va_range
        for v in (self.valence, self.arousal):
            if v == VA_SENTINEL or not (lo <= v <= hi):
                return False
        return True


@dataclass(frozen=True)
class ExpressionLabel:
    label: int

    def is_valid(self, va_range=DEFAULT_VA_RANGE) -> bool:
        return 0 <= self.label < NUM_EXPRESSIONS


@dataclass(frozen=True)
class AUVector:
    values: tuple

    def is_valid(self, va_range=DEFAULT_VA_RANGE) -> bool:
        return all(v in (0, 1) for v in self.values)


Payload = Union[VAPair, ExpressionLabel, AUVector]

_PAYLOAD_TYPE = {Task.VA: VAPair, Task.EXPR: ExpressionLabel, Task.AU: AUVector}


@dataclass(frozen=True)
class FrameAnnotation:
    video_id: str
    frame_index: int
    payload: Payload


@dataclass
class CuratedIndex:
    """Valid frames for one task, plus the count of frames filtered out."""

    task: Task
    records: list
    dropped_count: int

    def __len__(self) -> int:
        return len(self.records)

    @property
    def total_parsed(self) -> int:
        return len(self.records) + self.dropped_count


def _is_numeric(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _parse_fields(fields, task, lineno):
    if task is Task.VA:
        try:
            return VAPair(float(fields[0]), float(fields[1]))
        except ValueError:
            raise AnnotationParseError(
                f"line {lineno}: non-numeric token in VA line: {fields!r}"
            ) from None
    try:
        values = tuple(int(f) for f in fields)
    except ValueError:
        raise AnnotationParseError(
            f"line {lineno}: non-integer token in {task.value} line: {fields!r}"
        ) from None
    if task is Task.EXPR:
        return ExpressionLabel(values[0])
    return AUVector(values)


def parse_annotation_file(content: str, task: Task, video_id: str = "") -> list:
    """Parse one annotation file into FrameAnnotation records, in file order.

    No validity filtering is applied; sentinel payloads come through as-is.
    Raises AnnotationParseError on wrong field counts or non-numeric tokens.
    """
    task = Task(task)
    arity = _TASK_ARITY[task]
    records = []
    frame_index = 0
    seen_content = False
    for lineno, raw in enumerate(content.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if not seen_content:
            seen_content = True
            if not _is_numeric(fields[0]):
                continue  # header line
        if len(fields) != arity:
            raise AnnotationParseError(
                f"line {lineno}: expected {arity} field(s), got {len(fields)}"
            )
        payload = _parse_fields(fields, task, lineno)
        records.append(FrameAnnotation(video_id, frame_index, payload))
        frame_index += 1
    return records


def parse_annotation_dir(directory, task: Task) -> list:
    """Parse every *.txt file in a directory; the file stem is the video id."""
    directory = Path(directory)
    records = []
    for path in sorted(directory.glob("*.txt")):
        try:
            records.extend(parse_annotation_file(path.read_text(), task, path.stem))
        except AnnotationParseError as exc:
            raise AnnotationParseError(f"{path}: {exc}") from None
    return records


def filter_invalid(records: Iterable, task: Task, va_range=DEFAULT_VA_RANGE) -> CuratedIndex:
    """Drop records whose payload fails its validity invariant; order preserved."""
    task = Task(task)
    expected = _PAYLOAD_TYPE[task]
    records = list(records)
    for rec in records:
        if not isinstance(rec.payload, expected):
            raise ValueError(
                f"record {rec.video_id}/{rec.frame_index} carries "
                f"{type(rec.payload).__name__}, expected {expected.__name__}"
            )
    kept = [rec for rec in records if rec.payload.is_valid(va_range)]
    return CuratedIndex(task, kept, len(records) - len(kept))


def curate_directory(directory, task: Task, va_range=DEFAULT_VA_RANGE) -> CuratedIndex:
    return filter_invalid(parse_annotation_dir(directory, task), task, va_range)


@dataclass
class CurationSummary:
    """Per-split totals in the two-column layout (frames, curated frames)."""

    task: Task
    rows: list = field(default_factory=list)  # (split, total, curated)

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "rows": [
                {"split": s, "frames": t, "curated_frames": c}
                for s, t, c in self.rows
            ],
        }

    def render(self) -> str:
        title = TASK_TITLES[self.task]
        width = max(len(title), max((len(s) for s, _, _ in self.rows), default=0)) + 2
        lines = [f"{title:<{width}} {'Frames':>12} {'Curated frames':>16}"]
        for split, total, curated in self.rows:
            lines.append(f"{split:<{width}} {total:>12,} {curated:>16,}")
        return "\n".join(lines)


_SPLIT_ORDER = {"train": 0, "training": 0, "val": 1, "validation": 1, "test": 2}


def summarize(indices: Mapping[str, CuratedIndex]) -> CurationSummary:
    """Build the per-split summary for one task from split -> CuratedIndex."""
    if not indices:
        raise ValueError("summarize requires at least one split")
    tasks = {idx.task for idx in indices.values()}
    if len(tasks) != 1:
        raise ValueError(f"mixed tasks in summary: {sorted(t.value for t in tasks)}")
    task = tasks.pop()
    order = sorted(indices, key=lambda s: (_SPLIT_ORDER.get(s, 99), s))
    rows = [(s, indices[s].total_parsed, len(indices[s])) for s in order]
    return CurationSummary(task, rows)


def _record_to_obj(rec: FrameAnnotation, task: Task) -> dict:
    obj = {"video_id": rec.video_id, "frame_index": rec.frame_index}
    if task is Task.VA:
        obj["valence"] = rec.payload.valence
        obj["arousal"] = rec.payload.arousal
    elif task is Task.EXPR:
        obj["expression"] = rec.payload.label
    else:
        obj["aus"] = list(rec.payload.values)
    return obj


def _obj_to_record(obj: dict, task: Task) -> FrameAnnotation:
    if task is Task.VA:
        payload = VAPair(float(obj["valence"]), float(obj["arousal"]))
    elif task is Task.EXPR:
        payload = ExpressionLabel(int(obj["expression"]))
    else:
        payload = AUVector(tuple(int(v) for v in obj["aus"]))
    return FrameAnnotation(str(obj["video_id"]), int(obj["frame_index"]), payload)


def save_index(index: CuratedIndex, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in index.records:
            fh.write(json.dumps(_record_to_obj(rec, index.task)) + "\n")


def load_index(path, task: Task) -> CuratedIndex:
    """Load a persisted curated index. Duplicate (video, frame) keys are an error."""
    task = Task(task)
    records = []
    seen = set()
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = _obj_to_record(json.loads(line), task)
            key = (rec.video_id, rec.frame_index)
            if key in seen:
                raise ValueError(f"{path}: duplicate frame key {key}")
            seen.add(key)
            records.append(rec)
    return CuratedIndex(task, records, dropped_count=0)
