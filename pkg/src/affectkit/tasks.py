"""Shared task vocabulary: track identifiers, category names, output arities."""

from enum import Enum


class Task(str, Enum):
    VA = "va"
    EXPR = "expr"
    AU = "au"


# Six basic expressions plus neutral and other, in label order 0..7.
EXPRESSION_NAMES = (
    "neutral",
    "anger",
    "disgust",
    "fear",
    "happiness",
    "sadness",
    "surprise",
    "other",
)

# The 12 annotated action units, in annotation-column order.
AU_NAMES = (
    "AU1", "AU2", "AU4", "AU6", "AU7", "AU10",
    "AU12", "AU15", "AU23", "AU24", "AU25", "AU26",
)

NUM_EXPRESSIONS = len(EXPRESSION_NAMES)
NUM_AUS = len(AU_NAMES)

TASK_OUTPUT_DIM = {Task.VA: 2, Task.EXPR: NUM_EXPRESSIONS, Task.AU: NUM_AUS}

# Sentinel annotation values marking unlabeled frames.
VA_SENTINEL = -5.0
LABEL_SENTINEL = -1

TASK_TITLES = {
    Task.VA: "VA estimation",
    Task.EXPR: "EXPR recognition",
    Task.AU: "AU detection",
}
