"""affectkit: desk-scale valence-arousal, expression, and action-unit pipeline."""

from .tasks import AU_NAMES, EXPRESSION_NAMES, Task

__version__ = "0.1.0"

__all__ = ["Task", "AU_NAMES", "EXPRESSION_NAMES", "__version__"]
