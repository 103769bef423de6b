"""Feature extraction jobs for the painting recommendation core."""

from .job import ExtractionJob
from .pipeline import extract_image, extract_itm, extract_text, run_job, sentiment_tag

__all__ = [
    "ExtractionJob",
    "extract_image",
    "extract_itm",
    "extract_text",
    "run_job",
    "sentiment_tag",
]
