"""Raw media to HCMF feature files for the hiccap fusion engine."""

__version__ = "0.1.0"

from .extract import DimDrift, ExtractionJob, build_manifest, extract_all, extract_clip
from .media import DecodeError
from .encoders import EncoderUnavailable

__all__ = [
    "DimDrift",
    "DecodeError",
    "EncoderUnavailable",
    "ExtractionJob",
    "build_manifest",
    "extract_all",
    "extract_clip",
    "__version__",
]
