"""Online change-point detection with small neural networks trained on the fly."""
from .core import Annotation, TimeSeries, embed, mini_batch
from .detect import DetectionResult, DetectorConfig, ScoreSeries, extract_peaks, run_onnc, run_onnr
from .estimators import ONNC, ONNR
from .metrics import evaluate, rand_index

__version__ = "0.1.0"

__all__ = ["ONNC", "ONNR", "Annotation", "DetectionResult", "DetectorConfig", "ScoreSeries",
           "TimeSeries", "embed", "evaluate", "extract_peaks", "mini_batch", "rand_index",
           "run_onnc", "run_onnr"]
