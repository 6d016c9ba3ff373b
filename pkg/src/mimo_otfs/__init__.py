"""MIMO-OTFS link-level simulation with iterative delay-time MRC detection."""

from .modem import FrameParams
from .channel import ChannelProfile, DtChannelTensor, PathSet
from .chanest import PilotConfig
from .detect import DetectorConfig, DetectorReport, detect_lmmse_dt, detect_mrc
from .harness import BerPoint, ExperimentConfig, run_experiment, run_point

__version__ = "0.1.0"

__all__ = [
    "BerPoint",
    "ChannelProfile",
    "DetectorConfig",
    "DetectorReport",
    "DtChannelTensor",
    "ExperimentConfig",
    "FrameParams",
    "PathSet",
    "PilotConfig",
    "detect_lmmse_dt",
    "detect_mrc",
    "run_experiment",
    "run_point",
]
