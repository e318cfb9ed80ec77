"""Spike-camera toolkit: sensor simulation, SPK1 codec, classical reconstructions
and deterministic forward passes of the temporal-texture, fusion and
entropy-selective-attention modules."""

from .esa import EntropyMaskSet, EsaConfig, EsaParams, esa_forward, generate_masks, window_entropy
from .ffm import FfmParams, ffm_forward
from .reconstruction import IntensityMap, intensity_map, tfi, tfp
from .spike_io import SpikeStream, read_stream, slice_time, write_stream
from .spike_sim import FrameSequence, NoiseConfig, SensorConfig, expected_rate, simulate
from .tbtm import TbtmParams, tbtm_forward

__version__ = "0.1.0"

__all__ = [
    "EntropyMaskSet",
    "EsaConfig",
    "EsaParams",
    "FfmParams",
    "FrameSequence",
    "IntensityMap",
    "NoiseConfig",
    "SensorConfig",
    "SpikeStream",
    "TbtmParams",
    "esa_forward",
    "expected_rate",
    "ffm_forward",
    "generate_masks",
    "intensity_map",
    "read_stream",
    "simulate",
    "slice_time",
    "tbtm_forward",
    "tfi",
    "tfp",
    "window_entropy",
    "write_stream",
]
