"""Pipeline configuration and its ``key = value`` text format.

Lines are ``dotted.key = value``; ``#`` starts a comment. Unknown keys are
rejected. Every key has a default, so an empty file is a valid config.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .esa import EsaConfig
from .spike_sim import NoiseConfig, SensorConfig


@dataclass(frozen=True)
class PipelineConfig:
    # sensor: lambda * dt = 1 charge unit per step at unit intensity, dt recorded as 25 us
    theta: float = field(default=2.0, metadata={"key": "sensor.theta"})
    lambda_: float = field(default=0.04, metadata={"key": "sensor.lambda"})
    dt_us: float = field(default=25.0, metadata={"key": "sensor.dt_us"})
    reset: str = field(default="subtract", metadata={"key": "sensor.reset"})
    noise_enabled: bool = field(default=False, metadata={"key": "noise.enabled"})
    shot_noise_std: float = field(default=0.0, metadata={"key": "noise.shot_noise_std"})
    dark_rate: float = field(default=0.0, metadata={"key": "noise.dark_rate"})
    hold_steps: int = field(default=16, metadata={"key": "sim.hold_steps"})

    window: int = field(default=8, metadata={"key": "esa.window"})
    merge: int = field(default=2, metadata={"key": "esa.merge"})
    entropy_lo: float = field(default=0.5, metadata={"key": "esa.entropy_lo"})
    entropy_hi: float = field(default=1.0, metadata={"key": "esa.entropy_hi"})
    channel_mode: str = field(default="per_channel", metadata={"key": "esa.channel_mode"})
    deform_kernel: int = field(default=3, metadata={"key": "esa.deform_kernel"})
    imap_mode: str = field(default="count", metadata={"key": "esa.imap_mode"})

    channels: int = field(default=64, metadata={"key": "model.channels"})
    delta: int = field(default=5, metadata={"key": "tbtm.delta"})
    block_len: int = field(default=41, metadata={"key": "tbtm.block_len"})
    block_stride: int = field(default=20, metadata={"key": "tbtm.block_stride"})
    c_mid: int = field(default=16, metadata={"key": "tbtm.c_mid"})
    c_branch: int = field(default=16, metadata={"key": "tbtm.c_branch"})
    se_reduction: int = field(default=4, metadata={"key": "tbtm.se_reduction"})
    ffm_normalize: bool = field(default=False, metadata={"key": "ffm.normalize"})

    seed: int = field(default=0, metadata={"key": "seed"})
    input: str = field(default="", metadata={"key": "io.input"})
    output: str = field(default="", metadata={"key": "io.output"})

    def sensor(self) -> SensorConfig:
        noise = NoiseConfig(self.noise_enabled, self.shot_noise_std, self.dark_rate, self.seed)
        return SensorConfig(self.theta, self.lambda_, self.dt_us, noise, self.reset)

    def esa(self) -> EsaConfig:
        return EsaConfig(
            window=self.window,
            merge=self.merge,
            entropy_range=(self.entropy_lo, self.entropy_hi),
            channels=self.channels,
            deform_kernel=self.deform_kernel,
            channel_mode=self.channel_mode,
        )

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


KEYS = {f.metadata["key"]: f for f in fields(PipelineConfig)}


def _parse_value(raw: str, typ: str, key: str):
    if typ == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise ValueError(f"{key}: expected {typ}, got {raw!r}") from None
    return raw


def parse_config(text: str) -> PipelineConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        f = KEYS[key]
        values[f.name] = _parse_value(raw, f.type, key)
    return PipelineConfig(**values)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: PipelineConfig) -> str:
    lines = ["# spikecam pipeline configuration"]
    for key, f in KEYS.items():
        lines.append(f"{key} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return parse_config(Path(path).read_text())
