"""Model configuration and the flat key=value config-document format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

VARIANTS = ("baseline", "parallel", "cascade")


@dataclass
class ModelConfig:
    """Dimensions, layer counts, variant selector, loss weights, seeds."""

    vocab_size: int = 40
    adapter_dim: int = 384
    encoder_layers: int = 4
    decoder_layers: int = 4
    heads: int = 2
    conv_kernel: int = 3
    ffn_hidden: int = 1536
    n_mels: int = 80
    variant: str = "baseline"
    ssl_dim: int = 768
    projector_hidden: int = 768
    ssl_predictor_layers: int = 4
    ssl_heads: int = 2
    dropout: float = 0.1
    n_bins: int = 256
    pitch_min: float = 0.0
    pitch_max: float = 6.5
    energy_min: float = 0.0
    energy_max: float = 2.5
    w_mel: float = 1.0
    w_dur: float = 1.0
    w_pitch: float = 1.0
    w_energy: float = 1.0
    w_aux: float = 1.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"variant must be one of {VARIANTS}, got {self.variant!r}"
            )
        if self.adapter_dim % self.heads != 0:
            raise ConfigError(
                f"adapter_dim {self.adapter_dim} not divisible by heads {self.heads}"
            )
        if self.decoder_width % self.heads != 0:
            raise ConfigError(
                f"decoder width {self.decoder_width} not divisible by heads "
                f"{self.heads}"
            )
        if self.ssl_dim % self.ssl_heads != 0:
            raise ConfigError(
                f"ssl_dim {self.ssl_dim} not divisible by ssl_heads {self.ssl_heads}"
            )
        if self.conv_kernel % 2 == 0:
            raise ConfigError(f"conv_kernel must be odd, got {self.conv_kernel}")
        for bound_lo, bound_hi, what in (
            (self.pitch_min, self.pitch_max, "pitch"),
            (self.energy_min, self.energy_max, "energy"),
        ):
            if bound_hi <= bound_lo:
                raise ConfigError(f"{what} range is empty: [{bound_lo}, {bound_hi}]")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def decoder_width(self) -> int:
        """Cascade decodes the 768-dim predictor output; others stay at
        adapter width."""
        return self.ssl_dim if self.variant == "cascade" else self.adapter_dim

    def replace(self, **kw) -> "ModelConfig":
        return dataclasses.replace(self, **kw)

    def to_mapping(self) -> dict[str, str]:
        return {f.name: str(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "ModelConfig":
        known = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown model config key {key!r}")
            kwargs[key] = _coerce(key, raw, known[key])
        return cls(**kwargs)


def _coerce(key: str, raw: str, type_name: str):
    raw = raw.strip()
    try:
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
        if type_name == "bool":
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {type_name}") from exc


def format_kv(sections: dict[str, dict[str, str]]) -> str:
    """Render sections of key = value lines, deterministically ordered."""
    chunks = []
    for section in sections:
        chunks.append(f"[{section}]")
        for key, value in sections[section].items():
            chunks.append(f"{key} = {value}")
        chunks.append("")
    return "\n".join(chunks)


def parse_kv(text: str) -> dict[str, dict[str, str]]:
    """Parse the flat key = value document format. '#' starts a comment."""
    sections: dict[str, dict[str, str]] = {}
    current: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = stripped.split("=", 1)
        sections[current][key.strip()] = value.strip()
    return sections
