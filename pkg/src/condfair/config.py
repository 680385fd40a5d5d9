"""Run configuration from a plain ``key = value`` file, overridable by CLI flags."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .reporting import FORMATS, RDP_VARIANTS

CONFIG_ENV = "CONDFAIR_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.05
    rdp_variant: str = "estimator"
    seed: int = 0
    metrics: tuple[str, ...] | None = None
    variants: tuple[str, ...] | None = None
    formats: tuple[str, ...] = ("json", "csv", "markdown")
    classes: str | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.rdp_variant not in RDP_VARIANTS:
            raise ValidationError(f"rdp_variant must be one of {sorted(RDP_VARIANTS)}, got {self.rdp_variant!r}")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad or not self.formats:
            raise ValidationError(f"unknown format(s) {bad}; choose from {sorted(FORMATS)}")

    def override(self, **values) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in values.items() if v is not None})


def _split(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


_PARSERS = {
    "alpha": float,
    "rdp_variant": str,
    "seed": int,
    "metrics": _split,
    "variants": _split,
    "formats": _split,
    "classes": str,
}


def load_config(path: str | Path) -> RunConfig:
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}: expected 'key = value'", line=lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _PARSERS:
            raise ValidationError(f"{path}: unknown key {key!r}", line=lineno)
        try:
            values[key] = _PARSERS[key](value)
        except ValueError:
            raise ValidationError(f"{path}: bad value for {key}: {value!r}", line=lineno) from None
    return RunConfig(**values)
