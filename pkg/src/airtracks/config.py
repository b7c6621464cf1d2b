"""Pipeline configuration: flat key=value text with an include directive.

The format is deliberately diff-friendly for run archives: one `key =
value` per line, `#` comments, and `include <relative-path>` to layer a
base file. Serialization is canonical (fixed key order), so a canonical
file echoes back byte-identical after a load/dump round trip. Every path
setting can be overridden with an AIRTRACKS_<KEY> environment variable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from airtracks.errors import ConfigError
from airtracks.registry import AircraftClass
from airtracks.tracks import OutlierParams, default_speed_ceilings

PATH_KEYS = (
    "raw_root",
    "organized_root",
    "archive_root",
    "processed_root",
    "stats_root",
    "terrain_root",
    "registry_root",
)
FILE_KEYS = ("polygon_file", "land_file", "airspace_file", "class_map_file")


@dataclass
class PipelineConfig:
    raw_root: str = ""
    organized_root: str = ""
    archive_root: str = ""
    processed_root: str = ""
    stats_root: str = ""
    terrain_root: str = ""
    registry_root: str = ""
    polygon_file: str = ""
    land_file: str = ""
    airspace_file: str = ""
    class_map_file: str = ""
    years: tuple[int, ...] = ()
    workers: int = 1
    strategy: str = "dynamic-queue"
    mad_threshold: float = 1.5
    smooth_window_s: float = 30.0
    max_gap_s: float = 60.0
    min_points: int = 10
    speed_ceiling_kt: dict[str, float] = field(default_factory=dict)

    def outlier_params(self) -> OutlierParams:
        ceilings = default_speed_ceilings()
        for name, value in self.speed_ceiling_kt.items():
            try:
                ceilings[AircraftClass(name)] = value
            except ValueError as exc:
                raise ConfigError(f"unknown aircraft class in speed ceiling: {name!r}") from exc
        return OutlierParams(
            mad_threshold=self.mad_threshold,
            smooth_window_s=self.smooth_window_s,
            max_gap_s=self.max_gap_s,
            min_points=self.min_points,
            speed_ceiling_kt=ceilings,
        )

    def validate(self) -> None:
        if not self.years:
            raise ConfigError("years must be non-empty")
        seen: dict[str, str] = {}
        for key in PATH_KEYS:
            value = getattr(self, key)
            if not value:
                continue
            normal = str(Path(value))
            if normal in seen:
                raise ConfigError(f"path collision: {key} and {seen[normal]} both use {value}")
            seen[normal] = key


def dumps(cfg: PipelineConfig) -> str:
    """Canonical serialization: declared field order, one key per line."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "years":
            lines.append(f"years = {','.join(str(y) for y in value)}")
        elif f.name == "speed_ceiling_kt":
            for cls in sorted(value):
                lines.append(f"speed_ceiling_{cls} = {value[cls]:g}")
        else:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def loads(text: str, base_dir: Path | str | None = None) -> PipelineConfig:
    cfg = PipelineConfig()
    _apply_text(cfg, text, Path(base_dir) if base_dir else Path("."))
    return cfg


def _apply_text(cfg: PipelineConfig, text: str, base_dir: Path) -> None:
    float_keys = {"mad_threshold", "smooth_window_s", "max_gap_s"}
    int_keys = {"workers", "min_points"}
    str_keys = set(PATH_KEYS) | set(FILE_KEYS) | {"strategy"}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("include "):
            inc = base_dir / line[len("include "):].strip()
            try:
                _apply_text(cfg, inc.read_text(), inc.parent)
            except OSError as exc:
                raise ConfigError(f"cannot read include {inc}: {exc}") from exc
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            if key == "years":
                cfg.years = tuple(int(y) for y in value.split(",") if y.strip())
            elif key.startswith("speed_ceiling_"):
                cfg.speed_ceiling_kt[key[len("speed_ceiling_"):]] = float(value)
            elif key in float_keys:
                setattr(cfg, key, float(value))
            elif key in int_keys:
                setattr(cfg, key, int(value))
            elif key in str_keys:
                setattr(cfg, key, value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc


def load_config(path: Path | str, apply_env: bool = True) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = loads(text, path.parent)
    if apply_env:
        for key in PATH_KEYS + FILE_KEYS:
            override = os.environ.get(f"AIRTRACKS_{key.upper()}")
            if override is not None:
                setattr(cfg, key, override)
    cfg.validate()
    return cfg
