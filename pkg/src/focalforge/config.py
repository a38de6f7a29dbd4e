"""Run configuration: INI-style files overlaying dataclass defaults.

One file drives every subcommand.  Sections map one-to-one onto the
module dataclasses ([lens], [degrade], [dataset], [gia], [train],
[model]) plus a [run] section for the global seed and thread cap.  The
reader tracks line numbers so unknown keys, bad values, and invariant
violations all point at the offending line; an empty file yields pure
defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .cmoslite import CmosConfig, TrainConfig
from .datagen import DatasetSpec
from .gia import GiaConfig
from .optics import LensParams
from .svblur import DegradeOpts


class ConfigError(ValueError):
    """Unknown key, malformed value, or violated invariant in a config file."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; each section falls back to its defaults."""

    lens: LensParams = LensParams()
    degrade: DegradeOpts = DegradeOpts()
    dataset: DatasetSpec = DatasetSpec(name="dataset")
    gia: GiaConfig = GiaConfig(channels=32)
    train: TrainConfig = TrainConfig()
    model: CmosConfig = CmosConfig()
    seed: int = 0
    threads: int | None = None


_SECTION_DEFAULTS = {
    "lens": RunConfig.lens,
    "degrade": RunConfig.degrade,
    "dataset": RunConfig.dataset,
    "gia": RunConfig.gia,
    "train": RunConfig.train,
    "model": RunConfig.model,
}

# fields whose coercion the default value's type cannot describe
_KIND_OVERRIDES = {
    ("dataset", "image_size"): "int2?",
    ("train", "crop"): "int?",
    ("train", "val_limit"): "int?",
    ("train", "single_task"): "str?",
    ("train", "scale_ratios"): "floats",
    ("model", "widths"): "ints",
    ("run", "threads"): "int?",
}

_RUN_KINDS = {"seed": "int", "threads": "int?"}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _kind_of(section: str, name: str, default) -> str:
    if (section, name) in _KIND_OVERRIDES:
        return _KIND_OVERRIDES[(section, name)]
    if isinstance(default, bool):
        return "bool"
    if isinstance(default, int):
        return "int"
    if isinstance(default, float):
        return "float"
    if isinstance(default, str):
        return "str"
    raise AssertionError(f"no coercion rule for [{section}] {name}")


def _coerce(raw: str, kind: str):
    if kind.endswith("?") and raw.strip().lower() in ("none", ""):
        return None
    base = kind.rstrip("?")
    s = raw.strip()
    if base == "int":
        return int(s)
    if base == "float":
        return float(s)
    if base == "str":
        return s
    if base == "bool":
        low = s.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {s!r}")
    if base == "ints":
        return tuple(int(tok) for tok in s.split(","))
    if base == "floats":
        return tuple(float(tok) for tok in s.split(","))
    if base == "int2":
        parts = tuple(int(tok) for tok in s.split(","))
        if len(parts) != 2:
            raise ValueError(f"expected two integers, got {s!r}")
        return parts
    raise AssertionError(f"unknown kind {kind}")


def _read_ini(text: str, origin: str):
    """{section: {key: (raw, line)}} plus section header lines."""
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    header_lines: dict[str, int] = {}
    current = None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith(("#", ";")):
            continue
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip().lower()
            if current in sections:
                raise ConfigError(f"{origin}:{no}: duplicate section [{current}]")
            sections[current] = {}
            header_lines[current] = no
            continue
        if "=" not in s:
            raise ConfigError(f"{origin}:{no}: expected 'key = value', got {s!r}")
        if current is None:
            raise ConfigError(f"{origin}:{no}: key outside any [section]")
        key, _, val = s.partition("=")
        key = key.strip().lower()
        if key in sections[current]:
            raise ConfigError(f"{origin}:{no}: duplicate key {key!r} in [{current}]")
        sections[current][key] = (val.strip(), no)
    return sections, header_lines


def _build_section(section: str, defaults, items: dict, origin: str, header_line: int):
    """Overlay file values onto one dataclass, attributing every failure."""
    names = {f.name for f in fields(type(defaults))}
    values, lines = {}, {}
    for key, (raw, no) in items.items():
        if key not in names:
            raise ConfigError(
                f"{origin}:{no}: unknown key {key!r} in [{section}] "
                f"(known: {', '.join(sorted(names))})"
            )
        kind = _kind_of(section, key, getattr(defaults, key))
        try:
            values[key] = _coerce(raw, kind)
        except ValueError as e:
            raise ConfigError(f"{origin}:{no}: [{section}] {key}: {e}") from None
        lines[key] = no
    try:
        return replace(defaults, **values)
    except (ValueError, TypeError) as e:
        # find the single key that trips the invariant, if one does
        for key in values:
            try:
                replace(defaults, **{key: values[key]})
            except (ValueError, TypeError) as single:
                raise ConfigError(
                    f"{origin}:{lines[key]}: [{section}] {key}: {single}"
                ) from None
        raise ConfigError(
            f"{origin}:{header_line}: [{section}]: {e} "
            f"(keys {', '.join(sorted(values))})"
        ) from None


def parse_config(path) -> RunConfig:
    """Parse an INI file into a RunConfig; defaults where the file is silent."""
    origin = str(path)
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{origin}: {e.strerror or e}") from None
    return parse_config_text(text, origin)


def parse_config_text(text: str, origin: str = "<config>") -> RunConfig:
    """Same as parse_config but for already-loaded text (used by tests)."""
    sections, header_lines = _read_ini(text, origin)
    out = {}
    for section, items in sections.items():
        if section == "run":
            for key, (raw, no) in items.items():
                if key not in _RUN_KINDS:
                    raise ConfigError(
                        f"{origin}:{no}: unknown key {key!r} in [run] "
                        f"(known: {', '.join(sorted(_RUN_KINDS))})"
                    )
                try:
                    out[key] = _coerce(raw, _RUN_KINDS[key])
                except ValueError as e:
                    raise ConfigError(f"{origin}:{no}: [run] {key}: {e}") from None
            continue
        if section not in _SECTION_DEFAULTS:
            raise ConfigError(
                f"{origin}:{header_lines[section]}: unknown section [{section}] "
                f"(known: {', '.join(sorted(_SECTION_DEFAULTS))}, run)"
            )
        out[section] = _build_section(
            section, _SECTION_DEFAULTS[section], items, origin, header_lines[section]
        )
    if out.get("threads") is not None and out["threads"] < 1:
        raise ConfigError(f"{origin}: [run] threads must be >= 1")
    return RunConfig(**out)
