"""Flat ``key = value`` config files shared by the environment and the harness."""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_value(raw: str):
    text = raw.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if "," in text or (text.startswith("[") and text.endswith("]")):
        items = [t for t in text.strip("[]").split(",") if t.strip()]
        return [parse_value(t) for t in items]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_config(path: str | Path) -> dict:
    """Read a flat key/value file.

    Blank lines and ``#`` comments are ignored. Both ``key = value`` and
    ``key: value`` are accepted; comma separated values become lists.
    """
    out: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, value = line.split(sep, 1)
                break
        else:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def write_config(values: dict, path: str | Path) -> None:
    lines = []
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")
