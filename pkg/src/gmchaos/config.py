"""Flat dotted-key run configuration.

Config files are plain text, one ``section.key = value`` per line with
``#`` comments; CLI flags override file keys.  The fully resolved
mapping is serialized back out next to every report so a run can be
reproduced from its output directory alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

EXPERIMENTS = (
    "cov-check", "martingale", "seneta", "spectrum", "negmoment",
    "spine", "kahane", "gff-cov", "liouville", "conformal", "kpz",
)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key or any(not p for p in key.split(".")):
            raise ConfigError(f"{source}:{lineno}: malformed key {key!r}")
        out[key] = value.strip()
    return out


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read(), source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


@dataclass
class RunConfig:
    experiment: str
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}"
            )

    def get(self, key: str, default=None, cast=None):
        if key not in self.values or self.values[key] == "":
            if default is None and cast is not None:
                raise ConfigError(f"missing required config key {key}")
            return default
        raw = self.values[key]
        if cast is None:
            return raw
        try:
            if cast is bool:
                if str(raw).lower() in ("1", "true", "yes", "on"):
                    return True
                if str(raw).lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(raw)
            return cast(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key}: cannot parse {raw!r} as {cast.__name__}") from exc

    def get_floats(self, key: str, default: str) -> list[float]:
        raw = self.values.get(key, default)
        try:
            return [float(x) for x in str(raw).replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"config key {key}: bad list {raw!r}") from exc

    def resolved_text(self) -> str:
        lines = [f"experiment = {self.experiment}"]
        for key in sorted(self.values):
            lines.append(f"{key} = {self.values[key]}")
        return "\n".join(lines) + "\n"
