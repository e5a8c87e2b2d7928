"""Run configuration: flat ``key = value`` text with ``[section]`` headers and ``#`` comments.

Every section and key is checked against SCHEMA; unknown names and
malformed values raise ConfigError with the offending line number.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

REQUIRED = object()


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.replace(",", " ").split()]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str) -> float | None:
    return None if s.strip().lower() in ("none", "") else float(s)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "general": {
        "potential": (str, REQUIRED),
        "sigma": (str, "zero"),
        "seed": (int, 0),
    },
    "layer": {
        "half_width": (float, 100.0),
        "h": (float, 0.05),
        "tol": (float, 1e-10),
        "tail_window": (_floats, [10.0, 40.0]),
    },
    "corrector": {
        "tol": (float, 1e-13),
    },
    "fk2pn": {
        "eps_list": (_floats, [0.2, 0.1, 0.05]),
        "A": (float, 8.0),
        "B": (float, 4.0),
        "t_end": (float, 1.0),
        "pn_h": (float, 0.0125),
        "truncation": (str, "poisson"),
        "window": (float, 4.0),
        "width": (float, 2.0),
    },
    "pn2ddd": {
        "positions": (_floats, [-1.0, 1.0]),
        "eps_list": (_floats, [0.1, 0.05]),
        "sigma": (str, "expr:0.3*sin(x)"),
        "half_width": (float, 8.0),
        "h_factor": (float, 0.1),
        "t_end": (float, 1.0),
        "samples": (int, 10),
    },
    "ddd": {
        "positions": (_floats, [-1.0, 1.0]),
        "sigma": (str, "zero"),
        "interaction": (str, "singular"),
        "delta": (_opt_float, None),
        "box": (_opt_float, None),
        "l": (float, 0.0),
        "gamma": (_opt_float, None),
        "t_end": (float, 10.0),
        "samples": (int, 100),
        "tolerance": (float, 1e-10),
        "separation_C": (_opt_float, None),
    },
    "cell": {
        "rho_list": (_floats, [1.0]),
        "l_list": (_floats, [-3.0, -2.5, -2.0, -1.75, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 1.75, 2.0, 2.5, 3.0]),
        "sigma": (str, "sine:0.8"),
        "delta": (_opt_float, None),
        "tolerance": (float, 1e-8),
        "robustness": (_bool, True),
        "robust_n": (int, 4),
        "robust_m": (int, 1),
        "robust_l": (float, 7.0),
        "robust_sigma": (str, "sine:3"),
        "robust_deltas": (_floats, [0.1, 0.05, 0.025]),
    },
    "dd": {
        "sigma": (str, "sine:0.2"),
        "rho_bar": (float, 1.0),
        "amplitude": (float, 0.5),
        "eps_list": (_floats, [0.1, 0.05, 0.025]),
        "t_end": (float, 0.3),
        "samples": (int, 4),
        "macro_nodes": (int, 128),
        "window": (_floats, [0.25, 0.75]),
        "rho_grid": (_floats, [0.5, 0.75, 1.0, 1.25, 1.5]),
        "l_grid": (_floats, [-1.0 + 0.125 * k for k in range(17)]),
        "delta": (_opt_float, None),
        "tolerance": (float, 1e-7),
    },
}


@dataclass
class RunConfig:
    values: dict[str, dict[str, object]]
    text: str = ""
    source: str = "<defaults>"
    explicit: set = field(default_factory=set)

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    def echo(self) -> str:
        """Resolved configuration, one ``key = value`` per line."""
        lines = []
        for sec, kv in self.values.items():
            lines.append(f"[{sec}]")
            for k, v in kv.items():
                if isinstance(v, list):
                    v = ", ".join(f"{x:g}" for x in v)
                lines.append(f"{k} = {v}")
            lines.append("")
        return "\n".join(lines)


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^\[(.+)\]$", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None:
            k = re.split(r"[=:]", line, maxsplit=1)[0].strip()
            if k.lower() == key.lower():
                return i
    return None


def _where(source: str, line: int | None) -> str:
    return f"{source}:{line}" if line else source


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(
        inline_comment_prefixes=("#",),
        comment_prefixes=("#",),
        interpolation=None,
        strict=True,
        empty_lines_in_values=False,
    )
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{_where(source, exc.lineno)}: key outside any [section]") from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(f"{_where(source, exc.lineno)}: {exc.message if hasattr(exc, 'message') else exc}") from None
    except configparser.ParsingError as exc:
        ln = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"{_where(source, ln)}: cannot parse line: {exc.errors[0][1].strip(chr(39)).replace(chr(92) + 'n', '') if exc.errors else ''}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    values: dict[str, dict[str, object]] = {}
    explicit = set()
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{_where(source, _line_of(text, sec, None))}: unknown section [{sec}]")
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{_where(source, _line_of(text, sec, key))}: unknown key '{key}' in [{sec}]")
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (conv, default) in keys.items():
            if cp.has_option(sec, key):
                raw = cp.get(sec, key)
                try:
                    values[sec][key] = conv(raw)
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"{_where(source, _line_of(text, sec, key))}: bad value for {sec}.{key}: {exc}") from None
                explicit.add((sec, key))
            elif default is REQUIRED:
                values[sec][key] = REQUIRED
            else:
                values[sec][key] = list(default) if isinstance(default, list) else default
    return RunConfig(values, text, source, explicit)


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p))


def require(cfg: RunConfig, section: str, key: str):
    v = cfg[section][key]
    if v is REQUIRED:
        raise ConfigError(f"{cfg.source}: missing required key '{key}' in [{section}]")
    return v
