"""Experiment configuration: INI-style ``key = value`` files with sections."""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path

OBSERVABLE_RE = re.compile(r"^(loschmidt_echo|sigma_z_site\((\d+)\))$")
ANALYSES = ("two_mode", "gaussian")
PROBES = ("weight", "fidelity", "matrix_element", "matrix_element_extensive")
METHODS = ("auto", "dense", "lanczos")

# (section, key) for every field, in file order
LAYOUT = {
    "L": ("model", "L"),
    "kappa": ("model", "kappa"),
    "h": ("model", "h"),
    "dh": ("quench", "dh"),
    "sum_rule_accuracy": ("quench", "sum_rule_accuracy"),
    "method": ("quench", "method"),
    "observables": ("observables", "names"),
    "horizon": ("sampling", "horizon"),
    "samples": ("sampling", "samples"),
    "bins": ("sampling", "bins"),
    "hist_range": ("sampling", "range"),
    "analysis": ("analysis", "methods"),
    "scaling_probes": ("scaling", "probes"),
    "scaling_sizes": ("scaling", "sizes"),
    "scaling_regime": ("scaling", "regime"),
    "max_krylov": ("lanczos", "max_krylov"),
    "residual_tol": ("lanczos", "residual_tol"),
    "seed": ("run", "seed"),
    "output_dir": ("run", "output_dir"),
}


class ConfigError(ValueError):
    def __init__(self, message, field=None, line=None, source=None):
        where = ""
        if field:
            where += f"[{field}] "
        if source or line:
            where += f"({source or '<config>'}{f', line {line}' if line else ''}) "
        super().__init__(f"{where}{message}")
        self.field = field
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    L: int | None = None
    kappa: float = 0.0
    h: float = 1.0
    dh: float = 0.0
    sum_rule_accuracy: float = 1e-4
    method: str = "auto"
    observables: tuple[str, ...] = ("loschmidt_echo",)
    horizon: float = 16000.0
    samples: int = 40000
    bins: int = 101
    hist_range: tuple[float, float] | None = None
    analysis: tuple[str, ...] = ()
    scaling_probes: tuple[str, ...] = ()
    scaling_sizes: tuple[int, ...] = (8, 10, 12, 14, 16)
    scaling_regime: str = "critical"
    max_krylov: int = 400
    residual_tol: float = 1e-10
    seed: int = 0
    output_dir: str = "results"

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig(**{**asdict(self), **changes})

    def to_ini(self) -> str:
        """Canonical text form; ``parse_config(cfg.to_ini()) == cfg``."""
        sections: dict[str, list[str]] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            section, key = LAYOUT[f.name]
            if isinstance(value, tuple):
                text = ", ".join(_fmt(v) for v in value)
            else:
                text = _fmt(value)
            sections.setdefault(section, []).append(f"{key} = {text}")
        out = []
        for section, lines in sections.items():
            out.append(f"[{section}]")
            out.extend(lines)
            out.append("")
        return "\n".join(out)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    lines = {}
    section = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            lines[(section, "")] = number
        elif "=" in line and section and not line.startswith((";", "#")):
            lines[(section, line.split("=", 1)[0].strip().lower())] = number
    return lines


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    """Parse and validate a configuration; raises :class:`ConfigError` naming field and line."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as err:
        raise ConfigError(str(err).splitlines()[0], source=source, line=getattr(err, "lineno", None)) from err
    lines = _line_numbers(text)
    known = {}
    for name, (section, key) in LAYOUT.items():
        known.setdefault(section, {})[key.lower()] = name
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]", field=section, line=lines.get((section, "")), source=source)
        for key in parser[section]:
            if key not in known[section]:
                raise ConfigError(
                    f"unknown key {key!r}", field=f"{section}.{key}", line=lines.get((section, key)), source=source
                )

    values = {}
    defaults = ExperimentConfig()

    def get(name, convert):
        section, key = LAYOUT[name]
        if not parser.has_option(section, key):
            return getattr(defaults, name)
        raw = parser.get(section, key).strip()
        try:
            return convert(raw)
        except (ValueError, TypeError) as err:
            raise ConfigError(
                f"invalid value {raw!r}: {err}", field=f"{section}.{key}", line=lines.get((section, key.lower())), source=source
            ) from None

    def fail(name, message):
        section, key = LAYOUT[name]
        raise ConfigError(message, field=f"{section}.{key}", line=lines.get((section, key.lower())), source=source)

    def finite(raw):
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v

    def listing(raw):
        return tuple(item.strip() for item in raw.split(",") if item.strip())

    values["L"] = get("L", int)
    values["kappa"] = get("kappa", finite)
    values["h"] = get("h", finite)
    values["dh"] = get("dh", finite)
    values["sum_rule_accuracy"] = get("sum_rule_accuracy", finite)
    values["method"] = get("method", str)
    values["observables"] = get("observables", listing)
    values["horizon"] = get("horizon", finite)
    values["samples"] = get("samples", int)
    values["bins"] = get("bins", int)
    values["hist_range"] = get("hist_range", lambda raw: tuple(finite(x) for x in listing(raw)))
    values["analysis"] = get("analysis", listing)
    values["scaling_probes"] = get("scaling_probes", listing)
    values["scaling_sizes"] = get("scaling_sizes", lambda raw: tuple(int(x) for x in listing(raw)))
    values["scaling_regime"] = get("scaling_regime", str)
    values["max_krylov"] = get("max_krylov", int)
    values["residual_tol"] = get("residual_tol", finite)
    values["seed"] = get("seed", int)
    values["output_dir"] = get("output_dir", str)

    if values["L"] is not None and values["L"] < 3:
        fail("L", "L must be >= 3")
    if not 0 < values["sum_rule_accuracy"] < 0.1:
        fail("sum_rule_accuracy", "must lie in (0, 0.1)")
    if values["method"] not in METHODS:
        fail("method", f"must be one of {METHODS}")
    for name in values["observables"]:
        match = OBSERVABLE_RE.match(name)
        if not match:
            fail("observables", f"unknown observable {name!r}")
        if match.group(2) is not None and values["L"] is not None and int(match.group(2)) >= values["L"]:
            fail("observables", f"site in {name!r} outside chain of length {values['L']}")
    if values["horizon"] <= 0:
        fail("horizon", "must be positive")
    if values["samples"] < 100:
        fail("samples", "must be >= 100")
    if values["bins"] < 3:
        fail("bins", "must be >= 3")
    if values["hist_range"] is not None and (len(values["hist_range"]) != 2 or values["hist_range"][0] >= values["hist_range"][1]):
        fail("hist_range", "must be 'lo, hi' with lo < hi")
    for name in values["analysis"]:
        if name not in ANALYSES:
            fail("analysis", f"unknown analysis {name!r}; choose from {ANALYSES}")
    for name in values["scaling_probes"]:
        if name not in PROBES:
            fail("scaling_probes", f"unknown probe {name!r}; choose from {PROBES}")
    if values["scaling_probes"]:
        if len(values["scaling_sizes"]) < 3 or min(values["scaling_sizes"]) < 3:
            fail("scaling_sizes", "need at least 3 sizes, each >= 3")
    if values["scaling_regime"] not in ("regular", "critical"):
        fail("scaling_regime", "must be 'regular' or 'critical'")
    if values["max_krylov"] < 2:
        fail("max_krylov", "must be >= 2")
    if values["residual_tol"] <= 0:
        fail("residual_tol", "must be positive")
    if not 0 <= values["seed"] < 2**64:
        fail("seed", "must be a 64-bit unsigned integer")
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))
