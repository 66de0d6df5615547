"""Flat ``key=value`` experiment configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored and a
key may appear only once.  Vector values are separated by ``;``.  Parsing
collects every problem before failing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .descent import OPTIMIZERS, StepSchedule
from .dual_geometry import SCALARS
from .efficiency import INIT_MODES
from .families import DEFAULT_PRODUCT, FAMILY_NAMES, ExponentialFamily, make_family

COMMANDS = ("equiv", "cross-equiv", "efficiency", "trajectory", "identities")
CLI_OPTIMIZERS = ("gd", "mirror", "natural", "retraction")
SCHEDULES = ("constant", "inv_t", "inv_sqrt_t")
_NEEDS_MU = ("equiv", "cross-equiv", "efficiency", "trajectory")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    family: str = "gaussian"
    dim: int = 1
    components: tuple[str, ...] | None = None
    mu: tuple[float, ...] | None = None
    optimizer: str = "natural"
    schedule: str = "inv_t"
    scale: float = 1.0
    T: int = 1000
    M: int = 2000
    seed: int = 0
    samples: int = 1000
    tolerance: float | None = None
    init: str | None = None
    init_value: tuple[float, ...] | None = None
    workers: int = 1
    per_replicate: bool = False
    out: str | None = None

    def build_family(self) -> ExponentialFamily:
        return make_family(self.family, self.dim, self.components)

    def step_schedule(self) -> StepSchedule:
        return StepSchedule(self.schedule, self.scale)

    def to_text(self) -> str:
        """Canonical form; parses back to an equal config."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, tuple):
                s = ";".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                s = repr(v)
            else:
                s = str(v)
            lines.append(f"{f.name}={s}")
        return "\n".join(lines) + "\n"


_INT_KEYS = {"dim": 1, "T": 1, "M": 1, "seed": 0, "samples": 1, "workers": 1}
_FLOAT_KEYS = {"scale", "tolerance"}
_VEC_KEYS = {"mu", "init_value"}
_KEYS = {f.name for f in fields(ExperimentConfig)}


def _parse_float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(s)
    return v


def _domain_str(lo: float, hi: float) -> str:
    def b(x):
        return "inf" if x == math.inf else "-inf" if x == -math.inf else f"{x:g}"
    return f"({b(lo)},{b(hi)})"


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document.

    Raises :class:`ConfigError` listing every problem, each tagged with its
    line number where one applies.
    """
    errors: list[str] = []
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"expected key=value, got {stripped!r} (line {lineno})")
            continue
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key not in _KEYS:
            errors.append(f"unknown key {key!r} (line {lineno})")
            continue
        if key in raw:
            errors.append(f"repeated key {key!r} (line {lineno}, first on line {raw[key][1]})")
            continue
        raw[key] = (value, lineno)

    values: dict = {}
    for key, (value, lineno) in raw.items():
        try:
            if key in _INT_KEYS:
                v = int(value)
                if v < _INT_KEYS[key]:
                    errors.append(f"{key} must be >= {_INT_KEYS[key]}, got {v} (line {lineno})")
                    continue
            elif key in _FLOAT_KEYS:
                v = _parse_float(value)
                if v <= 0:
                    errors.append(f"{key} must be positive, got {value} (line {lineno})")
                    continue
            elif key in _VEC_KEYS:
                v = tuple(_parse_float(x) for x in value.split(";"))
            elif key == "components":
                v = tuple(x.strip() for x in value.split(";"))
            elif key == "per_replicate":
                if value.lower() not in ("true", "false"):
                    raise ValueError(value)
                v = value.lower() == "true"
            else:
                v = value
        except ValueError:
            errors.append(f"malformed value for {key}: {value!r} (line {lineno})")
            continue
        values[key] = v

    def line_of(key):
        return f" (line {raw[key][1]})" if key in raw else ""

    enums = (("command", COMMANDS), ("family", FAMILY_NAMES), ("optimizer", CLI_OPTIMIZERS),
             ("schedule", SCHEDULES), ("init", INIT_MODES))
    for key, allowed in enums:
        if key in values and values[key] not in allowed:
            errors.append(f"unknown {key} {values[key]!r}{line_of(key)}")
            values.pop(key)
    if "components" in values:
        bad = [c for c in values["components"] if c not in SCALARS]
        if bad:
            errors.append(f"unknown component family {bad[0]!r}{line_of('components')}")
            values.pop("components")
        elif values.get("family", "gaussian") != "product":
            errors.append(f"components only applies to family=product{line_of('components')}")
    if "command" not in raw:
        errors.append("missing required key 'command'")

    family = values.get("family", "gaussian")
    if family in FAMILY_NAMES and ("family" in values or "family" not in raw):
        if family == "product":
            comps = values.get("components", DEFAULT_PRODUCT)
            fam = make_family("product", components=comps)
            if "dim" in values and values["dim"] != fam.dim:
                errors.append(f"dim={values['dim']} does not match {fam.dim} product "
                              f"components{line_of('dim')}")
        else:
            fam = make_family(family, values.get("dim", 1))
        dom = fam.pair.dual_domain
        for key in ("mu", "init_value"):
            if key not in values:
                continue
            vec = values[key]
            if len(vec) != fam.dim:
                errors.append(f"{key} has {len(vec)} value(s), family dimension is "
                              f"{fam.dim}{line_of(key)}")
                continue
            for i, x in enumerate(vec):
                lo, hi = float(dom.lower[i]), float(dom.upper[i])
                if not lo < x < hi:
                    name = key if fam.dim == 1 else f"{key}[{i}]"
                    errors.append(f"{name} outside open domain {_domain_str(lo, hi)}"
                                  f"{line_of(key)}")

    if values.get("command") in _NEEDS_MU and "mu" not in raw:
        errors.append(f"command {values['command']!r} requires key 'mu'")
    if values.get("init") == "fixed" and "init_value" not in raw:
        errors.append(f"init=fixed requires key 'init_value'{line_of('init')}")
    if values.get("command") == "efficiency" and values.get("T", 1000) < 2:
        errors.append(f"efficiency needs T >= 2{line_of('T')}")
    if values.get("command") == "efficiency" and values.get("M", 2000) < 2:
        errors.append(f"efficiency needs M >= 2{line_of('M')}")

    if errors:
        raise ConfigError(errors)
    if values.get("family") == "product" and "dim" not in values:
        values["dim"] = len(values.get("components", DEFAULT_PRODUCT))
    return ExperimentConfig(**values)


def mu_array(config: ExperimentConfig) -> np.ndarray:
    return np.array(config.mu, dtype=float)
