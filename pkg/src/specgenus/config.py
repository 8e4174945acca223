"""Run configuration documents and persistent user defaults.

A run configuration is one JSON (or YAML) document.  Keys stored under
``defaults`` in the user configuration file are merged underneath it, so a
run document only has to name what differs from the user's usual setup.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import math
import os
from collections.abc import Mapping, MutableMapping
from typing import Optional, Tuple

from appdirs import user_config_dir
from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

from .errors import ConfigError
from .surface import FAMILIES

logger = logging.getLogger(__name__)

APP_NAME = "specgenus"
AUTO = "auto"


class ConfigManager(MutableMapping):
    """User-level YAML settings in the platform config directory."""

    def __init__(self, config_dir=None):
        self._config_dir = config_dir
        self._config_path = None
        self._config = None
        self._yaml = None

    @property
    def yaml(self):
        if self._yaml is None:
            self._yaml = YAML()
            self._yaml.preserve_quotes = True
            self._yaml.explicit_start = True
            self._yaml.indent(mapping=2, sequence=4, offset=2)
        return self._yaml

    @property
    def config_dir(self):
        if not self._config_dir:
            self._config_dir = user_config_dir(APP_NAME)
        return self._config_dir

    @property
    def config_path(self):
        if not self._config_path:
            self._config_path = os.path.join(self.config_dir, "config.yaml")
        return self._config_path

    @property
    def config(self):
        if self._config is None:
            self._load_config()
        return self._config

    @property
    def defaults(self):
        """Plain-dict copy of the ``defaults`` section."""
        return _plain(self.config.get("defaults", {}))

    def _load_config(self):
        if os.path.exists(self.config_path):
            with open(self.config_path, encoding="utf-8") as file:
                try:
                    self._config = self.yaml.load(file) or {}
                except YAMLError as error:
                    raise ConfigError("user_config", f"cannot parse {self.config_path}: {error}") from error
        else:
            self._config = {}

    def _save_config(self):
        if not os.path.exists(self.config_dir):
            os.makedirs(self.config_dir, exist_ok=True)
        with open(self.config_path, "w", encoding="utf-8") as file:
            self.yaml.dump(self.config, file)
        logger.debug("Saved user configuration to %s", self.config_path)

    def setdefault(self, key, default=None):
        if key not in self.config:
            self.config[key] = default
        return self.config[key]

    def __getitem__(self, key):
        return self.config[key]

    def __setitem__(self, key, value):
        self.config[key] = value
        self._save_config()

    def __delitem__(self, key):
        del self.config[key]
        self._save_config()

    def __iter__(self):
        return iter(self.config)

    def __len__(self):
        return len(self.config)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None:
            self._save_config()


def parse_scalar(text):
    """Interpret a command-line value the way YAML would (numbers, booleans, null)."""
    try:
        value = YAML(typ="safe").load(text)
    except YAMLError:
        return text
    return text if value is None and text.strip() not in ("null", "~") else value


def _plain(value):
    if isinstance(value, Mapping):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def deep_merge(base, override):
    """``override`` on top of ``base``; nested mappings merge, everything else replaces."""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclasses.dataclass(frozen=True)
class SurfaceConfig:
    family: Optional[str] = None
    params: dict = dataclasses.field(default_factory=dict)
    resolution: Optional[int] = None
    mesh: Optional[str] = None
    format: Optional[str] = None
    conformal_factor: Optional[dict] = None
    rotation: Optional[Tuple[Tuple[float, ...], ...]] = None


@dataclasses.dataclass(frozen=True)
class HeightConfig:
    direction: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    margin: float = 0.1


@dataclasses.dataclass(frozen=True)
class EnergyConfig:
    """Energy grid; ``lower``/``upper``/``step`` left as None are filled from the oracle."""

    lower: Optional[float] = None
    upper: Optional[float] = None
    step: Optional[float] = None
    refine_tolerance: float = 1e-3
    min_separation: Optional[float] = None

    @property
    def auto(self):
        return self.lower is None or self.upper is None or self.step is None


@dataclasses.dataclass(frozen=True)
class TraceConfig:
    T: Optional[float] = None
    t0_start: float = 0.15
    t0_stop: float = 0.75
    t0_count: int = 12
    delta: Optional[float] = None
    t0_fraction: float = 0.6
    delta_fraction: float = 0.35
    cutoff: str = "erfc"
    sharpness: float = 8.0


@dataclasses.dataclass(frozen=True)
class ClassifierConfig:
    regular: float = 1.5
    point: float = 0.25
    circle: Tuple[float, float] = (-0.75, -0.25)
    unclassified: float = -0.9
    relative_floor: float = 5e-3
    ambiguity_gap: float = 0.10
    max_log_residual: float = 0.25


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    dense_crossover: int = 3000
    lanczos_max_iter: Optional[int] = None
    lanczos_block: int = 40
    workers: int = 1


@dataclasses.dataclass(frozen=True)
class RunConfig:
    surface: SurfaceConfig
    h_list: Tuple[float, ...]
    height: HeightConfig = HeightConfig()
    energy: EnergyConfig = EnergyConfig()
    trace: TraceConfig = TraceConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    solver: SolverConfig = SolverConfig()
    output: str = "out"
    seed: int = 0

    def as_dict(self):
        return dataclasses.asdict(self)

    @property
    def digest(self):
        """sha256 of the canonical JSON form without the output directory."""
        document = self.as_dict()
        del document["output"]
        canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _section(document, name, prefix=""):
    value = document.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        raise ConfigError(f"{prefix}{name}", "must be a mapping")
    return value


def _unknown(section, allowed, prefix):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{prefix}.{key}" if prefix else str(key), "unknown key")


def _number(value, field, positive=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool):
        raise ConfigError(field, f"expected a number, got {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected a number, got {value!r}") from None
    if not math.isfinite(number):
        raise ConfigError(field, "must be finite")
    if positive and not number > 0.0:
        raise ConfigError(field, f"must be positive, got {number}")
    return number


def _integer(value, field, minimum=None, allow_none=False):
    if value is None and allow_none:
        return None
    number = _number(value, field) if not isinstance(value, bool) else None
    if number is None or not number.is_integer():
        raise ConfigError(field, f"expected an integer, got {value!r}")
    number = int(number)
    if minimum is not None and number < minimum:
        raise ConfigError(field, f"must be at least {minimum}, got {number}")
    return number


def _auto_or_number(value, field, positive=True):
    if value is None or value == AUTO:
        return None
    return _number(value, field, positive=positive)


def _vector(value, field, length):
    if not isinstance(value, (list, tuple)) or len(value) != length:
        raise ConfigError(field, f"expected a list of {length} numbers")
    return tuple(_number(item, f"{field}[{index}]") for index, item in enumerate(value))


def _parse_surface(section, base_dir):
    _unknown(section, {"builtin", "mesh", "format", "resolution", "conformal_factor", "rotation"}, "surface")
    if ("builtin" in section) == ("mesh" in section):
        raise ConfigError("surface", "give exactly one of 'builtin' or 'mesh'")
    resolution = _integer(section.get("resolution"), "surface.resolution", minimum=1, allow_none=True)

    family, params, mesh = None, {}, None
    if "builtin" in section:
        builtin = section["builtin"]
        if isinstance(builtin, str):
            builtin = {"family": builtin}
        if not isinstance(builtin, Mapping) or "family" not in builtin:
            raise ConfigError("surface.builtin", "expected a family name or a mapping with 'family'")
        family = builtin["family"]
        if family not in FAMILIES:
            raise ConfigError("surface.builtin.family", f"unknown family {family!r}, expected one of {FAMILIES}")
        params = {str(key): value for key, value in builtin.items() if key != "family"}
    else:
        mesh = str(section["mesh"])
        if not os.path.isabs(mesh):
            mesh = os.path.normpath(os.path.join(base_dir, mesh))
        if not os.path.exists(mesh):
            raise ConfigError("surface.mesh", f"file {mesh} does not exist")

    fmt = section.get("format")
    if fmt is not None and str(fmt).lower() not in ("off", "obj"):
        raise ConfigError("surface.format", f"expected 'off' or 'obj', got {fmt!r}")

    conformal = section.get("conformal_factor")
    if conformal is not None:
        if not isinstance(conformal, Mapping) or conformal.get("kind") not in ("constant", "linear_z"):
            raise ConfigError("surface.conformal_factor.kind", "expected 'constant' or 'linear_z'")
        conformal = dict(conformal)
        if conformal["kind"] == "constant":
            conformal["value"] = _number(conformal.get("value", 1.0), "surface.conformal_factor.value", positive=True)
        else:
            conformal["a"] = _number(conformal.get("a", 1.0), "surface.conformal_factor.a")
            conformal["b"] = _number(conformal.get("b", 0.0), "surface.conformal_factor.b")

    rotation = section.get("rotation")
    if rotation is not None:
        if not isinstance(rotation, (list, tuple)) or len(rotation) != 3:
            raise ConfigError("surface.rotation", "expected a 3x3 matrix")
        rotation = tuple(_vector(row, f"surface.rotation[{index}]", 3) for index, row in enumerate(rotation))

    return SurfaceConfig(
        family=family,
        params=params,
        resolution=resolution,
        mesh=mesh,
        format=None if fmt is None else str(fmt).lower(),
        conformal_factor=conformal,
        rotation=rotation,
    )


def _parse_height(section):
    _unknown(section, {"direction", "margin"}, "height")
    direction = _vector(section.get("direction", [0.0, 0.0, 1.0]), "height.direction", 3)
    if math.sqrt(sum(value * value for value in direction)) < 1e-14:
        raise ConfigError("height.direction", "must be a nonzero vector")
    margin = _number(section.get("margin", 0.1), "height.margin", positive=True)
    return HeightConfig(direction, margin)


def _parse_h_list(value):
    if not isinstance(value, (list, tuple)) or len(value) < 3:
        raise ConfigError("h_list", "expected a list of at least 3 values")
    h_list = tuple(_number(h, f"h_list[{index}]", positive=True) for index, h in enumerate(value))
    if any(later >= earlier for earlier, later in zip(h_list, h_list[1:])):
        raise ConfigError("h_list", "values must be strictly descending")
    if h_list[0] / h_list[-1] < 2.0 * (1.0 - 1e-12):
        raise ConfigError("h_list", "values must span at least a factor 2")
    return h_list


def _parse_energy(value):
    if value is None or value == AUTO:
        return EnergyConfig()
    if not isinstance(value, Mapping):
        raise ConfigError("energy", "expected 'auto' or a mapping")
    _unknown(value, {"lower", "upper", "step", "refine_tolerance", "min_separation"}, "energy")
    lower = _number(value.get("lower"), "energy.lower", allow_none=True)
    upper = _number(value.get("upper"), "energy.upper", allow_none=True)
    step = _number(value.get("step"), "energy.step", positive=True, allow_none=True)
    if lower is not None and upper is not None and not lower < upper:
        raise ConfigError("energy.upper", "must be greater than energy.lower")
    refine = _number(value.get("refine_tolerance", 1e-3), "energy.refine_tolerance", positive=True)
    if refine >= 0.1:
        raise ConfigError("energy.refine_tolerance", "must be below 0.1")
    separation = _number(value.get("min_separation"), "energy.min_separation", positive=True, allow_none=True)
    return EnergyConfig(lower, upper, step, refine, separation)


def _parse_trace(section):
    _unknown(section, {"T", "t0_grid", "delta", "detection", "cutoff"}, "trace")
    T = _auto_or_number(section.get("T"), "trace.T")
    grid = section.get("t0_grid") or {}
    if not isinstance(grid, Mapping):
        raise ConfigError("trace.t0_grid", "expected a mapping with start, stop and count")
    start = _number(grid.get("start", 0.15), "trace.t0_grid.start", positive=True)
    stop = _number(grid.get("stop", 0.75), "trace.t0_grid.stop", positive=True)
    count = _integer(grid.get("count", 12), "trace.t0_grid.count", minimum=8)
    if not start < stop < 1.0:
        raise ConfigError("trace.t0_grid", "need 0 < start < stop < 1 (fractions of T)")
    delta = _auto_or_number(section.get("delta"), "trace.delta")

    detection = _section(section, "detection", "trace.")
    t0_fraction = _number(detection.get("t0_fraction", 0.6), "trace.detection.t0_fraction", positive=True)
    delta_fraction = _number(detection.get("delta_fraction", 0.35), "trace.detection.delta_fraction", positive=True)
    if not delta_fraction < t0_fraction <= 1.0 - delta_fraction:
        raise ConfigError("trace.detection", "need delta_fraction < t0_fraction <= 1 - delta_fraction")

    cutoff = _section(section, "cutoff", "trace.")
    kind = cutoff.get("kind", "erfc")
    if kind not in ("erfc", "sharp"):
        raise ConfigError("trace.cutoff.kind", f"expected 'erfc' or 'sharp', got {kind!r}")
    sharpness = _number(cutoff.get("sharpness", 8.0), "trace.cutoff.sharpness", positive=True)
    return TraceConfig(T, start, stop, count, delta, t0_fraction, delta_fraction, kind, sharpness)


def _parse_classifier(section):
    defaults = ClassifierConfig()
    _unknown(section, {field.name for field in dataclasses.fields(ClassifierConfig)}, "classifier")
    values = {}
    for field in dataclasses.fields(ClassifierConfig):
        raw = section.get(field.name, getattr(defaults, field.name))
        name = f"classifier.{field.name}"
        values[field.name] = _vector(raw, name, 2) if field.name == "circle" else _number(raw, name)
    if values["regular"] <= values["point"]:
        raise ConfigError("classifier.regular", "must exceed classifier.point")
    low, high = values["circle"]
    if not values["unclassified"] < low < high <= -values["point"]:
        raise ConfigError("classifier.circle", "need unclassified < circle[0] < circle[1] <= -point")
    for name in ("relative_floor", "ambiguity_gap", "max_log_residual"):
        if not 0.0 < values[name] < 1.0:
            raise ConfigError(f"classifier.{name}", "must lie in (0, 1)")
    return ClassifierConfig(**values)


def _parse_solver(section):
    _unknown(section, {"dense_crossover", "lanczos_max_iter", "lanczos_block", "workers"}, "solver")
    return SolverConfig(
        dense_crossover=_integer(section.get("dense_crossover", 3000), "solver.dense_crossover", minimum=1),
        lanczos_max_iter=_integer(
            section.get("lanczos_max_iter"), "solver.lanczos_max_iter", minimum=1, allow_none=True
        ),
        lanczos_block=_integer(section.get("lanczos_block", 40), "solver.lanczos_block", minimum=2),
        workers=_integer(section.get("workers", 1), "solver.workers", minimum=1),
    )


def parse_config(document, base_dir="."):
    """Validate a configuration mapping into a RunConfig."""
    if not isinstance(document, Mapping):
        raise ConfigError("config", "the configuration must be a mapping")
    _unknown(
        document,
        {"surface", "height", "h_list", "energy", "trace", "classifier", "solver", "output", "seed"},
        "",
    )
    if "surface" not in document:
        raise ConfigError("surface", "missing")
    if "h_list" not in document:
        raise ConfigError("h_list", "missing")
    output = document.get("output", "out")
    if isinstance(output, Mapping):
        output = output.get("directory", "out")
    return RunConfig(
        surface=_parse_surface(_section(document, "surface"), base_dir),
        h_list=_parse_h_list(document["h_list"]),
        height=_parse_height(_section(document, "height")),
        energy=_parse_energy(document.get("energy")),
        trace=_parse_trace(_section(document, "trace")),
        classifier=_parse_classifier(_section(document, "classifier")),
        solver=_parse_solver(_section(document, "solver")),
        output=str(output),
        seed=_integer(document.get("seed", 0), "seed", minimum=0),
    )


def read_document(path):
    if not os.path.exists(path):
        raise ConfigError("config", f"file {path} does not exist")
    with open(path, encoding="utf-8") as file:
        try:
            document = YAML(typ="safe").load(file)
        except YAMLError as error:
            raise ConfigError("config", f"cannot parse {path}: {error}") from error
    return document or {}


def load_config(path, output=None, seed=None, user_defaults=None):
    """Read, merge with user defaults and validate a run configuration file."""
    document = read_document(path)
    if not isinstance(document, Mapping):
        raise ConfigError("config", "the configuration must be a mapping")
    if user_defaults is None:
        user_defaults = ConfigManager().defaults
    if user_defaults:
        logger.debug("Merging user defaults for %s", ", ".join(sorted(user_defaults)))
        document = deep_merge(user_defaults, document)
    config = parse_config(document, base_dir=os.path.dirname(os.path.abspath(path)))
    if output is not None:
        config = dataclasses.replace(config, output=str(output))
    if seed is not None:
        config = dataclasses.replace(config, seed=int(seed))
    return config
