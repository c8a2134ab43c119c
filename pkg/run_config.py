"""
RUN CONFIGURATION
Flat key = value run files: lattices, the map class, the initial perturbation and
the integration settings. Blank lines and # comments are ignored; mode repeats.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from field import MapField
from flow import FlowConfig
from initial_maps import ModeSpec, build_map, get_preset, random_modes
from kinematics import FLOW_PAPER, normalize_flow_kind
from lattice import Lattice, TorusPair, check_homomorphism

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 64
DEFAULT_OUTPUT_DIR = "runs"

REPEATABLE_KEYS = {"mode"}
KNOWN_KEYS = {
    "domain_basis", "target_basis", "linear_part", "preset", "mode", "random_modes",
    "resolution", "cfl_safety", "t_end", "stepper", "snapshot_stride", "diagnostics_stride",
    "flow_kind", "q_tol_factor", "dt", "max_steps", "seed", "output_dir",
    "allow_nondiffeomorphic", "c_slack",
}

TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    """Invalid run configuration"""
    pass


def parse_text(text: str) -> Dict[str, List[str]]:
    """Raw values per key, in file order"""
    entries: Dict[str, List[str]] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {number}: unknown key '{key}'")
        if key in entries and key not in REPEATABLE_KEYS:
            raise ConfigError(f"line {number}: duplicate key '{key}'")
        entries.setdefault(key, []).append(value)
    return entries


def _numbers(key: str, value: str, count: int) -> List[float]:
    parts = value.replace(",", " ").split()
    if len(parts) != count:
        raise ConfigError(f"{key}: expected {count} numbers, got '{value}'")
    try:
        return [float(x) for x in parts]
    except ValueError:
        raise ConfigError(f"{key}: not a number in '{value}'")


def _number(key: str, value: str) -> float:
    return _numbers(key, value, 1)[0]


def _integer(key: str, value: str) -> int:
    number = _number(key, value)
    if number != int(number):
        raise ConfigError(f"{key}: expected an integer, got '{value}'")
    return int(number)


def _boolean(key: str, value: str) -> bool:
    word = value.strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ConfigError(f"{key}: expected true/false, got '{value}'")


class RunConfig:
    """Everything needed to build the initial map and the FlowConfig of one run"""
    def __init__(self):
        self.domain_basis = np.eye(2)
        self.target_basis = np.eye(2)
        self.integer_class = np.eye(2)
        self.preset: Optional[str] = None
        self.modes: List[ModeSpec] = []
        self.random_modes = 0
        self.resolution = (DEFAULT_RESOLUTION, DEFAULT_RESOLUTION)
        self.cfl_safety = 0.5
        self.t_end = 1.0
        self.stepper = "rk2"
        self.snapshot_stride = 0
        self.diagnostics_stride = 10
        self.flow_kind = FLOW_PAPER
        self.q_tol_factor = 1e-12
        self.dt: Optional[float] = None
        self.max_steps: Optional[int] = None
        self.seed = 0
        self.output_dir = DEFAULT_OUTPUT_DIR
        self.allow_nondiffeomorphic = False
        self.c_slack: Optional[float] = None

    # ---- loading ----

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}")
        return cls.from_text(text)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        entries = parse_text(text)
        config = cls()

        # Preset first, so explicit keys override it
        if "preset" in entries:
            config.use_preset(entries["preset"][0])

        def single(key):
            return entries[key][0]

        if "domain_basis" in entries:
            config.domain_basis = np.array(_numbers("domain_basis", single("domain_basis"), 4)).reshape(2, 2, order="F")
        if "target_basis" in entries:
            config.target_basis = np.array(_numbers("target_basis", single("target_basis"), 4)).reshape(2, 2, order="F")
        if "linear_part" in entries:
            values = _numbers("linear_part", single("linear_part"), 4)
            if any(x != int(x) for x in values):
                raise ConfigError(f"linear_part: entries must be integers, got '{single('linear_part')}'")
            config.integer_class = np.array(values).reshape(2, 2, order="F")
        if "mode" in entries:
            try:
                config.modes = [ModeSpec.parse(value) for value in entries["mode"]]
            except ValueError as e:
                raise ConfigError(f"mode: {e}")
        if "random_modes" in entries:
            config.random_modes = _integer("random_modes", single("random_modes"))
        if "resolution" in entries:
            parts = single("resolution").replace(",", " ").split()
            if len(parts) not in (1, 2):
                raise ConfigError(f"resolution: expected 'n' or 'n1 n2', got '{single('resolution')}'")
            sizes = [_integer("resolution", part) for part in parts]
            config.resolution = (sizes[0], sizes[-1])

        for key in ("cfl_safety", "t_end", "q_tol_factor"):
            if key in entries:
                setattr(config, key, _number(key, single(key)))
        for key in ("snapshot_stride", "diagnostics_stride", "seed"):
            if key in entries:
                setattr(config, key, _integer(key, single(key)))
        if "dt" in entries:
            config.dt = _number("dt", single("dt"))
        if "max_steps" in entries:
            config.max_steps = _integer("max_steps", single("max_steps"))
        if "c_slack" in entries:
            config.c_slack = _number("c_slack", single("c_slack"))
        if "stepper" in entries:
            config.stepper = single("stepper").lower()
        if "flow_kind" in entries:
            config.set_flow_kind(single("flow_kind"))
        if "output_dir" in entries:
            config.output_dir = single("output_dir")
        if "allow_nondiffeomorphic" in entries:
            config.allow_nondiffeomorphic = _boolean("allow_nondiffeomorphic", single("allow_nondiffeomorphic"))

        config.validate()
        return config

    def use_preset(self, name: str):
        try:
            preset = get_preset(name.strip())
        except KeyError as e:
            raise ConfigError(str(e.args[0]))
        self.preset = preset.name
        self.domain_basis = preset.domain_basis.copy()
        self.target_basis = preset.target_basis.copy()
        self.integer_class = preset.integer_class.copy()
        self.modes = list(preset.modes)

    def set_flow_kind(self, name: str):
        try:
            self.flow_kind = normalize_flow_kind(name)
        except ValueError as e:
            raise ConfigError(str(e))

    def apply_overrides(self, flow: Optional[str] = None, preset: Optional[str] = None,
                        out: Optional[str] = None, seed: Optional[int] = None):
        """Command-line flags win over file values"""
        if preset is not None:
            self.use_preset(preset)
        if flow is not None:
            self.set_flow_kind(flow)
        if out is not None:
            self.output_dir = out
        if seed is not None:
            self.seed = int(seed)
        self.validate()

    def validate(self):
        try:
            self.domain_lattice()
            self.target_lattice()
        except ValueError as e:
            raise ConfigError(str(e))
        if abs(np.linalg.det(self.integer_class)) < 0.5:
            raise ConfigError("linear_part is singular; no diffeomorphism lies in this class")
        if min(self.resolution) < 4:
            raise ConfigError(f"resolution must be at least 4, got {self.resolution}")
        if self.random_modes < 0:
            raise ConfigError("random_modes must be non-negative")
        if self.c_slack is not None and self.c_slack < 0:
            raise ConfigError("c_slack must be non-negative")
        try:
            self.flow_config()
        except ValueError as e:
            raise ConfigError(str(e))

    # ---- building ----

    def domain_lattice(self) -> Lattice:
        return Lattice(self.domain_basis)

    def target_lattice(self) -> Lattice:
        return Lattice(self.target_basis)

    def torus_pair(self) -> TorusPair:
        pair = TorusPair.from_integer_class(self.domain_lattice(), self.target_lattice(), self.integer_class)
        ok, _ = check_homomorphism(pair)
        if not ok:
            raise ConfigError("linear part is not a lattice homomorphism")
        return pair

    def all_modes(self) -> List[ModeSpec]:
        modes = list(self.modes)
        if self.random_modes:
            modes += random_modes(np.random.default_rng(self.seed), self.random_modes)
        return modes

    def initial_field(self) -> MapField:
        n1, n2 = self.resolution
        return build_map(self.torus_pair(), self.all_modes(), n1, n2)

    def flow_config(self) -> FlowConfig:
        return FlowConfig(
            flow_kind=self.flow_kind,
            cfl_safety=self.cfl_safety,
            t_end=self.t_end,
            stepper=self.stepper,
            snapshot_stride=self.snapshot_stride,
            diagnostics_stride=self.diagnostics_stride,
            q_tol_factor=self.q_tol_factor,
            dt=self.dt,
            max_steps=self.max_steps,
        )

    def with_resolution(self, n1: int, n2: Optional[int] = None) -> "RunConfig":
        """Copy with a different grid (studies)"""
        copy = RunConfig.from_dict(self.to_dict())
        copy.resolution = (int(n1), int(n1 if n2 is None else n2))
        copy.validate()
        return copy

    def to_dict(self):
        return {
            'domain_basis': [float(x) for x in self.domain_basis.reshape(-1, order="F")],
            'target_basis': [float(x) for x in self.target_basis.reshape(-1, order="F")],
            'linear_part': [int(x) for x in self.integer_class.reshape(-1, order="F")],
            'preset': self.preset,
            'modes': [mode.to_dict() for mode in self.modes],
            'random_modes': self.random_modes,
            'resolution': list(self.resolution),
            'cfl_safety': self.cfl_safety,
            't_end': self.t_end,
            'stepper': self.stepper,
            'snapshot_stride': self.snapshot_stride,
            'diagnostics_stride': self.diagnostics_stride,
            'flow_kind': self.flow_kind,
            'q_tol_factor': self.q_tol_factor,
            'dt': self.dt,
            'max_steps': self.max_steps,
            'seed': self.seed,
            'output_dir': self.output_dir,
            'allow_nondiffeomorphic': self.allow_nondiffeomorphic,
            'c_slack': self.c_slack,
        }

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        config = cls()
        config.domain_basis = np.array(data['domain_basis'], dtype=float).reshape(2, 2, order="F")
        config.target_basis = np.array(data['target_basis'], dtype=float).reshape(2, 2, order="F")
        config.integer_class = np.array(data['linear_part'], dtype=float).reshape(2, 2, order="F")
        config.preset = data.get('preset')
        config.modes = [ModeSpec.from_dict(mode) for mode in data.get('modes', [])]
        for key in ("random_modes", "cfl_safety", "t_end", "stepper", "snapshot_stride",
                    "diagnostics_stride", "flow_kind", "q_tol_factor", "dt", "max_steps",
                    "seed", "output_dir", "allow_nondiffeomorphic", "c_slack"):
            if key in data:
                setattr(config, key, data[key])
        config.resolution = tuple(data.get('resolution', config.resolution))
        return config
