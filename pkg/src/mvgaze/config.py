"""Run configuration: versioned YAML with strict key checking.

Example::

    version: 1
    output_dir: results
    seed: 42
    scenarios:
      - name: sh
        scenario: SH
        layouts: [case0, case1]
        cameras: [1, 3, 5]
        noise_levels: [0.0, 0.1, 0.2, 0.4]
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .experiments import DEFAULT_DISPLACEMENTS, ScenarioSpec
from .eye_model import EyeParams
from .fusion import FusionMethod

CONFIG_VERSION = 1

_EYE_KEYS = {f.name for f in fields(EyeParams)} - {"eye_side"}


@dataclass(frozen=True)
class ScenarioConfig:
    """One scenario entry; ``layouts`` x ``cameras`` is swept."""

    name: str
    scenario: str = "SH"
    layouts: tuple = ("case1",)
    cameras: tuple = (3,)
    noise_levels: tuple = (0.0, 0.1, 0.2, 0.4)
    fusion: tuple = ("simple", "head_pose", "behavior", "best_camera")
    calibration_frames: int = 100
    test_frames: int = 100
    calibration_position: tuple = (0.0, 200.0, 600.0)
    displacements: tuple = DEFAULT_DISPLACEMENTS
    head_mode: str = "follow-target"
    eyes: tuple = ("L", "R")
    ipd: float = 62.0
    ridge: float = 1.0
    order: int = 1
    alpha_max: float = 45.0
    epsilon: float = 0.05
    weight_grid: tuple = (61, 41)
    camera_noise_scale: tuple | None = None
    test_points: str = "random"
    case0_spacing: float = 20.0
    standoff: float = 50.0


@dataclass(frozen=True)
class RunConfig:
    version: int = CONFIG_VERSION
    output_dir: str = "results"
    seed: int = 0
    jobs: int = 1
    eye: EyeParams = field(default_factory=EyeParams)
    scenarios: tuple = ()

    def scenario_specs(self, seed: int | None = None) -> list[tuple[ScenarioConfig, list[ScenarioSpec]]]:
        """Expand every scenario entry into one spec per (layout, camera count)."""
        seed = self.seed if seed is None else seed
        out = []
        for sc in self.scenarios:
            specs = []
            for layout in sc.layouts:
                for count in sc.cameras:
                    specs.append(
                        ScenarioSpec(
                            name=f"{sc.name}_{layout}_C{count}",
                            scenario=sc.scenario,
                            layout=layout,
                            cameras=count,
                            noise_levels=sc.noise_levels,
                            calibration_position=sc.calibration_position,
                            displacements=sc.displacements,
                            calibration_frames=sc.calibration_frames,
                            test_frames=sc.test_frames,
                            seed=seed,
                            fusion=sc.fusion,
                            head_mode=sc.head_mode,
                            eye=self.eye,
                            eyes=sc.eyes,
                            ipd=sc.ipd,
                            ridge=sc.ridge,
                            order=sc.order,
                            alpha_max=sc.alpha_max,
                            epsilon=sc.epsilon,
                            weight_grid=sc.weight_grid,
                            camera_noise_scale=sc.camera_noise_scale,
                            test_points=sc.test_points,
                            case0_spacing=sc.case0_spacing,
                            standoff=sc.standoff,
                        )
                    )
            out.append((sc, specs))
        return out


def _where(node, source) -> str:
    return f"{source}:{node.start_mark.line + 1}"


def _fail(node, source, path, message):
    raise ConfigError(f"{_where(node, source)}: {path}: {message}")


def _mapping(node, source, path, allowed):
    if not isinstance(node, yaml.MappingNode):
        _fail(node, source, path, "expected a mapping")
    out = {}
    for key_node, value_node in node.value:
        key = key_node.value
        sub = f"{path}.{key}" if path else key
        if key not in allowed:
            _fail(key_node, source, sub, f"unknown key {key!r}")
        if key in out:
            _fail(key_node, source, sub, "duplicate key")
        out[key] = value_node
    return out


def _plain(node, source, path):
    try:
        return yaml.safe_load(yaml.serialize(node))
    except yaml.YAMLError as exc:
        _fail(node, source, path, str(exc))


def _number(node, source, path, kind=float, minimum=None, strict=False):
    value = _plain(node, source, path)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(node, source, path, f"expected a number, got {value!r}")
    if kind is int and not float(value).is_integer():
        _fail(node, source, path, f"expected an integer, got {value!r}")
    value = kind(value)
    if minimum is not None and (value < minimum or (strict and value == minimum)):
        op = ">" if strict else ">="
        _fail(node, source, path, f"must be {op} {minimum}")
    return value


def _seq(node, source, path, item, nonempty=True):
    if not isinstance(node, yaml.SequenceNode):
        _fail(node, source, path, "expected a list")
    if nonempty and not node.value:
        _fail(node, source, path, "must not be empty")
    return tuple(item(n, f"{path}[{i}]") for i, n in enumerate(node.value))


def _choice(node, source, path, options):
    value = _plain(node, source, path)
    if value not in options:
        _fail(node, source, path, f"expected one of {sorted(options)}, got {value!r}")
    return value


def _scenario(node, source, path) -> ScenarioConfig:
    allowed = {f.name for f in fields(ScenarioConfig)}
    m = _mapping(node, source, path, allowed)
    if "name" not in m:
        _fail(node, source, path, "missing required key 'name'")
    num = lambda k, **kw: _number(m[k], source, f"{path}.{k}", **kw)  # noqa: E731
    kw = {"name": str(_plain(m["name"], source, f"{path}.name"))}
    if "scenario" in m:
        kw["scenario"] = _choice(m["scenario"], source, f"{path}.scenario", {"SH", "MH"})
    if "layouts" in m:
        kw["layouts"] = _seq(
            m["layouts"], source, f"{path}.layouts",
            lambda n, p: _choice(n, source, p, {"case0", "case1"}),
        )
    if "cameras" in m:
        kw["cameras"] = _seq(
            m["cameras"], source, f"{path}.cameras",
            lambda n, p: _number(n, source, p, int, minimum=1),
        )
    if "noise_levels" in m:
        kw["noise_levels"] = _seq(
            m["noise_levels"], source, f"{path}.noise_levels",
            lambda n, p: _number(n, source, p, float, minimum=0.0),
        )
    if "fusion" in m:
        kw["fusion"] = _seq(
            m["fusion"], source, f"{path}.fusion",
            lambda n, p: _choice(n, source, p, {f.value for f in FusionMethod}),
        )
    for key in ("calibration_frames", "test_frames"):
        if key in m:
            kw[key] = num(key, kind=int, minimum=1)
    if "calibration_position" in m:
        pos = _seq(m["calibration_position"], source, f"{path}.calibration_position",
                   lambda n, p: _number(n, source, p))
        if len(pos) != 3:
            _fail(m["calibration_position"], source, f"{path}.calibration_position", "expected 3 values")
        kw["calibration_position"] = pos
    if "displacements" in m:
        dm = _mapping(m["displacements"], source, f"{path}.displacements", {"X", "Y", "Z"})
        kw["displacements"] = tuple(
            (axis, _seq(dm[axis], source, f"{path}.displacements.{axis}",
                        lambda n, p: _number(n, source, p), nonempty=False))
            for axis in ("X", "Y", "Z") if axis in dm
        )
    if "head_mode" in m:
        kw["head_mode"] = _choice(m["head_mode"], source, f"{path}.head_mode", {"follow-target", "face-screen"})
    if "eyes" in m:
        kw["eyes"] = _seq(m["eyes"], source, f"{path}.eyes", lambda n, p: _choice(n, source, p, {"L", "R"}))
    for key, minimum, strict in (("ipd", 0.0, False), ("ridge", 0.0, False), ("alpha_max", 0.0, True),
                                 ("epsilon", 0.0, True), ("case0_spacing", 0.0, True), ("standoff", 0.0, False)):
        if key in m:
            kw[key] = num(key, minimum=minimum, strict=strict)
    if "order" in m:
        kw["order"] = _choice(m["order"], source, f"{path}.order", {1, 2})
    if "weight_grid" in m:
        grid = _seq(m["weight_grid"], source, f"{path}.weight_grid", lambda n, p: _number(n, source, p, int, minimum=2))
        if len(grid) != 2:
            _fail(m["weight_grid"], source, f"{path}.weight_grid", "expected [nx, ny]")
        kw["weight_grid"] = grid
    if "camera_noise_scale" in m:
        if _plain(m["camera_noise_scale"], source, path) is None:
            kw["camera_noise_scale"] = None
        else:
            kw["camera_noise_scale"] = _seq(
                m["camera_noise_scale"], source, f"{path}.camera_noise_scale",
                lambda n, p: _number(n, source, p, minimum=0.0),
            )
    if "test_points" in m:
        kw["test_points"] = _choice(m["test_points"], source, f"{path}.test_points", {"random", "calibration"})
    sc = ScenarioConfig(**kw)
    if sc.camera_noise_scale is not None and any(c != len(sc.camera_noise_scale) for c in sc.cameras):
        _fail(m["camera_noise_scale"], source, f"{path}.camera_noise_scale",
              "needs one factor per camera for every camera count")
    return sc


def load_config_text(text: str, source: str = "<config>") -> RunConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: YAML syntax error: {exc}") from exc
    if root is None:
        raise ConfigError(f"{source}: empty configuration")
    allowed = {f.name for f in fields(RunConfig)}
    m = _mapping(root, source, "", allowed)
    if "version" not in m:
        _fail(root, source, "version", "missing required key 'version'")
    version = _plain(m["version"], source, "version")
    if version != CONFIG_VERSION:
        _fail(m["version"], source, "version", f"unsupported config version {version!r}")
    kw = {"version": version}
    if "output_dir" in m:
        kw["output_dir"] = str(_plain(m["output_dir"], source, "output_dir"))
    if "seed" in m:
        kw["seed"] = _number(m["seed"], source, "seed", int, minimum=0)
    if "jobs" in m:
        kw["jobs"] = _number(m["jobs"], source, "jobs", int, minimum=1)
    if "eye" in m:
        em = _mapping(m["eye"], source, "eye", _EYE_KEYS)
        values = {k: _number(v, source, f"eye.{k}") for k, v in em.items()}
        try:
            kw["eye"] = EyeParams(**values)
        except ValueError as exc:
            _fail(m["eye"], source, "eye", str(exc))
    if "scenarios" not in m:
        _fail(root, source, "scenarios", "missing required key 'scenarios'")
    kw["scenarios"] = _seq(m["scenarios"], source, "scenarios", lambda n, p: _scenario(n, source, p))
    names = [s.name for s in kw["scenarios"]]
    if len(set(names)) != len(names):
        _fail(m["scenarios"], source, "scenarios", "scenario names must be unique")
    return RunConfig(**kw)


def parse_config(path) -> RunConfig:
    """Load and fully validate a run configuration file.

    Raises:
        ConfigError: missing file, unknown version, unknown keys or invalid
            values; the message names the file, line and key path.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: configuration file not found")
    return load_config_text(path.read_text(), str(path))


def _listify(value):
    if isinstance(value, tuple):
        return [_listify(v) for v in value]
    return value


def config_to_dict(cfg: RunConfig) -> dict:
    eye = asdict(cfg.eye)
    eye.pop("eye_side")
    scenarios = []
    for sc in cfg.scenarios:
        d = {f.name: _listify(getattr(sc, f.name)) for f in fields(ScenarioConfig)}
        d["displacements"] = {axis: list(vals) for axis, vals in sc.displacements}
        scenarios.append(d)
    return {
        "version": cfg.version,
        "output_dir": cfg.output_dir,
        "seed": cfg.seed,
        "jobs": cfg.jobs,
        "eye": eye,
        "scenarios": scenarios,
    }


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)
