"""Plain-text pipeline configuration (INI: ``key = value`` lines under ``[sections]``).

The bundled ``default.ini`` is always read first; a user file only overrides
the keys it names.  Unknown sections or keys are rejected so typos surface
before any stage runs.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .degrade import DegradeConfig, Perturbation
from .errors import ConfigError
from .heatmap import ProxyDiscrepancy
from .recon import LossConfig
from .render import RenderSettings
from .schedule import ScheduleConfig, preset
from .trajectory import FilterConfig


def default_text() -> str:
    return resources.files("artifact_forge.data").joinpath("default.ini").read_text()


@dataclass(frozen=True)
class ToySettings:
    n_gaussians: int = 10
    image_size: int = 32
    n_frames: int = 24
    arc_degrees: float = 60.0


@dataclass(frozen=True)
class ReconSettings:
    iterations: int = 3
    steps_per_iteration: int = 25
    method: str = "adam"
    lr: float = 0.01
    n_novel: int = 4


@dataclass(frozen=True)
class PromptSettings:
    n_inference: int = 1
    exclusivity: str = ""


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    jobs: int = 1
    output: str = "artifact-out"
    scenes: dict = field(default_factory=dict)
    toy: ToySettings = ToySettings()
    qc: FilterConfig = FilterConfig()
    degrade: DegradeConfig = DegradeConfig()
    render: RenderSettings = RenderSettings()
    heatmap: dict = field(default_factory=dict)
    schedule_name: str = "exp7"
    schedule: ScheduleConfig = ScheduleConfig()
    k: int = 8
    loss: LossConfig = LossConfig()
    recon: ReconSettings = ReconSettings()
    prompt: PromptSettings = PromptSettings()

    def metric(self) -> ProxyDiscrepancy:
        return ProxyDiscrepancy(**self.heatmap)

    def stage_params(self) -> dict:
        """Plain-data view of the settings each pipeline stage depends on."""
        d = self.degrade
        return {
            "toy": vars(self.toy),
            "qc": vars(self.qc),
            "degrade": {
                "per_kind_probability": d.per_kind_probability, "scale_delta": d.scale_delta,
                "dropout_keep": d.dropout_keep, "sh_dc_sigma": d.sh_dc_sigma,
                "sh_rest_sigma": d.sh_rest_sigma, "opacity_factor": d.opacity_factor,
                "alias_factor": d.alias_factor, "order": [k.value for k in d.order],
                "checkpoint_iterations": list(d.checkpoint_iterations),
                "probabilities": dict(sorted(d.probabilities.items())),
            },
            "render": {k: list(v) if isinstance(v, tuple) else v for k, v in vars(self.render).items()},
            "heatmap": {k: list(v) if isinstance(v, tuple) else v for k, v in self.heatmap.items()},
            "prompt": vars(self.prompt),
        }


# --------------------------------------------------------------- parsing

_SCHEMA = {
    "run": {"seed": int, "jobs": int, "output": str},
    "toy": {"n_gaussians": int, "image_size": int, "n_frames": int, "arc_degrees": float},
    "qc": {"lambda": float, "use_jerk": bool, "use_angular": bool, "use_direction": bool,
           "use_direction_mad": bool, "min_segment_length": int},
    "degrade": {"per_kind_probability": float, "scale_delta": float, "dropout_keep": float,
                "sh_dc_sigma": float, "sh_rest_sigma": float, "opacity_factor": float,
                "alias_factor": int, "checkpoint_iterations": "ints"},
    "render": {"background": "floats", "alpha_cutoff": float, "radius_sigma": float,
               "max_alpha": float, "lowpass": float},
    "heatmap": {"scales": "ints", "intensity_weight": float, "gradient_weight": float,
                "smooth_sigma": float},
    "schedule": {"preset": str, "n_steps": int, "tau1": float, "tau2": float},
    "assembly": {"k": int},
    "loss": {"lambda_gen": float, "lambda_l1": float, "lambda_ssim": float},
    "recon": {"iterations": int, "steps_per_iteration": int, "method": str, "lr": float, "n_novel": int},
    "prompt": {"n_inference": int, "exclusivity": str},
}


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str  # scene ids and kind names are case sensitive
    return cp


def _value(section, key, raw, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        if kind == "ints":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if kind == "floats":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {getattr(kind, '__name__', kind)}") from None


def _read(cp, text, source):
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from None


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Build a validated :class:`PipelineConfig` from defaults, an optional file and overrides.

    ``overrides`` maps ``"section.key"`` to a string value, as a file would.
    """
    cp = _parser()
    _read(cp, default_text(), "default.ini")
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        user = _parser()
        _read(user, p.read_text(), str(p))
        for section in user.sections():
            if section not in _SCHEMA and section != "scenes":
                raise ConfigError(f"unknown config section [{section}]")
            if section == "scenes":
                # the user's scene list replaces the default one
                cp.remove_section("scenes")
                cp.add_section("scenes")
            for key, raw in user.items(section, raw=True):
                cp.set(section, key, raw)
    for dotted, raw in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not cp.has_section(section):
            raise ConfigError(f"unknown config section [{section}]")
        cp.set(section, key, str(raw))
    return _build(cp)


def _build(cp) -> PipelineConfig:
    vals = {}
    probabilities = {}
    for section, keys in _SCHEMA.items():
        vals[section] = {}
        for key, raw in cp.items(section, raw=True):
            if section == "degrade" and key.startswith("probability."):
                name = key.split(".", 1)[1]
                try:
                    kind = Perturbation(name)
                except ValueError:
                    raise ConfigError(f"[degrade] unknown perturbation {name!r}") from None
                probabilities[kind.value] = _value(section, key, raw, float)
                continue
            if key not in keys:
                raise ConfigError(f"unknown key [{section}] {key}")
            vals[section][key] = _value(section, key, raw, keys[key])
    scenes = {k: v.strip() for k, v in cp.items("scenes", raw=True)}
    try:
        run = vals["run"]
        if run["jobs"] < 1:
            raise ConfigError("[run] jobs must be >= 1")
        toy = ToySettings(**vals["toy"])
        if toy.n_gaussians < 1 or toy.image_size < 4 or toy.n_frames < 4:
            raise ConfigError("[toy] needs n_gaussians >= 1, image_size >= 4, n_frames >= 4")
        q = dict(vals["qc"])
        qc = FilterConfig(lam=q.pop("lambda"), **q)
        degrade = DegradeConfig(probabilities=probabilities, **vals["degrade"])
        render = RenderSettings(**vals["render"])
        if len(render.background) != 3:
            raise ConfigError("[render] background needs three components")
        heat = vals["heatmap"]
        if not heat["scales"] or min(heat["scales"]) < 1:
            raise ConfigError("[heatmap] scales must be positive integers")
        sch = vals["schedule"]
        name = sch["preset"].strip().lower()
        if name == "piecewise":
            schedule = ScheduleConfig.from_thresholds(sch["n_steps"], sch["tau1"], sch["tau2"])
        else:
            try:
                schedule = ScheduleConfig(preset(name))
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from None
        k = vals["assembly"]["k"]
        if k < 1:
            raise ConfigError("[assembly] k must be >= 1")
        loss = LossConfig(**vals["loss"])
        recon = ReconSettings(**vals["recon"])
        if recon.method not in ("adam", "descent"):
            raise ConfigError(f"[recon] method must be adam or descent, not {recon.method!r}")
        if recon.lr <= 0:
            raise ConfigError("[recon] lr must be positive")
        prompt = PromptSettings(**vals["prompt"])
        if prompt.n_inference < 0:
            raise ConfigError("[prompt] n_inference must be >= 0")
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    for sid, src in scenes.items():
        if src != "toy" and not Path(src).is_dir():
            raise ConfigError(f"scene {sid!r}: {src!r} is neither 'toy' nor a directory")
    return PipelineConfig(seed=run["seed"], jobs=run["jobs"], output=run["output"], scenes=scenes,
                          toy=toy, qc=qc, degrade=degrade, render=render, heatmap=heat,
                          schedule_name=name, schedule=schedule, k=k, loss=loss, recon=recon,
                          prompt=prompt)
