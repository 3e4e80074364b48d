"""Strict YAML experiment configuration.

Unknown keys are rejected everywhere so a typo such as ``lamda`` cannot
silently fall back to a default.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from .oracle import ConceptSystem, GaussianMixture, four_mode_system
from .pipeline import CO3, PLAIN_CFG, SamplerConfig
from .schedule import NoiseSchedule, build_linear_schedule, build_scaled_linear_schedule, subsample_schedule


class ConfigError(ValueError):
    """Raised with every problem found, one per line."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


SCHEDULE_KINDS = ("scaled_linear", "linear")
SCHEDULE_DEFAULTS = {
    "kind": "scaled_linear",
    "train_steps": 1000,
    "beta_start": 0.00085,
    "beta_end": 0.012,
    "num_steps": 50,
}
SAMPLER_KEYS = {
    "method", "lam", "num_resampling", "num_correct", "num_iters", "beta",
    "resampler_anchor", "corrector_anchor", "composable_lambdas", "seed",
}
SWEEP_KEYS = SAMPLER_KEYS - {"method", "composable_lambdas"}
TOP_KEYS = {
    "system", "system_file", "schedule", "samplers", "sweep", "replicates",
    "seed", "output_dir", "plots", "radius", "grid_resolution",
}
MIXTURE_KEYS = {"weights", "means", "covs"}


@dataclass
class ExperimentConfig:
    system: ConceptSystem
    schedule_params: Dict[str, Any]
    samplers: List[SamplerConfig]
    replicates: int = 10000
    seed: int = 0
    output_dir: str = "out"
    plots: bool = True
    radius: float = 3.0
    grid_resolution: int = 256
    system_spec: Any = "four_mode"

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.schedule_params)


def make_schedule(params: Dict[str, Any]) -> NoiseSchedule:
    build = build_scaled_linear_schedule if params["kind"] == "scaled_linear" else build_linear_schedule
    base = build(params["train_steps"], params["beta_start"], params["beta_end"])
    return subsample_schedule(base, params["num_steps"])


def mixture_to_dict(g: GaussianMixture) -> dict:
    return {"weights": g.weights.tolist(), "means": g.means.tolist(), "covs": g.covs.tolist()}


def system_to_dict(system: ConceptSystem) -> dict:
    joint = mixture_to_dict(system.joint)
    joint["tags"] = list(system.mode_labels)
    return {
        "joint": joint,
        "concepts": [mixture_to_dict(c) for c in system.concepts],
        "unconditional": mixture_to_dict(system.unconditional),
    }


def _mixture(d, where, problems, extra=()):
    if not isinstance(d, dict):
        problems.append(f"{where}: expected a mapping")
        return None
    unknown = set(d) - MIXTURE_KEYS - set(extra)
    for k in sorted(unknown):
        problems.append(f"{where}: unknown key {k!r}")
    missing = MIXTURE_KEYS - set(d)
    for k in sorted(missing):
        problems.append(f"{where}: missing key {k!r}")
    if unknown or missing:
        return None
    try:
        return GaussianMixture(np.asarray(d["weights"], float), np.asarray(d["means"], float), np.asarray(d["covs"], float))
    except (ValueError, TypeError) as err:
        problems.append(f"{where}: {err}")
        return None


def system_from_dict(d, problems=None, where="system") -> Optional[ConceptSystem]:
    own = problems is None
    problems = [] if own else problems
    out = None
    if not isinstance(d, dict):
        problems.append(f"{where}: expected a mapping or 'four_mode'")
    else:
        for k in sorted(set(d) - {"joint", "concepts", "unconditional"}):
            problems.append(f"{where}: unknown key {k!r}")
        joint = _mixture(d.get("joint"), f"{where}.joint", problems, extra=("tags",))
        concepts = d.get("concepts")
        if not isinstance(concepts, list) or not concepts:
            problems.append(f"{where}.concepts: expected a non-empty list")
            concepts = []
        cs = [_mixture(c, f"{where}.concepts[{i}]", problems) for i, c in enumerate(concepts)]
        unc = _mixture(d.get("unconditional"), f"{where}.unconditional", problems)
        tags = (d.get("joint") or {}).get("tags") if isinstance(d.get("joint"), dict) else None
        if tags is None:
            problems.append(f"{where}.joint: missing key 'tags'")
        if joint is not None and unc is not None and cs and all(c is not None for c in cs) and tags is not None:
            try:
                out = ConceptSystem(joint, tuple(cs), unc, tuple(tags))
            except ValueError as err:
                problems.append(f"{where}: {err}")
    if own and problems:
        raise ConfigError(problems)
    return out


def _check_keys(d, allowed, where, problems):
    for k in sorted(set(d) - allowed):
        problems.append(f"{where}: unknown key {k!r}")


def _expand_sweep(samplers, sweep):
    if not sweep:
        return samplers
    keys = list(sweep)
    out = []
    for s in samplers:
        for combo in itertools.product(*(sweep[k] for k in keys)):
            out.append({**s, **dict(zip(keys, combo))})
    return out


def config_from_dict(raw: Any, base_dir: Path = Path(".")) -> ExperimentConfig:
    """Validate a parsed config mapping, filling defaults for absent fields."""
    problems: List[str] = []
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(["top level: expected a mapping"])
    _check_keys(raw, TOP_KEYS, "top level", problems)

    system_spec: Any = raw.get("system", "four_mode")
    if "system" in raw and "system_file" in raw:
        problems.append("top level: give either 'system' or 'system_file', not both")
    system = None
    if "system_file" in raw:
        path = Path(raw["system_file"])
        if not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            problems.append(f"system_file: {path} does not exist")
        else:
            system_spec = {"file": str(raw["system_file"])}
            system = system_from_dict(_load_yaml(path), problems, where=f"system_file {path}")
    elif system_spec == "four_mode":
        system = four_mode_system()
    else:
        system = system_from_dict(system_spec, problems)

    sched = dict(SCHEDULE_DEFAULTS)
    sraw = raw.get("schedule", {}) or {}
    if not isinstance(sraw, dict):
        problems.append("schedule: expected a mapping")
        sraw = {}
    _check_keys(sraw, set(SCHEDULE_DEFAULTS), "schedule", problems)
    sched.update({k: v for k, v in sraw.items() if k in SCHEDULE_DEFAULTS})
    if sched["kind"] not in SCHEDULE_KINDS:
        problems.append(f"schedule.kind: must be one of {SCHEDULE_KINDS}")
    else:
        try:
            make_schedule(sched)
        except (ValueError, TypeError) as err:
            problems.append(f"schedule: {err}")

    sampler_raw = raw.get("samplers", [{"method": PLAIN_CFG}, {"method": CO3}])
    if not isinstance(sampler_raw, list) or not sampler_raw:
        problems.append("samplers: expected a non-empty list")
        sampler_raw = []
    sweep = raw.get("sweep") or {}
    if not isinstance(sweep, dict):
        problems.append("sweep: expected a mapping of parameter -> list of values")
        sweep = {}
    _check_keys(sweep, SWEEP_KEYS, "sweep", problems)
    for k, v in sweep.items():
        if not isinstance(v, list) or not v:
            problems.append(f"sweep.{k}: expected a non-empty list")
    seed = raw.get("seed", 0)
    samplers = []
    for i, s in enumerate(sampler_raw):
        if not isinstance(s, dict):
            problems.append(f"samplers[{i}]: expected a mapping")
            continue
        _check_keys(s, SAMPLER_KEYS, f"samplers[{i}]", problems)
    if not problems:
        for i, s in enumerate(_expand_sweep(sampler_raw, sweep)):
            kw = {"seed": seed, **s, "num_steps": sched["num_steps"]}
            try:
                samplers.append(SamplerConfig(**kw))
            except (ValueError, TypeError) as err:
                problems.append(f"sampler {i}: {err}")

    replicates = raw.get("replicates", 10000)
    if not isinstance(replicates, int) or replicates < 1:
        problems.append("replicates: expected a positive integer")
    if not isinstance(seed, int):
        problems.append("seed: expected an integer")
    radius = raw.get("radius", 3.0)
    if not isinstance(radius, (int, float)) or radius <= 0:
        problems.append("radius: expected a positive number")
    grid = raw.get("grid_resolution", 256)
    if not isinstance(grid, int) or grid < 64:
        problems.append("grid_resolution: expected an integer >= 64")
    plots = raw.get("plots", True)
    if not isinstance(plots, bool):
        problems.append("plots: expected true or false")

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        system=system,
        schedule_params=sched,
        samplers=samplers,
        replicates=replicates,
        seed=seed,
        output_dir=str(raw.get("output_dir", "out")),
        plots=plots,
        radius=float(radius),
        grid_resolution=grid,
        system_spec=system_spec,
    )


class _StrictLoader(yaml.SafeLoader):
    pass


def _no_duplicates(loader, node, deep=False):
    seen = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            raise yaml.constructor.ConstructorError(
                None, None, f"duplicate key {key!r}", key_node.start_mark
            )
        seen.add(key)
    return loader.construct_mapping(node, deep)


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _no_duplicates)


def _load_yaml(path: Path):
    try:
        with open(path) as fh:
            return yaml.load(fh, Loader=_StrictLoader)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ConfigError([f"{where}: {getattr(err, 'problem', None) or err}"]) from err


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: no such file"])
    return config_from_dict(_load_yaml(path), base_dir=path.parent)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Fully explicit mapping; the sweep is already expanded into samplers."""
    if isinstance(cfg.system_spec, dict) and "file" in cfg.system_spec:
        system = {"system_file": cfg.system_spec["file"]}
    elif cfg.system_spec == "four_mode":
        system = {"system": "four_mode"}
    else:
        system = {"system": system_to_dict(cfg.system)}
    samplers = []
    for s in cfg.samplers:
        d = s.to_dict()
        d.pop("num_steps")
        if d["composable_lambdas"] is None:
            d.pop("composable_lambdas")
        samplers.append(d)
    return {
        **system,
        "schedule": dict(cfg.schedule_params),
        "samplers": samplers,
        "replicates": cfg.replicates,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "plots": cfg.plots,
        "radius": cfg.radius,
        "grid_resolution": cfg.grid_resolution,
    }


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
