#!/usr/bin/env python3
"""Managing polymer-lab experiment configs.

Usage:
    configutil.py create
    configutil.py clone [FILENAME]
    configutil.py display FILENAME
    configutil.py list [ROOT]
"""
import json
from dataclasses import dataclass, field
from hashlib import md5
from pathlib import Path
from typing import Any, Dict, List, Optional

from omegaconf import MISSING, DictConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException

try:
    from src.errors import ConfigValidationError, ConstantsError
    from src.lattice import AnalysisConstants, Cutoffs, Tolerances, WallDirection
    from src.potentials import MODIFICATIONS, POTENTIALS
except ImportError:
    from errors import ConfigValidationError, ConstantsError
    from lattice import AnalysisConstants, Cutoffs, Tolerances, WallDirection
    from potentials import MODIFICATIONS, POTENTIALS


CONFIG_ROOT = Path("configurations")


@dataclass
class CutoffsConfig:
    max_contour_len: Optional[int] = None
    length_ratio: float = 2.0
    max_excess: int = 4
    max_cluster_diam: int = 2
    enumeration_window: int = 20
    max_contours: int = 2_000_000
    len_cap: int = 5


@dataclass
class TolerancesConfig:
    log_weight_tol: float = 1e-12
    identity_tol: float = 1e-12


@dataclass
class ConstantsConfig:
    beta: float = 4.0
    chi: float = 2.0
    nu_g: Optional[float] = None
    delta: Optional[float] = None
    growth_constant: float = 5.0
    cutoffs: CutoffsConfig = field(default_factory=CutoffsConfig)
    tolerances: TolerancesConfig = field(default_factory=TolerancesConfig)


@dataclass
class PotentialConfig:
    kind: str = "ZERO"
    seed: int = 0
    amplitude: float = 1.0
    user: Optional[str] = None
    modification: Optional[str] = None
    M: float = 0.0
    decay_constant: float = 1.0
    modification_seed: int = 1


@dataclass
class WallConfig:
    normal: List[int] = field(default_factory=lambda: [0, 1])
    angle: Optional[float] = None


@dataclass
class SweepConfig:
    L: List[int] = field(default_factory=list)
    beta: List[float] = field(default_factory=list)
    eps: List[float] = field(default_factory=list)
    M: List[float] = field(default_factory=list)
    N: List[int] = field(default_factory=list)
    k: List[int] = field(default_factory=list)
    z: List[float] = field(default_factory=list)
    m: List[int] = field(default_factory=list)
    points: List[Any] = field(default_factory=list)
    directions: List[Any] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    name: str = MISSING
    experiment: str = MISSING
    constants: ConstantsConfig = field(default_factory=ConstantsConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    wall: WallConfig = field(default_factory=WallConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    options: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    samples: int = 10_000
    output: str = "results"
    cache_dir: Optional[str] = None


def _validation_error(e: OmegaConfBaseException) -> ConfigValidationError:
    path = getattr(e, "full_key", None) or None
    msg = str(e).splitlines()[0] if str(e) else type(e).__name__
    return ConfigValidationError(msg, path=path)


def load_config(source, overrides=()) -> DictConfig:
    """Merge a JSON/YAML file (or a dict) onto the ExperimentConfig schema.

    Unknown keys and type mismatches raise ConfigValidationError naming the
    offending field path.
    """
    try:
        schema = OmegaConf.structured(ExperimentConfig)
        raw = OmegaConf.create(source) if isinstance(source, dict) else OmegaConf.load(str(source))
        cfg = OmegaConf.merge(schema, raw, OmegaConf.from_dotlist(list(overrides)))
        OmegaConf.to_container(cfg, throw_on_missing=True)
    except OmegaConfBaseException as e:
        raise _validation_error(e) from e
    validate(cfg)
    return cfg


def validate(cfg: DictConfig):
    if cfg.potential.kind.upper() not in POTENTIALS:
        raise ConfigValidationError(f"unknown kind {cfg.potential.kind}; known {sorted(POTENTIALS)}", "potential.kind")
    mod = cfg.potential.modification
    if mod is not None and mod.upper() not in MODIFICATIONS:
        raise ConfigValidationError(f"unknown modification {mod}; known {list(MODIFICATIONS)}", "potential.modification")
    if cfg.wall.angle is None and len(cfg.wall.normal) != 2:
        raise ConfigValidationError("a wall normal is an integer pair", "wall.normal")
    for key in ("samples",):
        if cfg[key] <= 0:
            raise ConfigValidationError("must be positive", key)
    wall_of(cfg)
    to_constants(cfg)


def to_constants(cfg: DictConfig, beta: Optional[float] = None) -> AnalysisConstants:
    c = cfg.constants
    try:
        return AnalysisConstants(
            beta=float(c.beta if beta is None else beta),
            chi=float(c.chi),
            nu_g=c.nu_g,
            delta=c.delta,
            growth_constant=float(c.growth_constant),
            cutoffs=Cutoffs(**OmegaConf.to_container(c.cutoffs)),
            tolerances=Tolerances(**OmegaConf.to_container(c.tolerances)),
        )
    except ConstantsError as e:
        raise ConfigValidationError(str(e), "constants") from e


def wall_of(cfg: DictConfig) -> WallDirection:
    try:
        if cfg.wall.angle is not None:
            return WallDirection.from_angle(float(cfg.wall.angle))
        return WallDirection.from_pair(*cfg.wall.normal)
    except ValueError as e:
        raise ConfigValidationError(str(e), "wall") from e


def config_hash(cfg) -> str:
    """md5 of the canonical JSON dump."""
    if isinstance(cfg, DictConfig):
        cfg = OmegaConf.to_container(cfg, resolve=True)
    return md5(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def __filename(config_dict):
    beta_str = f"b{config_dict['constants']['beta']}"
    chi_str = f"c{config_dict['constants']['chi']}"
    return f"{config_dict['name']}-{config_dict['experiment']}-{beta_str}-{chi_str}.json"


def __to_list(s: str, kind=float, separator: str = " "):
    return [kind(v) for v in s.split(separator) if v]


def __ask_for_name():
    return input("Experiment name (for the output files): ").strip()


def __ask_for_experiment():
    try:
        from src.experiments import EXPERIMENTS
    except ImportError:
        from experiments import EXPERIMENTS
    print("Experiments:", ", ".join(sorted(EXPERIMENTS)))
    return input("> ").strip()


def __ask_for_constants():
    beta = float(input("beta: "))
    chi = float(input("chi: "))
    return {"beta": beta, "chi": chi}


def __ask_for_potential():
    print("Potential kind:", ", ".join(sorted(POTENTIALS)))
    kind = input("> ").strip().upper() or "ZERO"
    modification = input(f"Half-plane modification {list(MODIFICATIONS)} (blank for none): ").strip().upper()
    potential = {"kind": kind, "modification": modification or None}
    if modification == "BOUNDARY_PIN":
        potential["M"] = float(input("Pinning strength M: "))
    return potential


def __ask_for_wall():
    return {"normal": __to_list(input("Wall normal (`a b`): "), int)}


def __ask_for_sweep():
    sweep = {}
    for key, kind in (("L", int), ("beta", float), ("M", float), ("eps", float)):
        answer = input(f"Sweep values for {key} (space-separated, blank to skip): ").strip()
        if answer:
            sweep[key] = __to_list(answer, kind)
    return sweep


def create():
    """Create an experiment configuration file."""
    config = {
        "name": __ask_for_name(),
        "experiment": __ask_for_experiment(),
        "constants": __ask_for_constants(),
        "potential": __ask_for_potential(),
        "wall": __ask_for_wall(),
        "sweep": __ask_for_sweep(),
    }
    load_config(config)
    CONFIG_ROOT.mkdir(exist_ok=True, parents=True)
    full_path = CONFIG_ROOT / __filename(config)
    json.dump(config, full_path.open("w"), indent=2)
    print(f"Config '{full_path}' created")


def clone(filename=None):
    """Clone an existing configuration file, and change details."""
    if not filename:
        files = sorted(CONFIG_ROOT.glob("*.json"))
        for i, fname in enumerate(files):
            print(i, fname)
        response = input("Which configuration to copy? ").strip()
        if response == "":
            print("Exiting without cloning.")
            return
        try:
            filename = files[int(response)]
        except (ValueError, IndexError):
            print("Invalid answer. Number, or blank to exit without cloning.")
            return
    config = json.load(open(filename))

    msg = f"Cloning {config['name']}\n"
    msg += "Enter what fields you want to change, separated by space. Options:\n- "
    msg += "\n- ".join(["name", "experiment", "constants", "potential", "wall", "sweep"])
    print(msg)
    to_change = input("> ").split(" ")

    if "name" in to_change:
        config["name"] = __ask_for_name()
    if "experiment" in to_change:
        config["experiment"] = __ask_for_experiment()
    if "constants" in to_change:
        config.setdefault("constants", {}).update(__ask_for_constants())
    if "potential" in to_change:
        config["potential"] = __ask_for_potential()
    if "wall" in to_change:
        config["wall"] = __ask_for_wall()
    if "sweep" in to_change:
        config["sweep"] = __ask_for_sweep()

    load_config(config)
    full_path = Path(filename).parent / __filename(config)
    json.dump(config, full_path.open("w"), indent=2)
    print(f"Config '{full_path}' created")


def display(filename):
    """Display an experiment configuration file, with schema defaults filled in."""
    cfg = load_config(filename)
    sweep = {k: list(v) for k, v in cfg.sweep.items() if len(v)}
    msg = f"Name: {cfg.name}"
    msg += f"\n> Experiment  | {cfg.experiment}"
    msg += f"\n> beta, chi   | {cfg.constants.beta}, {cfg.constants.chi}"
    msg += f"\n> Potential   | {cfg.potential.kind} (modification: {cfg.potential.modification})"
    msg += f"\n> Wall        | {wall_of(cfg)}"
    msg += f"\n> Sweep       | {sweep}"
    msg += f"\n> Hash        | {config_hash(cfg)}"
    print(msg)


def list_available(root=None):
    """List available experiment configuration files."""
    root = Path(root or CONFIG_ROOT)
    print("Available configurations")
    print("------------------------")
    print(f"{root}/")
    for filename in sorted(root.glob("*.json")):
        print("\t", filename.name)


if __name__ == "__main__":
    from docopt import docopt
    args = docopt(__doc__)
    if args["create"]:
        create()
    elif args["clone"]:
        clone(args["FILENAME"])
    elif args["display"]:
        display(args["FILENAME"])
    else:
        list_available(args["ROOT"])
