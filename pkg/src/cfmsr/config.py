"""Run configuration: dataclasses backed by an INI-style key/value file.

Every section maps onto one dataclass and every key onto one field; values are
coerced to the type of the field default. Tuples are comma separated.

.. code-block:: ini

    [run]
    seed = 0
    out = runs/texture

    [data]
    kind = texture
    n = 256

    [model]
    kind = cfm

    [arch]
    base_channels = 16
    channel_mult = 1, 2, 2

    [path]
    t_aug = 400

    [solver]
    method = euler
    steps = 4
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .nets import ArchConfig, MLPConfig
from .paths import PathConfig
from .solvers import SolverConfig
from .training import MODEL_KINDS, TrainConfig

DATA_KINDS = ("texture", "bimodal", "toy2d")
ABLATION_AXES = ("t_aug", "nfe", "upsample_method")


class ConfigError(ValueError):
    """Invalid configuration or command-line input (exit code 2)."""


@dataclass
class DataSpec:
    kind: str = "texture"
    seed: int | None = None  # falls back to the run seed
    n: int = 256
    n_test: int = 64
    H: int = 64
    f: int = 4
    channels: int = 1

    def __post_init__(self):
        if self.kind not in DATA_KINDS:
            raise ConfigError(f"data.kind must be one of {DATA_KINDS}, got {self.kind!r}")
        if self.n < 1:
            raise ConfigError(f"data.n must be >= 1, got {self.n}")
        if self.n_test < 0:
            raise ConfigError("data.n_test must be >= 0")


@dataclass
class ModelSpec:
    kind: str = "cfm"
    net: str = "unet"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.net not in ("unet", "mlp"):
            raise ConfigError("model.net must be unet or mlp")


@dataclass
class EvalSpec:
    metrics: tuple = ("psnr", "ssim", "ffd", "pffd")
    ddim_steps: int = 4
    clip_x0: float = 2.0
    patch: int = 32
    patches_per_image: int = 8
    codec_seed: int = 1234
    source: str = "model"  # model | truth

    def __post_init__(self):
        if self.source not in ("model", "truth"):
            raise ConfigError("eval.source must be model or truth")


@dataclass
class SampleSpec:
    prior: str = ""
    upsampler: str = ""
    n: int = 8
    prior_steps: int = 50
    times: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class AblateSpec:
    axis: str = "t_aug"
    values: tuple = ()

    def __post_init__(self):
        if self.axis not in ABLATION_AXES:
            raise ConfigError(f"ablate.axis must be one of {ABLATION_AXES}")


SECTIONS = {
    "data": DataSpec, "model": ModelSpec, "arch": ArchConfig, "mlp": MLPConfig,
    "path": PathConfig, "solver": SolverConfig, "train": TrainConfig,
    "eval": EvalSpec, "sample": SampleSpec, "ablate": AblateSpec,
}


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    data: DataSpec = field(default_factory=DataSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    arch: ArchConfig = field(default_factory=ArchConfig)
    mlp: MLPConfig = field(default_factory=MLPConfig)
    path: PathConfig = field(default_factory=PathConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSpec = field(default_factory=EvalSpec)
    sample: SampleSpec = field(default_factory=SampleSpec)
    ablate: AblateSpec = field(default_factory=AblateSpec)

    @property
    def data_seed(self) -> int:
        return self.seed if self.data.seed is None else self.data.seed

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)

    def replace(self, **sections) -> "RunConfig":
        """Copy with whole sections or per-section field overrides (``path={"t_aug": 0}``)."""
        kw = {}
        for name, val in sections.items():
            if isinstance(val, dict):
                val = dataclasses.replace(getattr(self, name), **val)
            kw[name] = val
        return dataclasses.replace(self, **kw)


def _coerce(default, raw: str, where: str):
    s = raw.strip()
    try:
        if isinstance(default, bool):
            return configparser.ConfigParser.BOOLEAN_STATES[s.lower()]
        if isinstance(default, int):
            return int(s)
        if isinstance(default, float):
            return float(s)
        if isinstance(default, tuple):
            items = [p.strip() for p in s.split(",") if p.strip()]
            return tuple(_guess(p) for p in items)
        if default is None:
            return _guess(s)
        return s
    except (KeyError, ValueError) as e:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from e


def _guess(s: str):
    low = s.lower()
    if low in ("none", ""):
        return None
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def _build(cls, items: dict, section: str):
    defaults = cls()
    names = {f.name: f for f in dataclasses.fields(cls) if f.init}
    kw = {}
    for key, raw in items.items():
        if key not in names:
            raise ConfigError(f"unknown key {section}.{key}")
        kw[key] = _coerce(getattr(defaults, key), raw, f"{section}.{key}")
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}]: {e}") from e


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case (H, T)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e
    kw = {}
    for sec in cp.sections():
        items = dict(cp.items(sec))
        if sec == "run":
            run = _build(_RunSection, items, "run")
            kw.update(seed=run.seed, out=run.out)
        elif sec in SECTIONS:
            kw[sec] = _build(SECTIONS[sec], items, sec)
        else:
            raise ConfigError(f"unknown section [{sec}]")
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e


@dataclass
class _RunSection:
    seed: int = 0
    out: str = "runs/default"


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    """INI text that :func:`parse_config` maps back to an equal ``RunConfig``."""
    lines = ["[run]", f"seed = {cfg.seed}", f"out = {cfg.out}", ""]
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        lines.append(f"[{sec}]")
        for f in dataclasses.fields(obj):
            if f.init:
                lines.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)
