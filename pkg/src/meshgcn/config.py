"""Run configuration read from an INI file.

Every section is optional; missing keys take the defaults below. Example::

    [generate]
    samples = 1000
    seed = 1
    node_min = 900
    node_max = 1500
    alpha_min = -10
    alpha_max = 10

    [train]
    epochs = 40
    lr_decay = 0.94
    lr = 1e-3
    seed = 0

    [eval]
    dataset = heldout.bin

    [benchmark]
    models = gb, mlp, gcnn

    [analyze]
    k = 2

Paths are resolved relative to the config file's directory. If a section
leaves ``dataset`` or ``checkpoint`` empty, the command uses
``<out>/dataset.bin`` or ``<out>/checkpoint.bin``.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import BenchmarkConfig, MLPConfig
from .flowgen import MeshConfig, SpecRanges
from .model import ModelConfig, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class GenerateSection:
    samples: int = 1000
    seed: int = 0
    workers: int = 1
    node_min: int = 900
    node_max: int = 1500
    mu_x_min: float = -0.15
    mu_x_max: float = -0.05
    mu_y_min: float = 0.0
    mu_y_max: float = 0.12
    alpha_min: float = -10.0
    alpha_max: float = 10.0
    u_inf: float = 1.5
    rho: float = 1.0
    d0: float = 0.2
    power: float = 2.0

    def ranges(self) -> SpecRanges:
        return SpecRanges((self.mu_x_min, self.mu_x_max), (self.mu_y_min, self.mu_y_max),
                          (self.alpha_min, self.alpha_max), self.u_inf, self.rho)

    def mesh(self) -> MeshConfig:
        return MeshConfig(band=(self.node_min, self.node_max), d0=self.d0, power=self.power)


@dataclass
class TrainSection:
    dataset: str = ""
    epochs: int = 200
    lr: float = 1e-3
    lr_decay: float = 1.0
    batch_size: int = 32
    train_fraction: float = 0.8
    seed: int = 0
    width: int = 64
    rings: int = 2
    ratio: float = 0.5
    skip: bool = True
    normalize: bool = False

    def train_config(self) -> TrainConfig:
        model = ModelConfig(width=self.width, rings=self.rings, ratio=self.ratio,
                            skip=self.skip, normalize=self.normalize)
        return TrainConfig(lr=self.lr, epochs=self.epochs, batch_size=self.batch_size,
                           train_fraction=self.train_fraction, seed=self.seed,
                           lr_decay=self.lr_decay, model=model)


@dataclass
class EvalSection:
    dataset: str = ""
    checkpoint: str = ""


@dataclass
class BenchmarkSection:
    dataset: str = ""
    # optional pre-trained GCNN; must have been trained on the same split
    checkpoint: str = ""
    models: str = "gb, mlp, gcnn"
    m: int = 0  # 0 = min(1000, smallest sample)
    gb_estimators: int = 500
    gb_shrinkage: float = 0.1
    mlp_epochs: int = 60
    mlp_lr: float = 1e-3
    mlp_momentum: float = 0.9

    def model_list(self) -> tuple[str, ...]:
        return tuple(s.strip() for s in self.models.split(",") if s.strip())

    def benchmark_config(self, train: TrainConfig, seed: int) -> BenchmarkConfig:
        mlp = MLPConfig(lr=self.mlp_lr, momentum=self.mlp_momentum, epochs=self.mlp_epochs, seed=seed)
        return BenchmarkConfig(models=self.model_list(), m=self.m or None,
                               gb_estimators=self.gb_estimators, gb_shrinkage=self.gb_shrinkage,
                               mlp=mlp, train=train)


@dataclass
class AnalyzeSection:
    dataset: str = ""
    # embeddings are analysed only when a checkpoint is available
    checkpoint: str = ""
    k: int = 2
    boundary_points: int = 100


@dataclass
class RunConfig:
    generate: GenerateSection = field(default_factory=GenerateSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    benchmark: BenchmarkSection = field(default_factory=BenchmarkSection)
    analyze: AnalyzeSection = field(default_factory=AnalyzeSection)
    base_dir: str = "."

    def to_dict(self) -> dict:
        return {f.name: dataclasses.asdict(getattr(self, f.name))
                for f in dataclasses.fields(self) if f.name != "base_dir"}

    def with_seed(self, seed: int) -> RunConfig:
        """Override every section's seed."""
        return dataclasses.replace(
            self,
            generate=dataclasses.replace(self.generate, seed=seed),
            train=dataclasses.replace(self.train, seed=seed),
        )

    def resolve(self, value: str, default: Path) -> Path:
        if not value:
            return default
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p


_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(RunConfig) if f.name != "base_dir"}


def _coerce(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip()) if kind is not str else raw.strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None


def parse_config(text: str, base_dir=".") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    sections = {}
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
    for name, factory in _SECTIONS.items():
        obj = factory()
        if cp.has_section(name):
            types = {f.name: type(f.default) for f in dataclasses.fields(obj)}
            values = {}
            for key, raw in cp.items(name):
                if key not in types:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
                values[key] = _coerce(name, key, raw, types[key])
            obj = dataclasses.replace(obj, **values)
        sections[name] = obj
    return RunConfig(**sections, base_dir=str(base_dir))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)
