"""
Model configuration files.

Format: one `key = value` per line, `#` starts a comment, and each backbone
stage gets a `[stage.N]` section (N = 1..4) with `channels` and `depth`::

    variant = t
    stem_channels = 32
    state_dim = 16

    [stage.1]
    channels = 32
    depth = 2
"""
from dataclasses import dataclass, field
import logging
import os

from mambayolo.config import Config
from mambayolo.exceptions import ConfigError
from mambayolo.models.feature_map import MlpVariant, OdssOptions

logger = logging.getLogger(__name__)

NUM_STAGES = 4
DOWNSAMPLE_MODES = ('clue_merge', 'conv')

_INT_KEYS = ('stem_channels', 'state_dim', 'merge_ratio', 'neck_depth', 'seed')
_FLOAT_KEYS = ('ssm_ratio', 'ls_ratio', 'rg_ratio')
_BOOL_KEYS = ('use_ls', 'ssm_identity')
_STAGE_KEYS = ('channels', 'depth')
_TRUE = ('1', 'true', 'yes', 'on')
_FALSE = ('0', 'false', 'no', 'off')


@dataclass(frozen=True)
class StageConfig:
    channels: int
    depth: int = 1


@dataclass(frozen=True)
class ModelConfig:
    """Widths and depths of the backbone and neck, plus ablation switches."""

    stem_channels: int
    stages: tuple
    variant: str = 'custom'
    state_dim: int = 16
    ssm_ratio: float = 2.0
    ls_ratio: float = 2.0
    rg_ratio: float = 2.0
    merge_ratio: int = 2
    neck_channels: tuple = None
    neck_depth: int = 1
    seed: int = 0
    mlp_variant: MlpVariant = MlpVariant.RG_BLOCK
    use_ls: bool = True
    downsample: str = 'clue_merge'
    ssm_identity: bool = False
    source: str = field(default='<memory>', compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'stages', tuple(self.stages))
        if self.neck_channels is None:
            object.__setattr__(self, 'neck_channels', tuple(s.channels for s in self.stages[1:]))
        else:
            object.__setattr__(self, 'neck_channels', tuple(self.neck_channels))
        try:
            object.__setattr__(self, 'mlp_variant', MlpVariant(self.mlp_variant))
        except ValueError:
            choices = ', '.join(v.value for v in MlpVariant)
            raise ConfigError(f"{self.source}: unknown mlp_variant {self.mlp_variant!r} (choose from {choices})")
        self._validate()

    def _validate(self):
        where = self.source
        if len(self.stages) != NUM_STAGES:
            raise ConfigError(f"{where}: expected exactly {NUM_STAGES} stages, got {len(self.stages)}")
        channels = [s.channels for s in self.stages]
        for i, stage in enumerate(self.stages, start=1):
            if stage.depth < 1:
                raise ConfigError(f"{where}: stage.{i} depth must be >= 1, got {stage.depth}")
            if stage.channels < 4 or stage.channels % 4:
                raise ConfigError(f"{where}: stage.{i} channels must be a positive multiple of 4, got {stage.channels}")
        if any(b <= a for a, b in zip(channels, channels[1:])):
            raise ConfigError(f"{where}: stage channels must strictly increase, got {channels}")
        if self.stem_channels < 4 or self.stem_channels % 4:
            raise ConfigError(f"{where}: stem_channels must be a positive multiple of 4, got {self.stem_channels}")
        if len(self.neck_channels) != 3 or any(c < 4 or c % 4 for c in self.neck_channels):
            raise ConfigError(f"{where}: neck_channels must be three positive multiples of 4, got {self.neck_channels}")
        if self.state_dim < 1:
            raise ConfigError(f"{where}: state_dim must be >= 1, got {self.state_dim}")
        for name in _FLOAT_KEYS:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{where}: {name} must be > 0, got {getattr(self, name)}")
        if self.merge_ratio < 1:
            raise ConfigError(f"{where}: merge_ratio must be >= 1, got {self.merge_ratio}")
        if self.neck_depth < 1:
            raise ConfigError(f"{where}: neck_depth must be >= 1, got {self.neck_depth}")
        if self.downsample not in DOWNSAMPLE_MODES:
            raise ConfigError(f"{where}: downsample must be one of {', '.join(DOWNSAMPLE_MODES)}, got {self.downsample!r}")

    @property
    def stage_channels(self) -> tuple:
        return tuple(s.channels for s in self.stages)

    def ssm_hidden(self, channels: int) -> int:
        return max(1, int(round(self.ssm_ratio * channels)))

    def ls_hidden(self, channels: int) -> int:
        return max(1, int(round(self.ls_ratio * channels)))

    def mlp_hidden(self, channels: int) -> int:
        return max(1, int(round(self.rg_ratio * channels)))

    def block_options(self) -> OdssOptions:
        return OdssOptions(mlp_variant=self.mlp_variant, use_ls=self.use_ls, identity_scan=self.ssm_identity)

    @classmethod
    def from_text(cls, text: str, source: str = '<string>') -> 'ModelConfig':
        top = {}
        stages = {}
        section = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            where = f"{source}:{lineno}"
            if line.startswith('['):
                if not line.endswith(']'):
                    raise ConfigError(f"{where}: malformed section header {line!r}")
                name = line[1:-1].strip()
                prefix, _, index = name.partition('.')
                if prefix != 'stage' or not index.isdigit() or not 1 <= int(index) <= NUM_STAGES:
                    raise ConfigError(f"{where}: unknown section [{name}], expected [stage.1] .. [stage.{NUM_STAGES}]")
                section = int(index)
                if section in stages:
                    raise ConfigError(f"{where}: duplicate section [stage.{section}]")
                stages[section] = {}
                continue
            key, sep, value = line.partition('=')
            key, value = key.strip(), value.strip()
            if not sep or not key or not value:
                raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
            target = top if section is None else stages[section]
            if key in target:
                raise ConfigError(f"{where}: duplicate key {key!r}")
            target[key] = _parse_value(key, value, where, in_stage=section is not None)

        missing = [i for i in range(1, NUM_STAGES + 1) if i not in stages]
        if missing:
            raise ConfigError(f"{source}: missing section(s) {', '.join(f'[stage.{i}]' for i in missing)}")
        stage_list = []
        for i in range(1, NUM_STAGES + 1):
            if 'channels' not in stages[i]:
                raise ConfigError(f"{source}: [stage.{i}] has no channels")
            stage_list.append(StageConfig(channels=stages[i]['channels'], depth=stages[i].get('depth', 1)))
        if 'stem_channels' not in top:
            raise ConfigError(f"{source}: stem_channels is required")
        return cls(stages=tuple(stage_list), source=source, **top)

    @classmethod
    def from_file(cls, path: str) -> 'ModelConfig':
        if os.path.isdir(path):
            raise ConfigError(f"{path}: is a directory, expected a config file")
        try:
            with open(path, encoding='utf-8') as fh:
                text = fh.read()
        except UnicodeDecodeError:
            raise ConfigError(f"{path}: not valid UTF-8")
        except FileNotFoundError:
            raise
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})")
        return cls.from_text(text, source=path)

    @classmethod
    def shipped(cls, name: str) -> 'ModelConfig':
        """One of the configs in Config.CONFIG_DIR."""
        name = name.lower()
        if name not in Config.SHIPPED_CONFIGS:
            raise ConfigError(f"no shipped config {name!r} (choose from {', '.join(Config.SHIPPED_CONFIGS)})")
        return cls.from_file(os.path.join(Config.CONFIG_DIR, f"{name}.cfg"))

    @classmethod
    def resolve(cls, name_or_path: str) -> 'ModelConfig':
        """A shipped config name, or a path to a config file."""
        if name_or_path.lower() in Config.SHIPPED_CONFIGS and not os.path.exists(name_or_path):
            return cls.shipped(name_or_path)
        return cls.from_file(name_or_path)


def _parse_value(key: str, value: str, where: str, in_stage: bool):
    if in_stage:
        if key not in _STAGE_KEYS:
            raise ConfigError(f"{where}: unknown stage key {key!r} (expected {', '.join(_STAGE_KEYS)})")
        return _parse_int(key, value, where)
    if key in _INT_KEYS:
        return _parse_int(key, value, where)
    if key in _FLOAT_KEYS:
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{where}: {key} must be a number, got {value!r}")
    if key in _BOOL_KEYS:
        lowered = value.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"{where}: {key} must be true or false, got {value!r}")
    if key == 'neck_channels':
        return tuple(_parse_int(key, part.strip(), where) for part in value.split(','))
    if key in ('variant', 'downsample', 'mlp_variant'):
        return value.lower()
    raise ConfigError(f"{where}: unknown key {key!r}")


def _parse_int(key: str, value: str, where: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{where}: {key} must be an integer, got {value!r}")
