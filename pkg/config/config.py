"""
Configuration management for GaitForge

Process settings come from the environment (``.env`` supported); run
settings come from a YAML or ``key=value`` file passed with ``--config``.
"""

import copy
import os
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from src.data.augment import AugmentPolicy
from src.data.sampler import BatchSpec
from src.models.backbone import BackboneConfig, Family
from src.models.losses import LossConfig
from src.training.optim import OptimizerConfig
from src.training.schedule import ScheduleConfig
from src.utils.exceptions import ConfigurationError
from src.utils.logger import get_logger

logger = get_logger(__name__)

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


class Config:
    """Process-level configuration for GaitForge"""

    # Default values
    DEFAULTS = {
        'GAITFORGE_LOG_LEVEL': 'INFO',
        'GAITFORGE_REPORTS_DIR': './reports',
        'GAITFORGE_SEED': 0,
        'GAITFORGE_DETERMINISTIC': False,
        'GAITFORGE_CHECKPOINT_EVERY': 1000,
        'GAITFORGE_EVAL_BATCH': 8,
        'GAITFORGE_PROGRESS': True,
    }

    def __init__(self, env_file: Optional[Path] = None):
        """
        Initialize configuration

        Args:
            env_file: Path to .env file (defaults to .env in current directory)
        """
        if env_file:
            load_dotenv(env_file)
        else:
            load_dotenv()

        self._config: Dict[str, Any] = {}
        self._load_config()
        self._validate_config()

    def _load_config(self) -> None:
        """Load configuration from environment variables"""
        for key, default_value in self.DEFAULTS.items():
            env_value = os.getenv(key)
            if env_value is None:
                self._config[key] = default_value
                continue
            try:
                if isinstance(default_value, bool):
                    self._config[key] = env_value.lower() in ('true', '1', 'yes')
                elif isinstance(default_value, int):
                    self._config[key] = int(env_value)
                elif isinstance(default_value, float):
                    self._config[key] = float(env_value)
                else:
                    self._config[key] = env_value
            except ValueError:
                raise ConfigurationError(f"Invalid value for {key}: '{env_value}'")

        self._config['GAITFORGE_REPORTS_DIR'] = Path(self._config['GAITFORGE_REPORTS_DIR'])
        self._config['GAITFORGE_REPORTS_DIR'].mkdir(parents=True, exist_ok=True)

    def _validate_config(self) -> None:
        """Validate configuration"""
        level = str(self._config['GAITFORGE_LOG_LEVEL']).upper()
        if level not in LOG_LEVELS:
            raise ConfigurationError(f"Invalid GAITFORGE_LOG_LEVEL: {level}. Must be one of {', '.join(LOG_LEVELS)}")
        self._config['GAITFORGE_LOG_LEVEL'] = level
        for key in ('GAITFORGE_CHECKPOINT_EVERY', 'GAITFORGE_EVAL_BATCH'):
            if self._config[key] < 1:
                raise ConfigurationError(f"{key} must be >= 1, got {self._config[key]}")
        logger.debug("Configuration validated successfully")

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value

        Args:
            key: Configuration key
            default: Default value if key not found

        Returns:
            Configuration value
        """
        return self._config.get(key, default)

    def __getitem__(self, key: str) -> Any:
        """Get configuration value using dictionary syntax"""
        return self._config[key]

    def __contains__(self, key: str) -> bool:
        """Check if configuration key exists"""
        return key in self._config

    def to_dict(self) -> Dict[str, Any]:
        """Copy of all configuration values"""
        return self._config.copy()

    def get_log_file_path(self) -> Path:
        """Get path for log file"""
        timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        return self._config['GAITFORGE_REPORTS_DIR'] / f"gaitforge_{timestamp}.log"

    def get_report_file_path(self, kind: str = 'report') -> Path:
        """Get path for a report file"""
        timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        return self._config['GAITFORGE_REPORTS_DIR'] / f"{kind}_{timestamp}.md"


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

SERIES = ('deepgaitv2', 'swingait')

# Batch (q, k) and multistep/cosine schedules per dataset recipe
RECIPES: Dict[str, Dict[str, Any]] = {
    'casia-b': {
        'batch': {'q': 8, 'k': 16},
        'deepgaitv2': {'milestones': [20000, 40000, 50000], 'total_steps': 60000},
    },
    'ou-mvlp': {
        'batch': {'q': 32, 'k': 8},
        'deepgaitv2': {'milestones': [60000, 80000, 100000], 'total_steps': 120000},
    },
    'gait3d': {
        'batch': {'q': 32, 'k': 4},
        'deepgaitv2': {'milestones': [20000, 40000, 50000], 'total_steps': 60000},
        'swingait': {'i_max': 60000, 'total_steps': 80000},
    },
    'grew': {
        'batch': {'q': 32, 'k': 4},
        'deepgaitv2': {'milestones': [80000, 120000, 150000], 'total_steps': 180000},
        'swingait': {'i_max': 150000, 'total_steps': 200000},
    },
}

SERIES_OPTIMIZER = {
    'deepgaitv2': {'kind': 'sgd', 'lr': 0.1, 'weight_decay': 5e-5, 'momentum': 0.9},
    'swingait': {'kind': 'adamw', 'lr': 3e-4, 'weight_decay': 2e-2, 'lr_min': 3e-5},
}

SECTIONS = ('backbone', 'batch', 'optimizer', 'schedule', 'loss', 'augment', 'train')
TRAIN_KEYS = {'total_steps', 'checkpoint_every', 'warm_start', 'seed'}


def recipe(name: str, series: str) -> Dict[str, Any]:
    """
    Sectioned settings of a training recipe

    Args:
        name: 'casia-b', 'ou-mvlp', 'gait3d' or 'grew'
        series: 'deepgaitv2' or 'swingait'

    Raises:
        ConfigurationError: For unknown recipes or a series the recipe does not define
    """
    if name not in RECIPES:
        raise ConfigurationError(f"Unknown recipe '{name}'. Use one of {sorted(RECIPES)}")
    if series not in SERIES:
        raise ConfigurationError(f"Unknown series '{series}'. Use one of {SERIES}")
    preset = RECIPES[name]
    if series not in preset:
        raise ConfigurationError(f"Recipe '{name}' defines no {series} schedule")

    schedule = dict(preset[series])
    schedule['kind'] = 'multistep' if series == 'deepgaitv2' else 'cosine'
    return {
        'batch': dict(preset['batch']),
        'optimizer': dict(SERIES_OPTIMIZER[series]),
        'schedule': schedule,
        'train': {'total_steps': schedule['total_steps']},
    }


@dataclass
class RunConfig:
    """Everything a training run needs"""
    backbone: BackboneConfig
    batch: BatchSpec
    optimizer: OptimizerConfig
    schedule: ScheduleConfig
    loss: LossConfig = field(default_factory=LossConfig)
    augment: Optional[AugmentPolicy] = None
    total_steps: int = 0
    checkpoint_every: Optional[int] = None
    warm_start: Optional[str] = None
    seed: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'backbone': self.backbone.to_dict(),
            'batch': {
                'q': self.batch.q,
                'k': self.batch.k,
                'frames_per_seq': self.batch.frames_per_seq,
                'ordered_sampling': self.batch.ordered_sampling,
            },
            'optimizer': self.optimizer.to_dict(),
            'schedule': self.schedule.to_dict(),
            'loss': {'triplet_margin': self.loss.triplet_margin},
            'augment': None if self.augment is None else dict(vars(self.augment)),
            'train': {
                'total_steps': self.total_steps,
                'checkpoint_every': self.checkpoint_every,
                'warm_start': self.warm_start,
                'seed': self.seed,
            },
        }


_EXPONENT = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)[eE][+-]?\d+$")


def _numeric(value: Any) -> Any:
    """Read exponent literals such as 3e-4, which YAML 1.1 leaves as strings"""
    if isinstance(value, dict):
        return {key: _numeric(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_numeric(item) for item in value]
    if isinstance(value, str) and _EXPONENT.match(value):
        return float(value)
    return value


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_key_value(text: str) -> Dict[str, Any]:
    """
    Parse ``section.key=value`` lines into nested sections

    Values are read as YAML scalars or flow sequences (``[1, 4, 4, 1]``).
    Blank lines and ``#`` comments are skipped.
    """
    data: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigurationError(f"Line {number}: expected key=value, got '{line}'")
        key, value = (part.strip() for part in line.split('=', 1))
        target = data
        *parents, leaf = key.split('.')
        for parent in parents:
            target = target.setdefault(parent, {})
            if not isinstance(target, dict):
                raise ConfigurationError(f"Line {number}: '{key}' conflicts with an earlier scalar")
        try:
            target[leaf] = yaml.safe_load(value) if value else None
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Line {number}: cannot parse value '{value}': {e}")
    return data


def _section(data: Dict[str, Any], name: str) -> Dict[str, Any]:
    value = data.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"Section '{name}' must be a mapping")
    return value


def run_config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """
    Build a RunConfig from sectioned settings

    A top-level ``recipe`` applies its preset first (series taken from
    ``series`` or inferred from the backbone family); explicit sections
    override it.

    Raises:
        ConfigurationError: On unknown sections or keys, or invalid values
    """
    data = _numeric(dict(data or {}))
    unknown = set(data) - set(SECTIONS) - {'recipe', 'series'}
    if unknown:
        raise ConfigurationError(f"Unknown configuration sections: {sorted(unknown)}")

    backbone_data = dict(_section(data, 'backbone'))
    if 'family' not in backbone_data:
        raise ConfigurationError("backbone.family is required")
    try:
        family = Family(backbone_data['family'])
    except ValueError:
        raise ConfigurationError(f"Unknown family '{backbone_data['family']}'. Use one of {[f.value for f in Family]}")

    if data.get('recipe'):
        series = data.get('series') or ('swingait' if family.is_swin else 'deepgaitv2')
        data = _merge(recipe(str(data['recipe']), series), data)

    try:
        backbone = BackboneConfig.from_dict(backbone_data)
        batch_data = dict(_section(data, 'batch'))
        batch_data.setdefault('ordered_sampling', family is not Family.DEEPGAIT_2D)
        batch = BatchSpec(**batch_data)

        train_data = _section(data, 'train')
        bad_train = set(train_data) - TRAIN_KEYS
        if bad_train:
            raise ConfigurationError(f"Unknown train keys: {sorted(bad_train)}")
        schedule_data = dict(_section(data, 'schedule'))
        total_steps = int(train_data.get('total_steps', schedule_data.get('total_steps', 0)))
        checkpoint_every = train_data.get('checkpoint_every')
        schedule_data.setdefault('total_steps', total_steps)
        schedule = ScheduleConfig(**schedule_data)
        optimizer = OptimizerConfig(**_section(data, 'optimizer'))
        loss = LossConfig(**_section(data, 'loss'))

        augment_data = dict(_section(data, 'augment'))
        augment = AugmentPolicy(**augment_data) if augment_data.pop('enabled', bool(augment_data)) else None
    except TypeError as e:
        raise ConfigurationError(f"Invalid run configuration: {e}")

    return RunConfig(
        backbone=backbone,
        batch=batch,
        optimizer=optimizer,
        schedule=schedule,
        loss=loss,
        augment=augment,
        total_steps=total_steps,
        checkpoint_every=None if checkpoint_every is None else int(checkpoint_every),
        warm_start=train_data.get('warm_start'),
        seed=train_data.get('seed'),
    )


def load_run_config(path: Path) -> RunConfig:
    """
    Read a run configuration file

    ``.yaml``/``.yml`` files are parsed as YAML; anything else as
    ``section.key=value`` lines.

    Raises:
        ConfigurationError: If the file is missing or invalid
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Run configuration not found: {path}")
    text = path.read_text(encoding='utf-8')
    if path.suffix.lower() in ('.yaml', '.yml'):
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML in {path}: {e}")
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path} must contain a mapping of sections")
    else:
        data = parse_key_value(text)
    config = run_config_from_dict(data)
    logger.info(f"Loaded run configuration from {path}: {config.backbone.family.value}, {config.total_steps} steps")
    return config
