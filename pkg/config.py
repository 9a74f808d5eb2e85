import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv

from errors import UsageError

# Load environment variables from .env file
load_dotenv()

TOOL_VERSION = "1.0.0"

OPENAI_API_KEY = os.getenv("OPENAI_API_KEY")
SCORER_URL = os.getenv("VQALANG_SCORER_URL")
TRANSLATE_URL = os.getenv("VQALANG_TRANSLATE_URL")
INFILL_URL = os.getenv("VQALANG_INFILL_URL")
LOG_LEVEL = os.getenv("VQALANG_LOG_LEVEL", "INFO")

EXECUTION_ONLY = ("shards", "workers", "out", "cache_dir")

RESOURCE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "resources")


@dataclass
class PathsConfig:
    questions: Optional[str] = None
    annotations: Optional[str] = None
    captions: List[str] = field(default_factory=list)
    narratives: List[str] = field(default_factory=list)
    lexicon: Optional[str] = None
    embeddings: Optional[str] = None
    colors: Optional[str] = None
    color_question_types: Optional[str] = None
    objects: Optional[str] = None
    object_aliases: Optional[str] = None
    stopwords: Optional[str] = None
    # built triplet file read by augment and truncate; defaults to <out>/triplets.jsonl
    triplets: Optional[str] = None


@dataclass
class BuildSettings:
    mode: str = "whole"
    require_narrative: bool = True


@dataclass
class DavSettings:
    top_d: int = 10
    top_j: int = 5
    skip_no_majority: bool = False


@dataclass
class DalSettings:
    eda_rate: float = 0.1
    eda_deletion_p: float = 0.1
    contextual_k: Optional[int] = None
    source_lang: str = "en"
    pivot_lang: str = "de"


@dataclass
class ScorerSettings:
    kind: str = "lexical_overlap"
    path: Optional[str] = None
    endpoint: Optional[str] = SCORER_URL
    concurrency: int = 4
    timeout: float = 30.0
    max_retries: int = 3


@dataclass
class ClientSettings:
    # identity | dictionary | service | openai (translation only)
    kind: str = "identity"
    endpoint: Optional[str] = None
    table: Optional[str] = None
    model: str = "gpt-4o-mini"
    concurrency: int = 4
    timeout: float = 30.0
    max_retries: int = 3


@dataclass
class RunSettings:
    seed: int = 0
    shards: int = 1
    workers: int = 1
    out: str = "out"
    cache_dir: Optional[str] = None


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    build: BuildSettings = field(default_factory=BuildSettings)
    dav: DavSettings = field(default_factory=DavSettings)
    dal: DalSettings = field(default_factory=DalSettings)
    scorer: ScorerSettings = field(default_factory=ScorerSettings)
    translation: ClientSettings = field(default_factory=lambda: ClientSettings(endpoint=TRANSLATE_URL))
    infill: ClientSettings = field(default_factory=lambda: ClientSettings(endpoint=INFILL_URL))
    run: RunSettings = field(default_factory=RunSettings)

    def triplets_path(self) -> str:
        return self.paths.triplets or os.path.join(self.run.out, "triplets.jsonl")


def _fill_section(section: Any, values: Dict[str, Any], name: str) -> None:
    known = {f.name for f in dataclasses.fields(section)}
    for key, value in (values or {}).items():
        if key not in known:
            raise UsageError(f"Unknown config key '{name}.{key}'")
        current = getattr(section, key)
        if isinstance(current, list) and isinstance(value, str):
            value = [value]
        setattr(section, key, value)


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """Load a YAML pipeline config; missing keys keep their defaults"""
    config = PipelineConfig()
    if not path:
        return config
    if not os.path.exists(path):
        raise UsageError(f"Config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise UsageError(f"Config file {path} is not valid YAML: {e}")
    if not isinstance(raw, dict):
        raise UsageError(f"Config file {path} must contain a mapping")
    for name, values in raw.items():
        if not hasattr(config, name):
            raise UsageError(f"Unknown config section '{name}'")
        if not isinstance(values, dict):
            raise UsageError(f"Config section '{name}' must be a mapping")
        _fill_section(getattr(config, name), values, name)
    return config


def apply_overrides(config: PipelineConfig, **overrides: Any) -> PipelineConfig:
    """Apply command-line flags (``section__key=value``); None means not given"""
    for dotted, value in overrides.items():
        if value is None:
            continue
        section_name, key = dotted.split("__", 1)
        _fill_section(getattr(config, section_name), {key: value}, section_name)
    return config


def config_hash(config: PipelineConfig) -> str:
    """SHA-256 of the settings that can change outputs; sharding, workers and
    output/cache locations are left out"""
    resolved = dataclasses.asdict(config)
    for key in EXECUTION_ONLY:
        resolved["run"].pop(key, None)
    payload = json.dumps(resolved, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def resource_path(filename: str) -> str:
    return os.path.join(RESOURCE_DIR, filename)
