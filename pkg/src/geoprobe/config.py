"""Run configuration: one JSON document, validated before any network use.

Secrets never live in the file. The config names environment variables
(``auth_env`` fields); tokens are read from the environment at request
time by the backends and adapters. That keeps the document safe to hash —
its canonical hash goes into every trace header so a replayed trace can
be tied back to the exact configuration that produced it.

Relative paths inside the document resolve against the config file's own
directory, so a config directory can be moved as a unit.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .actions import Tool
from .canonical import canonical_hash
from .errors import ConfigError
from .executor import ALL_TOOLS, AblationConfig
from .live_tools import (
    DEFAULT_BACKOFF_S,
    DEFAULT_RETRIES,
    DEFAULT_TIMEOUT_S,
    DEFAULT_TOP_K,
    EndpointConfig,
    endpoints_for_base,
)

DEFAULT_MAX_STEPS = 12
DEFAULT_MAX_PARALLEL = 4
DEFAULT_CONTEXT_BUDGET = 4000

BACKEND_SCRIPTED = "scripted"
BACKEND_LLM = "llm"

TOOLS_SYNTHETIC = "synthetic"
TOOLS_LIVE = "live"


@dataclass(frozen=True)
class BackendSpec:
    """Which planner produces decisions: the scripted policy or a chat API."""

    kind: str = BACKEND_SCRIPTED
    endpoint: str = ""
    model: str = ""
    auth_env: str = "GEOPROBE_API_TOKEN"

    def __post_init__(self):
        if self.kind not in (BACKEND_SCRIPTED, BACKEND_LLM):
            raise ConfigError(f"unknown backend kind: {self.kind!r}")
        if self.kind == BACKEND_LLM and (not self.endpoint or not self.model):
            raise ConfigError("llm backend needs both endpoint and model")

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == BACKEND_LLM:
            out.update(endpoint=self.endpoint, model=self.model,
                       auth_env=self.auth_env)
        return out

    @classmethod
    def from_json(cls, obj) -> "BackendSpec":
        if not isinstance(obj, dict):
            raise ConfigError("backend must be an object")
        return cls(
            kind=obj.get("kind", BACKEND_SCRIPTED),
            endpoint=obj.get("endpoint", ""),
            model=obj.get("model", ""),
            auth_env=obj.get("auth_env", "GEOPROBE_API_TOKEN"),
        )


@dataclass(frozen=True)
class ToolsSpec:
    """Where tool calls go: a synthetic world file or live HTTP endpoints."""

    mode: str = TOOLS_SYNTHETIC
    world: str | None = None
    base_url: str = ""
    auth_env: str = ""
    timeout_s: float = DEFAULT_TIMEOUT_S
    retries: int = DEFAULT_RETRIES
    backoff_s: float = DEFAULT_BACKOFF_S
    top_k: int = DEFAULT_TOP_K

    def __post_init__(self):
        if self.mode not in (TOOLS_SYNTHETIC, TOOLS_LIVE):
            raise ConfigError(f"unknown tools mode: {self.mode!r}")
        if self.mode == TOOLS_LIVE and not self.base_url:
            raise ConfigError("live tools need a base_url")
        if self.mode == TOOLS_SYNTHETIC and not self.world:
            raise ConfigError("synthetic tools need a world file")

    def endpoints(self) -> dict[Tool, EndpointConfig]:
        if self.mode != TOOLS_LIVE:
            raise ConfigError("endpoints are only defined for live tools")
        return endpoints_for_base(
            self.base_url, self.auth_env, timeout_s=self.timeout_s,
            retries=self.retries, backoff_s=self.backoff_s, top_k=self.top_k)

    def to_json(self) -> dict:
        if self.mode == TOOLS_SYNTHETIC:
            return {"mode": self.mode, "world": self.world}
        return {
            "mode": self.mode,
            "base_url": self.base_url,
            "auth_env": self.auth_env,
            "timeout_s": self.timeout_s,
            "retries": self.retries,
            "backoff_s": self.backoff_s,
            "top_k": self.top_k,
        }

    @classmethod
    def from_json(cls, obj) -> "ToolsSpec":
        if not isinstance(obj, dict):
            raise ConfigError("tools must be an object")
        try:
            return cls(
                mode=obj.get("mode", TOOLS_SYNTHETIC),
                world=obj.get("world"),
                base_url=obj.get("base_url", ""),
                auth_env=obj.get("auth_env", ""),
                timeout_s=float(obj.get("timeout_s", DEFAULT_TIMEOUT_S)),
                retries=int(obj.get("retries", DEFAULT_RETRIES)),
                backoff_s=float(obj.get("backoff_s", DEFAULT_BACKOFF_S)),
                top_k=int(obj.get("top_k", DEFAULT_TOP_K)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad tools settings: {exc}")


def _ablation_from_json(obj) -> AblationConfig:
    if obj is None:
        return AblationConfig()
    if not isinstance(obj, list) or not all(isinstance(t, str) for t in obj):
        raise ConfigError("ablation must be a list of enabled tool names")
    enabled = set()
    for name in obj:
        try:
            enabled.add(Tool(name))
        except ValueError:
            raise ConfigError(f"unknown tool in ablation list: {name!r}")
    return AblationConfig(frozenset(enabled))


@dataclass(frozen=True)
class RunConfig:
    """Everything one run or benchmark needs, minus the secrets."""

    gazetteer: str | None = None
    backend: BackendSpec = field(default_factory=BackendSpec)
    tools: ToolsSpec = field(default_factory=lambda: ToolsSpec(world="world.json"))
    ablation: AblationConfig = field(default_factory=AblationConfig)
    tag_table: str | None = None
    max_steps: int = DEFAULT_MAX_STEPS
    max_parallel: int = DEFAULT_MAX_PARALLEL
    context_budget: int = DEFAULT_CONTEXT_BUDGET
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.max_parallel < 1:
            raise ConfigError("max_parallel must be >= 1")
        if self.context_budget < 1:
            raise ConfigError("context_budget must be >= 1")
        if self.gazetteer is None and self.tools.mode != TOOLS_SYNTHETIC:
            raise ConfigError("a gazetteer path is required outside synthetic mode")

    def to_json(self) -> dict:
        return {
            "gazetteer": self.gazetteer,
            "backend": self.backend.to_json(),
            "tools": self.tools.to_json(),
            "ablation": sorted(t.value for t in self.ablation.enabled_tools),
            "tag_table": self.tag_table,
            "max_steps": self.max_steps,
            "max_parallel": self.max_parallel,
            "context_budget": self.context_budget,
            "seed": self.seed,
            "out_dir": self.out_dir,
        }

    def config_hash(self) -> str:
        return canonical_hash(self.to_json())

    @classmethod
    def from_json(cls, obj, base_dir: Path | None = None) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        known = {"gazetteer", "backend", "tools", "ablation", "tag_table",
                 "max_steps", "max_parallel", "context_budget", "seed", "out_dir"}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        def path_of(value):
            if value is None:
                return None
            value = str(value)
            if base_dir is not None and not Path(value).is_absolute():
                return str(base_dir / value)
            return value

        tools = ToolsSpec.from_json(obj.get("tools", {"mode": TOOLS_SYNTHETIC,
                                                      "world": "world.json"}))
        if tools.world is not None:
            tools = dataclasses.replace(tools, world=path_of(tools.world))
        try:
            return cls(
                gazetteer=path_of(obj.get("gazetteer")),
                backend=BackendSpec.from_json(obj.get("backend", {})),
                tools=tools,
                ablation=_ablation_from_json(obj.get("ablation")),
                tag_table=path_of(obj.get("tag_table")),
                max_steps=int(obj.get("max_steps", DEFAULT_MAX_STEPS)),
                max_parallel=int(obj.get("max_parallel", DEFAULT_MAX_PARALLEL)),
                context_budget=int(obj.get("context_budget", DEFAULT_CONTEXT_BUDGET)),
                seed=int(obj.get("seed", 0)),
                out_dir=path_of(obj.get("out_dir", "out")),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}")


def load_config(path) -> RunConfig:
    """Parse and validate a config file. Referenced files must exist."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    cfg = RunConfig.from_json(obj, base_dir=path.parent)
    validate_files(cfg)
    return cfg


def validate_files(cfg: RunConfig) -> None:
    """Check referenced files before anything touches the network."""
    if cfg.gazetteer is not None and not Path(cfg.gazetteer).exists():
        raise ConfigError(f"gazetteer file not found: {cfg.gazetteer}")
    if cfg.tools.mode == TOOLS_SYNTHETIC:
        assert cfg.tools.world is not None
        if not Path(cfg.tools.world).exists():
            raise ConfigError(f"world file not found: {cfg.tools.world}")
    if cfg.tag_table is not None and not Path(cfg.tag_table).exists():
        raise ConfigError(f"tag table file not found: {cfg.tag_table}")


def build_backend(cfg: RunConfig):
    """Instantiate the planner backend named by the config."""
    if cfg.backend.kind == BACKEND_SCRIPTED:
        from .planner import scripted_salience_policy
        return scripted_salience_policy()
    from .planner import LlmBackend
    return LlmBackend(
        endpoint=cfg.backend.endpoint,
        model=cfg.backend.model,
        auth_env=cfg.backend.auth_env,
        timeout_s=cfg.tools.timeout_s,
    )
