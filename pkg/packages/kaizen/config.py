"""Process-level settings for kaizen-cssl.

Settings are read from ``KAIZEN_*`` environment variables (and an optional
``.env`` file at the working directory) and cached through
:func:`get_settings`. Experiment-level knobs live in
:mod:`packages.kaizen.contracts.experiment`, not here.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Any, ClassVar, Literal, get_origin

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict, SettingsError
from pydantic_settings.sources import DotEnvSettingsSource, EnvSettingsSource

DeviceName = Literal["auto", "cpu", "cuda", "mps"]


class _StrictKaizenSource:
    """Behaviour shared by the env and dotenv sources.

    ``list[str]`` fields take ``a,b,c`` instead of JSON, and a ``KAIZEN_*``
    key that names no field is an error rather than silently ignored.
    """

    def prepare_field_value(self, field_name: str, field, value: Any, value_is_complex: bool) -> Any:
        if isinstance(value, str) and get_origin(field.annotation) is list:
            return value
        return super().prepare_field_value(field_name, field, value, value_is_complex)

    def _known_keys(self) -> set[str]:
        keys = {
            env_name.upper()
            for field_name, field in self.settings_cls.model_fields.items()
            for _, env_name, _ in self._extract_field_info(field, field_name)
        }
        return keys | {key.upper() for key in self.settings_cls.allowed_unknown_env_keys}

    def reject_unknown_keys(self) -> None:
        prefix = (self.env_prefix or "").upper()
        if not prefix:
            return
        known = self._known_keys()
        unknown = sorted(
            key for key in self.env_vars if key.upper().startswith(prefix) and key.upper() not in known
        )
        if unknown:
            raise SettingsError(
                f"Unexpected environment variables for {self.settings_cls.__name__}: {', '.join(unknown)}"
            )


class KaizenEnvSource(_StrictKaizenSource, EnvSettingsSource):
    def __call__(self) -> dict[str, Any]:
        self.reject_unknown_keys()
        return super().__call__()


class KaizenDotEnvSource(_StrictKaizenSource, DotEnvSettingsSource):
    """``.env`` reader; unprefixed keys belong to other tools and are dropped."""

    def __call__(self) -> dict[str, Any]:
        self.reject_unknown_keys()
        fields = self.settings_cls.model_fields
        return {key: value for key, value in super().__call__().items() if key in fields}


class AppSettings(BaseSettings):
    """Settings sourced from ``KAIZEN_*`` environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="KAIZEN_",
        extra="forbid",
    )

    # Read directly by the version provider and the test gates.
    allowed_unknown_env_keys: ClassVar[frozenset[str]] = frozenset(
        {
            "KAIZEN_VERSION",
            "KAIZEN_GIT_SHA",
            "KAIZEN_BUILD_TIME",
            "KAIZEN_RUN_DESK_TESTS",
            "KAIZEN_DESK_DATA_ROOT",
        }
    )

    env: str = "development"
    name: str = "kaizen-cssl"
    log_level: str = "INFO"
    dataset_root: Path = Path("data")
    output_root: Path = Path("runs")
    device: DeviceName = "auto"
    num_workers: int = Field(default=0, ge=0)

    # HTTP service
    api_host: str = "127.0.0.1"
    api_port: int = Field(default=8000, ge=1, le=65535)
    cors_allow_origins: list[str] = Field(default_factory=lambda: ["http://localhost:3000"])
    cors_allow_methods: list[str] = Field(default_factory=lambda: ["GET", "POST"])
    cors_allow_headers: list[str] = Field(default_factory=lambda: ["*"])
    cors_allow_credentials: bool = False

    @field_validator("dataset_root", "output_root", mode="after")
    @classmethod
    def _expand_home(cls, value: Path) -> Path:
        return value.expanduser()

    @field_validator("cors_allow_origins", "cors_allow_methods", "cors_allow_headers", mode="before")
    @classmethod
    def _split_lists(cls, value: Any) -> Any:
        """``"a, b"`` -> ``["a", "b"]``; an empty value means ``["*"]``."""
        if value is None:
            return ["*"]
        if isinstance(value, str):
            value = value.split(",")
        if isinstance(value, (list, tuple, set)):
            return [str(item).strip() for item in value if str(item).strip()] or ["*"]
        return value

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls,
        init_settings,
        env_settings,
        dotenv_settings,
        file_secret_settings,
    ):
        return (
            init_settings,
            KaizenEnvSource(settings_cls),
            KaizenDotEnvSource(settings_cls),
            file_secret_settings,
        )


@lru_cache
def get_settings() -> AppSettings:
    return AppSettings()


def reset_settings_cache() -> None:
    """Forget the cached settings so the next call re-reads the environment."""
    get_settings.cache_clear()
