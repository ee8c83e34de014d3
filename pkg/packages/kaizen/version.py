"""Version and environment information for run manifests."""

from __future__ import annotations

import os
import platform
from dataclasses import dataclass
from importlib import metadata

PACKAGE_NAME = "kaizen-cssl"


@dataclass(frozen=True)
class VersionInfo:
    """Holds version and build metadata for the package."""

    version: str
    git_sha: str
    build_time: str | None = None


def _installed_version(distribution: str) -> str | None:
    try:
        return metadata.version(distribution)
    except metadata.PackageNotFoundError:
        return None


def get_version_info() -> VersionInfo:
    """Return version information resolved from the environment."""

    version = (
        os.getenv("KAIZEN_VERSION") or _installed_version(PACKAGE_NAME) or "dev"
    )
    git_sha = os.getenv("KAIZEN_GIT_SHA") or os.getenv("GIT_SHA") or "unknown"
    build_time = os.getenv("KAIZEN_BUILD_TIME") or os.getenv("BUILD_TIME")

    return VersionInfo(
        version=version,
        git_sha=git_sha,
        build_time=build_time,
    )


def environment_versions() -> dict[str, str]:
    """Versions of the interpreter and numeric stack, for run manifests."""

    versions = {
        "python": platform.python_version(),
        PACKAGE_NAME: get_version_info().version,
    }
    for distribution in ("torch", "torchvision", "numpy"):
        versions[distribution] = _installed_version(distribution) or "missing"
    return versions
