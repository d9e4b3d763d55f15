"""Application configuration shared by the CLI and the HTTP service."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .backend import Backend, BackendConfig, HttpBackend, MockBackend

# Embedding endpoints default to this model id; override in the config file
# or per call.
DEFAULT_EMBEDDING_MODEL = "sentence-transformers/all-mpnet-base-v2"
DEFAULT_API_KEY_ENV = "ARGMINE_API_KEY"


@dataclass(frozen=True)
class AppConfig:
    endpoint_url: str = ""
    model_id: str = ""
    api_key_env: str = DEFAULT_API_KEY_ENV
    embedding_model_id: str = DEFAULT_EMBEDDING_MODEL
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    max_concurrent: int = 4
    template_dir: Optional[Path] = None
    job_dir: Path = Path("jobs")

    def api_key(self) -> Optional[str]:
        return os.environ.get(self.api_key_env) or None

    def chat_backend_config(self) -> BackendConfig:
        if not self.endpoint_url or not self.model_id:
            raise ValueError(
                "endpoint_url and model_id are required for an HTTP backend; "
                "set them in the config file or via flags"
            )
        return BackendConfig(
            endpoint_url=self.endpoint_url,
            model_id=self.model_id,
            api_key=self.api_key(),
            temperature=self.temperature,
            timeout=self.timeout,
            max_retries=self.max_retries,
            max_concurrent=self.max_concurrent,
        )

    def embedding_backend_config(self) -> BackendConfig:
        base = self.chat_backend_config()
        return BackendConfig(
            endpoint_url=base.endpoint_url,
            model_id=self.embedding_model_id,
            api_key=base.api_key,
            temperature=0.0,
            timeout=self.timeout,
            max_retries=self.max_retries,
            max_concurrent=self.max_concurrent,
        )


def load_app_config(path: Union[Path, str]) -> AppConfig:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    known = {
        "endpoint_url", "model_id", "api_key_env", "embedding_model_id",
        "temperature", "timeout", "max_retries", "max_concurrent",
        "template_dir", "job_dir",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "template_dir" in raw and raw["template_dir"] is not None:
        raw["template_dir"] = Path(raw["template_dir"])
    if "job_dir" in raw:
        raw["job_dir"] = Path(raw["job_dir"])
    return AppConfig(**raw)


def make_backend(app: AppConfig, kind: str = "http") -> Backend:
    """Resolve a backend by kind: "mock" is fully offline, "http" talks to
    the configured endpoint."""
    if kind == "mock":
        return MockBackend()
    if kind == "http":
        return HttpBackend(app.chat_backend_config())
    raise ValueError(f"unknown backend kind {kind!r}")
