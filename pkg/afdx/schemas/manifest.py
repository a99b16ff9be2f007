"""
afd-explorer - Run Manifest Schemas
"""
import enum
import os
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator


class Command(str, enum.Enum):
    SEARCH = "search"
    EVAL = "eval"
    BREAKDOWN = "breakdown"
    PLACEMENT_STUDY = "placement-study"


class RunManifest(BaseModel):
    """One CLI invocation: what to run, on which scenario, and where to write."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: Path
    command: Command
    output_dir: Path
    seed: int = Field(0, ge=0)
    overrides: dict[str, Any] = Field(default_factory=dict)

    @field_validator("output_dir")
    @classmethod
    def writable(cls, v: Path) -> Path:
        existing = v
        while not existing.exists() and existing != existing.parent:
            existing = existing.parent
        if not os.access(existing, os.W_OK):
            raise ValueError(f"output directory {v} is not writable")
        return v
