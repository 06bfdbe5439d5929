# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Pydantic models for run configuration and world specifications."""

from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class Section(BaseModel):
    """Base for config sections; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


class TracerConfig(Section):
    """Iterative search tunables."""

    D: float = Field(12.0, gt=0)
    T: float = Field(0.4, ge=0, le=1)
    a: int = Field(64, ge=1)
    d: int = Field(256, ge=1)
    resolution: float = Field(0.6, gt=0)
    max_steps: Optional[int] = Field(None, gt=0)
    margin: float = Field(0.0, ge=0)
    seed_min_prob: float = Field(0.5, ge=0, le=1)
    seed_spacing: float = Field(60.0, gt=0)


class OracleConfig(Section):
    """Ground-truth oracle and label generation."""

    w: int = Field(10, ge=1)
    match_sigma: Optional[float] = Field(None, gt=0)
    resample: Optional[float] = Field(None, gt=0)
    covered_tolerance: float = Field(30.0, ge=0, le=180)
    seed: int = 0
    count: int = Field(100, ge=1)
    max_n: int = Field(50, ge=1)
    jitter_sigma: float = Field(0.0, ge=0)
    session_steps: int = Field(200, ge=1)


class SkeletonConfig(Section):
    """Segmentation post-processing."""

    threshold: float = Field(0.5, ge=0)
    epsilon: float = Field(1.5, ge=0)
    min_segment: float = Field(20.0, ge=0)
    min_component: float = Field(80.0, ge=0)
    extend_dist: float = Field(25.0, ge=0)
    junction_merge: float = Field(15.0, ge=0)


class MetricsConfig(Section):
    """Map comparison parameters."""

    match_radius: float = Field(12.0, gt=0)
    angle_tol: float = Field(30.0, gt=0, le=180)
    bearing_reach: float = Field(24.0, gt=0)
    topo_seeds: int = Field(50, ge=1)
    drive_dist: float = Field(300.0, gt=0)
    hole_radius: float = Field(12.0, gt=0)
    interval: float = Field(6.0, gt=0)
    sp_pairs: int = Field(200, ge=1)
    similarity: float = Field(0.05, ge=0, le=1)
    seed: int = 0


class WorldSpec(Section):
    """Synthetic world description."""

    seed: int = 0
    extent: float = Field(1000.0, gt=0)
    style: Literal["grid", "radial", "organic", "ring"] = "grid"
    road_width: float = Field(8.0, gt=0)
    occlusion_rate: float = Field(0.0, ge=0, le=1)
    noise_sigma: float = Field(0.0, ge=0)
    spacing: float = Field(150.0, gt=0)
    resolution: float = Field(1.0, gt=0)


class SensorConfig(Section):
    """Raster-reading decider."""

    lookahead: float = Field(1.5, gt=0)
    suppress_radius: float = Field(5.0, ge=0)
    samples: int = Field(8, ge=1)


class ToyConfig(Section):
    """Toy trainable decider."""

    pool: int = Field(16, ge=1)
    epochs: int = Field(20, ge=1)
    lr: float = Field(0.5, gt=0)
    seed: int = 0
    sessions: int = Field(4, ge=1)


class ExternalConfig(Section):
    """External decider child process."""

    timeout: float = Field(30.0, gt=0)


class WorkspaceConfig(Section):
    """Artifact locations."""

    root: Path = Path(".")
    run: str = "default"

    @property
    def world_dir(self) -> Path:
        return self.root / "world"

    @property
    def run_dir(self) -> Path:
        return self.root / "runs" / self.run

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"


class RunConfig(Section):
    """Every tunable of every module, fully defaulted."""

    tracer: TracerConfig = Field(default_factory=TracerConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    skeleton: SkeletonConfig = Field(default_factory=SkeletonConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    world: WorldSpec = Field(default_factory=WorldSpec)
    sensor: SensorConfig = Field(default_factory=SensorConfig)
    toy: ToyConfig = Field(default_factory=ToyConfig)
    external: ExternalConfig = Field(default_factory=ExternalConfig)
    workspace: WorkspaceConfig = Field(default_factory=WorkspaceConfig)
