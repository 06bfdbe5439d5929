# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Road-network inference by iterative graph construction."""

__version__ = "0.1.0"

from mapinfer.models import (
    RunConfig,
    TracerConfig,
    OracleConfig,
    SkeletonConfig,
    MetricsConfig,
    WorldSpec,
)
from mapinfer.loader import load_config, apply_overrides, dump_config
from mapinfer.geograph import BoundingBox, SpatialGraph, load_graph, save_graph
from mapinfer.raster import RasterGrid, load_raster, save_raster
from mapinfer.tracer import (
    DecisionInput,
    DecisionOutput,
    SearchState,
    run_search,
    run_multi_seed,
)
from mapinfer.oracle import OracleDecider, OracleState, map_match
from mapinfer.skeleton import extract_road_graph
from mapinfer.metrics import junction_metric, topo, sp_metric
from mapinfer.synthworld import SensorDecider, gen_network, rasterize
from mapinfer.render import MapRenderer

__all__ = [
    "RunConfig",
    "TracerConfig",
    "OracleConfig",
    "SkeletonConfig",
    "MetricsConfig",
    "WorldSpec",
    "load_config",
    "apply_overrides",
    "dump_config",
    "BoundingBox",
    "SpatialGraph",
    "load_graph",
    "save_graph",
    "RasterGrid",
    "load_raster",
    "save_raster",
    "DecisionInput",
    "DecisionOutput",
    "SearchState",
    "run_search",
    "run_multi_seed",
    "OracleDecider",
    "OracleState",
    "map_match",
    "extract_road_graph",
    "junction_metric",
    "topo",
    "sp_metric",
    "SensorDecider",
    "gen_network",
    "rasterize",
    "MapRenderer",
]
