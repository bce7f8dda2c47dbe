"""Modeled kernel environment and schedule exploration."""

from rcusim.sim.explore import End, ExploreStats, ReplayError, Terminal, explore, replay, run_random
from rcusim.sim.memory import MemoryModel, StoreBuffers
from rcusim.sim.world import Instr, TickModel, VThread, World, WorldConfig

__all__ = [
    "End",
    "ExploreStats",
    "Instr",
    "MemoryModel",
    "ReplayError",
    "StoreBuffers",
    "Terminal",
    "TickModel",
    "VThread",
    "World",
    "WorldConfig",
    "explore",
    "replay",
    "run_random",
]
