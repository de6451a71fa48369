"""Cached benchmark runs shared by the acceptance suite and the module tests.

The benchmark is shear-compression, G = [[0, 0.5], [0.5, -0.3]] on a linear
ramp over [0, 1], on the 8x8 crossed mesh with the RunConfig default material.
"""

from __future__ import annotations

import time
from functools import lru_cache

from geodamage.config import RunConfig
from geodamage.evolution import run_energetic, run_viscous
from geodamage.rescaling import arclength_parametrize

BENCH = RunConfig()
TIMINGS: dict = {}


def _timed(key, fn):
    t0 = time.perf_counter()
    out = fn()
    TIMINGS[key] = time.perf_counter() - t0
    return out


@lru_cache(maxsize=None)
def energetic(k: int, homogeneous: bool = False):
    cfg = BENCH.with_overrides(homogeneous=homogeneous)
    return _timed(("energetic", k, homogeneous),
                  lambda: run_energetic(cfg.load(), cfg.law(), cfg.fe(), k, cfg.solver()))


@lru_cache(maxsize=None)
def viscous(k: int, eps: float, homogeneous: bool = False):
    cfg = BENCH.with_overrides(homogeneous=homogeneous)
    return _timed(("viscous", k, eps, homogeneous),
                  lambda: run_viscous(cfg.load(), cfg.law(), cfg.fe(), k, eps, cfg.solver()))


@lru_cache(maxsize=None)
def rescaled(k: int, eps: float):
    return arclength_parametrize(viscous(k, eps))
