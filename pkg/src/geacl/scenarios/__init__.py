"""Runnable environments: synthetic populations, factory floor, disaster response."""

from __future__ import annotations

from ..config import RunConfig
from .common import MetricsReport, finish


def run(cfg: RunConfig):
    """Run the configured scenario; returns ``(MetricsReport, RunResult)``."""
    if cfg.scenario == "synthetic":
        from .synthetic import run_synthetic
        return run_synthetic(cfg)
    if cfg.scenario == "factory":
        from .factory import run_factory
        return run_factory(cfg)
    if cfg.scenario == "disaster":
        from .disaster import run_disaster
        return run_disaster(cfg)
    if cfg.scenario == "walkthrough":
        from .walkthrough import run_walkthrough
        w = run_walkthrough(cfg.seed)
        last = w.steps[-1]["D"]
        m = {"steps_passed": len({s["step"] for s in w.steps}),
             "arm_speed": w.steps[2]["arm_speed"][1],
             "rounds_to_all": w.steps[1]["rounds_to_all"],
             "final_D": last[-1]}
        return finish(cfg, w.result, m, {"steps": w.steps}), w.result
    raise ValueError(f"unknown scenario {cfg.scenario!r}")


__all__ = ["MetricsReport", "run"]
