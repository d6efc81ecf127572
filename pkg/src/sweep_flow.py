#!/usr/bin/env python3
"""Run an experiment sweep as a metaflow workflow."""
# std. lib
import datetime
import os

# external
from metaflow import FlowSpec, Parameter, step
from omegaconf import OmegaConf

# local
try:
    from src.configutil import config_hash, load_config
    from src.experiments import evaluate_point, finalize, grid_for
except ImportError:
    from configutil import config_hash, load_config
    from experiments import evaluate_point, finalize, grid_for


class PolymerSweep(FlowSpec):
    """Evaluate every grid point of an experiment config, one foreach branch per point."""
    config = Parameter("config", help="Experiment configuration json", required=True)
    mount = Parameter("mount", help="Where the current dir is mounted", required=False)
    outdir = Parameter("outdir", help="Where to save results", required=False)
    cache = Parameter("cache", help="Enumeration cache directory", required=False)

    @step
    def start(self):
        """Read and validate configuration, and build the grid."""
        self.start_time = datetime.datetime.now(datetime.timezone.utc).isoformat()
        curdir = self.mount or os.getcwd()
        cfg = load_config(os.path.join(curdir, self.config))
        self.cfg = OmegaConf.to_container(cfg, resolve=True)
        self.cache_dir = self.cache or cfg.cache_dir
        self.grid = list(enumerate(grid_for(cfg)))
        print(f"{cfg.experiment}: {len(self.grid)} grid points (config {config_hash(cfg)})")
        self.next(self.run_point, foreach="grid")

    @step
    def run_point(self):
        """Evaluate one grid point."""
        self.index, point = self.input
        self.rows = evaluate_point((self.cfg, point, self.cache_dir))
        print(f"Point {self.index}: {point} -> {len(self.rows)} rows")
        self.next(self.join)

    @step
    def join(self, inputs):
        """Collect rows in grid order and write the payloads."""
        # foreach branches finish in any order
        ordered = sorted(inputs, key=lambda inp: inp.index)
        self.results = [inp.rows for inp in ordered]
        # Need to re-assign cfg as the metaflow sub-job does not have it after a 'foreach' split
        self.cfg = inputs[0].cfg
        self.start_time = inputs[0].start_time
        cfg = load_config(self.cfg)
        manifest = finalize(cfg, self.results, self.outdir, self.start_time)
        self.passed = manifest.passed
        self.payloads = manifest.payloads
        for c in manifest.failures():
            print(f"FAILED {c['name']}: {c['detail']}")
        self.next(self.end)

    @step
    def end(self):
        """Display the payloads written."""
        print("Sweep complete;", "all checks passed" if self.passed else "some checks FAILED")
        for name, digest in self.payloads.items():
            print(f"\t{name} {digest}")


if __name__ == "__main__":
    PolymerSweep()
