"""Experiment configuration files.

An INI-style file with an ``[experiment]`` section and one section per module::

    [experiment]
    kernel = uniform(1.0)
    seed = 20240611
    output_dir = runs/

    [hydro]
    N_values = [100, 1000, 10000]
    replicas = 20

Values are parsed as Python literals where possible and kept as strings
otherwise.
"""

from __future__ import annotations

import ast
import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

DEFAULT_SEED = 20240611

DEFAULTS: dict[str, dict[str, Any]] = {
    "hydro": {"N_values": [100, 1000, 10000], "replicas": 20, "T": 1.0, "k": 6, "dx": 0.005,
              "substeps": 4, "init": "exp(1.0)", "max_discrepancy": 0.05},
    "speed": {"N_values": [1, 2, 4, 8, 16, 32, 64], "T": 200.0, "burn_in": 20.0, "replicas": 50},
    "wave": {"c": "1.5a", "tol": 1e-9, "T": 20.0, "k": 6, "dx": 0.01, "substeps": 4,
             "shape_times": [0.5, 1.0], "shape_tol": 0.02, "speed_tol": 0.02,
             "slow_c": "0.5a"},
}


def _literal(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


@dataclass
class ExperimentConfig:
    kernel: str = "uniform(1.0)"
    seed: int = DEFAULT_SEED
    output_dir: str = "."
    blocks: dict[str, dict[str, Any]] = field(default_factory=dict)

    def block(self, name: str) -> dict[str, Any]:
        """Module parameters with defaults filled in."""
        out = dict(DEFAULTS.get(name, {}))
        out.update(self.blocks.get(name, {}))
        return out

    def with_block(self, name: str, **values) -> "ExperimentConfig":
        blocks = {k: dict(v) for k, v in self.blocks.items()}
        blocks.setdefault(name, {}).update(values)
        return ExperimentConfig(self.kernel, self.seed, self.output_dir, blocks)

    def to_dict(self) -> dict:
        return {"kernel": self.kernel, "seed": self.seed, "output_dir": self.output_dir,
                "blocks": {k: dict(v) for k, v in self.blocks.items()}}

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["experiment"] = {"kernel": self.kernel, "seed": repr(self.seed),
                            "output_dir": repr(self.output_dir)}
        for name, vals in self.blocks.items():
            cp[name] = {k: repr(v) for k, v in vals.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_string(text)
        exp = cp["experiment"] if cp.has_section("experiment") else {}
        blocks = {s: {k: _literal(v) for k, v in cp[s].items()}
                  for s in cp.sections() if s != "experiment"}
        seed = int(_literal(exp.get("seed", str(DEFAULT_SEED))))
        out = _literal(exp.get("output_dir", "'.'"))
        return cls(kernel=str(exp.get("kernel", "uniform(1.0)")), seed=seed,
                   output_dir=str(out), blocks=blocks)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())
