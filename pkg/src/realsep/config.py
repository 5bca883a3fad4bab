"""Central defaults shared by the library entry points and the command line.

Every command-line flag falls back to a field of :data:`DEFAULTS`.  A JSON
config file passed with ``--config`` may override any subset of the fields::

    {"level": [2, 2], "multistarts": 20, "survey_restarts": 5}
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Defaults:
    level: tuple = (2, 2)
    multistarts: int = 20
    sdp_gap: float = 1e-9
    sdp_feas: float = 1e-9
    sdp_max_iter: int = 200
    scan_samples: int = 100
    scan_low: float = -1.0
    scan_high: float = 1.0
    scan_step: float = 0.05
    scan_fd_eps: float = 1e-4
    scan_refine_top: int = 3
    survey_points: int = 400
    survey_full_points: int = 40000
    survey_restarts: int = 5
    survey_threshold: float = 0.01
    seed: int = 0

    def replace(self, **kw) -> "Defaults":
        unknown = set(kw) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "level" in kw:
            kw["level"] = tuple(kw["level"])
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["level"] = list(self.level)
        d["schema_version"] = SCHEMA_VERSION
        return d


DEFAULTS = Defaults()


def load_config(path) -> Defaults:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    data.pop("schema_version", None)
    return DEFAULTS.replace(**data)
