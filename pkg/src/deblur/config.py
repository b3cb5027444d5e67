"""Serialized run configuration shared by every command."""

import copy
import hashlib
import json

from .degradation import NOISE_PRESETS, NoiseSpec
from .errors import ParameterError
from .objective import ObjectiveConfig
from .solver import ES_PROFILES, PROFILES, SolverConfig

__all__ = ["SCHEMA_VERSION", "RunConfig", "LAMBDA_GRID"]

SCHEMA_VERSION = 1

LAMBDA_GRID = [1, 5e-1, 2e-1, 1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3,
               5e-4, 2e-4, 1e-4, 5e-5, 2e-5, 1e-5, 1e-6]

_DEFAULT = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "data_profile": "synthetic",
    "es_profile": "low_noise",
    "sizing": {"kernel_size": None},
    "objective": ObjectiveConfig().to_dict(),
    "solver": {k: v for k, v in SolverConfig().to_dict().items() if k not in
               ("seed", "lr_image", "lr_kernel", "patience")},
    "noise": NoiseSpec().to_dict(),
    "synth": {"case_id": "0", "boundary": "pad"},
    "sweep": {"axis": "lambda", "values": None, "levels": 5, "noise_presets": None},
    "paths": {"clean": None, "kernel": None, "input": None, "case": None,
              "groundtruth": None, "groundtruth_kernel": None, "cases": None,
              "id_list": None, "estimates": None, "out": "out"},
}


def _merge(base, update, path=""):
    for key, value in update.items():
        if key not in base:
            raise ParameterError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, path + key + ".")
        else:
            base[key] = value
    return base


class RunConfig:
    """Nested configuration with every default expanded.

    ``solver`` may also carry ``lr_image``, ``lr_kernel`` and ``patience``;
    when absent they come from ``data_profile`` and ``es_profile``.
    """

    def __init__(self, data=None):
        self.data = copy.deepcopy(_DEFAULT)
        for key in ("lr_image", "lr_kernel", "patience"):
            self.data["solver"].setdefault(key, None)
        if data:
            if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
                raise ParameterError(f"unsupported schema_version {data['schema_version']}")
            _merge(self.data, data)
        self.validate()

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                return cls(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ParameterError(f"config {path} is not valid JSON: {exc}") from exc

    def to_dict(self):
        return copy.deepcopy(self.data)

    def to_json(self):
        return json.dumps(self.data, indent=2, sort_keys=True)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    def set(self, dotted, value):
        """Override one value, e.g. ``set("objective.lambda_x", 1e-4)``."""
        keys = dotted.split(".")
        node = self.data
        for k in keys[:-1]:
            if k not in node or not isinstance(node[k], dict):
                raise ParameterError(f"unknown config key {dotted!r}")
            node = node[k]
        if keys[-1] not in node:
            raise ParameterError(f"unknown config key {dotted!r}")
        node[keys[-1]] = value
        self.validate()

    def hash(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]

    def validate(self):
        if self.data["data_profile"] not in PROFILES:
            raise ParameterError(f"data_profile must be one of {sorted(PROFILES)}")
        if self.data["es_profile"] not in ES_PROFILES:
            raise ParameterError(f"es_profile must be one of {sorted(ES_PROFILES)}")
        if self.data["sweep"]["axis"] not in ("lambda", "kernel_size_level", "noise"):
            raise ParameterError("sweep.axis must be lambda, kernel_size_level or noise")
        for preset in self.data["sweep"]["noise_presets"] or []:
            if preset not in NOISE_PRESETS:
                raise ParameterError(f"unknown noise preset {preset!r}")
        self.objective()
        self.solver()
        self.noise()

    def resolved(self):
        """Copy with profile-dependent solver values filled in."""
        out = RunConfig.__new__(RunConfig)
        out.data = self.to_dict()
        out.data["solver"].update({k: v for k, v in self.solver().to_dict().items()
                                   if k in ("lr_image", "lr_kernel", "patience")})
        return out

    def objective(self):
        return ObjectiveConfig(**self.data["objective"])

    def solver(self):
        s = dict(self.data["solver"])
        s.pop("seed", None)
        overrides = {k: v for k, v in s.items() if v is not None}
        try:
            return SolverConfig.profile(self.data["data_profile"], self.data["es_profile"],
                                        seed=self.data["seed"], **overrides)
        except TypeError as exc:
            raise ParameterError(str(exc)) from exc

    def noise(self):
        return NoiseSpec(**{**self.data["noise"], "seed": self.data["noise"].get("seed", 0)})

    @property
    def paths(self):
        return self.data["paths"]
