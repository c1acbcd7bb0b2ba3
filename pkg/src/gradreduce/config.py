"""JSON experiment configuration: schema, defaults and model builders."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .errors import ConfigInvalid
from .landscapes import Quadratic, QuarticDoubleWell
from .potentials import Potential
from .reduction import ReducedPotential
from .spectral import SpectralBasis

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "domain": _obj({"length": _pos}),
    "basis": _obj({"n_modes": {"type": "integer", "minimum": 4},
                   "n_quad": {"type": ["integer", "null"]}}),
    "potential": _obj({
        "kind": {"enum": ["zero", "linear", "clamped_double_well"]},
        "c": _num,
        "epsilon": _num,
        "r_core": _pos,
        "r_cut": _pos,
        "lipschitz_bound": {"type": ["number", "null"]},
    }),
    "landscape": _obj({
        "kind": {"enum": ["reduced", "quadratic", "quartic_double_well"]},
        "stiffness": _vec,
        "a": _pos,
        "k": _pos,
        "dim": {"type": "integer", "minimum": 1},
    }),
    "reduction": _obj({
        "m": {"type": "integer", "minimum": 1},
        "tol": _pos,
        "max_iter": {"type": "integer", "minimum": 1},
        "seeds": {"type": "array", "items": _vec},
        "scan": _obj({"lower": _num, "upper": _num, "n": {"type": "integer", "minimum": 2}}),
    }),
    "dynamics": _obj({
        "dt": _pos,
        "T": _pos,
        "u0": _vec,
        "save_every": {"type": "integer", "minimum": 1},
        "cutoffs": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2},
        "burn_in_threshold": _pos,
        "slope_windows": _obj({k: {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
                               for k in ("dist_flat", "dist_phi0", "dist_static",
                                         "eta_norm", "etaprime_norm")}),
    }),
    "sde": _obj({
        "nu": {"type": "number", "minimum": 0},
        "dt": _pos,
        "T": _pos,
        "n_paths": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "mu0": _vec,
    }),
    "fp": _obj({
        "lower": _vec,
        "upper": _vec,
        "n_cells": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "nu": _pos,
        "dt": {"type": ["number", "null"]},
        "T": _pos,
        "init": {"enum": ["gibbs", "point_mass"]},
        "x0": _vec,
        "save_every": {"type": "integer", "minimum": 1},
    }),
    "ldp": _obj({
        "alpha": _pos,
        "K": {"type": "integer", "minimum": 8},
        "T0": _pos,
        "tol": _pos,
        "rel_tol": _pos,
        "max_iter": {"type": "integer", "minimum": 1},
        "optimizer": {"enum": ["quasi_newton", "gradient_descent_momentum"]},
        "x_hat": {"type": ["array", "null"], "items": _num},
        "scan": _obj({"lower": _vec, "upper": _vec,
                      "n": {"type": "array", "items": {"type": "integer", "minimum": 1}}}),
        "mane": _obj({"lower": _vec, "upper": _vec,
                      "n": {"type": "array", "items": {"type": "integer", "minimum": 2}},
                      "n_test_functions": {"type": "integer", "minimum": 0},
                      "seed": {"type": "integer", "minimum": 0}}),
    }),
    "output": _obj({"directory": {"type": "string"},
                    "formats": {"type": "array", "items": {"enum": ["csv"]}}}),
})

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "domain": {"length": math.pi},
    "basis": {"n_modes": 64, "n_quad": None},
    "potential": {"kind": "clamped_double_well", "epsilon": 2.0, "r_core": 1.1, "r_cut": 1.8,
                  "lipschitz_bound": 11.0},
    "landscape": {"kind": "reduced"},
    "reduction": {"m": 3, "tol": 1e-12, "max_iter": 200,
                  "scan": {"lower": -1.5, "upper": 1.5, "n": 61}},
    "dynamics": {"dt": 1e-3, "T": 20.0, "u0": [0.1], "save_every": 10,
                 "cutoffs": list(range(3, 13)), "burn_in_threshold": 1e-6,
                 "slope_windows": {"dist_flat": [0.7, 1.3], "dist_phi0": [1.7, 2.3],
                                   "dist_static": [1.7, 2.3], "eta_norm": [1.0, 1e9],
                                   "etaprime_norm": [1.0, 1e9]}},
    "sde": {"nu": 0.05, "dt": 1e-3, "T": 1.0, "n_paths": 1000, "seed": 0},
    "fp": {"nu": 0.3, "dt": None, "T": 1.0, "init": "gibbs", "save_every": 100},
    "ldp": {"alpha": 0.25, "K": 64, "T0": 2.0, "tol": 1e-5, "rel_tol": 1e-3, "max_iter": 20000,
            "optimizer": "gradient_descent_momentum", "x_hat": None,
            "mane": {"n_test_functions": 50, "seed": 0}},
    "output": {"directory": "out", "formats": ["csv"]},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated configuration; ``data`` holds the full tree with defaults filled in."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigInvalid("configuration must be a JSON object")
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigInvalid(f"{where}: {exc.message}") from None
        cfg = cls(_merge(DEFAULTS, raw))
        cfg.check()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigInvalid(f"cannot read {path}: {exc}") from None
        return cls.from_json(text)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True, allow_nan=False) + "\n"

    def sha256(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def __getitem__(self, key):
        return self.data[key]

    # -- guards re-checked at load ------------------------------------------------

    def check(self):
        d = self.data
        n = d["basis"]["n_modes"]
        nq = d["basis"]["n_quad"]
        if nq is not None and nq < 2 * n:
            raise ConfigInvalid(f"basis/n_quad={nq} must be >= 2 n_modes = {2 * n}")
        m = d["reduction"]["m"]
        if not m < n:
            raise ConfigInvalid(f"reduction/m={m} must be < n_modes={n}")
        if len(d["dynamics"]["u0"]) > n:
            raise ConfigInvalid("dynamics/u0 has more coefficients than n_modes")
        if any(not 1 <= c < n for c in d["dynamics"]["cutoffs"]):
            raise ConfigInvalid("dynamics/cutoffs must lie in 1..n_modes-1")
        T, dt = d["dynamics"]["T"], d["dynamics"]["dt"]
        if abs(round(T / dt) * dt - T) > 1e-9 * max(T, 1.0):
            raise ConfigInvalid("dynamics/T must be a multiple of dynamics/dt")
        p = d["potential"]
        if p["kind"] == "linear" and "c" not in p:
            raise ConfigInvalid("potential/c is required for a linear potential")
        if p["kind"] == "clamped_double_well" and not 0 < p["r_core"] < p["r_cut"]:
            raise ConfigInvalid("potential needs 0 < r_core < r_cut")
        dim = self.dim
        for sec, keys in (("sde", ("mu0",)), ("fp", ("lower", "upper", "n_cells", "x0")),
                          ("ldp", ("x_hat",))):
            for k in keys:
                v = d[sec].get(k)
                if v is not None and len(v) != dim:
                    raise ConfigInvalid(f"{sec}/{k} must have {dim} entries")
        for k in ("lower", "upper", "n"):
            for sec in ("scan", "mane"):
                v = d["ldp"].get(sec, {}).get(k)
                if v is not None and len(v) != dim:
                    raise ConfigInvalid(f"ldp/{sec}/{k} must have {dim} entries")
        if d["fp"].get("init") == "point_mass" and "x0" not in d["fp"]:
            raise ConfigInvalid("fp/x0 is required for a point-mass initial density")
        if d["landscape"]["kind"] == "reduced":
            self.reduced_potential()  # raises ContractionViolated

    # -- builders -------------------------------------------------------------------

    @property
    def dim(self) -> int:
        ls = self.data["landscape"]
        if ls["kind"] == "reduced":
            return self.data["reduction"]["m"]
        if ls["kind"] == "quadratic":
            return len(ls.get("stiffness", [1.0]))
        return ls.get("dim", 1)

    def basis(self) -> SpectralBasis:
        return SpectralBasis(self.data["domain"]["length"], self.data["basis"]["n_modes"],
                             self.data["basis"]["n_quad"])

    def potential(self) -> Potential:
        p = self.data["potential"]
        if p["kind"] == "zero":
            return Potential.zero()
        if p["kind"] == "linear":
            return Potential.linear(p["c"])
        try:
            return Potential.clamped_double_well(p["epsilon"], p["r_core"], p["r_cut"],
                                                 p.get("lipschitz_bound"))
        except ValueError as exc:
            raise ConfigInvalid(f"potential: {exc}") from None

    def reduced_potential(self, m: int | None = None) -> ReducedPotential:
        r = self.data["reduction"]
        return ReducedPotential(self.basis(), self.potential(), m or r["m"],
                                tol=r["tol"], max_iter=r["max_iter"])

    def landscape(self):
        ls = self.data["landscape"]
        if ls["kind"] == "reduced":
            return self.reduced_potential()
        if ls["kind"] == "quadratic":
            return Quadratic(tuple(ls.get("stiffness", [1.0])))
        return QuarticDoubleWell(ls.get("a", 1.0), ls.get("dim", 1), ls.get("k", 1.0))

