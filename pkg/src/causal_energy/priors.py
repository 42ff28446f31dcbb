"""Prior table for the latent parameters of the demand model.

Normal entries are ``(loc, scale)`` in natural units.  LogNormal entries are
``(loc, scale)`` of the logarithm, so ``exp(loc)`` is the prior median.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import ValidationError

SIGMA_1 = 4.0
SIGMA_2 = 40.0
SIGMA_3 = 10.0

NORMAL = "Normal"
LOGNORMAL = "LogNormal"


@dataclass(frozen=True)
class PriorEntry:
    family: str
    loc: float
    scale: float

    def __post_init__(self):
        if self.family not in (NORMAL, LOGNORMAL):
            raise ValidationError(f"unknown prior family {self.family!r}")
        if not self.scale > 0:
            raise ValidationError(f"prior scale must be positive, got {self.scale}")

    @property
    def log_space(self) -> bool:
        return self.family == LOGNORMAL

    @property
    def point(self) -> float:
        """Natural-unit value used as the 'prior mean' parameter point (median for LogNormal)."""
        return math.exp(self.loc) if self.log_space else self.loc


def _n(loc, scale):
    return PriorEntry(NORMAL, float(loc), float(scale))


def _ln(median, scale=1.0):
    return PriorEntry(LOGNORMAL, math.log(median), float(scale))


def _harmonic(prefix: str, values, scale):
    out = {}
    for j, (s, c) in enumerate(values, start=1):
        out[f"{prefix}_sin_{j}"] = _n(s, scale)
        out[f"{prefix}_cos_{j}"] = _n(c, scale)
    return out


def _default_entries() -> dict[str, PriorEntry]:
    s22 = SIGMA_2**2
    e = {}
    e.update(_harmonic("temp_month", [(-4.6, 6.4), (-1.6, -0.86)], SIGMA_1))
    e.update(_harmonic("temp_hour", [(-17.0, -22.0), (-2.3, -2.6)], SIGMA_3))
    e["rad_to_temp"] = _n(0.01, SIGMA_1)
    e["temp_base"] = _n(47.0, SIGMA_1)
    e["temp_noise_sd"] = _ln(8.0)
    e["humid_hour_sin"] = _n(0.5, SIGMA_1)
    e["humid_hour_cos"] = _n(-0.7, SIGMA_1)
    e["humid_month_sin"] = _n(0.3, SIGMA_1)
    e["humid_month_cos"] = _n(-0.3, SIGMA_1)
    e["humid_alpha_offset"] = _n(5.1, SIGMA_1)
    e["humid_beta_offset"] = _n(7.6, SIGMA_1)
    e["rad_month_amp"] = _n(500.0, SIGMA_2)
    e["rad_base_amp"] = _n(300.0, SIGMA_2)
    e["rad_sd"] = _ln(167.0)
    e["wind_mean"] = _n(16.0, s22)
    e["wind_sd"] = _ln(8.0)
    e["hvac_slope"] = _n(20.0, s22)
    e["demand_base"] = _n(3485.0, s22)
    e["humid_coeff"] = _n(400.0, 200.0)
    e["wind_coeff"] = _n(5.0, 10.0)
    e["wind_asymmetry"] = _ln(1.0)
    e.update(_harmonic("daily", [(-150.0, 136.0), (84.0, 7.0)], s22))
    e.update(_harmonic("yearly", [(-15.0, 110.0), (55.0, 45.0)], s22))
    e["light_coeff"] = _n(200.0, 100.0)
    e["light_decay"] = _ln(0.01)
    e["demand_noise_sd"] = _ln(150.0)
    return e


@dataclass(frozen=True)
class PriorSpec:
    entries: Mapping[str, PriorEntry] = field(default_factory=_default_entries)
    sigma1: float = SIGMA_1
    sigma2: float = SIGMA_2
    sigma3: float = SIGMA_3

    def __getitem__(self, name: str) -> PriorEntry:
        return self.entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.entries)

    def points(self) -> dict[str, float]:
        return {k: e.point for k, e in self.entries.items()}

    def to_json(self) -> dict:
        return {
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "sigma3": self.sigma3,
            "entries": {k: {"family": e.family, "loc": e.loc, "scale": e.scale} for k, e in self.entries.items()},
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "PriorSpec":
        entries = {k: PriorEntry(v["family"], float(v["loc"]), float(v["scale"])) for k, v in doc["entries"].items()}
        return cls(entries, doc.get("sigma1", SIGMA_1), doc.get("sigma2", SIGMA_2), doc.get("sigma3", SIGMA_3))

    @classmethod
    def load(cls, path: str | Path) -> "PriorSpec":
        """Load a prior file; entries it omits keep their default values."""
        doc = json.loads(Path(path).read_text())
        base = _default_entries()
        for k, v in doc.get("entries", {}).items():
            if k not in base:
                raise ValidationError(f"prior file names unknown latent {k!r}")
            base[k] = PriorEntry(v["family"], float(v["loc"]), float(v["scale"]))
        return cls(base)


DEFAULT_PRIORS = PriorSpec()
