import json
import math

import pytest

from causal_energy.errors import ValidationError
from causal_energy.priors import DEFAULT_PRIORS, LOGNORMAL, NORMAL, PriorEntry, PriorSpec
from causal_energy.scm import default_params, latent_names


def test_latents_match_model_fields():
    assert set(DEFAULT_PRIORS.names) == set(latent_names())
    assert set(default_params().latent_values()) == set(DEFAULT_PRIORS.names)


def test_scales_positive_and_families_known():
    for e in DEFAULT_PRIORS.entries.values():
        assert e.scale > 0 and e.family in (NORMAL, LOGNORMAL)


def test_points():
    assert DEFAULT_PRIORS["demand_base"].point == 3485.0
    assert DEFAULT_PRIORS["demand_noise_sd"].point == pytest.approx(150.0)
    assert DEFAULT_PRIORS["temp_month_sin_1"].scale == 4.0


def test_entry_validation():
    with pytest.raises(ValidationError):
        PriorEntry("Cauchy", 0.0, 1.0)
    with pytest.raises(ValidationError):
        PriorEntry(NORMAL, 0.0, 0.0)


def test_json_and_partial_file(tmp_path):
    assert PriorSpec.from_json(DEFAULT_PRIORS.to_json()) == DEFAULT_PRIORS
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"entries": {"hvac_slope": {"family": "Normal", "loc": 30, "scale": 5}}}))
    spec = PriorSpec.load(p)
    assert spec["hvac_slope"] == PriorEntry(NORMAL, 30.0, 5.0)
    assert spec["demand_base"] == DEFAULT_PRIORS["demand_base"]
    p.write_text(json.dumps({"entries": {"nope": {"family": "Normal", "loc": 0, "scale": 1}}}))
    with pytest.raises(ValidationError, match="nope"):
        PriorSpec.load(p)


def test_lognormal_median():
    e = PriorEntry(LOGNORMAL, math.log(8.0), 1.0)
    assert e.log_space and e.point == pytest.approx(8.0)
