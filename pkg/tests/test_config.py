import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plasmacharge.config import DEFAULTS, RunConfig, load_config, parse_config
from plasmacharge.errors import ConfigError
from plasmacharge.greens import BoundaryFlavor

BASE = {
    "charges": [{"xi": [0.3, 0.1]}],
    "plasma": [{"x": [-0.6, -0.1], "y": [-0.4, 0.4], "vx": [-0.5, 0.5], "vy": [-0.5, 0.5], "weight": 1.0, "count": 10}],
    "delta1": 0.05,
}


def test_defaults_fill_missing_keys():
    cfg = RunConfig({})
    assert cfg.flavor is BoundaryFlavor.NEUMANN
    assert cfg.rule == "reflection"
    assert cfg.dt == DEFAULTS["dt"] and cfg.n_steps == 1000
    assert cfg.M == 0 and cfg.total_weight == 0.0


def test_round_trip_is_idempotent():
    cfg = RunConfig(BASE)
    again = parse_config(cfg.dump())
    assert again.to_dict() == cfg.to_dict()
    assert parse_config(again.dump()).dump() == again.dump()
    assert again.hash() == cfg.hash()


@given(
    dt=st.floats(1e-5, 1e-2),
    seed=st.integers(0, 2**31),
    stride=st.integers(1, 50),
    flavor=st.sampled_from(["neumann", "dirichlet"]),
)
def test_round_trip_property(dt, seed, stride, flavor):
    cfg = RunConfig({**BASE, "dt": dt, "seed": seed, "stride": stride, "flavor": flavor})
    again = parse_config(cfg.dump())
    assert again.to_dict() == cfg.to_dict()
    assert again.hash() == cfg.hash()


def test_hash_changes_with_content():
    assert RunConfig(BASE).hash() != RunConfig({**BASE, "seed": 1}).hash()


def test_json_is_accepted():
    cfg = parse_config('{"dt": 0.002, "T": 0.5}')
    assert cfg.n_steps == 250


def test_load_config_from_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(RunConfig(BASE).dump())
    assert load_config(path).to_dict() == RunConfig(BASE).to_dict()


def test_dirichlet_forces_zero_boundary_data():
    cfg = RunConfig({**BASE, "flavor": "dirichlet", "h_N": [1.0, 0.5, 0.0]})
    assert cfg.raw["h_N"] == "zero" and cfg.raw["h_cha"] == "zero"
    assert cfg.h_N.total(cfg.domain) == 0.0


def test_uniform_data_match_the_plasma_and_charge_totals():
    cfg = RunConfig(BASE)
    assert cfg.h_N.total(cfg.domain) == pytest.approx(1.0, abs=1e-12)
    assert cfg.h_cha.total(cfg.domain) == pytest.approx(1.0, abs=1e-12)


def _condition(raw):
    with pytest.raises(ConfigError) as info:
        RunConfig(raw)
    return info.value.condition


def test_neumann_compatibility_is_enforced():
    # a0 = 0.5 gives flux 0.5 * 2 pi, not the plasma weight 1
    assert _condition({**BASE, "h_N": [0.5]}) == "neumann-compatibility"


def test_charge_compatibility_is_enforced():
    assert _condition({**BASE, "h_cha": [1.0]}) == "charge-compatibility"


@pytest.mark.parametrize(
    "change",
    [
        {"charges": [{"xi": [0.97, 0.0]}]},
        {"charges": [{"xi": [0.3, 0.1]}, {"xi": [0.31, 0.1]}]},
        {"charges": [{"xi": [-0.3, 0.0]}]},
        {"plasma": [{**BASE["plasma"][0], "x": [-0.97, -0.1]}]},
        {"charges": [{"xi": [1.5, 0.0]}]},
    ],
    ids=["charge-wall", "charge-charge", "charge-plasma", "plasma-wall", "charge-outside"],
)
def test_separation_is_enforced(change):
    raw = {**BASE, **change}
    if len(raw["charges"]) == 2:
        raw["h_cha"] = "uniform"
    assert _condition(raw) == "singular-set-separation"


@pytest.mark.parametrize(
    "raw, condition",
    [
        ({"boundary_rule": "sticky"}, "boundary-rule"),
        ({"dt": 0}, "time-grid"),
        ({"T": -1}, "time-grid"),
        ({"stride": 0}, "time-grid"),
        ({"seed": -3}, "seed"),
        ({"bogus": 1}, "config-schema"),
        ({"charges": [{"eta": [0, 0]}]}, "config-schema"),
        ({"plasma": [{"x": [0, 0.1]}]}, "plasma-box"),
        ({"domain": {"shape": "square"}}, "domain-shape"),
        ({"domain": {"shape": "ellipse"}}, "domain-shape"),
    ],
)
def test_invalid_inputs_name_the_condition(raw, condition):
    assert _condition(raw) == condition


def test_error_message_carries_the_condition_slug():
    with pytest.raises(ConfigError, match=r"\[neumann-compatibility\]"):
        RunConfig({**BASE, "h_N": [0.5]})


def test_negative_boundary_data_rejected():
    # total 1 with a negative minimum
    coeffs = [1.0 / (2 * np.pi), 1.0, 0.0]
    assert _condition({**BASE, "h_N": coeffs}) == "neumann-data-sign"


def test_top_level_must_be_a_mapping():
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n")


def test_overrides():
    cfg = RunConfig(BASE).with_overrides(seed=7, numerics={"n_b": 64})
    assert cfg.seed == 7 and cfg.n_b == 64
    assert cfg.encounter_radius is None
