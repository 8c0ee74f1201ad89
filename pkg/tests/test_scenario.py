from pathlib import Path

import pytest
import yaml

from wgmbench.errors import ScenarioError
from wgmbench.scenario import Scenario, builtin_scenario, builtin_scenario_path

BUILTINS = sorted(p.stem for p in builtin_scenario_path("backscatter_doublet").parent.glob("*.yaml"))

MINIMAL = {
    "name": "minimal",
    "seed": 1,
    "wavelength": 800e-9,
    "sphere": {"radius": 28e-6, "refractive_index": 1.45},
    "modes": [{"label": "a", "polarization": "TE", "offset": 0.0, "fwhm": 4e5, "depth": 0.5}],
    "window": {"start": -2e6, "stop": 2e6, "samples": 401},
}


@pytest.mark.parametrize("name", BUILTINS)
def test_builtin_scenarios_load_and_round_trip(name):
    sc = builtin_scenario(name)
    again = Scenario.from_yaml(sc.to_yaml())
    assert again.to_dict() == sc.to_dict()
    if sc.window is not None:
        assert sc.lines(sc.tuning_state(sc.voltages()[0]))


def test_minimal_scenario_lines():
    sc = Scenario.from_dict(MINIMAL)
    (line,) = sc.lines(sc.tuning_state(0.0))
    assert line.fwhm == pytest.approx(4e5)
    assert line.depth == pytest.approx(0.5)
    assert line.kappa_c < line.kappa0


@pytest.mark.parametrize(
    "change, where",
    [
        ({"sphere": {"refractive_index": 1.45}}, "sphere.radius"),
        ({"bogus": 1}, "bogus"),
        ({"schema_version": "2.0"}, "schema_version"),
        ({"window": {"start": -1e12, "stop": 1e12, "samples": 401}}, "window"),
        ({"modes": MINIMAL["modes"] * 2}, "modes"),
        ({"tuning": {"voltages": [0.0, 1.0]}}, "tuning"),
        ({"couplings": [{"kind": "backscatter", "mode_a": "zz", "g": 1e5}]}, "couplings.0"),
        ({"modes": [{"label": "a", "polarization": "TE", "offset": 0.0}]}, "modes.0"),
    ],
)
def test_validation_errors_name_the_field(change, where):
    data = {**MINIMAL, **change}
    with pytest.raises(ScenarioError) as info:
        Scenario.from_dict(data)
    assert str(info.value).startswith(where)


def test_polarization_coupling_needs_te_and_tm():
    data = {**MINIMAL, "modes": MINIMAL["modes"] + [{**MINIMAL["modes"][0], "label": "b"}],
            "couplings": [{"kind": "polarization", "mode_a": "a", "mode_b": "b", "g": 1e6}]}
    with pytest.raises(ScenarioError, match="TE and one TM"):
        Scenario.from_dict(data)


def test_with_updates_revalidates():
    sc = Scenario.from_dict(MINIMAL)
    assert sc.with_updates(seed=9).seed == 9
    with pytest.raises(ScenarioError):
        sc.with_updates(seed=-1)


def test_invalid_yaml(tmp_path: Path):
    p = tmp_path / "bad.yaml"
    p.write_text("sphere: [1, 2\n")
    with pytest.raises(ScenarioError, match="invalid YAML"):
        Scenario.from_file(p)


def test_unknown_builtin():
    with pytest.raises(ScenarioError):
        builtin_scenario("nope")


def test_polarization_branches_conserve_rates():
    sc = builtin_scenario("te_tm_crossing")
    lines = {ln.label: ln for ln in sc.lines(sc.tuning_state(1.2))}
    up, lo = lines["te/tm:upper"], lines["te/tm:lower"]
    bare = {b.label: b for b in sc.bare_modes()}
    assert up.kappa0 + lo.kappa0 == pytest.approx(bare["te"].kappa0 + bare["tm"].kappa0)
    assert up.center - lo.center >= 2 * 1.5e8 * (1 - 1e-12)


def test_comb_is_reproducible():
    a = builtin_scenario("range_150ghz").bare_modes()
    b = builtin_scenario("range_150ghz").bare_modes()
    assert [m.frequency for m in a] == [m.frequency for m in b]
    assert yaml.safe_load(builtin_scenario("range_150ghz").to_yaml())["comb"]["seed"] == 11
