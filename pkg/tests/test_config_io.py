import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seisgrid.config_io import (AnalysisResults, bundled_path, costs_from_dict, fragility_from_dict,
                                hazard_from_dict, load_costs, load_fragility, load_hazard, load_network,
                                network_from_dict, network_to_dict, read_csv_rows, write_network, write_results,
                                MagnitudeGrid)
from seisgrid.hazard import GmpeCoefficients
from seisgrid.simulation import MagnitudeStats, RiskResult
from seisgrid.validation import ConfigError, ValidationError


def _doc(name):
    return json.loads(bundled_path(name).read_text())


def test_bundled_network_counts(rts):
    assert (len(rts.buses), len(rts.lines), len(rts.generators), len(rts.loads), len(rts.substations)) == \
        (24, 38, 10, 17, 5)


def test_bundled_demand_is_2850(rts):
    assert rts.total_demand_mw == pytest.approx(2850.0, rel=1e-12)


def test_component_labels_canonical_order(rts):
    labels = rts.component_labels()
    assert len(labels) == 56
    assert labels[0] == "bus:1" and labels[24] == "generator:1" and labels[-1] == "substation:5"
    assert rts.component_sites().shape == (56, 2)


def test_substations_sit_on_their_lines(rts):
    lines = rts.line_index
    ends = {s.id: (lines[s.line_id].from_bus, lines[s.line_id].to_bus) for s in rts.substations}
    assert ends[1] == (3, 24)


def test_missing_bus_reference_names_the_bus():
    doc = _doc("rts24_network.json")
    doc["lines"][0]["to"] = 99
    with pytest.raises(ValidationError, match="99"):
        network_from_dict(doc)


@pytest.mark.parametrize("mutate, match", [
    (lambda d: d["buses"].append(dict(d["buses"][0])), "duplicate"),
    (lambda d: d["lines"][0].update(x_pu=0.0), "reactance"),
    (lambda d: d["loads"][0].update(demand_mw=-1.0), "demand"),
    (lambda d: d["generators"][0].update(pmin_mw=500.0), "pmin"),
    (lambda d: d["lines"][0].update(to=d["lines"][0]["from"]), "self-loop"),
])
def test_network_invariants_rejected(mutate, match):
    doc = _doc("rts24_network.json")
    mutate(doc)
    with pytest.raises(ValidationError, match=match):
        network_from_dict(doc)


def test_malformed_file_is_parse_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_network(p)


def test_network_roundtrip(tmp_path, rts):
    p = write_network(rts, tmp_path / "net.json")
    again = load_network(p)
    assert network_to_dict(again) == network_to_dict(rts)


def test_hazard_defaults_without_gmpe_block():
    hz = load_hazard()
    assert hz.gmpe.c1 == -1.134
    assert hz.gmpe == GmpeCoefficients()
    assert list(hz.magnitude_grid.points) == [6.0, 6.5, 7.0, 7.5, 8.0, 8.5]


def test_hazard_gmpe_override_and_unknown_key():
    doc = _doc("hazard.json")
    doc["gmpe"] = {"c1": -1.0}
    assert hazard_from_dict(doc).gmpe.c1 == -1.0
    doc["gmpe"] = {"nope": 1.0}
    with pytest.raises(ConfigError, match="nope"):
        hazard_from_dict(doc)


@pytest.mark.parametrize("patch", [{"vs30_mps": -1.0}, {"mechanism": "XX"}, {"correlation_cap_km": 0.0}])
def test_hazard_field_validation(patch):
    doc = _doc("hazard.json")
    doc.update(patch)
    with pytest.raises(ValidationError):
        hazard_from_dict(doc)


def test_fragility_bus_slight_accepted():
    tab = load_fragility()
    assert tab.baseline["bus"].medians[0] == 0.13
    assert tab.baseline["bus"].betas[0] == 0.65


def test_fragility_decreasing_medians_rejected():
    doc = _doc("fragility.json")
    doc["baseline"]["bus"]["moderate"]["median_g"] = 0.01
    with pytest.raises(ValidationError):
        fragility_from_dict(doc)


def test_costs_positive():
    assert load_costs().vector(["bus:1", "generator:1", "load:1", "substation:1"]).tolist() == [0.5, 1.0, 0.3, 0.8]
    with pytest.raises(ValidationError):
        costs_from_dict({"bus": 0.0, "generator": 1, "load": 1, "substation": 1})


def test_magnitude_grid_single_point_and_refine():
    assert list(MagnitudeGrid(7.0, 7.0, 0.5).points) == [7.0]
    assert len(MagnitudeGrid(6.0, 8.5, 0.5).refined(2).points) == 11
    with pytest.raises(ValidationError):
        MagnitudeGrid(8.0, 6.0, 0.5)


def _risk(eafl=0.0427, n=6):
    mags = np.linspace(6.0, 8.5, n)
    rates = np.full(n, eafl / max(n, 1))
    return RiskResult(eafl, mags, rates, np.zeros(n), 0.0)


def test_write_risk_json(tmp_path):
    write_results(AnalysisResults(seed=3, risk=_risk()), tmp_path)
    doc = json.loads((tmp_path / "risk.json").read_text())
    assert doc["eafl"] == 0.0427 and doc["seed"] == 3


def test_empty_grid_errors_before_writing(tmp_path):
    out = tmp_path / "o"
    with pytest.raises(ValidationError):
        write_results(AnalysisResults(seed=1, risk=_risk(n=0), manifest={"a": 1}), out)
    assert not out.exists()


def test_functionality_csv_rows(tmp_path):
    stats = [MagnitudeStats(m, np.full(10, 1000.0), 2850.0) for m in np.linspace(6, 8.5, 6)]
    write_results(AnalysisResults(seed=7, magnitude_stats=stats), tmp_path)
    text = (tmp_path / "functionality_by_magnitude.csv").read_text()
    assert text.startswith("# seed=7\n")
    rows = read_csv_rows(tmp_path / "functionality_by_magnitude.csv")
    assert len(rows) == 6
    assert float(rows[0]["mean_norm_func"]) == pytest.approx(1000 / 2850)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=2, max_size=8, unique=True))
def test_roundtrip_property_random_coordinates(coords):
    doc = {
        "buses": [{"id": i + 1, "x_km": x, "y_km": y} for i, (x, y) in enumerate(coords)],
        "lines": [{"id": i + 1, "from": i + 1, "to": i + 2, "x_pu": 0.1, "rate_mw": 100.0}
                  for i in range(len(coords) - 1)],
        "generators": [{"id": 1, "bus": 1, "pmin_mw": 0, "pmax_mw": 100, "cost_per_mwh": 1}],
        "loads": [{"id": 1, "bus": len(coords), "demand_mw": 50}],
    }
    net = network_from_dict(doc)
    assert network_from_dict(network_to_dict(net)) == net
