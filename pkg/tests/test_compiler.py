import copy
import json
import math

import pytest

from nanolattice.compiler import (InfeasibleError, SpecError, compile_drive_plan, emit_lattice_spec,
                                  emit_plan, guard_band_report, parse_lattice_spec, parse_plan,
                                  plan_table, validate_plan)
from nanolattice.models import hop_rates, kerr_rates
from nanolattice.verify import default_composite_spec

CHAIN = json.loads(default_composite_spec())


def damped_chain():
    doc = copy.deepcopy(CHAIN)
    doc["hardware"]["modes"][2]["damping"] = 0.25
    for m in doc["hardware"]["modes"][3:]:
        m["damping"] = 0.1
    doc["constraints"] = {"min_hop_quality": 4.0, "min_kerr_quality": 10.0}
    return doc


def three_site_degenerate():
    """Two edges on two auxiliaries spaced like their mechanical modes."""
    mech = [("a1", 10.0), ("a2", 12.0), ("a3", 14.0)]
    modes = [{"label": l, "kind": "mechanical", "frequency": w, "truncation": 3} for l, w in mech]
    modes += [{"label": "b1", "kind": "auxiliary", "frequency": 100.0, "truncation": 2},
              {"label": "b2", "kind": "auxiliary", "frequency": 102.0, "truncation": 2}]
    g = [{"mech": m, "aux": b, "value": 1.0} for m, _ in mech for b in ("b1", "b2")]
    return {"hardware": {"modes": modes, "g": g},
            "lattice": {"nodes": [{"label": l} for l, _ in mech],
                        "edges": [{"nodes": ["a1", "a2"], "zeta": 1e-4},
                                  {"nodes": ["a2", "a3"], "zeta": 1e-4}]},
            "constraints": {"default_detuning": 1.0}}


def compile_doc(doc, **kw):
    spec = parse_lattice_spec(json.dumps(doc))
    return spec, compile_drive_plan(spec, **kw)


def test_resonance_identities_exact():
    for doc in (CHAIN, damped_chain()):
        spec, plan = compile_doc(doc)
        hw = spec.hardware
        for e in plan.edges:
            for node, k in zip(e.nodes, e.tone_indices):
                nu = plan.tones[k].frequency
                assert nu + hw.mode(node).frequency - hw.mode(e.aux).frequency == e.detuning
        for s in plan.sites:
            assert 2 * s.s == hw.mode(s.node).frequency + s.resonance_detuning + s.modulation
            nu = plan.tones[s.tone_index].frequency
            assert nu - (hw.mode(s.members[0]).frequency + s.s) == s.drive_detuning
        assert all(e.detuning == 0 for e in plan.guard_band.intended)


@pytest.mark.parametrize("doc", [CHAIN, damped_chain()], ids=["closed", "damped"])
def test_inversion_reproduces_targets(doc):
    spec, plan = compile_doc(doc)
    hw = spec.hardware
    targets = dict(spec.graph.edges)
    for e in plan.edges:
        kappa = hw.mode(e.aux).damping_rate
        for node, k in zip(e.nodes, e.tone_indices):
            gb = abs(hw.g_value(node, e.aux) * plan.tones[k].amplitude)
            lam, _ = hop_rates(gb, e.detuning, kappa)
            zeta = targets[e.nodes]
            assert math.isclose(lam * math.cos(e.hop_phase), zeta, rel_tol=1e-12)
    xi = dict(spec.graph.nodes)
    for s in plan.sites:
        kappa = hw.mode(s.members[0]).damping_rate
        K = s.epsilon * s.f * abs(plan.tones[s.tone_index].amplitude) / 2
        chi, _ = kerr_rates(K, s.drive_detuning, kappa)
        assert math.isclose(chi, xi[s.node], rel_tol=1e-12)


def test_negative_targets():
    doc = copy.deepcopy(CHAIN)
    doc["lattice"]["edges"][0]["zeta"] = -5e-5
    doc["lattice"]["nodes"][0]["xi"] = -5e-5
    _, plan = compile_doc(doc)
    assert plan.edges[0].hop_phase == math.pi
    assert plan.edges[0].lam * math.cos(plan.edges[0].hop_phase) == pytest.approx(-5e-5, rel=1e-12)
    site = {s.node: s for s in plan.sites}["a1"]
    assert site.drive_detuning < 0 and site.chi == pytest.approx(-5e-5, rel=1e-12)


def test_spec_round_trip():
    spec = parse_lattice_spec(json.dumps(damped_chain()))
    again = parse_lattice_spec(emit_lattice_spec(spec))
    assert again == spec
    assert emit_lattice_spec(again) == emit_lattice_spec(spec)


def test_plan_round_trip_and_determinism():
    spec, plan = compile_doc(CHAIN)
    text = emit_plan(plan)
    assert parse_plan(text) == plan
    assert emit_plan(parse_plan(text)) == text
    for _ in range(3):
        assert emit_plan(compile_drive_plan(parse_lattice_spec(json.dumps(CHAIN)))) == text


def test_degenerate_frequencies_rejected():
    with pytest.raises(InfeasibleError) as exc:
        compile_doc(three_site_degenerate())
    rep = exc.value.report
    assert not rep.passed and rep.minimum == pytest.approx(0.0, abs=1e-12)
    worst = rep.worst()
    assert "guard band VIOLATION" in rep.describe()
    assert worst.aux in ("b1", "b2") and worst.mech in ("a1", "a2", "a3")


def test_degenerate_case_clears_with_detuning():
    doc = three_site_degenerate()
    doc["lattice"]["edges"][1]["detuning"] = 0.5
    _, plan = compile_doc(doc)
    assert plan.guard_band.passed


def test_guard_band_override():
    spec, plan = compile_doc(CHAIN)
    with pytest.raises(InfeasibleError):
        compile_drive_plan(spec, guard_band=5.0)
    rep = guard_band_report(plan, spec.hardware, 0.5)
    assert rep.passed and rep.minimum == pytest.approx(1.0)


def test_validation_table():
    spec, plan = compile_doc(damped_chain())
    val = validate_plan(plan, spec)
    assert val.passed
    edge = [r for r in val.rates if r["kind"] == "edge"][0]
    assert edge["quality"] == pytest.approx(4.0)
    assert "a1-a2" in plan_table(plan)


def test_infeasible_requirements():
    doc = copy.deepcopy(CHAIN)
    doc["constraints"]["max_beta"] = 1e-3
    with pytest.raises(InfeasibleError, match="max_beta"):
        compile_doc(doc)
    doc = copy.deepcopy(CHAIN)
    doc["constraints"].pop("default_detuning")
    with pytest.raises(InfeasibleError, match="undamped"):
        compile_doc(doc)
    doc = copy.deepcopy(CHAIN)
    doc["hardware"]["g"] = doc["hardware"]["g"][:1]
    with pytest.raises(InfeasibleError, match="no free auxiliary"):
        compile_doc(doc)


@pytest.mark.parametrize("mutate, needle", [
    (lambda d: d["hardware"]["modes"][0].update(color="red"), "color"),
    (lambda d: d["hardware"]["modes"][0].update(truncation=-2), "truncation"),
    (lambda d: d["hardware"]["modes"][0].update(kind="photonic"), "kind"),
    (lambda d: d["lattice"]["edges"].append({"nodes": ["a2", "a1"], "zeta": 1.0}), "duplicate"),
    (lambda d: d["lattice"]["nodes"].append({"label": "zz"}), "zz"),
    (lambda d: d["hardware"]["g"].append({"mech": "a1", "aux": "nope", "value": 1.0}), "nope"),
    (lambda d: d["constraints"].update(speed=3), "speed"),
])
def test_spec_errors(mutate, needle):
    doc = copy.deepcopy(CHAIN)
    mutate(doc)
    with pytest.raises(SpecError, match=needle):
        parse_lattice_spec(json.dumps(doc))


def test_syntax_error_has_position():
    text = json.dumps(CHAIN, indent=2).replace('"lattice"', '"lattice" :: ', 1)
    with pytest.raises(SpecError) as exc:
        parse_lattice_spec(text)
    assert exc.value.line is not None and exc.value.line > 1 and exc.value.column is not None
