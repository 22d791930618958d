import copy
import json
import math

import numpy as np
import pytest

from nanolattice.models import EffectiveParams
from nanolattice.verify import (RegimeError, ResourceError, VerificationError, default_composite_spec,
                                default_kerr_params, fit_swap_rate, kerr_run, load_tolerances,
                                scaling_study, verify_bose_hubbard_composite, verify_hop,
                                verify_kerr)

CHAIN = json.loads(default_composite_spec())


@pytest.mark.parametrize("gamma", [0.0, 0.3, 1.5])
def test_fit_swap_rate_ignores_damping(gamma):
    lam = 0.37
    t = np.linspace(0, math.pi / lam, 301)
    y = np.exp(-gamma * t) * np.cos(2 * lam * t)
    n1, n2 = (1 + y) / 2, (1 - y) / 2
    assert fit_swap_rate(t, n1, n2) == pytest.approx(lam, rel=1e-6)
    assert math.isnan(fit_swap_rate(t[:10], n1[:10], n2[:10]))


def test_tolerance_file_override(tmp_path):
    p = tmp_path / "tol.json"
    p.write_text(json.dumps({"hop": {"trace_distance": 1e-9}}))
    tol = load_tolerances(str(p))
    assert tol["hop"]["trace_distance"] == 1e-9 and tol["hop"]["swap_rate_rel"] == 0.05
    rep = verify_hop(tolerances=tol)
    assert not rep.passed
    p.write_text(json.dumps({"hop": 3}))
    with pytest.raises(VerificationError):
        load_tolerances(str(p))


def test_hop_without_coupling_is_static():
    rep = verify_hop(EffectiveParams(g=0.0, beta=0.01, delta_omega=1.0, kappa=1.0))
    assert rep.passed and max(rep.distances) == 0.0
    assert "swap rate relative error" not in [c.name for c in rep.checks]


def test_hop_regime_limits():
    with pytest.warns(UserWarning):
        rep = verify_hop(EffectiveParams(g=1.0, beta=0.2, delta_omega=1.0, kappa=1.0),
                         n_points=101)
    assert rep.notes
    with pytest.raises(RegimeError):
        verify_hop(EffectiveParams(g=1.0, beta=1.0, delta_omega=1.0, kappa=0.0))


def test_report_json_round_trip():
    rep = verify_hop(n_points=51)
    doc = json.loads(rep.to_json())
    assert doc["passed"] is True and doc["name"] == "hop"
    assert len(doc["times"]) == len(doc["trace_distance"]) == 51
    assert all(c["passed"] for c in doc["checks"])


def test_kerr_without_drive_has_no_phase():
    p = EffectiveParams(**{**default_kerr_params().__dict__, "alpha": 0.0})
    rep = verify_kerr(p, halving=False, n_points=41)
    names = {c.name: c for c in rep.checks}
    assert names["phase slope (no Kerr expected)"].passed


def test_kerr_out_of_regime_warns_and_fails():
    p = EffectiveParams(**{**default_kerr_params().__dict__, "delta": 2.0})
    with pytest.warns(UserWarning):
        rep = verify_kerr(p, halving=False, n_points=41)
    assert not rep.passed
    assert not {c.name: c for c in rep.checks}["epsilon within regime"].passed
    with pytest.raises(RegimeError):
        verify_kerr(EffectiveParams(**{**p.__dict__, "delta": 0.5}), halving=False)


def test_kerr_phase_error_grows_linearly_in_time():
    p = default_kerr_params()
    a = kerr_run(p, n_points=101)
    b = kerr_run(p, n_points=201, duration=2 * a["times"][-1])
    assert b["accumulated_phase_error"] / a["accumulated_phase_error"] == pytest.approx(2.0, rel=0.1)


def test_kerr_effective_slope_is_exact():
    r = kerr_run(default_kerr_params(), n_points=41)
    assert r["slope_effective"] == pytest.approx(-2 * r["chi"], rel=1e-8)


def test_scaling_study_needs_three_points():
    with pytest.raises(VerificationError):
        scaling_study("hop", "coupling", [0.02, 0.01])
    with pytest.raises(VerificationError):
        scaling_study("hop", "epsilon", [0.04, 0.02, 0.01])


def test_scaling_study_mapper_does_not_change_rows():
    serial = scaling_study("hop", "coupling", [0.04, 0.02, 0.01])
    rev = scaling_study("hop", "coupling", [0.04, 0.02, 0.01],
                        mapper=lambda f, *its: reversed(list(map(f, *map(reversed, its)))))
    assert serial.rows == rev.rows
    assert serial.monotone and serial.exponent == pytest.approx(2.0, abs=0.1)


def test_composite_without_site_drives_is_a_hop():
    doc = copy.deepcopy(CHAIN)
    for n in doc["lattice"]["nodes"]:
        n["xi"] = 0.0
    rep = verify_bose_hubbard_composite(json.dumps(doc))
    assert rep.regime["total_dim"] == 4 * 4 * 2
    assert rep.passed


def test_composite_all_drives_off():
    doc = copy.deepcopy(CHAIN)
    for n in doc["lattice"]["nodes"]:
        n["xi"] = 0.0
    doc["lattice"]["edges"][0]["zeta"] = 0.0
    rep = verify_bose_hubbard_composite(json.dumps(doc))
    assert max(rep.distances) <= 1e-12 and rep.passed


def test_composite_resource_cap():
    with pytest.raises(ResourceError, match="dimension 800"):
        verify_bose_hubbard_composite(dims={"mech": 5})


def test_composite_needs_closed_hardware():
    doc = copy.deepcopy(CHAIN)
    doc["hardware"]["modes"][2]["damping"] = 0.01
    with pytest.raises(VerificationError, match="closed"):
        verify_bose_hubbard_composite(json.dumps(doc))
