import numpy as np
import pytest

from photonfuse.detection import (
    DetectorSpec,
    HeraldPattern,
    Outcome,
    click_probability,
    measure_all,
    measure_on_off,
    measure_port,
    pm_analyzer,
    pm_detectors,
    povm_equivalence_check,
)
from photonfuse.fock import MixedState, ModeId, OccupationState, Pol, PureState, modes_of, trace_distance
from photonfuse.sources import bell_pair

T = ModeId("t", Pol.H)
CLICK = HeraldPattern((("D", Outcome.CLICK),))
OFF = HeraldPattern((("D", Outcome.OFF),))


def fock(n):
    return PureState.basis({T: n}, [T])


@pytest.mark.parametrize("n,eta,expected", [(0, 0.7, 0.0), (1, 0.7, 0.7), (2, 0.5, 0.75), (3, 0.3, 0.657)])
def test_click_probability(n, eta, expected):
    assert click_probability(fock(n), DetectorSpec("D", T, eta)) == pytest.approx(expected, abs=1e-15)


def test_click_probability_missing_mode():
    with pytest.raises(ValueError):
        click_probability(PureState.vacuum(modes_of("x")), DetectorSpec("D", T))


def test_measure_single_photon():
    p, cond = measure_on_off(fock(1), [DetectorSpec("D", T, 1.0)], CLICK)
    assert p == pytest.approx(1.0)
    assert cond.occupations() == [OccupationState()]
    p, cond = measure_on_off(fock(1), [DetectorSpec("D", T, 0.8)], OFF)
    assert p == pytest.approx(0.2, abs=1e-15)
    assert cond.occupations() == [OccupationState()]


def test_port_click_on_entangled_partner():
    outs = measure_port(bell_pair("a", "t"), "t", 1.0)
    assert outs[Outcome.CLICK].trace() == pytest.approx(1.0)
    assert outs[Outcome.OFF].trace() == pytest.approx(0.0, abs=1e-15)
    _, rho = outs[Outcome.CLICK].density_matrix()
    assert np.allclose(rho, np.eye(2) / 2)


def test_duplicate_targets_rejected():
    with pytest.raises(ValueError):
        measure_all(fock(1), [DetectorSpec("D", T), DetectorSpec("E", T)])
    with pytest.raises(ValueError):
        DetectorSpec("D", T, 1.5)


@pytest.mark.parametrize("eta", [0.0, 0.3, 0.5, 0.8, 1.0])
def test_povm_equivalence(eta):
    assert povm_equivalence_check(8, eta) < 1e-12


def random_state(rng, modes, n_max=3, n_branches=3):
    modes = sorted(modes)
    branches = []
    for _ in range(n_branches):
        amps = {}
        for counts in np.ndindex(*(n_max + 1,) * len(modes)):
            if sum(counts) <= n_max:
                amps[OccupationState(dict(zip(modes, counts)))] = complex(*rng.normal(size=2))
        branches.append((rng.random(), PureState(amps, modes).normalized()))
    return MixedState(branches, modes).normalized()


@pytest.mark.parametrize("seed", range(5))
def test_routes_agree_and_complete(seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, modes_of("t", "u"))
    dets = pm_detectors("t", float(rng.random())) + [DetectorSpec("Du", ModeId("u", Pol.H), float(rng.random()))]
    a = measure_all(s, dets, method="loss")
    b = measure_all(s, dets, method="povm")
    assert len(a) == 8
    assert abs(sum(c.trace() for c in a.values()) - 1) < 1e-12
    for pattern in a:
        assert abs(a[pattern].trace() - b[pattern].trace()) < 1e-12
        if a[pattern].trace() > 1e-12:
            assert trace_distance(a[pattern], b[pattern]) < 1e-12
            _, rho = a[pattern].density_matrix()
            assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_pm_analyzer_routes_plus_to_h():
    modes = modes_of("x")
    plus = PureState(
        {OccupationState({ModeId("x", Pol.H): 1}): 1, OccupationState({ModeId("x", Pol.V): 1}): 1}, modes
    ).normalized()
    out = pm_analyzer(plus, "x")
    assert abs(abs(out.amplitudes[OccupationState({ModeId("x", Pol.H): 1})]) - 1) < 1e-15
    labels = [d.label for d in pm_detectors("x", 0.9)]
    assert labels == ["Dx+", "Dx-"]


def test_pattern_serialization():
    p = HeraldPattern((("D1c+", Outcome.CLICK), ("D1c-", "off")))
    assert p.serialize() == ["D1c+=click", "D1c-=off"]
    assert HeraldPattern.parse(p.serialize()) == p
    assert p.clicked() == ["D1c+"]
    assert p.with_corrections(["1d"]) == p
    with pytest.raises(ValueError):
        HeraldPattern((("D", Outcome.CLICK), ("D", Outcome.OFF)))
    with pytest.raises(ValueError):
        HeraldPattern.parse(["D=maybe"])
