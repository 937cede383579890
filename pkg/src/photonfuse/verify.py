"""Self-checks of the simulator against the closed-form protocol results.

Every check returns its worst deviation; :func:`run_checks` compares each one
to a tolerance and collects a machine-readable summary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .analysis import UNATTAINABLE, threshold_eta_d_min, threshold_from_kappa
from .detection import DetectorSpec, HeraldPattern, Outcome, click_probability, measure_all, povm_equivalence_check
from .elements import loss_channel
from .fock import MixedState, ModeId, OccupationState, Pol, PureState, fidelity, modes_of, relabel, trace_distance
from .protocol import (
    OUTPUT_BEAMS,
    ProtocolConfig,
    ghz_state,
    id_decompose,
    id_loss,
    id_loss_rate,
    step1_fuse,
    step1_retained_terms,
    step2_fuse,
    success_probability,
)
from .sources import EmissionParams, LossParams, emission_from_loss, loss_from_emission

DEFAULT_TOL = 1e-9

# small default grid; the test suite covers the full 5x5x5 one
DEFAULT_GRID = [
    EmissionParams(s, a, b)
    for s, a, b in itertools.product((0.3, 0.6), (0.0, 0.15), (0.0, 0.2))
]
DEFAULT_ETA_D = (0.5, 1.0)


@dataclass
class CheckResult:
    name: str
    max_deviation: float
    tolerance: float
    passed: bool


def _grid_configs(pbs_tilt: float = 0.0):
    for src in DEFAULT_GRID:
        for eta_d in DEFAULT_ETA_D:
            yield ProtocolConfig(src, eta_d, pbs_tilt=pbs_tilt)


def min_eigenvalue(s: MixedState) -> float:
    _, rho = s.density_matrix()
    return float(np.linalg.eigvalsh(rho).min()) if rho.size else 0.0


def step1_deviation(cfg: ProtocolConfig) -> float:
    """Largest gap between the simulated step-1 state and its closed-form terms on the 1d-occupied part.

    Coherences between the 1d-occupied and 1d-empty parts count as deviation too.
    """
    state = step1_fuse(cfg).combined()
    expected = step1_retained_terms(cfg.source, cfg.eta_d)
    has_1d = lambda o: o.photons_in("1d") > 0  # noqa: E731
    basis = sorted(set(state.occupations()) | set(expected.occupations()))
    _, rho = state.density_matrix(basis)
    _, ref = expected.density_matrix(basis)
    occ = np.array([has_1d(o) for o in basis], dtype=bool)
    block = np.abs(rho[np.ix_(occ, occ)] - ref[np.ix_(occ, occ)])
    cross = np.abs(rho[np.ix_(occ, ~occ)])
    return float(max(block.max(initial=0.0), cross.max(initial=0.0)))


def _pattern_spread(result) -> float:
    states = [s.normalized() for s in result.patterns.values()]
    return max(trace_distance(states[0], s) for s in states[1:])


def _random_mixed(rng: np.random.Generator, n_branches: int = 3) -> MixedState:
    t, s = ModeId("t", Pol.H), ModeId("s", Pol.H)
    branches = []
    for _ in range(n_branches):
        amps = {
            OccupationState({t: nt, s: ns}): complex(rng.normal(), rng.normal())
            for nt in range(4)
            for ns in range(2)
        }
        branches.append((rng.random(), PureState(amps, [t, s]).normalized()))
    return MixedState(branches, [t, s]).normalized()


def check_povm() -> float:
    return max(povm_equivalence_check(8, eta) for eta in (0.0, 0.3, 0.5, 0.8, 1.0))


def check_povm_completeness() -> float:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        s = _random_mixed(rng)
        d = DetectorSpec("D", ModeId("t", Pol.H), float(rng.random()))
        outs = measure_all(s, [d])
        worst = max(worst, abs(sum(o.trace() for o in outs.values()) - s.trace()))
        worst = max(worst, abs(outs[HeraldPattern((("D", Outcome.CLICK),))].trace() - click_probability(s, d)))
    return worst


def check_loss_composition() -> float:
    one = PureState.basis({ModeId("x", Pol.H): 1}, modes_of("x"))
    worst = 0.0
    for e1, e2 in [(0.3, 0.7), (0.9, 0.5), (0.0, 0.4)]:
        a = loss_channel(loss_channel(one, "x", e1), "x", e2)
        b = loss_channel(one, "x", e1 * e2)
        worst = max(worst, trace_distance(a, b))
    return worst


def check_step1() -> float:
    return max(step1_deviation(c) for c in _grid_configs())


def _runs(pbs_tilt: float = 0.0):
    return [(c, step2_fuse(c)) for c in _grid_configs(pbs_tilt)]


def check_id_form(runs) -> float:
    ghz4 = ghz_state(OUTPUT_BEAMS)
    return max(trace_distance(r.rho_r, id_loss(ghz4, id_loss_rate(c.source))) for c, r in runs)


def check_epsilon_fit(runs) -> float:
    return max(abs(id_decompose(r.rho_r).epsilon - id_loss_rate(c.source)) for c, r in runs)


def check_success_probability(runs) -> float:
    return max(abs(r.p_success - success_probability(c.source, c.eta_d)) for c, r in runs)


def check_feedforward(runs) -> float:
    return max(_pattern_spread(r) for _, r in runs)


def check_completeness(runs) -> float:
    return max(abs(t - 1) for _, r in runs for t in r.round_totals)


def check_psd(runs) -> float:
    return max(max(0.0, -min_eigenvalue(s)) for _, r in runs for s in r.patterns.values())


def check_permutation(runs) -> float:
    worst = 0.0
    for _, r in runs:
        for perm in itertools.permutations(OUTPUT_BEAMS):
            worst = max(worst, trace_distance(r.rho_r, relabel(r.rho_r, dict(zip(OUTPUT_BEAMS, perm)))))
    return worst


def check_pure_ghz() -> float:
    ghz4 = ghz_state(OUTPUT_BEAMS)
    worst = 0.0
    for eta_a in (0.0, 0.2, 0.5):
        for eta_d in (0.4, 1.0):
            r = step2_fuse(ProtocolConfig(EmissionParams(0.5, eta_a, 0.0), eta_d))
            worst = max(worst, 1 - fidelity(r.rho_r, ghz4))
    return worst


def check_loss_shift() -> float:
    worst = 0.0
    for f_a, eta_d in [(0.1, 0.9), (0.25, 0.8), (0.4, 1.0)]:
        lossy = LossParams(f_c=0.1, f_a=f_a, f_b=0.2)
        shifted = LossParams(f_c=0.1, f_a=0.0, f_b=0.2)
        eff = (1 - f_a) * eta_d
        e1 = id_decompose(step2_fuse(ProtocolConfig(lossy, eta_d)).rho_r).epsilon
        e2 = id_decompose(step2_fuse(ProtocolConfig(shifted, eff)).rho_r).epsilon
        worst = max(worst, abs((1 - e1) * eta_d - (1 - e2) * eff), abs(e1 - f_a), abs(e2))
    return worst


def check_thresholds() -> float:
    worst = abs(threshold_eta_d_min(0.0) - 0.5)
    worst = max(worst, abs(threshold_eta_d_min(0.25) - 2 / 3))
    if threshold_eta_d_min(0.5) is not UNATTAINABLE:
        return math.inf
    for s, b in itertools.product((0.2, 0.5, 0.9), (0.0, 0.05, 0.1)):
        e = EmissionParams(s, 0.0, b)
        k, f = threshold_from_kappa(b / s), threshold_eta_d_min(loss_from_emission(e).f_a)
        if (k is UNATTAINABLE) != (f is UNATTAINABLE):
            return math.inf
        if k is not UNATTAINABLE:
            worst = max(worst, abs(k - f))
    return worst


def check_parameter_roundtrip() -> float:
    worst = 0.0
    for l in [LossParams(0, 0.2, 0.1), LossParams(0.3, 0.05, 0.4), LossParams(0.5, 0, 0)]:
        back = loss_from_emission(emission_from_loss(l))
        worst = max(worst, *(abs(x - y) for x, y in zip(back.as_dict().values(), l.as_dict().values())))
    return worst


STANDALONE: list[tuple[str, Callable, float]] = [
    ("povm_click_probability", check_povm, 1e-12),
    ("povm_completeness", check_povm_completeness, 1e-12),
    ("loss_composition", check_loss_composition, 1e-12),
    ("step1_retained_terms", check_step1, 1e-9),
    ("pure_ghz_when_eta_b_zero", check_pure_ghz, 1e-9),
    ("loss_shift_equivalence", check_loss_shift, 1e-9),
    ("threshold_consistency", check_thresholds, 1e-12),
    ("parameter_roundtrip", check_parameter_roundtrip, 1e-12),
]
ON_RUNS: list[tuple[str, Callable, float]] = [
    ("id_form", check_id_form, 1e-9),
    ("epsilon_fit", check_epsilon_fit, 1e-9),
    ("success_probability", check_success_probability, 1e-9),
    ("feedforward_correctness", check_feedforward, 1e-9),
    ("herald_completeness", check_completeness, 1e-12),
    ("conditional_states_psd", check_psd, 1e-9),
    ("permutation_symmetry", check_permutation, 1e-9),
]


def run_checks(tol: Optional[float] = None, pbs_tilt: float = 0.0) -> list[CheckResult]:
    """Run every check; ``tol`` replaces each check's own tolerance when given.

    ``pbs_tilt`` injects a fusion-PBS misalignment into the protocol runs.
    """
    results = []
    for name, fn, own in STANDALONE:
        t = own if tol is None else tol
        dev = fn()
        results.append(CheckResult(name, dev, t, dev <= t))
    runs = _runs(pbs_tilt)
    for name, fn, own in ON_RUNS:
        t = own if tol is None else tol
        dev = fn(runs)
        results.append(CheckResult(name, dev, t, dev <= t))
    return results


def summary(results: list[CheckResult]) -> dict:
    return {"passed": all(r.passed for r in results), "checks": [asdict(r) for r in results]}
