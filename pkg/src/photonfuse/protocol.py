"""Two-step PBS fusion of four pair sources into a heralded four-photon GHZ state.

Step 1 fuses the b beams of sources (1, 2) on a PBS into beams 1c/1d and
analyzes 1c in the +/- basis; sources (3, 4) are handled the same way into
3c/3d. Step 2 fuses 1d and 3d into 1e/1f and analyzes both outputs. A round
is accepted when exactly one of D+ / D- clicks at every analyzed port; each
D- click is undone by a sigma_z on a surviving beam (1d, 3d, then 1a).
"""

from __future__ import annotations

import math
from itertools import combinations
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .detection import PM_ANALYZER_ANGLE, HeraldPattern, measure_all, pm_detectors
from .elements import loss_channel, pauli_z, rotation_matrix
from .fock import (
    MixedState,
    ModeId,
    OccupationState,
    Pol,
    PureState,
    StateLike,
    apply_mode_map,
    as_mixed,
    fidelity,
    modes_of,
    tensor,
    trace_distance,
)
from .sources import EmissionParams, SourceParams, as_emission, lossy_pair

OUTPUT_BEAMS = ("1a", "2a", "3a", "4a")
ID_RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class ProtocolConfig:
    """Four identical sources and one detector efficiency.

    ``pbs_tilt`` misaligns the fusion PBS axes by that angle (radians); it is a
    fault-injection hook and stays 0 in normal use.
    """

    source: SourceParams
    eta_d: float = 1.0
    pbs_tilt: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eta_d <= 1.0:
            raise ValueError(f"eta_d must lie in (0, 1], got {self.eta_d}")
        if self.emission.eta_s <= 0:
            raise ValueError("eta_s must be positive")

    @property
    def emission(self) -> EmissionParams:
        return as_emission(self.source)


@dataclass
class FusionRound:
    """Accepted, feedforward-corrected conditional states of one heralded fusion.

    Each state is unnormalized; its trace is the probability of its pattern.
    ``total_probability`` sums every pattern, accepted or not, relative to
    the input trace and should be 1.
    """

    accepted: dict[HeraldPattern, MixedState]
    rejected_probability: float
    total_probability: float

    @property
    def probability(self) -> float:
        return sum(s.trace() for s in self.accepted.values())

    def combined(self) -> MixedState:
        states = list(self.accepted.values())
        out = states[0]
        for s in states[1:]:
            out = out + s
        return out.compress()


@dataclass
class ProtocolResult:
    p_success: float
    rho_r: MixedState
    patterns: dict[HeraldPattern, MixedState]
    round_totals: list[float] = field(default_factory=list)


def ghz_state(beams: Sequence[str]) -> PureState:
    """(|H...H> + |V...V>)/sqrt(2) over the given beams."""
    modes = modes_of(*beams)
    hh = PureState.basis({ModeId(b, Pol.H): 1 for b in beams}, modes)
    vv = PureState.basis({ModeId(b, Pol.V): 1 for b in beams}, modes)
    return (hh + vv).scale(1 / math.sqrt(2))


def fusion_matrix(tilt: float = 0.0, analyze: Sequence[bool] = (False, False)) -> np.ndarray:
    """Single linear map for a fusion PBS and the +/- analyzers behind it.

    Mode order is (in1.H, in1.V, in2.H, in2.V) -> (out1.H, out1.V, out2.H, out2.V).
    ``tilt`` rotates the PBS axes; ``analyze[k]`` adds the analyzer on output k.
    """
    rot = rotation_matrix
    eye = np.eye(2)
    # H transmits (in1 -> out1), V reflects (in1 -> out2)
    perm = np.zeros((4, 4))
    perm[0, 0] = perm[3, 1] = perm[2, 2] = perm[1, 3] = 1.0
    r_in = np.kron(eye, rot(tilt))
    r_out = np.kron(eye, rot(-tilt))
    ana = np.zeros((4, 4))
    for k, on in enumerate(analyze):
        ana[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = rot(PM_ANALYZER_ANGLE) if on else eye
    return ana @ r_out @ perm @ r_in


def _fuse(
    s: StateLike, in1: str, in2: str, out1: str, out2: str, tilt: float, analyze: Sequence[bool]
) -> StateLike:
    H, V = Pol.H, Pol.V
    inputs = [ModeId(in1, H), ModeId(in1, V), ModeId(in2, H), ModeId(in2, V)]
    outputs = [ModeId(out1, H), ModeId(out1, V), ModeId(out2, H), ModeId(out2, V)]
    return apply_mode_map(s, fusion_matrix(tilt, analyze), inputs, outputs)


def _herald(
    state: MixedState, ports: Sequence[str], eta_d: float, correct_on: str
) -> FusionRound:
    """Measure already-analyzed ``ports``; keep exactly-one-click patterns."""
    detectors = [d for p in ports for d in pm_detectors(p, eta_d)]
    outcomes = measure_all(state, detectors, method="povm")
    accepted = {}
    rejected = 0.0
    total = 0.0
    for pattern, cond in outcomes.items():
        prob = cond.trace()
        total += prob
        clicks = pattern.clicked()
        if sorted(c[:-1] for c in clicks) != sorted(f"D{p}" for p in ports):
            rejected += prob
            continue
        minus = [c for c in clicks if c.endswith("-")]
        if len(minus) % 2:
            cond = pauli_z(cond, correct_on)
        accepted[pattern.with_corrections([correct_on] * len(minus))] = cond.compress()
    norm = state.trace()
    return FusionRound(accepted, rejected, total / norm if norm else 0.0)


def step1_fuse(cfg: ProtocolConfig, pair: tuple[int, int] = (1, 2)) -> FusionRound:
    """Fuse two sources; accepted states live on beams {i}a, {j}a, {i}d."""
    i, j = pair
    state = tensor(lossy_pair(cfg.source, f"{i}a", f"{i}b"), lossy_pair(cfg.source, f"{j}a", f"{j}b"))
    state = _fuse(state, f"{i}b", f"{j}b", f"{i}c", f"{i}d", cfg.pbs_tilt, (True, False))
    return _herald(state, [f"{i}c"], cfg.eta_d, correct_on=f"{i}d")


def step2_fuse(cfg: ProtocolConfig) -> ProtocolResult:
    """Full protocol: success probability and normalized resource state on 1a..4a."""
    left, right = step1_fuse(cfg, (1, 2)), step1_fuse(cfg, (3, 4))
    patterns: dict[HeraldPattern, MixedState] = {}
    totals = [left.total_probability, right.total_probability]
    for p, sp in left.accepted.items():
        for q, sq in right.accepted.items():
            joint = tensor(sp, sq)
            joint = _fuse(joint, "1d", "3d", "1e", "1f", cfg.pbs_tilt, (True, True))
            rnd = _herald(joint, ["1e", "1f"], cfg.eta_d, correct_on="1a")
            totals.append(rnd.total_probability)
            for r, state in rnd.accepted.items():
                patterns[p.join(q).join(r)] = state
    p_success = sum(s.trace() for s in patterns.values())
    combined = None
    for s in patterns.values():
        combined = s if combined is None else combined + s
    rho_r = combined.compress().normalized() if p_success > 0 else combined
    return ProtocolResult(p_success, rho_r, patterns, totals)


def success_probability(source: SourceParams, eta_d: float) -> float:
    """Closed-form heralding probability eta_d^4 (eta_b + eta_s)^4 / 8."""
    e = as_emission(source)
    return eta_d ** 4 * (e.eta_b + e.eta_s) ** 4 / 8


def id_loss_rate(source: SourceParams) -> float:
    """Per-qubit loss rate of the heralded state, eta_b / (eta_b + eta_s)."""
    e = as_emission(source)
    if e.eta_s <= 0:
        raise ValueError("eta_s must be positive")
    return e.eta_b / (e.eta_b + e.eta_s)


def step1_retained_terms(source: SourceParams, eta_d: float) -> MixedState:
    """Closed-form step-1 state restricted to terms with a photon in 1d.

    GHZ3 with weight eta_s^2 eta_d / 2; |HH>, |VV> on (1a, 1d) and on (2a, 1d)
    with eta_s eta_b eta_d / 4 each; |H>, |V> on 1d with eta_b^2 eta_d / 4 each.
    """
    e = as_emission(source)
    beams = ("1a", "2a", "1d")
    modes = modes_of(*beams)
    ghz3 = MixedState.from_pure(ghz_state(beams), e.eta_s ** 2 * eta_d / 2)
    pairs = [_diag_component(kept, beams).scaled(e.eta_s * e.eta_b * eta_d / 2) for kept in (("1a", "1d"), ("2a", "1d"))]
    single = _diag_component(("1d",), beams).scaled(e.eta_b ** 2 * eta_d / 2)
    out = ghz3 + pairs[0] + pairs[1] + single
    return MixedState(out.branches, modes)


def id_loss(reference: PureState, epsilon: float) -> MixedState:
    """Each beam of ``reference`` independently lost with probability ``epsilon``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    state: StateLike = reference
    for beam in reference.spatial_labels():
        state = loss_channel(state, beam, 1 - epsilon)
    return as_mixed(state)


@dataclass(frozen=True)
class ReferenceStates:
    ghz3: PureState
    ghz4: PureState
    rho1: MixedState
    rho2: MixedState
    rho3: MixedState
    vacuum: PureState

    def id_form(self, epsilon: float) -> MixedState:
        """Explicit loss-sector sum with binomial-style coefficients."""
        e, k = epsilon, 1 - epsilon
        return (
            MixedState.from_pure(self.ghz4, k ** 4)
            + self.rho1.scaled(k ** 3 * e)
            + self.rho2.scaled(k ** 2 * e ** 2)
            + self.rho3.scaled(k * e ** 3)
            + MixedState.from_pure(self.vacuum, e ** 4)
        )


def _diag_component(kept: Sequence[str], all_beams: Sequence[str]) -> MixedState:
    """(|H..H><H..H| + |V..V><V..V|)/2 on ``kept``, vacuum on the other beams."""
    modes = modes_of(*all_beams)
    return MixedState(
        [(0.5, PureState.basis({ModeId(b, pol): 1 for b in kept}, modes)) for pol in Pol],
        modes,
    )


def reference_states(beams: Sequence[str] = OUTPUT_BEAMS) -> ReferenceStates:
    """GHZ states and the one-, two- and three-photon-loss mixtures over ``beams``.

    ``ghz3`` is the step-1 target on 1a, 2a, 1d.
    """

    def group(size: int) -> MixedState:
        parts = [_diag_component(c, beams) for c in combinations(beams, size)]
        out = parts[0]
        for p in parts[1:]:
            out = out + p
        return out

    return ReferenceStates(
        ghz3=ghz_state(("1a", "2a", "1d")),
        ghz4=ghz_state(beams),
        rho1=group(3),
        rho2=group(2),
        rho3=group(1),
        vacuum=PureState.vacuum(modes_of(*beams)),
    )


@dataclass(frozen=True)
class IdDecomposition:
    """Fitted per-qubit loss rate; ``weights[k]`` is the weight with k qubits lost."""

    epsilon: float
    weights: tuple[float, ...]
    residual: float


def sector_weights(rho: StateLike, beams: Sequence[str]) -> list[float]:
    """Weight of each loss sector: index k collects terms with k empty beams."""
    weights = [0.0] * (len(beams) + 1)
    for w, psi in as_mixed(rho).branches:
        for occ, a in psi.amplitudes.items():
            empty = sum(1 for b in beams if occ.photons_in(b) == 0)
            weights[empty] += w * abs(a) ** 2
    return weights


def id_decompose(rho: StateLike, reference: Optional[PureState] = None) -> IdDecomposition:
    """Fit ``rho`` to independent loss of ``reference`` (GHZ over rho's beams by default)."""
    m = as_mixed(rho)
    if abs(m.trace() - 1) > 1e-9:
        raise ValueError(f"id_decompose needs a normalized state (trace {m.trace():.12g})")
    if reference is None:
        reference = ghz_state(m.spatial_labels())
    if reference.modes != m.modes:
        raise ValueError("state and reference act on different modes")
    beams = reference.spatial_labels()
    n = len(beams)
    weights = sector_weights(m, beams)

    def residual(eps: float) -> float:
        return trace_distance(m, id_loss(reference, min(1.0, max(0.0, eps))))

    # mean lost fraction is exact for an ID state and robust near zero loss;
    # the vacuum-root form is kept as a second closed-form candidate
    candidates = [sum(k * w for k, w in enumerate(weights)) / n, weights[n] ** (1 / n)]
    scored = [(residual(e), e) for e in candidates]
    best_res, best_eps = min(scored)
    if best_res > ID_RESIDUAL_TOL:
        opt = minimize_scalar(residual, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
        if opt.fun < best_res:
            best_res, best_eps = float(opt.fun), float(opt.x)
    return IdDecomposition(min(1.0, max(0.0, best_eps)), tuple(weights), best_res)


def protocol_report(cfg: ProtocolConfig, result: Optional[ProtocolResult] = None) -> dict:
    """Summary of one protocol run, suitable for JSON output."""
    if result is None:
        result = step2_fuse(cfg)
    ref = ghz_state(OUTPUT_BEAMS)
    dec = id_decompose(result.rho_r, ref)
    return {
        "source": as_emission(cfg.source).as_dict(),
        "eta_d": cfg.eta_d,
        "p_success": result.p_success,
        "p_success_formula": success_probability(cfg.source, cfg.eta_d),
        "epsilon": dec.epsilon,
        "epsilon_formula": id_loss_rate(cfg.source),
        "sector_weights": list(dec.weights),
        "ghz4_fidelity": fidelity(result.rho_r, ref),
        "residual": dec.residual,
        "patterns": {p.key(): s.trace() for p, s in result.patterns.items()},
    }


def occupation_block(rho: StateLike, predicate) -> tuple[list[OccupationState], np.ndarray]:
    """Density-matrix block on the occupation states selected by ``predicate``."""
    basis = [o for o in as_mixed(rho).occupations() if predicate(o)]
    return as_mixed(rho).density_matrix(basis)
