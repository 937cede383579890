"""Inefficient on/off (bucket) detectors without dark counts.

A detector watches one mode. It is modeled as pure loss with its efficiency,
followed by an ideal projection onto "no photon" or "at least one photon";
detection is destructive, so the watched modes are traced out afterwards.
"""

from __future__ import annotations

import enum
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .elements import attenuate, pol_rotation
from .fock import MixedState, ModeId, Pol, PureState, StateLike, as_mixed

PM_ANALYZER_ANGLE = -math.pi / 4


class Outcome(str, enum.Enum):
    CLICK = "click"
    OFF = "off"


@dataclass(frozen=True)
class DetectorSpec:
    label: str
    target: ModeId
    eta_d: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eta_d <= 1.0:
            raise ValueError(f"detector efficiency must lie in [0, 1], got {self.eta_d}")


@dataclass(frozen=True)
class HeraldPattern:
    """Outcome of every detector in a round, plus the feedforward it calls for.

    ``corrections`` lists the beams that receive a sigma_z; it does not take
    part in equality, so two patterns with the same clicks compare equal.
    """

    outcomes: tuple[tuple[str, Outcome], ...]
    corrections: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        labels = [l for l, _ in self.outcomes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"detector listed twice in pattern: {labels}")
        object.__setattr__(self, "outcomes", tuple((l, Outcome(o)) for l, o in self.outcomes))

    def __getitem__(self, label: str) -> Outcome:
        return dict(self.outcomes)[label]

    def clicked(self) -> list[str]:
        return [l for l, o in self.outcomes if o is Outcome.CLICK]

    def serialize(self) -> list[str]:
        return [f"{l}={o.value}" for l, o in self.outcomes]

    def key(self) -> str:
        return ",".join(self.serialize())

    @classmethod
    def parse(cls, items: Iterable[str]) -> "HeraldPattern":
        out = []
        for item in items:
            label, sep, value = item.rpartition("=")
            if not sep or value not in ("click", "off"):
                raise ValueError(f"malformed pattern entry {item!r}")
            out.append((label, Outcome(value)))
        return cls(tuple(out))

    def join(self, other: "HeraldPattern") -> "HeraldPattern":
        return HeraldPattern(self.outcomes + other.outcomes, self.corrections + other.corrections)

    def with_corrections(self, beams: Sequence[str]) -> "HeraldPattern":
        return HeraldPattern(self.outcomes, tuple(beams))


def click_probability(s: StateLike, d: DetectorSpec) -> float:
    """sum_n P(n photons in the target) * (1 - (1 - eta_d)^n)."""
    m = as_mixed(s)
    if d.target not in m.modes:
        raise ValueError(f"detector target {d.target} not in state")
    p = 0.0
    for w, psi in m.branches:
        for occ, a in psi.amplitudes.items():
            n = occ.get(d.target)
            if n:
                p += w * abs(a) ** 2 * (1 - (1 - d.eta_d) ** n)
    return p


def _check_detectors(s: StateLike, detectors: Sequence[DetectorSpec]) -> None:
    targets = [d.target for d in detectors]
    if len(set(targets)) != len(targets):
        raise ValueError("detector targets must be pairwise distinct")
    labels = [d.label for d in detectors]
    if len(set(labels)) != len(labels):
        raise ValueError("detector labels must be pairwise distinct")
    missing = set(targets) - s.modes
    if missing:
        raise ValueError(f"detector targets not in state: {sorted(map(str, missing))}")


def _outcome_weights(counts: tuple[int, ...], etas: Sequence[float]) -> list[tuple[tuple[bool, ...], float]]:
    """Joint click/off POVM weights for definite photon counts at each detector."""
    per = []
    for n, eta in zip(counts, etas):
        off = (1 - eta) ** n
        per.append([(c, p) for c, p in ((True, 1 - off), (False, off)) if p > 0])
    out = []
    for combo in itertools.product(*per):
        out.append((tuple(c for c, _ in combo), math.prod(p for _, p in combo)))
    return out


# occupation -> (counts on targets, rest), one table per target tuple
_SPLITS: dict = {}


def measure_all(
    s: StateLike, detectors: Sequence[DetectorSpec], method: str = "loss"
) -> dict[HeraldPattern, MixedState]:
    """Unnormalized conditional state for every one of the 2^k joint outcomes.

    Each returned state's trace is the probability of its pattern.
    ``method="loss"`` applies each detector's efficiency as a loss channel and
    then projects ideally; ``method="povm"`` weights the traced-out photon
    counts by the click/off POVM directly. The two agree exactly because the
    POVM elements are diagonal and the detection is destructive.
    """
    if method not in ("loss", "povm"):
        raise ValueError(f"unknown measurement method {method!r}")
    _check_detectors(s, detectors)
    m = as_mixed(s)
    if method == "loss":
        by_eta: dict[float, list[ModeId]] = defaultdict(list)
        for d in detectors:
            by_eta[d.eta_d].append(d.target)
        for eta, targets in by_eta.items():
            m = attenuate(m, targets, eta)

    targets = [d.target for d in detectors]
    etas = [d.eta_d for d in detectors]
    target_set = frozenset(targets)
    keep = m.modes - target_set
    split_cache = _SPLITS.get(tuple(targets))
    if split_cache is None or len(split_cache) > 200_000:
        if len(_SPLITS) > 512:
            _SPLITS.clear()
        split_cache = _SPLITS[tuple(targets)] = {}
    weight_cache: dict = {}
    sorted_branches: dict[tuple[bool, ...], list] = defaultdict(list)
    for w, psi in m.branches:
        groups: dict[tuple[int, ...], dict] = defaultdict(dict)
        for occ, a in psi.amplitudes.items():
            hit = split_cache.get(occ)
            if hit is None:
                watched, rest = occ.split(target_set)
                hit = split_cache[occ] = (tuple(watched.get(t) for t in targets), rest)
            groups[hit[0]][hit[1]] = a
        for counts, amps in groups.items():
            part = PureState._raw(amps, keep)
            n2 = part.norm_squared()
            if n2 == 0:
                continue
            part = part.scale(1 / math.sqrt(n2))
            if method == "loss":
                sorted_branches[tuple(c > 0 for c in counts)].append((w * n2, part))
                continue
            if counts not in weight_cache:
                weight_cache[counts] = _outcome_weights(counts, etas)
            for clicks, p in weight_cache[counts]:
                sorted_branches[clicks].append((w * n2 * p, part))

    out = {}
    for clicks in itertools.product((True, False), repeat=len(detectors)):
        pattern = HeraldPattern(
            tuple((d.label, Outcome.CLICK if c else Outcome.OFF) for d, c in zip(detectors, clicks))
        )
        out[pattern] = MixedState(sorted_branches.get(clicks, []), keep)
    return out


def measure_on_off(
    s: StateLike, detectors: Sequence[DetectorSpec], pattern: HeraldPattern
) -> tuple[float, MixedState]:
    """(probability, unnormalized conditional state) for one joint outcome."""
    if sorted(l for l, _ in pattern.outcomes) != sorted(d.label for d in detectors):
        raise ValueError("pattern must name every detector exactly once")
    order = [d.label for d in detectors]
    wanted = HeraldPattern(tuple(sorted(pattern.outcomes, key=lambda lo: order.index(lo[0]))))
    cond = measure_all(s, detectors)[wanted]
    return cond.trace(), cond


def povm_equivalence_check(n_max: int, eta_d: float) -> float:
    """Largest gap between simulated and closed-form click probabilities on |n>, n <= n_max."""
    mode = ModeId("t", Pol.H)
    d = DetectorSpec("D", mode, eta_d)
    click = HeraldPattern((("D", Outcome.CLICK),))
    worst = 0.0
    for n in range(n_max + 1):
        fock_n = PureState.basis({mode: n}, [mode])
        p, _ = measure_on_off(fock_n, [d], click)
        worst = max(worst, abs(p - (1 - (1 - eta_d) ** n)))
    return worst


def pm_detectors(spatial: str, eta_d: float) -> list[DetectorSpec]:
    """The D+ / D- pair watching one beam after :func:`pm_analyzer`."""
    return [
        DetectorSpec(f"D{spatial}+", ModeId(spatial, Pol.H), eta_d),
        DetectorSpec(f"D{spatial}-", ModeId(spatial, Pol.V), eta_d),
    ]


def pm_analyzer(s: StateLike, spatial: str) -> StateLike:
    """Rotate so that |+> lands in the H mode and |-> in the V mode."""
    return pol_rotation(s, spatial, PM_ANALYZER_ANGLE)


def measure_port(s: StateLike, spatial: str, eta_d: float) -> dict[Outcome, MixedState]:
    """Polarization-blind port detector: CLICK when either of its H/V detectors clicks."""
    dets = [DetectorSpec(f"D{spatial}.{p}", ModeId(spatial, p), eta_d) for p in Pol]
    outs = measure_all(s, dets)
    off = HeraldPattern(tuple((d.label, Outcome.OFF) for d in dets))
    click = None
    for pattern, cond in outs.items():
        if pattern != off:
            click = cond if click is None else click + cond
    return {Outcome.CLICK: click, Outcome.OFF: outs[off]}
