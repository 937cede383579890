"""Circuit elements: PBS, polarization rotation, loss, and sigma_z feedforward.

Convention: the PBS is a pure mode permutation with no reflection phase.
"""

from __future__ import annotations

import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .fock import (
    MixedState,
    ModeId,
    OccupationState,
    Pol,
    PureState,
    StateLike,
    apply_mode_map,
    as_mixed,
)


class ElementKind(str, enum.Enum):
    PBS = "PBS"
    POL_ROT = "POL_ROT"
    LOSS = "LOSS"
    PAULI_Z = "PAULI_Z"


def pbs(s: StateLike, in1: str, in2: str, out1: str, out2: str) -> StateLike:
    """Polarizing beam splitter: H transmits (in1->out1, in2->out2), V reflects (in1->out2, in2->out1)."""
    if in1 == in2 or out1 == out2:
        raise ValueError(f"PBS port labels collide: in=({in1}, {in2}) out=({out1}, {out2})")
    H, V = Pol.H, Pol.V
    inputs = [ModeId(in1, H), ModeId(in2, H), ModeId(in1, V), ModeId(in2, V)]
    outputs = [ModeId(out1, H), ModeId(out2, H), ModeId(out2, V), ModeId(out1, V)]
    return apply_mode_map(s, np.eye(4), inputs, outputs)


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    # column j is the image of input j: a_H -> c a_H + s a_V, a_V -> -s a_H + c a_V
    return np.array([[c, -s], [s, c]])


def pol_rotation(s: StateLike, spatial: str, angle: float) -> StateLike:
    if not math.isfinite(angle):
        raise ValueError(f"rotation angle must be finite, got {angle}")
    modes = [ModeId(spatial, Pol.H), ModeId(spatial, Pol.V)]
    return apply_mode_map(s, rotation_matrix(angle), modes)


def pauli_z(s: StateLike, spatial: str) -> StateLike:
    """Sign (-1)^{n_V} on the V photons of one beam."""
    mode = ModeId(spatial, Pol.V)

    def flip(psi: PureState) -> PureState:
        return PureState._raw(
            {o: (-a if o.get(mode) % 2 else a) for o, a in psi.amplitudes.items()}, psi.modes
        )

    if isinstance(s, MixedState):
        return s.map_branches(flip)
    return flip(s)


def _kraus_branches(psi: PureState, mode: ModeId, eta: float) -> list[PureState]:
    """Unnormalized outputs K_k psi of the pure-loss channel, one per lost-photon count k."""
    by_k: dict[int, dict[OccupationState, complex]] = defaultdict(dict)
    for occ, a in psi.amplitudes.items():
        n = occ.get(mode)
        rest = [(m, c) for m, c in occ.counts if m != mode]
        for k in range(n + 1):
            coef = math.sqrt(math.comb(n, k) * eta ** (n - k) * (1 - eta) ** k)
            if coef == 0:
                continue
            new = OccupationState._from_distinct(rest + [(mode, n - k)])
            by_k[k][new] = by_k[k].get(new, 0) + a * coef
    return [PureState._raw(amps, psi.modes) for amps in by_k.values()]


def attenuate(s: StateLike, modes: Iterable[ModeId], eta: float) -> MixedState:
    """Independent pure loss with transmissivity ``eta`` on each listed mode.

    The environment is never materialized: each branch splits by the number
    of photons lost, with binomial weights.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity must lie in [0, 1], got {eta}")
    m = as_mixed(s)
    modes = list(modes)
    missing = set(modes) - m.modes
    if missing:
        raise ValueError(f"loss on modes not in the state: {sorted(map(str, missing))}")
    if eta == 1.0:
        return m
    branches = list(m.branches)
    for mode in modes:
        nxt = []
        for w, psi in branches:
            if psi.max_photons() == 0 or all(o.get(mode) == 0 for o in psi.amplitudes):
                nxt.append((w, psi))
                continue
            for ket in _kraus_branches(psi, mode, eta):
                n2 = ket.norm_squared()
                if n2 > 0:
                    nxt.append((w * n2, ket.scale(1 / math.sqrt(n2))))
        branches = nxt
    return MixedState(branches, m.modes)


def loss_channel(s: StateLike, spatial: str, eta: float) -> MixedState:
    """Loss on one beam, applied to its H and V modes independently."""
    return attenuate(s, [ModeId(spatial, Pol.H), ModeId(spatial, Pol.V)], eta)


@dataclass(frozen=True)
class ElementSpec:
    kind: ElementKind
    ports: tuple[str, ...]
    parameter: float = 0.0

    def __post_init__(self):
        kind = ElementKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "ports", tuple(self.ports))
        expected = 4 if kind is ElementKind.PBS else 1
        if len(self.ports) != expected:
            raise ValueError(f"{kind.value} takes {expected} port label(s), got {len(self.ports)}")
        if not math.isfinite(self.parameter):
            raise ValueError(f"{kind.value} parameter must be finite")
        if kind is ElementKind.LOSS and not 0.0 <= self.parameter <= 1.0:
            raise ValueError(f"LOSS transmissivity must lie in [0, 1], got {self.parameter}")

    def apply(self, s: StateLike) -> StateLike:
        if self.kind is ElementKind.PBS:
            return pbs(s, *self.ports)
        if self.kind is ElementKind.POL_ROT:
            return pol_rotation(s, self.ports[0], self.parameter)
        if self.kind is ElementKind.LOSS:
            return loss_channel(s, self.ports[0], self.parameter)
        return pauli_z(s, self.ports[0])

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "ports": list(self.ports), "parameter": self.parameter}


def load_circuit(text: str) -> list[ElementSpec]:
    """Parse and validate a JSON list of element records."""
    records = json.loads(text)
    if not isinstance(records, list):
        raise ValueError("circuit description must be a JSON list")
    out = []
    for i, rec in enumerate(records):
        try:
            out.append(ElementSpec(rec["kind"], tuple(rec["ports"]), float(rec.get("parameter", 0.0))))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"element {i}: malformed record {rec!r}") from exc
    return out


def dump_circuit(elements: Sequence[ElementSpec]) -> str:
    return json.dumps([e.to_dict() for e in elements])


def run_circuit(s: StateLike, elements: Sequence[ElementSpec]) -> StateLike:
    for e in elements:
        s = e.apply(s)
    return s
