"""Imperfect polarization-entangled pair sources and their two parameterizations."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Union

from .elements import loss_channel
from .fock import MixedState, ModeId, Pol, PureState, modes_of, tensor

_EMISSION_KEYS = ("eta_s", "eta_a", "eta_b")
_LOSS_KEYS = ("f_c", "f_a", "f_b")


@dataclass(frozen=True)
class EmissionParams:
    """Probabilities of emitting the pair, only the a photon, only the b photon."""

    eta_s: float
    eta_a: float = 0.0
    eta_b: float = 0.0

    def __post_init__(self):
        for name in _EMISSION_KEYS:
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.eta_s + self.eta_a + self.eta_b > 1.0 + 1e-12:
            raise ValueError("eta_s + eta_a + eta_b must not exceed 1")

    @property
    def vacuum(self) -> float:
        return max(0.0, 1.0 - self.eta_s - self.eta_a - self.eta_b)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class LossParams:
    """Correlated loss of the whole pair and uncorrelated loss in arms a and b."""

    f_c: float = 0.0
    f_a: float = 0.0
    f_b: float = 0.0

    def __post_init__(self):
        for name in _LOSS_KEYS:
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v < 1.0):
                raise ValueError(f"{name} must lie in [0, 1), got {v}")

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


SourceParams = Union[EmissionParams, LossParams]


def emission_from_loss(l: LossParams) -> EmissionParams:
    keep = 1 - l.f_c
    return EmissionParams(
        eta_s=keep * (1 - l.f_a) * (1 - l.f_b),
        eta_a=keep * (1 - l.f_a) * l.f_b,
        eta_b=keep * (1 - l.f_b) * l.f_a,
    )


def loss_from_emission(e: EmissionParams) -> LossParams:
    if e.eta_s <= 0:
        raise ValueError("eta_s must be positive to invert the loss parameterization")
    s, a, b = e.eta_s, e.eta_a, e.eta_b
    f_c = 1 - (a + s) * (b + s) / s
    if -1e-12 < f_c < 0:
        f_c = 0.0  # rounding residue of an exact zero
    elif f_c < 0:
        raise ValueError(
            "no loss-model equivalent: needs (eta_s + eta_a)(eta_s + eta_b) <= eta_s, "
            f"got {(a + s) * (b + s):.6g} > {s:.6g}"
        )
    return LossParams(f_c=f_c, f_a=b / (b + s), f_b=a / (a + s))


def as_emission(p: SourceParams) -> EmissionParams:
    return p if isinstance(p, EmissionParams) else emission_from_loss(p)


def params_from_mapping(cfg: Mapping[str, float]) -> SourceParams:
    """Read either parameterization from a config mapping; mixing both is an error."""
    has_eta = [k for k in _EMISSION_KEYS if cfg.get(k) is not None]
    has_f = [k for k in _LOSS_KEYS if cfg.get(k) is not None]
    if has_eta and has_f:
        raise ValueError("give either eta_s/eta_a/eta_b or f_c/f_a/f_b, not both")
    if has_eta:
        if "eta_s" not in has_eta:
            raise ValueError("eta_s is required with the emission parameterization")
        return EmissionParams(**{k: float(cfg[k]) for k in has_eta})
    if has_f:
        return LossParams(**{k: float(cfg[k]) for k in has_f})
    raise ValueError("no source parameters given")


def bell_pair(a: str, b: str) -> PureState:
    """(|HH> + |VV>)/sqrt(2) on beams a, b."""
    if a == b:
        raise ValueError("bell_pair needs two distinct beams")
    r = 1 / math.sqrt(2)
    hh = PureState.basis({ModeId(a, Pol.H): 1, ModeId(b, Pol.H): 1}, modes_of(a, b))
    vv = PureState.basis({ModeId(a, Pol.V): 1, ModeId(b, Pol.V): 1}, modes_of(a, b))
    return (hh + vv).scale(r)


def _single(beam: str, pol: Pol, modes) -> PureState:
    return PureState.basis({ModeId(beam, pol): 1}, modes)


def lossy_pair(params: SourceParams, a: str, b: str) -> MixedState:
    """Mixture of vacuum, the Bell pair, and unpolarized single photons in a or b."""
    e = as_emission(params)
    modes = modes_of(a, b)
    bell = bell_pair(a, b)
    branches = [
        (e.vacuum, PureState.vacuum(modes)),
        (e.eta_s, bell),
        (e.eta_a / 2, _single(a, Pol.H, modes)),
        (e.eta_a / 2, _single(a, Pol.V, modes)),
        (e.eta_b / 2, _single(b, Pol.H, modes)),
        (e.eta_b / 2, _single(b, Pol.V, modes)),
    ]
    return MixedState(branches, modes)


def pair_through_losses(l: LossParams, a: str, b: str) -> MixedState:
    """Bell pair sent through correlated loss, then independent loss per arm."""
    modes = modes_of(a, b)
    state = MixedState([(1 - l.f_c, bell_pair(a, b)), (l.f_c, PureState.vacuum(modes))], modes)
    state = loss_channel(state, a, 1 - l.f_a)
    return loss_channel(state, b, 1 - l.f_b)


def source_product(params: SourceParams, pairs) -> MixedState:
    """Independent identical sources, one per (a, b) beam pair."""
    out = None
    for a, b in pairs:
        s = lossy_pair(params, a, b)
        out = s if out is None else tensor(out, s)
    return out
