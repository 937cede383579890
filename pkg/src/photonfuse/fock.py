"""Sparse multimode Fock states over labeled polarization modes.

States are immutable values. A :class:`PureState` is a sparse map from
:class:`OccupationState` to complex amplitude; a :class:`MixedState` is a
weighted ensemble of normalized pure branches whose total weight is the trace
(conditional states carry their event probability as trace).
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

PHOTON_BUDGET = 8
AMPLITUDE_PRUNE = 1e-14
WEIGHT_PRUNE = 1e-14
UNITARY_TOL = 1e-9
NORM_TOL = 1e-9


class Pol(enum.IntEnum):
    H = 0
    V = 1

    def __str__(self) -> str:
        return self.name


class ModeId(NamedTuple):
    """One optical mode: a spatial beam label plus a polarization.

    Tuple ordering gives the canonical order (spatial label, then H < V).
    """

    spatial: str
    pol: Pol

    def __str__(self) -> str:
        return f"{self.spatial}.{self.pol.name}"

    @classmethod
    def parse(cls, text: str) -> "ModeId":
        spatial, _, pol = text.rpartition(".")
        if not spatial or pol not in ("H", "V"):
            raise ValueError(f"malformed mode id {text!r}")
        return cls(spatial, Pol[pol])


def modes_of(*spatial: str) -> frozenset[ModeId]:
    """Both polarization modes of each spatial label."""
    return frozenset(ModeId(s, p) for s in spatial for p in Pol)


class OccupationState:
    """Photon counts per mode, stored sparsely and in canonical order."""

    __slots__ = ("counts", "total", "_hash")

    def __init__(self, counts: Union[Mapping[ModeId, int], Iterable[tuple[ModeId, int]]] = ()):
        items = counts.items() if isinstance(counts, dict) else counts
        merged: dict[ModeId, int] = {}
        for mode, n in items:
            if n < 0:
                raise ValueError(f"negative photon count {n} in mode {mode}")
            if n:
                merged[mode] = merged.get(mode, 0) + int(n)
        self.counts: tuple[tuple[ModeId, int], ...] = tuple(sorted(merged.items()))
        self.total = sum(merged.values())
        if self.total > PHOTON_BUDGET:
            raise ValueError(f"photon budget exceeded: {self.total} > {PHOTON_BUDGET}")
        self._hash = hash(self.counts)

    @classmethod
    def _from_distinct(cls, pairs: Iterable[tuple[ModeId, int]]) -> "OccupationState":
        """Fast path for pairs over distinct modes with non-negative counts."""
        self = object.__new__(cls)
        self.counts = tuple(sorted(p for p in pairs if p[1]))
        self.total = sum(n for _, n in self.counts)
        if self.total > PHOTON_BUDGET:
            raise ValueError(f"photon budget exceeded: {self.total} > {PHOTON_BUDGET}")
        self._hash = hash(self.counts)
        return self

    @classmethod
    def _from_sorted(cls, counts: tuple[tuple[ModeId, int], ...]) -> "OccupationState":
        self = object.__new__(cls)
        self.counts = counts
        self.total = sum(n for _, n in counts)
        self._hash = hash(counts)
        return self

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        return isinstance(other, OccupationState) and self.counts == other.counts

    def __lt__(self, other: "OccupationState") -> bool:
        return self.counts < other.counts

    def __repr__(self) -> str:
        return f"OccupationState({str(self)!r})"

    def __str__(self) -> str:
        return ",".join(f"{m}:{n}" for m, n in self.counts)

    @classmethod
    def parse(cls, text: str) -> "OccupationState":
        """Inverse of ``str``: ``"1a.H:1,1d.V:2"``; the empty string is vacuum."""
        if not text.strip():
            return cls()
        pairs = []
        for token in text.split(","):
            mode, _, count = token.strip().rpartition(":")
            pairs.append((ModeId.parse(mode), int(count)))
        return cls(pairs)

    def get(self, mode: ModeId) -> int:
        for m, n in self.counts:
            if m == mode:
                return n
        return 0

    def as_dict(self) -> dict[ModeId, int]:
        return dict(self.counts)

    def split(self, modes: frozenset[ModeId]) -> tuple["OccupationState", "OccupationState"]:
        """(part on ``modes``, part elsewhere)."""
        inside = tuple((m, n) for m, n in self.counts if m in modes)
        outside = tuple((m, n) for m, n in self.counts if m not in modes)
        return OccupationState._from_sorted(inside), OccupationState._from_sorted(outside)

    def photons_in(self, spatial: str) -> int:
        return sum(n for m, n in self.counts if m.spatial == spatial)


VACUUM = OccupationState()


class PureState:
    """Sparse ket over a declared set of modes.

    ``modes`` may include unoccupied modes; amplitudes below the prune
    threshold are dropped on construction.
    """

    __slots__ = ("amplitudes", "modes")

    def __init__(self, amplitudes: Mapping[OccupationState, complex], modes: Iterable[ModeId]):
        self.modes = frozenset(modes)
        amps = {}
        for occ, amp in amplitudes.items():
            if abs(amp) >= AMPLITUDE_PRUNE:
                for m, _ in occ.counts:
                    if m not in self.modes:
                        raise ValueError(f"occupied mode {m} not in the state's mode set")
                amps[occ] = complex(amp)
        self.amplitudes: dict[OccupationState, complex] = amps

    @classmethod
    def _raw(cls, amplitudes: dict[OccupationState, complex], modes: frozenset[ModeId]) -> "PureState":
        """Internal constructor: prunes but skips mode validation."""
        self = object.__new__(cls)
        self.modes = modes
        self.amplitudes = {o: a for o, a in amplitudes.items() if abs(a) >= AMPLITUDE_PRUNE}
        return self

    @classmethod
    def vacuum(cls, modes: Iterable[ModeId]) -> "PureState":
        return cls({VACUUM: 1.0}, modes)

    @classmethod
    def basis(cls, counts: Mapping[ModeId, int], modes: Iterable[ModeId] | None = None) -> "PureState":
        occ = OccupationState(counts)
        return cls({occ: 1.0}, modes if modes is not None else counts.keys())

    def __repr__(self) -> str:
        terms = " + ".join(f"({a:.6g})|{o}>" for o, a in sorted(self.amplitudes.items()))
        return f"PureState({terms or '0'})"

    def __add__(self, other: "PureState") -> "PureState":
        if self.modes != other.modes:
            raise ValueError("cannot add states over different mode sets")
        out = dict(self.amplitudes)
        for occ, a in other.amplitudes.items():
            out[occ] = out.get(occ, 0) + a
        return PureState(out, self.modes)

    def scale(self, factor: complex) -> "PureState":
        return PureState._raw({o: a * factor for o, a in self.amplitudes.items()}, self.modes)

    def norm_squared(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def normalized(self) -> "PureState":
        n2 = self.norm_squared()
        if n2 == 0:
            raise ValueError("cannot normalize the zero vector")
        return self.scale(1 / math.sqrt(n2))

    def inner(self, other: "PureState") -> complex:
        """<self|other>."""
        small, big = (self, other) if len(self.amplitudes) <= len(other.amplitudes) else (other, self)
        total = 0j
        for occ, a in small.amplitudes.items():
            b = big.amplitudes.get(occ)
            if b is not None:
                total += a.conjugate() * b if small is self else b.conjugate() * a
        return total

    def spatial_labels(self) -> list[str]:
        return sorted({m.spatial for m in self.modes})

    def max_photons(self) -> int:
        return max((o.total for o in self.amplitudes), default=0)


StateLike = Union[PureState, "MixedState"]


class MixedState:
    """Weighted ensemble of normalized pure branches.

    Weights need not sum to one: a conditional state carries the probability
    of its heralding event as its trace.
    """

    __slots__ = ("branches", "modes")

    def __init__(self, branches: Iterable[tuple[float, PureState]], modes: Iterable[ModeId] | None = None):
        kept = []
        mode_set = frozenset(modes) if modes is not None else None
        for w, psi in branches:
            if w < -WEIGHT_PRUNE:
                raise ValueError(f"negative branch weight {w}")
            if mode_set is None:
                mode_set = psi.modes
            elif psi.modes != mode_set:
                raise ValueError("branches act on different mode sets")
            if w >= WEIGHT_PRUNE:
                kept.append((float(w), psi))
        if mode_set is None:
            raise ValueError("mode set required for an empty ensemble")
        self.branches: tuple[tuple[float, PureState], ...] = tuple(kept)
        self.modes: frozenset[ModeId] = mode_set

    @classmethod
    def from_pure(cls, psi: PureState, weight: float | None = None) -> "MixedState":
        """Ensemble of one branch; the weight defaults to the squared norm."""
        n2 = psi.norm_squared()
        if n2 == 0:
            return cls([], psi.modes)
        return cls([(n2 if weight is None else weight, psi.normalized())], psi.modes)

    @classmethod
    def from_unnormalized(cls, kets: Iterable[PureState], modes: Iterable[ModeId]) -> "MixedState":
        """Ensemble of unnormalized kets; each contributes its squared norm as weight."""
        branches = []
        for k in kets:
            n2 = k.norm_squared()
            if n2 >= WEIGHT_PRUNE:
                branches.append((n2, k.scale(1 / math.sqrt(n2))))
        return cls(branches, modes)

    def __repr__(self) -> str:
        return f"MixedState({len(self.branches)} branches, trace={self.trace():.6g})"

    def trace(self) -> float:
        return float(sum(w for w, _ in self.branches))

    def scaled(self, factor: float) -> "MixedState":
        return MixedState(((w * factor, s) for w, s in self.branches), self.modes)

    def normalized(self) -> "MixedState":
        t = self.trace()
        if t <= 0:
            raise ValueError("cannot normalize a zero-trace state")
        return self.scaled(1 / t)

    def __add__(self, other: "MixedState") -> "MixedState":
        if self.modes != other.modes:
            raise ValueError("cannot add states over different mode sets")
        return MixedState(self.branches + other.branches, self.modes)

    def map_branches(self, fn: Callable[[PureState], PureState]) -> "MixedState":
        """Apply a norm-preserving map to every branch."""
        out = [(w, fn(s)) for w, s in self.branches]
        modes = out[0][1].modes if out else None
        if modes is None:
            modes = fn(PureState.vacuum(self.modes)).modes
        return MixedState(out, modes)

    def spatial_labels(self) -> list[str]:
        return sorted({m.spatial for m in self.modes})

    def occupations(self) -> list[OccupationState]:
        seen = set()
        for _, s in self.branches:
            seen.update(s.amplitudes)
        return sorted(seen)

    def density_matrix(self, basis: Sequence[OccupationState] | None = None) -> tuple[list[OccupationState], np.ndarray]:
        """Dense density operator on the spanned (or given) occupation basis.

        With an explicit basis, occupations outside it are dropped, so the
        result is the block of rho on that basis.
        """
        basis = list(basis) if basis is not None else self.occupations()
        index = {o: i for i, o in enumerate(basis)}
        vecs = np.zeros((len(self.branches), len(basis)), dtype=complex)
        for k, (w, s) in enumerate(self.branches):
            r = math.sqrt(w)
            for occ, a in s.amplitudes.items():
                i = index.get(occ)
                if i is not None:
                    vecs[k, i] = r * a
        return basis, vecs.T @ vecs.conj()

    def compress(self) -> "MixedState":
        """Equivalent ensemble with at most rank-many branches.

        Each decoupled block of the density operator is diagonalized on its
        own, which keeps the resulting branches sparse.
        """
        if len(self.branches) <= 1:
            return self
        basis, rho = self.density_matrix()
        n_blocks, labels = connected_components(csr_matrix(np.abs(rho) > AMPLITUDE_PRUNE ** 2), directed=False)
        branches = []
        for block in range(n_blocks):
            idx = np.flatnonzero(labels == block)
            if len(idx) == 1:
                i = idx[0]
                lam = rho[i, i].real
                if lam >= WEIGHT_PRUNE:
                    branches.append((float(lam), PureState._raw({basis[i]: 1.0 + 0j}, self.modes)))
                continue
            vals, vecs = np.linalg.eigh(rho[np.ix_(idx, idx)])
            sub = [basis[i] for i in idx]
            for lam, v in zip(vals, vecs.T):
                if lam >= WEIGHT_PRUNE:
                    branches.append((float(lam), PureState(dict(zip(sub, v)), self.modes)))
        return MixedState(branches, self.modes)


def as_mixed(s: StateLike) -> MixedState:
    return s if isinstance(s, MixedState) else MixedState.from_pure(s)


def _product_ket(a: PureState, b: PureState) -> PureState:
    amps = {}
    for oa, xa in a.amplitudes.items():
        for ob, xb in b.amplitudes.items():
            amps[OccupationState._from_distinct(oa.counts + ob.counts)] = xa * xb
    return PureState._raw(amps, a.modes | b.modes)


def tensor(a: StateLike, b: StateLike) -> StateLike:
    """Product state of two systems on disjoint modes.

    Two pure inputs give a pure product; otherwise the branch lists multiply.
    """
    if a.modes & b.modes:
        raise ValueError(f"tensor factors share modes: {sorted(map(str, a.modes & b.modes))}")
    if isinstance(a, PureState) and isinstance(b, PureState):
        return _product_ket(a, b)
    ma, mb = as_mixed(a), as_mixed(b)
    return MixedState(
        [(wa * wb, _product_ket(sa, sb)) for wa, sa in ma.branches for wb, sb in mb.branches],
        ma.modes | mb.modes,
    )


def _check_unitary(u: np.ndarray) -> None:
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"mode map must be square, got shape {u.shape}")
    dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])), initial=0.0)
    if dev > UNITARY_TOL:
        raise ValueError(f"mode map is not unitary (deviation {dev:.3g})")


def _expand_creation(u: np.ndarray, counts_in: tuple[int, ...]) -> dict[tuple[int, ...], complex]:
    key = (u.shape, u.tobytes(), counts_in)
    hit = _EXPANSIONS.get(key)
    if hit is None:
        if len(_EXPANSIONS) > 100_000:
            _EXPANSIONS.clear()
        hit = _EXPANSIONS[key] = _expand_creation_uncached(u, counts_in)
    return hit


_EXPANSIONS: dict = {}
# occupation -> image list, one table per (matrix, inputs, outputs)
_IMAGES: dict = {}


def _expand_creation_uncached(u: np.ndarray, counts_in: tuple[int, ...]) -> dict[tuple[int, ...], complex]:
    """Fock amplitudes of prod_j (sum_i u[i, j] b_i^dag)^n_j / sqrt(n_j!) |0>."""
    k = u.shape[0]
    poly: dict[tuple[int, ...], complex] = {(0,) * k: 1.0 + 0j}
    for j, n in enumerate(counts_in):
        column = [(i, u[i, j]) for i in range(k) if u[i, j] != 0]
        for _ in range(n):
            nxt: dict[tuple[int, ...], complex] = defaultdict(complex)
            for mono, c in poly.items():
                for i, uij in column:
                    m = list(mono)
                    m[i] += 1
                    nxt[tuple(m)] += c * uij
            poly = nxt
        poly = {m: c / math.sqrt(math.factorial(n)) for m, c in poly.items()}
    return {m: c * math.sqrt(math.prod(math.factorial(x) for x in m)) for m, c in poly.items()}


def _map_pure(
    s: PureState,
    u: np.ndarray,
    inputs: Sequence[ModeId],
    outputs: Sequence[ModeId],
    cache: dict,
) -> PureState:
    in_set = frozenset(inputs)
    modes_out = (s.modes - in_set) | frozenset(outputs)
    out: dict[OccupationState, complex] = {}
    for occ, amp in s.amplitudes.items():
        images = cache.get(occ)
        if images is None:
            inside, spectator = occ.split(in_set)
            n_in = tuple(inside.get(m) for m in inputs)
            images = cache[occ] = [
                (OccupationState._from_distinct(spectator.counts + tuple(zip(outputs, n_out))), c)
                for n_out, c in _expand_creation(u, n_in).items()
            ]
        if len(images) == 1 and not out:
            new, c = images[0]
            out[new] = amp * c
            continue
        for new, c in images:
            out[new] = out.get(new, 0) + amp * c
    return PureState._raw(out, modes_out)


def apply_mode_map(
    s: StateLike,
    matrix: np.ndarray,
    inputs: Sequence[ModeId],
    outputs: Sequence[ModeId] | None = None,
) -> StateLike:
    """Apply the Fock-space unitary induced by a linear substitution of creation operators.

    ``a_dag[inputs[j]] -> sum_i matrix[i, j] * a_dag[outputs[i]]``. ``outputs``
    defaults to ``inputs``; output modes may be fresh labels but must not collide
    with modes outside the input set.
    """
    u = np.asarray(matrix, dtype=complex)
    _check_unitary(u)
    inputs = list(inputs)
    outputs = list(inputs if outputs is None else outputs)
    if len(inputs) != u.shape[1] or len(outputs) != u.shape[0]:
        raise ValueError("mode lists do not match the matrix shape")
    if len(set(inputs)) != len(inputs) or len(set(outputs)) != len(outputs):
        raise ValueError("repeated mode in mode map")
    missing = set(inputs) - s.modes
    if missing:
        raise ValueError(f"mode map inputs not in state: {sorted(map(str, missing))}")
    clash = set(outputs) & (s.modes - set(inputs))
    if clash:
        raise ValueError(f"mode map outputs collide with spectator modes: {sorted(map(str, clash))}")
    key = (u.shape, u.tobytes(), tuple(inputs), tuple(outputs))
    cache = _IMAGES.get(key)
    if cache is None or len(cache) > 200_000:
        if len(_IMAGES) > 512:
            _IMAGES.clear()
        cache = _IMAGES[key] = {}
    if isinstance(s, MixedState):
        return s.map_branches(lambda psi: _map_pure(psi, u, inputs, outputs, cache))
    return _map_pure(s, u, inputs, outputs, cache)


def relabel(s: StateLike, mapping: Mapping[str, str]) -> StateLike:
    """Rename spatial labels (a permutation of modes, no amplitude change)."""
    def ren(m: ModeId) -> ModeId:
        return ModeId(mapping.get(m.spatial, m.spatial), m.pol)

    new_modes = frozenset(ren(m) for m in s.modes)
    if len(new_modes) != len(s.modes):
        raise ValueError("relabeling merges distinct modes")

    def one(psi: PureState) -> PureState:
        return PureState(
            {OccupationState._from_distinct((ren(m), n) for m, n in o.counts): a for o, a in psi.amplitudes.items()},
            new_modes,
        )

    if isinstance(s, MixedState):
        return MixedState(((w, one(psi)) for w, psi in s.branches), new_modes)
    return one(s)


def partial_trace(s: StateLike, drop: Iterable[ModeId]) -> MixedState:
    """Trace out ``drop``; each pure branch splits by its occupation on the dropped modes."""
    drop = frozenset(drop)
    if not drop <= s.modes:
        raise ValueError(f"cannot trace out modes not in the state: {sorted(map(str, drop - s.modes))}")
    keep = s.modes - drop
    branches = []
    for w, psi in as_mixed(s).branches:
        groups: dict[OccupationState, dict[OccupationState, complex]] = defaultdict(dict)
        for occ, a in psi.amplitudes.items():
            dropped, kept = occ.split(drop)
            groups[dropped][kept] = a
        for amps in groups.values():
            part = PureState._raw(amps, keep)
            n2 = part.norm_squared()
            if n2 > 0:
                branches.append((w * n2, part.scale(1 / math.sqrt(n2))))
    return MixedState(branches, keep)


def _joint_matrices(a: StateLike, b: StateLike) -> tuple[np.ndarray, np.ndarray]:
    if a.modes != b.modes:
        raise ValueError("states act on different mode sets")
    ma, mb = as_mixed(a), as_mixed(b)
    basis = sorted(set(ma.occupations()) | set(mb.occupations()))
    return ma.density_matrix(basis)[1], mb.density_matrix(basis)[1]


def fidelity(s: StateLike, target: PureState) -> float:
    """<target| rho |target> for a normalized state."""
    m = as_mixed(s)
    if abs(m.trace() - 1) > NORM_TOL:
        raise ValueError(f"fidelity needs a normalized state (trace {m.trace():.12g})")
    if abs(target.norm_squared() - 1) > NORM_TOL:
        raise ValueError("fidelity target is not normalized")
    if m.modes != target.modes:
        raise ValueError("state and target act on different mode sets")
    return float(sum(w * abs(target.inner(psi)) ** 2 for w, psi in m.branches))


def trace_distance(a: StateLike, b: StateLike) -> float:
    """Half the trace norm of the difference of the two density operators."""
    ra, rb = _joint_matrices(a, b)
    if ra.size == 0:
        return 0.0
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(ra - rb))))
