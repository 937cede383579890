import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photonfuse.fock import (
    PHOTON_BUDGET,
    MixedState,
    ModeId,
    OccupationState,
    Pol,
    PureState,
    apply_mode_map,
    fidelity,
    modes_of,
    partial_trace,
    relabel,
    tensor,
    trace_distance,
)

A, B, C = ModeId("a", Pol.H), ModeId("b", Pol.H), ModeId("c", Pol.H)
BS = np.array([[1, 1], [1, -1]]) / math.sqrt(2)


def haar(k, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def permanent(m):
    n = m.shape[0]
    return sum(math.prod(m[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def fock_amplitude_oracle(u, n_in, n_out):
    """<n_out| U |n_in> from the permanent of the repeated-index submatrix."""
    rows = [i for i, n in enumerate(n_out) for _ in range(n)]
    cols = [j for j, n in enumerate(n_in) for _ in range(n)]
    sub = u[np.ix_(rows, cols)]
    norm = math.sqrt(math.prod(map(math.factorial, n_in)) * math.prod(map(math.factorial, n_out)))
    return permanent(sub) / norm


def compositions(total, k):
    for cut in itertools.combinations(range(total + k - 1), k - 1):
        bounds = (-1,) + cut + (total + k - 1,)
        yield tuple(bounds[i + 1] - bounds[i] - 1 for i in range(k))


# ---- occupation states and serialization


def test_occupation_canonical_and_roundtrip():
    o = OccupationState({B: 2, A: 1, C: 0})
    assert o.counts == ((A, 1), (B, 2))
    assert o.total == 3
    assert OccupationState.parse(str(o)) == o
    assert str(o) == "a.H:1,b.H:2"
    assert OccupationState.parse("") == OccupationState()


def test_mode_id_parse():
    m = ModeId("1d", Pol.V)
    assert str(m) == "1d.V"
    assert ModeId.parse("1d.V") == m
    with pytest.raises(ValueError):
        ModeId.parse("1d.X")


def test_negative_count_and_budget():
    with pytest.raises(ValueError, match="negative"):
        OccupationState({A: -1})
    with pytest.raises(ValueError, match="budget"):
        OccupationState({A: PHOTON_BUDGET + 1})


def test_pure_state_rejects_undeclared_mode():
    with pytest.raises(ValueError):
        PureState({OccupationState({C: 1}): 1.0}, [A, B])


def test_small_amplitudes_pruned():
    psi = PureState({OccupationState({A: 1}): 1.0, OccupationState({B: 1}): 1e-16}, [A, B])
    assert len(psi.amplitudes) == 1


# ---- oracles


def test_hong_ou_mandel():
    psi = PureState.basis({A: 1, B: 1}, [A, B])
    out = apply_mode_map(psi, BS, [A, B])
    assert abs(out.amplitudes.get(OccupationState({A: 1, B: 1}), 0)) < 1e-15
    assert abs(out.amplitudes[OccupationState({A: 2})]) ** 2 == pytest.approx(0.5, abs=1e-15)
    assert abs(out.amplitudes[OccupationState({B: 2})]) ** 2 == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("n_in", [(1, 1, 1), (2, 1, 0), (3, 0, 1), (2, 2, 0)])
def test_permanent_oracle(seed, n_in):
    u = haar(3, seed)
    modes = [A, B, C]
    psi = PureState.basis(dict(zip(modes, n_in)), modes)
    out = apply_mode_map(psi, u, modes)
    for n_out in compositions(sum(n_in), 3):
        got = out.amplitudes.get(OccupationState(dict(zip(modes, n_out))), 0)
        assert abs(got - fock_amplitude_oracle(u, n_in, n_out)) < 1e-12


def test_non_unitary_rejected():
    psi = PureState.basis({A: 1}, [A, B])
    with pytest.raises(ValueError, match="unitary"):
        apply_mode_map(psi, np.array([[1, 1], [0, 1]]), [A, B])


def test_output_collision_rejected():
    psi = PureState.basis({A: 1}, [A, B, C])
    with pytest.raises(ValueError, match="collide"):
        apply_mode_map(psi, np.eye(1), [A], [C])


# ---- properties

occupations = st.lists(st.integers(0, 2), min_size=3, max_size=3).filter(lambda n: sum(n) <= 5)


@settings(max_examples=40, deadline=None)
@given(n=occupations, seed=st.integers(0, 10_000))
def test_unitary_preserves_norm_and_photon_number(n, seed):
    modes = [A, B, C]
    psi = PureState.basis(dict(zip(modes, n)), modes)
    out = apply_mode_map(psi, haar(3, seed), modes)
    assert out.norm_squared() == pytest.approx(1.0, abs=1e-12)
    assert all(o.total == sum(n) for o in out.amplitudes)


@settings(max_examples=25, deadline=None)
@given(n=occupations, s1=st.integers(0, 10_000), s2=st.integers(0, 10_000))
def test_mode_maps_compose(n, s1, s2):
    modes = [A, B, C]
    u1, u2 = haar(3, s1), haar(3, s2)
    psi = PureState.basis(dict(zip(modes, n)), modes)
    seq = apply_mode_map(apply_mode_map(psi, u1, modes), u2, modes)
    once = apply_mode_map(psi, u2 @ u1, modes)
    for occ in set(seq.amplitudes) | set(once.amplitudes):
        assert abs(seq.amplitudes.get(occ, 0) - once.amplitudes.get(occ, 0)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(weights=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=4), seed=st.integers(0, 10_000))
def test_density_matrix_hermitian_psd(weights, seed):
    rng = np.random.default_rng(seed)
    branches = []
    for w in weights:
        amps = {OccupationState({A: i, B: j}): complex(*rng.normal(size=2)) for i in range(3) for j in range(2)}
        branches.append((w, PureState(amps, [A, B]).normalized()))
    m = MixedState(branches, [A, B])
    _, rho = m.density_matrix()
    assert np.allclose(rho, rho.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    assert np.trace(rho).real == pytest.approx(m.trace(), abs=1e-12)
    assert trace_distance(m, m.compress()) < 1e-12


# ---- composite systems


def test_tensor_and_partial_trace():
    bell = PureState(
        {OccupationState({ModeId("x", Pol.H): 1, ModeId("y", Pol.H): 1}): 1,
         OccupationState({ModeId("x", Pol.V): 1, ModeId("y", Pol.V): 1}): 1},
        modes_of("x", "y"),
    ).normalized()
    red = partial_trace(bell, modes_of("y"))
    assert red.trace() == pytest.approx(1.0)
    _, rho = red.density_matrix()
    assert np.allclose(rho, np.eye(2) / 2)

    single = PureState.basis({ModeId("z", Pol.H): 1}, modes_of("z"))
    prod = tensor(bell, single)
    assert isinstance(prod, PureState)
    back = partial_trace(prod, modes_of("z"))
    assert trace_distance(back, bell) < 1e-14

    mixed = tensor(red, single)
    assert isinstance(mixed, MixedState)
    assert len(mixed.branches) == len(red.branches)


def test_tensor_rejects_shared_modes():
    with pytest.raises(ValueError, match="share"):
        tensor(PureState.vacuum([A]), PureState.vacuum([A]))


def test_relabel_and_fidelity():
    psi = PureState.basis({A: 1}, [A, B])
    moved = relabel(psi, {"a": "b", "b": "a"})
    assert moved.amplitudes == {OccupationState({B: 1}): 1}
    assert fidelity(psi, psi) == pytest.approx(1.0)
    assert fidelity(psi, moved) == 0.0
    with pytest.raises(ValueError, match="normalized"):
        fidelity(MixedState.from_pure(psi, 0.5), psi)


def test_trace_distance_orthogonal():
    a = PureState.basis({A: 1}, [A, B])
    b = PureState.basis({B: 1}, [A, B])
    assert trace_distance(a, b) == pytest.approx(1.0)
