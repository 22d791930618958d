import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nanolattice.operators import (CompositeSpace, ModeKind, ModeSpec, OperatorError, SparseOperator,
                                   annihilation, commutator, creation, embed, identity,
                                   mode_operators, number, op_sum, zero)


def space_of(*dims):
    return CompositeSpace(tuple(ModeSpec(f"m{i}", ModeKind.MECHANICAL, 1.0 + i, 0.0, d)
                                for i, d in enumerate(dims)))


@pytest.mark.parametrize("d", range(2, 17))
def test_ladder_matrix_elements(d):
    a = annihilation(d).to_dense()
    expect = np.diag(np.sqrt(np.arange(1, d)), 1)
    assert np.max(np.abs(a - expect)) <= 1e-15
    assert np.max(np.abs(creation(d).to_dense() - expect.T)) <= 1e-15
    assert np.max(np.abs(number(d).to_dense() - np.diag(np.arange(d)))) <= 1e-14


def test_qubit_truncation_ladder():
    assert np.array_equal(annihilation(2).to_dense(), [[0, 1], [0, 0]])


@pytest.mark.parametrize("d", [2, 3, 7, 16])
def test_commutator_boundary_defect(d):
    c = commutator(annihilation(d), creation(d)).to_dense()
    expect = np.diag([1.0] * (d - 1) + [-(d - 1.0)])
    assert np.max(np.abs(c - expect)) <= 1e-13


@pytest.mark.parametrize("d", [0, 1, -3])
def test_invalid_dimension(d):
    with pytest.raises(OperatorError):
        annihilation(d)


def test_row_major_slot_order():
    space = space_of(2, 3)
    # slot 0 is the most significant index
    assert space.basis_index({"m0": 1, "m1": 2}) == 1 * 3 + 2
    a0 = embed(annihilation(2), space, 0).to_dense()
    assert np.allclose(a0, np.kron(annihilation(2).to_dense(), np.eye(3)))
    a1 = embed(annihilation(3), space, "m1").to_dense()
    assert np.allclose(a1, np.kron(np.eye(2), annihilation(3).to_dense()))


def test_embed_errors():
    space = space_of(2, 3)
    with pytest.raises(OperatorError):
        embed(annihilation(3), space, 0)
    with pytest.raises(OperatorError):
        embed(annihilation(2), space, 5)


@pytest.mark.parametrize("dims", [(2, 3), (3, 2, 4), (4, 4)])
def test_distinct_slots_commute(dims):
    space = space_of(*dims)
    ops = mode_operators(space)
    for x in space.labels:
        for y in space.labels:
            if x == y:
                continue
            for A in (ops[x], ops[x].adjoint()):
                for B in (ops[y], ops[y].adjoint()):
                    assert commutator(A, B).max_abs() <= 1e-15


mat = st.integers(2, 4).flatmap(lambda d: st.tuples(
    st.just(d),
    st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
             min_size=d * d, max_size=d * d),
    st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
             min_size=d * d, max_size=d * d)))


@settings(max_examples=40, deadline=None)
@given(mat, st.integers(0, 2))
def test_embed_is_homomorphism(data, slot):
    d, xa, xb = data
    dims = [3, 2, 3]
    dims[slot] = d
    space = space_of(*dims)
    A = SparseOperator.from_dense(np.reshape(xa, (d, d)))
    B = SparseOperator.from_dense(np.reshape(xb, (d, d)))
    lhs = embed(A, space, slot) @ embed(B, space, slot)
    rhs = embed(A @ B, space, slot)
    assert lhs.allclose(rhs, 1e-12)
    assert (embed(A, space, slot) + embed(B, space, slot)).allclose(embed(A + B, space, slot), 1e-12)
    assert embed(A.adjoint(), space, slot).allclose(embed(A, space, slot).adjoint(), 1e-15)


def test_canonical_equality_and_hash():
    a = SparseOperator.from_entries(3, [(0, 1, 1.0), (2, 2, 0.0)])
    b = SparseOperator.from_dense([[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    assert a == b and hash(a) == hash(b)
    with pytest.raises(OperatorError):
        SparseOperator.from_entries(2, [(0, 0, 1), (0, 0, 2)])
    with pytest.raises(OperatorError):
        SparseOperator.from_entries(2, [(0, 2, 1)])


def test_hermitian_hint_checked():
    with pytest.raises(OperatorError):
        SparseOperator(annihilation(3).matrix, hermitian_hint=True)
    assert number(4).is_hermitian()


def test_sum_identity_zero():
    d = 5
    assert op_sum([number(d), identity(d)], d).allclose(
        SparseOperator.from_dense(np.diag(np.arange(d) + 1.0)))
    assert op_sum([], d) == zero(d)


def test_mode_spec_validation():
    with pytest.raises(OperatorError):
        ModeSpec("x", "mechanical", 0.0)
    with pytest.raises(OperatorError):
        ModeSpec("x", "mechanical", 1.0, -1.0)
    with pytest.raises(OperatorError):
        ModeSpec("x", "mechanical", 1.0, 0.0, 1)
    with pytest.raises(ValueError):
        ModeSpec("x", "photonic", 1.0)
    with pytest.raises(OperatorError):
        CompositeSpace((ModeSpec("x", "mechanical", 1.0), ModeSpec("x", "auxiliary", 2.0)))


def test_subspace_order_follows_request():
    space = space_of(2, 3, 4)
    sub = space.subspace(("m2", "m0"))
    assert sub.labels == ("m2", "m0") and sub.total_dim == 8
