import json

import numpy as np
import pytest

from lvggm.core import (
    Atom, AtomicPSD, DomainError, Estimate, GroundTruthModel, LossKind, NumericalError,
    StructuralError, as_symmetric, materialize, read_matrix, write_matrix,
)


def test_atom_normalizes_and_masks_outside_support():
    a = Atom((2, 0), np.array([3.0, 5.0, 4.0]), 1.5)
    assert a.support == (0, 2)
    np.testing.assert_allclose(a.u, [0.6, 0.0, 0.8])
    assert a.k == 2 and a.dim == 3
    assert not a.u.flags.writeable


def test_atom_rejects_bad_input():
    with pytest.raises(DomainError):
        Atom((0,), np.array([1.0, 0.0]), -1.0)
    with pytest.raises(DomainError):
        Atom((1,), np.array([1.0, 0.0]), 1.0)  # vanishes on its support
    with pytest.raises(StructuralError):
        Atom((0, 0), np.array([1.0, 1.0]), 1.0)
    with pytest.raises(StructuralError):
        Atom((5,), np.array([1.0, 1.0]), 1.0)


def test_with_coefficient_keeps_vector():
    a = Atom((0, 1), np.array([1.0, 1.0, 0.0]), 1.0)
    b = a.with_coefficient(2.5)
    assert b.c == 2.5 and b.u is a.u and b.support == a.support
    with pytest.raises(DomainError):
        a.with_coefficient(-0.1)


def test_materialize_empty_is_zero():
    assert np.array_equal(materialize(AtomicPSD((), 4)), np.zeros((4, 4)))


def test_materialize_matches_sum_of_outer_products(rng):
    atoms = []
    for _ in range(5):
        sup = tuple(sorted(rng.choice(6, size=3, replace=False)))
        u = np.zeros(6)
        u[list(sup)] = rng.standard_normal(3)
        atoms.append(Atom(sup, u, float(rng.uniform(0.1, 2))))
    L = AtomicPSD(atoms)
    expected = sum(a.c * np.outer(a.u, a.u) for a in atoms)
    np.testing.assert_allclose(materialize(L), expected, atol=1e-14)
    vals = np.linalg.eigvalsh(L.dense())
    assert vals[0] >= -1e-10 * vals[-1]
    assert np.array_equal(L.dense(), L.dense().T)


def test_dimension_mismatch_is_structural():
    a = Atom((0,), np.array([1.0, 0.0]), 1.0)
    b = Atom((0,), np.array([1.0, 0.0, 0.0]), 1.0)
    with pytest.raises(StructuralError):
        AtomicPSD([a, b])
    with pytest.raises(StructuralError):
        AtomicPSD(())


def test_atomic_json_round_trip(rng):
    u = rng.standard_normal(5)
    L = AtomicPSD([Atom(tuple(range(5)), u, 0.3), Atom((1, 3), u, 2.0)])
    back = AtomicPSD.from_json(L.to_json())
    assert back.supports == L.supports
    np.testing.assert_array_equal(back.coefficients, L.coefficients)
    np.testing.assert_array_equal(back.vectors, L.vectors)
    # a bare list of atoms is accepted too
    bare = json.dumps([a.to_dict() for a in L.atoms])
    assert len(AtomicPSD.from_json(bare)) == 2


def test_as_symmetric_validates():
    np.testing.assert_array_equal(as_symmetric([[1, 2], [0, 1]]), [[1, 1], [1, 1]])
    with pytest.raises(StructuralError):
        as_symmetric(np.zeros((2, 3)))
    with pytest.raises(StructuralError):
        as_symmetric(np.eye(2), dim=3)
    with pytest.raises(NumericalError):
        as_symmetric([[np.nan, 0], [0, 1]])


def test_loss_kind_parse():
    assert LossKind.parse("SM") is LossKind.SCORE_MATCHING
    assert LossKind.parse("taylor") is LossKind.TAYLOR
    assert not LossKind.NEG_LOG_LIK.quadratic
    with pytest.raises(ValueError):
        LossKind.parse("hinge")


def test_ground_truth_blocks_and_latent_atoms():
    # observed 0,1,2 and hidden 3; latent joined to 0 and 1
    K = np.array([[2.0, 0.3, 0.0, 0.5],
                  [0.3, 2.0, 0.4, -0.2],
                  [0.0, 0.4, 2.0, 0.0],
                  [0.5, -0.2, 0.0, 4.0]])
    m = GroundTruthModel(K, (0, 1, 2), (3,), ((0, 1),), seed=1)
    assert m.p == 3 and m.h == 1
    np.testing.assert_array_equal(m.K_HH, [[4.0]])
    L = m.latent_atoms()
    np.testing.assert_allclose(L.dense(), m.K_OH @ np.linalg.inv(m.K_HH) @ m.K_OH.T, atol=1e-14)
    assert L.supports == [(0, 1)]
    assert m.structure_dict()["groups"] == [[0, 1]]


def test_estimate_summary_and_M(rng):
    S = np.eye(3)
    L = AtomicPSD([Atom((0,), np.array([1.0, 0, 0]), 0.5)])
    est = Estimate(S, L, 0.1, 1.0, LossKind.SCORE_MATCHING, [2.0, 1.0], 2, True)
    np.testing.assert_array_equal(est.M, np.diag([0.5, 1.0, 1.0]))
    s = est.summary()
    assert s["n_atoms"] == 1 and s["objective"] == 1.0 and s["loss"] == "sm"


def test_matrix_file_round_trip_is_exact(tmp_path, rng):
    M = rng.standard_normal((4, 4))
    write_matrix(tmp_path / "m.txt", M)
    assert np.array_equal(read_matrix(tmp_path / "m.txt"), M)


def test_matrix_file_errors_are_line_anchored(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 2\n1 2\n3\n")
    with pytest.raises(StructuralError, match=r"line 3"):
        read_matrix(path)
    path.write_text("2\n")
    with pytest.raises(StructuralError, match=r"line 1"):
        read_matrix(path)
