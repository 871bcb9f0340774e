import itertools

import numpy as np
import pytest

from hamforge import reach
from hamforge.liealg import find_c_subspace, find_lie_algebra
from hamforge.opcore import Operator, pauli_op, pauli_string_op


def test_haar_unitary_is_unitary():
    rng = np.random.default_rng(0)
    for dim in (1, 2, 4, 8):
        u = reach.haar_unitary(dim, rng)
        assert np.abs(u @ u.conj().T - np.eye(dim)).max() < 1e-12


def test_haar_dim1_unit_modulus():
    rng = np.random.default_rng(1)
    u = reach.haar_unitary(1, rng)
    assert abs(abs(u[0, 0]) - 1) < 1e-14


def test_haar_second_moment():
    # E|U_11|^2 = 1/dim for the Haar measure
    rng = np.random.default_rng(2)
    n = 10_000
    vals = np.array([abs(reach.haar_unitary(2, rng)[0, 0]) ** 2 for _ in range(n)])
    mean = vals.mean()
    se = vals.std() / np.sqrt(n)
    assert abs(mean - 0.5) < 3 * se + 1e-12


def su2():
    sx = pauli_op([(1, "x")], 1.0, 1)
    sy = pauli_op([(1, "y")], 1.0, 1)
    return find_lie_algebra([sx, sy])


def test_walk_unitarity_and_subgroup():
    rng = np.random.default_rng(3)
    g = su2()
    us = reach.random_unitary_walk(g, 10, 2, 5, rng)
    for u in us:
        m = u.entries
        assert np.abs(m @ m.conj().T - np.eye(2)).max() < 1e-10
    gz = find_lie_algebra([pauli_op([(1, "z")], 1.0, 1)])
    us = reach.random_unitary_walk(gz, 10, 2, 5, rng)
    for u in us:  # abelian subgroup: diagonal unitaries
        off = u.entries - np.diag(np.diag(u.entries))
        assert np.abs(off).max() < 1e-10


# -- LP ---------------------------------------------------------------------

def test_lp_simple():
    r = reach.lp_solve(np.array([1.0, 0.0]), np.array([[1.0, 1.0]]), np.array([1.0]))
    assert r.status == "optimal"
    assert r.value == pytest.approx(1.0)
    assert np.allclose(r.x, [1.0, 0.0])


def test_lp_infeasible():
    r = reach.lp_solve(
        np.array([1.0]), np.array([[1.0]]), np.array([2.0]), box=np.array([1.0])
    )
    assert r.status == "infeasible"


def test_lp_unbounded():
    # max x1 subject to x1 = x2, both nonnegative: the ray (t, t) is feasible
    r = reach.lp_solve(np.array([1.0, 0.0]), np.array([[1.0, -1.0]]), np.array([0.0]))
    assert r.status == "unbounded"


def test_lp_free_variables():
    # max -x subject to x = -3 with x free
    r = reach.lp_solve(
        np.array([-1.0]), np.array([[1.0]]), np.array([-3.0]), nonneg=False
    )
    assert r.status == "optimal"
    assert r.x[0] == pytest.approx(-3.0)


def _brute_force_lp(c, a, b):
    m, n = a.shape
    best = None
    for cols in itertools.combinations(range(n), m):
        sub = a[:, cols]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        xb = np.linalg.solve(sub, b)
        if (xb >= -1e-9).all():
            x = np.zeros(n)
            x[list(cols)] = xb
            v = c @ x
            if best is None or v > best:
                best = v
    return best


def test_lp_matches_vertex_enumeration():
    rng = np.random.default_rng(4)
    for _ in range(30):
        m, n = 3, 6
        a = rng.normal(size=(m, n))
        b = a @ np.abs(rng.normal(size=n))  # feasible by construction
        c = rng.normal(size=n)
        r = reach.lp_solve(c, a, b)
        ref = _brute_force_lp(c, a, b)
        if r.status == "optimal":
            assert ref is not None
            assert r.value == pytest.approx(ref, abs=1e-7)


# -- scale ranges -------------------------------------------------------------

def _single_qubit_components():
    g = su2()
    sz = pauli_op([(1, "z")], 1.0, 1)
    c = find_c_subspace(g, sz)
    hp = sz * (1 / np.sqrt(2))
    return g, [(hp, c, hp)]


def test_single_qubit_full_range():
    g, comps = _single_qubit_components()
    sr = reach.find_scale_range(g, comps, 500, rng=np.random.default_rng(1))
    assert sr.achievable
    assert sr.s_plus == pytest.approx(1.0, abs=0.02)
    assert sr.s_minus == pytest.approx(-1.0, abs=0.02)


def test_more_samples_never_shrink():
    g, comps = _single_qubit_components()
    vs = reach.sample_vertices(g, comps, 400, rng=np.random.default_rng(6))
    s200 = reach._scale_lps(vs.vertices[:200])
    s400 = reach._scale_lps(vs.vertices[:400])
    assert s400[0] >= s200[0] - 1e-9
    assert s400[1] <= s200[1] + 1e-9


def test_vertex_projection_bounds():
    # s+ is a convex combination of first coordinates, so it can never
    # exceed the best single-vertex projection; a vertex with negligible
    # transverse components is itself feasible and bounds s+ from below.
    g, comps = _single_qubit_components()
    vs = reach.sample_vertices(g, comps, 100, rng=np.random.default_rng(7))
    splus = reach._scale_lps(vs.vertices)[0]
    assert splus <= vs.vertices[:, 0].max() + 1e-9
    transverse = np.linalg.norm(vs.vertices[:, 1:], axis=1)
    aligned = transverse < 1e-6
    if aligned.any():
        assert splus >= vs.vertices[aligned, 0].max() - 1e-9


def test_vertex_norm_invariance():
    g, comps = _single_qubit_components()
    vs = reach.sample_vertices(g, comps, 50, rng=np.random.default_rng(8))
    norms = np.linalg.norm(vs.vertices, axis=1)
    assert np.abs(norms - 1.0).max() < 1e-8


def test_target_outside_subspace_raises():
    from hamforge.opcore import SubspaceError

    g = find_lie_algebra([pauli_op([(1, "z")], 1.0, 1)])
    sz = pauli_op([(1, "z")], 1.0, 1)
    sx = pauli_op([(1, "x")], 1.0, 1)
    c = find_c_subspace(g, sz)
    with pytest.raises(SubspaceError):
        reach.find_scale_range(g, [(sz, c, sx)], 50, rng=np.random.default_rng(9))


def test_walk_matches_qr_hull_on_su2():
    g, comps = _single_qubit_components()
    sq = reach.find_scale_range(g, comps, 500, sampler="qr", rng=np.random.default_rng(10))
    sw = reach.find_scale_range(g, comps, 500, sampler="walk", rng=np.random.default_rng(11))
    assert abs(sq.s_plus - sw.s_plus) < 0.02
    assert abs(sq.s_minus - sw.s_minus) < 0.02


# -- hull volumes -------------------------------------------------------------

def test_hull_volume_collinear_is_zero():
    vs = reach.VertexSet(
        np.stack([np.linspace(-1, 1, 10), np.linspace(-1, 1, 10)]).T,
        np.eye(2), 1.0, 10,
    )
    vols = reach.hull_volume_diagnostic(vs, 3)
    assert all(v == 0.0 for _, v in vols)


def test_hull_volume_square_corners():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    vs = reach.VertexSet(pts, np.eye(2), 1.0, 4)
    vols = dict(reach.hull_volume_diagnostic(vs, 1))
    assert vols[1] == 0.0 and vols[2] == 0.0
    assert vols[3] == pytest.approx(0.5)
    assert vols[4] == pytest.approx(1.0)


def test_hull_volume_saturates_su2():
    g, comps = _single_qubit_components()
    vs = reach.sample_vertices(g, comps, 500, rng=np.random.default_rng(12))
    vols = reach.hull_volume_diagnostic(vs, 125)
    values = [v for _, v in vols]
    assert values == sorted(values)  # monotone growth
    # last-quarter relative change below 5 percent
    assert (values[-1] - values[-2]) / values[-1] < 0.05


def test_hull_volume_refuses_high_dim():
    vs = reach.VertexSet(np.zeros((10, 7)), np.eye(7), 1.0, 10)
    with pytest.raises(ValueError, match="range-stabilization|find_scale_range"):
        reach.hull_volume_diagnostic(vs, 5)


def test_decoupling_corollary_two_components():
    # 2 qubits under collective su(2); component 1 = collective Z,
    # component 2 = secular dipolar operator. Zeroing component 1 must not
    # change component 2's achievable range.
    n = 2
    x_col = pauli_string_op([(1.0, [(1, "x")]), (1.0, [(2, "x")])], n)
    y_col = pauli_string_op([(1.0, [(1, "y")]), (1.0, [(2, "y")])], n)
    z_col = pauli_string_op([(1.0, [(1, "z")]), (1.0, [(2, "z")])], n)
    dzz = pauli_string_op(
        [
            (2.0, [(1, "z"), (2, "z")]),
            (-1.0, [(1, "x"), (2, "x")]),
            (-1.0, [(1, "y"), (2, "y")]),
        ],
        n,
    )
    g = find_lie_algebra([x_col, y_col])
    c1 = find_c_subspace(g, z_col)
    c2 = find_c_subspace(g, dzz)
    rng = np.random.default_rng(13)
    boths = reach.find_scale_range(
        g, [(z_col, c1, None), (dzz, c2, dzz)], 700, sampler="walk", rng=rng,
        measure_component=1,
    )
    rng = np.random.default_rng(14)
    alone = reach.find_scale_range(
        g, [(dzz, c2, dzz)], 700, sampler="walk", rng=rng
    )
    assert boths.achievable and alone.achievable
    assert abs(boths.s_plus - alone.s_plus) < 0.03
    assert abs(boths.s_minus - alone.s_minus) < 0.03
