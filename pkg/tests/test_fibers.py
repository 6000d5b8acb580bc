import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddelyap.fibers import (
    ContinuousSegment,
    GridSpec,
    LpSegment,
    SubspaceFrame,
    containment_angle,
    embed_segment,
    embedding_matrix,
    norm_c,
    norm_lp,
    orthonormalize,
    principal_angles,
    segment_from_csv,
    segment_to_csv,
    try_invert_embedding,
)


@pytest.fixture
def grid():
    return GridSpec(8)


def test_grid_nodes_contain_endpoints(grid):
    assert grid.nodes[0] == -1.0
    assert grid.nodes[-1] == 0.0
    with pytest.raises(ValueError):
        GridSpec(3)


def test_norm_c_zero_and_constant(grid):
    zero = ContinuousSegment(grid, np.zeros((9, 2)))
    assert norm_c(zero) == 0.0
    v = np.array([3.0, 4.0])
    const = ContinuousSegment(grid, np.tile(v, (9, 1)))
    assert norm_c(const) == pytest.approx(5.0)


def test_norm_c_scalar_max():
    g = GridSpec(4)
    u = ContinuousSegment(g, np.array([[0.0], [1.0], [-3.0], [2.0], [0.0]]))
    assert norm_c(u) == pytest.approx(3.0)


def test_norm_lp_zero_head_density(grid):
    zero = LpSegment(grid, np.zeros(2), np.zeros((9, 2)))
    assert norm_lp(zero) == 0.0
    head_only = LpSegment(grid, np.array([3.0, 4.0]), np.zeros((9, 2)))
    assert norm_lp(head_only) == pytest.approx(5.0)


def test_norm_lp_unit_density():
    g = GridSpec(16)
    u = LpSegment(g, np.zeros(1), np.ones((17, 1)), p=2.0)
    # integral of 1 over [-1, 0] is 1; trapezoid is exact for constants
    assert norm_lp(u) == pytest.approx(1.0, abs=1e-12)


def test_embed_zero_and_constant(grid):
    zero = ContinuousSegment(grid, np.zeros((9, 2)))
    e = embed_segment(zero)
    assert norm_lp(e) == 0.0
    v = np.array([1.0, -2.0])
    const = ContinuousSegment(grid, np.tile(v, (9, 1)))
    ec = embed_segment(const)
    assert np.array_equal(ec.head, v)
    # embedding norm bound, attained by constants
    assert norm_lp(ec) <= 2.0 * norm_c(const) + 1e-12
    assert norm_lp(ec) == pytest.approx(2.0 * norm_c(const), abs=1e-12)


def test_embedding_norm_bound_random(grid):
    rng = np.random.default_rng(0)
    for _ in range(25):
        u = ContinuousSegment(grid, rng.normal(size=(9, 3)))
        assert norm_lp(embed_segment(u)) <= 2.0 * norm_c(u) + 1e-12


def test_try_invert_roundtrip_exact(grid):
    rng = np.random.default_rng(1)
    u = ContinuousSegment(grid, rng.normal(size=(9, 2)))
    back = try_invert_embedding(embed_segment(u))
    assert back is not None
    assert np.array_equal(back.values, u.values)


def test_try_invert_head_mismatch(grid):
    v = LpSegment(grid, np.array([1.0, 0.0]), np.zeros((9, 2)))
    assert try_invert_embedding(v, tol=1e-9) is None


def test_try_invert_within_tolerance(grid):
    rng = np.random.default_rng(2)
    u = ContinuousSegment(grid, rng.normal(size=(9, 2)))
    e = embed_segment(u)
    e.head = e.head + 1e-12
    assert try_invert_embedding(e, tol=1e-9) is not None


def test_embedding_matrix_matches_embed(grid):
    rng = np.random.default_rng(3)
    u = ContinuousSegment(grid, rng.normal(size=(9, 2)))
    E = embedding_matrix(grid, 2)
    assert np.array_equal(E @ u.coords(), embed_segment(u).coords())


def test_principal_angles_identical_and_orthogonal():
    e = np.eye(4)
    P = SubspaceFrame(4, e[:, :2])
    assert np.max(principal_angles(P, P)) < 1e-12
    Q1 = SubspaceFrame(4, e[:, :1])
    Q2 = SubspaceFrame(4, e[:, 1:2])
    assert principal_angles(Q1, Q2)[0] == pytest.approx(np.pi / 2)


def test_principal_angles_quarter_turn():
    e = np.eye(3)
    diag = (e[:, 0] + e[:, 1]) / np.sqrt(2.0)
    a = principal_angles(SubspaceFrame(3, e[:, :1]), SubspaceFrame(3, diag[:, None]))
    assert a[0] == pytest.approx(np.pi / 4, abs=1e-12)


def test_principal_angles_symmetric_and_basis_invariant():
    rng = np.random.default_rng(4)
    A = orthonormalize(rng.normal(size=(7, 3)))
    B = orthonormalize(rng.normal(size=(7, 2)))
    ab = principal_angles(A, B)
    ba = principal_angles(B, A)
    assert np.allclose(ab, ba, atol=1e-12)
    # re-base A by a random rotation of its columns
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    A2 = SubspaceFrame(7, A.vectors @ Q)
    assert np.allclose(principal_angles(A2, B), ab, atol=1e-10)


def test_orthonormalize_identity_and_rank_drop():
    e = np.eye(5)
    f = orthonormalize(e[:, :2])
    assert f.dim == 2 and f.dropped == 0
    g = orthonormalize(np.column_stack([e[:, 0], 2.0 * e[:, 0]]))
    assert g.dim == 1 and g.dropped == 1
    assert abs(abs(g.vectors[0, 0]) - 1.0) < 1e-12


def test_orthonormalize_random_full_rank():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(5, 3))
    f = orthonormalize(A)
    # oracle: Gram matrix of the frame is the identity
    assert np.max(np.abs(f.vectors.T @ f.vectors - np.eye(3))) < 1e-12
    # spans the same space
    assert containment_angle(A, f) < 1e-10


def test_orthonormalize_rejects_zero():
    with pytest.raises(ValueError):
        orthonormalize(np.zeros((4, 2)))


@given(
    alpha=st.floats(-5, 5, allow_nan=False),
    seed=st.integers(0, 2**31),
)
@settings(max_examples=40, deadline=None)
def test_norm_homogeneity_and_triangle(alpha, seed):
    g = GridSpec(6)
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(7, 2))
    b = rng.normal(size=(7, 2))
    ua, ub = ContinuousSegment(g, a), ContinuousSegment(g, b)
    assert norm_c(ContinuousSegment(g, alpha * a)) == pytest.approx(abs(alpha) * norm_c(ua), rel=1e-12, abs=1e-12)
    assert norm_c(ContinuousSegment(g, a + b)) <= norm_c(ua) + norm_c(ub) + 1e-12
    ha, hb = rng.normal(size=2), rng.normal(size=2)
    la = LpSegment(g, ha, a)
    lb = LpSegment(g, hb, b)
    assert norm_lp(LpSegment(g, alpha * ha, alpha * a)) == pytest.approx(
        abs(alpha) * norm_lp(la), rel=1e-12, abs=1e-12
    )
    assert norm_lp(LpSegment(g, ha + hb, a + b)) <= norm_lp(la) + norm_lp(lb) + 1e-12


@given(
    alpha=st.floats(-3, 3, allow_nan=False),
    beta=st.floats(-3, 3, allow_nan=False),
    seed=st.integers(0, 2**31),
)
@settings(max_examples=25, deadline=None)
def test_embedding_linearity_exact(alpha, beta, seed):
    g = GridSpec(5)
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(6, 2))
    b = rng.normal(size=(6, 2))
    lhs = embed_segment(ContinuousSegment(g, alpha * a + beta * b))
    ra = embed_segment(ContinuousSegment(g, a))
    rb = embed_segment(ContinuousSegment(g, b))
    assert np.array_equal(lhs.head, alpha * ra.head + beta * rb.head)
    assert np.array_equal(lhs.density, alpha * ra.density + beta * rb.density)


def test_segment_csv_roundtrip(tmp_path, grid):
    rng = np.random.default_rng(6)
    u = ContinuousSegment(grid, rng.normal(size=(9, 2)))
    path = tmp_path / "seg.csv"
    segment_to_csv(path, u)
    back = segment_from_csv(path, grid)
    assert isinstance(back, ContinuousSegment)
    assert np.allclose(back.values, u.values, atol=1e-12)

    v = LpSegment(grid, rng.normal(size=2), rng.normal(size=(9, 2)), p=3.0)
    path2 = tmp_path / "seg_lp.csv"
    segment_to_csv(path2, v)
    back2 = segment_from_csv(path2, grid)
    assert isinstance(back2, LpSegment)
    assert back2.p == pytest.approx(3.0)
    assert np.allclose(back2.head, v.head, atol=1e-12)
    assert np.allclose(back2.density, v.density, atol=1e-12)
