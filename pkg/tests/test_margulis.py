import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphexon.exceptions import DimensionError, DomainError
from graphexon.margulis import (
    AffineGenerator,
    MargulisGraph,
    apply_generator,
    default_generators,
    embed,
    flat_index,
    inner,
    locate,
    mean_zero,
)


def brute_images(v, N):
    """Plain-integer enumeration of the eight generator images."""
    x, y = v
    return [
        ((x + 2 * y) % N, y),
        ((x + 2 * y + 1) % N, y),
        (x, (2 * x + y) % N),
        (x, (2 * x + y + 1) % N),
        ((x - 2 * y) % N, y),
        ((x - 2 * y - 1) % N, y),
        (x, (y - 2 * x) % N),
        (x, (y - 2 * x - 1) % N),
    ]


def test_first_generator_is_plain_shear():
    g = default_generators()[0]
    assert g.matrix == ((1, 2), (0, 1))
    assert g.shift == (0, 0)


def test_sixth_generator_inverts_shifted_shear():
    g = default_generators()[5]
    assert g.matrix == ((1, -2), (0, 1))
    assert g.shift == (-1, 0)


@pytest.mark.parametrize("k", range(4))
def test_inverse_pairs_compose_to_identity(k):
    gens = default_generators()
    N = 9
    v = np.indices((N, N)).reshape(2, -1).T
    back = apply_generator(gens[k + 4], apply_generator(gens[k], v, N), N)
    assert np.array_equal(back, v)


def test_apply_generator_examples():
    gens = default_generators()
    assert tuple(apply_generator(gens[0], (1, 1), 5)) == (3, 1)
    assert tuple(apply_generator(gens[1], (0, 0), 5)) == (1, 0)
    assert tuple(apply_generator(gens[4], apply_generator(gens[0], (2, 3), 7), 7)) == (2, 3)


def test_negative_intermediate_values_are_canonical():
    out = apply_generator(default_generators()[5], (0, 3), 5)
    assert np.all((0 <= out) & (out < 5))


def test_non_sl2_matrix_rejected():
    with pytest.raises(ValueError):
        AffineGenerator(((2, 0), (0, 1)))


def test_generators_not_closed_under_inversion_rejected():
    with pytest.raises(ValueError):
        MargulisGraph(5, default_generators()[:3])


@pytest.mark.parametrize("N", [2, 3, 7, 12])
def test_permutations_match_brute_force(N):
    G = MargulisGraph(N)
    for v in range(G.vertex_count):
        expected = [a * N + b for a, b in brute_images(divmod(v, N), N)]
        assert G.permutations[:, v].tolist() == expected


def test_indicator_at_origin_n2():
    G = MargulisGraph(2)
    f = np.zeros(4)
    f[0] = 1.0
    out = G.adjacency_apply(f)
    expected = [sum(img == (0, 0) for img in brute_images(divmod(v, 2), 2)) / 8 for v in range(4)]
    assert out.tolist() == expected


def test_constant_is_fixed():
    G = MargulisGraph(6)
    assert np.array_equal(G.adjacency_apply(np.ones(36)), np.ones(36))


def test_self_adjoint_on_random_fields():
    G = MargulisGraph(10)
    rng = np.random.default_rng(3)
    f, g = rng.standard_normal((2, 100))
    assert abs(inner(G.adjacency_apply(f), g) - inner(f, G.adjacency_apply(g))) < 1e-12


@pytest.mark.parametrize("N", [2, 5, 17, 50])
def test_regular_symmetric_bijective(N):
    G = MargulisGraph(N)
    A = G.dense_matrix()
    assert np.array_equal(A, A.T)
    assert np.allclose(A.sum(axis=0), 1.0) and np.allclose(A.sum(axis=1), 1.0)
    assert G.regularity_error() == 0.0
    for row in G.permutations:
        assert np.unique(row).size == G.vertex_count


def test_sparse_matches_dense():
    G = MargulisGraph(7)
    assert np.array_equal(G.sparse_matrix().toarray(), G.dense_matrix())


def test_edge_records_count_and_format(tmp_path):
    G = MargulisGraph(2)
    records = list(G.edge_records())
    assert len(records) == 32
    assert {r[2] for r in records} == set(range(1, 9))
    path = tmp_path / "edges.csv"
    G.write_edge_list(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "v1,v2,k,u1,u2"
    assert len(lines) == 33


def test_embed_and_locate_examples():
    assert tuple(embed((0, 0), 11)) == (0.0, 0.0)
    assert tuple(embed((20, 10), 40)) == (0.5, 0.25)
    assert tuple(locate((0.51, 0.26), 40)) == (20, 10)
    assert tuple(locate((0.999999, 0.0), 10)) == (9, 0)


def test_locate_inverts_embed():
    N = 13
    v = np.indices((N, N)).reshape(2, -1).T
    assert np.array_equal(locate(embed(v, N), N), v)


def test_embed_lies_in_own_cell():
    N = 8
    v = np.indices((N, N)).reshape(2, -1).T
    x = embed(v, N)
    assert np.all((v / N <= x) & (x < (v + 1) / N))


def test_locate_boundary_rounding():
    x = np.nextafter(1.0, 0.0)
    assert tuple(locate((x, x), 7)) == (6, 6)


def test_flat_index_row_major():
    assert flat_index((2, 3), 5) == 13


def test_mean_zero_projection():
    f = np.random.default_rng(0).standard_normal(400) + 5
    assert abs(mean_zero(f).mean()) < 1e-12


def test_length_mismatch_is_dimension_error():
    with pytest.raises(DimensionError):
        MargulisGraph(4).adjacency_apply(np.ones(15))


def test_square_field_accepted():
    G = MargulisGraph(4)
    f = np.arange(16.0)
    assert np.array_equal(G.adjacency_apply(f.reshape(4, 4)), G.adjacency_apply(f))


@pytest.mark.parametrize("bad", [0, -3, 2.5, True])
def test_bad_resolution(bad):
    with pytest.raises(DomainError):
        MargulisGraph(bad)


@settings(max_examples=60, deadline=None)
@given(N=st.integers(1, 30), x=st.integers(-100, 100), y=st.integers(-100, 100), k=st.integers(0, 7))
def test_generator_matches_brute_force(N, x, y, k):
    g = default_generators()[k]
    assert tuple(apply_generator(g, (x, y), N)) == brute_images((x % N, y % N), N)[k]


@settings(max_examples=30, deadline=None)
@given(N=st.integers(2, 25), seed=st.integers(0, 2**32 - 1))
def test_operator_is_contraction_and_preserves_mean(N, seed):
    G = MargulisGraph(N)
    f = np.random.default_rng(seed).standard_normal(N * N)
    out = G.adjacency_apply(f)
    assert abs(out.mean() - f.mean()) < 1e-12
    assert np.linalg.norm(out) <= np.linalg.norm(f) + 1e-12
