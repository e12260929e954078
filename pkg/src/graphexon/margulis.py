"""Margulis-type Schreier expander graphs on the discrete torus (Z/NZ)^2.

Vertices are stored by their flat row-major index ``v1 * N + v2``. The
adjacency operator is held implicitly as one permutation table per
generator; :meth:`MargulisGraph.dense_matrix` materializes it on demand.
"""
import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._validation import check_grid_field, check_points, check_resolution, check_vertices

K = 8

T1 = ((1, 2), (0, 1))
T2 = ((1, 0), (2, 1))
T1_INV = ((1, -2), (0, 1))
T2_INV = ((1, 0), (-2, 1))


@dataclass(frozen=True)
class AffineGenerator:
    """The affine map ``v -> matrix @ v + shift`` with an SL(2, Z) matrix."""

    matrix: tuple
    shift: tuple = (0, 0)

    def __post_init__(self):
        m = tuple(tuple(int(x) for x in row) for row in self.matrix)
        s = tuple(int(x) for x in self.shift)
        if len(m) != 2 or any(len(row) != 2 for row in m) or len(s) != 2:
            raise ValueError("generator needs a 2x2 matrix and a length-2 shift")
        if m[0][0] * m[1][1] - m[0][1] * m[1][0] != 1:
            raise ValueError(f"matrix {m} is not in SL(2, Z)")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "shift", s)

    @property
    def A(self):
        return np.array(self.matrix, dtype=np.int64)

    @property
    def b(self):
        return np.array(self.shift, dtype=np.int64)

    def inverse(self):
        (p, q), (r, s) = self.matrix
        inv = ((s, -q), (-r, p))
        b1, b2 = self.shift
        shift = (-(inv[0][0] * b1 + inv[0][1] * b2), -(inv[1][0] * b1 + inv[1][1] * b2))
        return AffineGenerator(inv, shift)

    def __call__(self, v, N):
        return apply_generator(self, v, N)


def default_generators():
    """The eight affine generators of the Margulis construction.

    Ordered as (T1, 0), (T1, e1), (T2, 0), (T2, e2) followed by their
    inverses in the same order, so generator ``k`` and ``k + 4`` are
    mutually inverse (0-based).
    """
    return [
        AffineGenerator(T1, (0, 0)),
        AffineGenerator(T1, (1, 0)),
        AffineGenerator(T2, (0, 0)),
        AffineGenerator(T2, (0, 1)),
        AffineGenerator(T1_INV, (0, 0)),
        AffineGenerator(T1_INV, (-1, 0)),
        AffineGenerator(T2_INV, (0, 0)),
        AffineGenerator(T2_INV, (0, -1)),
    ]


def inverse_index(generators):
    """Map each generator index to the index of its inverse in the list."""
    generators = list(generators)
    out = []
    for g in generators:
        inv = g.inverse()
        try:
            out.append(generators.index(inv))
        except ValueError:
            raise ValueError(f"generator list is not closed under inversion: {g} lacks {inv}")
    return out


def apply_generator(g, v, N):
    """Apply ``g`` to vertex coordinates ``v`` (shape ``(2,)`` or ``(n, 2)``).

    Results are canonical representatives in ``[0, N)``.
    """
    N = check_resolution(N)
    vv = check_vertices(v, N)
    out = vv @ g.A.T + g.b
    return np.mod(out, N)


def flat_index(v, N):
    vv = check_vertices(v, N)
    return vv[..., 0] * N + vv[..., 1]


def vertex_coords(index, N):
    index = np.asarray(index, dtype=np.int64)
    return np.stack([index // N, index % N], axis=-1)


def embed(v, N):
    """Torus point ``v / N`` of a vertex; lies in the lower-left corner of its cell."""
    N = check_resolution(N)
    return check_vertices(v, N) / N


def locate(x, N):
    """Index of the partition cell containing the torus point ``x``."""
    N = check_resolution(N)
    pts = np.mod(check_points(x), 1.0)
    idx = np.floor(pts * N).astype(np.int64)
    # x just below 1 can round up to N after the multiply
    return np.minimum(idx, N - 1)


class MargulisGraph:
    """The K=8 regular Schreier multigraph on (Z/NZ)^2.

    Parameters
    ----------
    resolution : int
        Side length N of the discrete torus; the graph has N**2 vertices.
    generators : list of AffineGenerator, optional
        Defaults to :func:`default_generators`. Must be closed under inversion.
    """

    def __init__(self, resolution, generators=None):
        self.resolution = check_resolution(resolution)
        self.generators = list(default_generators() if generators is None else generators)
        self.inverse_of = inverse_index(self.generators)

    def __repr__(self):
        return f"MargulisGraph(resolution={self.resolution})"

    @property
    def N(self):
        return self.resolution

    @property
    def K(self):
        return len(self.generators)

    @property
    def vertex_count(self):
        return self.resolution**2

    @cached_property
    def coords(self):
        """Integer vertex coordinates, shape ``(M, 2)``, in flat-index order."""
        return vertex_coords(np.arange(self.vertex_count), self.resolution)

    @cached_property
    def permutations(self):
        """Array of shape ``(K, M)``: ``permutations[k, v]`` is the flat image of v."""
        N = self.resolution
        tables = []
        for g in self.generators:
            img = np.mod(self.coords @ g.A.T + g.b, N)
            tables.append(img[:, 0] * N + img[:, 1])
        perms = np.stack(tables)
        perms.setflags(write=False)
        return perms

    def adjacency_apply(self, f):
        f = check_grid_field(f, self.vertex_count)
        return f[self.permutations].mean(axis=0)

    def dense_matrix(self):
        """The normalized adjacency matrix of O_N; entries are multiples of 1/K."""
        M = self.vertex_count
        counts = np.zeros((M, M))
        rows = np.broadcast_to(np.arange(M), self.permutations.shape)
        np.add.at(counts, (rows.ravel(), self.permutations.ravel()), 1.0)
        return counts / self.K

    def sparse_matrix(self):
        from scipy.sparse import coo_matrix

        M = self.vertex_count
        rows = np.broadcast_to(np.arange(M), self.permutations.shape).ravel()
        data = np.full(rows.size, 1.0 / self.K)
        return coo_matrix((data, (rows, self.permutations.ravel())), shape=(M, M)).tocsr()

    def edge_records(self):
        """Rows ``(v1, v2, k, u1, u2)`` with 1-based generator index ``k``."""
        N = self.resolution
        for v in range(self.vertex_count):
            v1, v2 = divmod(v, N)
            for k in range(self.K):
                u1, u2 = divmod(int(self.permutations[k, v]), N)
                yield v1, v2, k + 1, u1, u2

    def write_edge_list(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["v1", "v2", "k", "u1", "u2"])
            writer.writerows(self.edge_records())

    def regularity_error(self):
        """Max deviation of row and column sums of O_N from 1."""
        M = self.vertex_count
        col = np.zeros(M)
        np.add.at(col, self.permutations.ravel(), 1.0 / self.K)
        # rows sum to exactly 1 by construction
        return float(np.max(np.abs(col - 1.0)))


def adjacency_apply(G, f):
    """``[O_N f](v) = (1/K) sum_k f(sigma_k(v))``."""
    return G.adjacency_apply(f)


def mean_zero(f):
    f = np.asarray(f, dtype=float)
    return f - f.mean()


def inner(f, g):
    """Normalized inner product ``(1/M) sum_v f(v) g(v)``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    return float(np.mean(f * g))


def norm(f):
    return float(np.sqrt(inner(f, f)))
