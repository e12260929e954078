"""Spectra of the finite adjacency operators and of the Fourier-dual orbit graphs."""
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix

from ._validation import check_grid_field
from .exceptions import ConvergenceError, DomainError, SizeError

GABBER_GALIL_BOUND = 5 * math.sqrt(2) / 8
KESTEN_RADIUS = math.sqrt(3) / 2
DENSE_LIMIT = 10_000

# transposes of T1, T2, T1^-1, T2^-1
DUAL_MAPS = (
    ((1, 0), (2, 1)),
    ((1, 2), (0, 1)),
    ((1, 0), (-2, 1)),
    ((1, -2), (0, 1)),
)


@dataclass(frozen=True)
class SpectralReport:
    N: int
    eigenvalues: np.ndarray = field(repr=False)
    lambda2: float
    lambda_min: float
    zero_mean_norm: float
    gap: float
    principal: float
    lambda2_multiplicity: int
    lambda_min_multiplicity: int

    @property
    def within_bound(self):
        return self.zero_mean_norm <= GABBER_GALIL_BOUND + 1e-9

    def histogram(self, bins=20):
        counts, edges = np.histogram(self.eigenvalues, bins=bins, range=(-1.0, 1.0))
        return {"edges": edges.tolist(), "counts": counts.tolist()}

    def to_dict(self):
        return {
            "N": self.N,
            "lambda2": self.lambda2,
            "lambda_min": self.lambda_min,
            "zero_mean_norm": self.zero_mean_norm,
            "gap": self.gap,
            "lambda2_multiplicity": self.lambda2_multiplicity,
            "lambda_min_multiplicity": self.lambda_min_multiplicity,
            "eigenvalue_histogram": self.histogram(),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _multiplicity(values, target, tol=1e-9):
    return int(np.sum(np.abs(values - target) <= tol))


def report_from_eigenvalues(N, eigenvalues):
    ev = np.sort(np.asarray(eigenvalues, dtype=float))
    i = int(np.argmin(np.abs(ev - 1.0)))
    rest = np.delete(ev, i)
    if rest.size == 0:
        lam2 = lam_min = 0.0
    else:
        lam2, lam_min = float(rest[-1]), float(rest[0])
    return SpectralReport(
        N=N,
        eigenvalues=ev,
        lambda2=lam2,
        lambda_min=lam_min,
        zero_mean_norm=max(lam2, abs(lam_min)),
        gap=1.0 - lam2,
        principal=float(ev[i]),
        lambda2_multiplicity=_multiplicity(rest, lam2),
        lambda_min_multiplicity=_multiplicity(rest, lam_min),
    )


def dense_spectrum(G, max_vertices=DENSE_LIMIT):
    """Full symmetric eigendecomposition of O_N.

    Raises :class:`SizeError` above ``max_vertices``; use
    :func:`iterative_norm` for larger graphs.
    """
    if G.vertex_count > max_vertices:
        raise SizeError(
            f"M_N={G.vertex_count} exceeds the dense limit {max_vertices}; use iterative_norm"
        )
    return report_from_eigenvalues(G.N, np.linalg.eigvalsh(G.dense_matrix()))


def deflate_constant(f):
    f = np.asarray(f, dtype=float)
    return f - f.mean()


def iterative_norm(G, tol=1e-10, max_iter=20_000, v0=None, seed=0):
    """Norm of O_N on mean-zero fields by power iteration on O_N^2.

    The start vector is projected off the constants; if nothing is left a
    seeded random start is used instead.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    M = G.vertex_count
    v = None if v0 is None else deflate_constant(check_grid_field(v0, M, "v0"))
    if v is None or np.linalg.norm(v) <= 1e-14 * math.sqrt(M):
        v = deflate_constant(np.random.default_rng(seed).standard_normal(M))
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = G.adjacency_apply(v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = deflate_constant(G.adjacency_apply(w))
        v /= np.linalg.norm(v)
        if abs(new - estimate) < tol:
            return new
        estimate = new
    raise ConvergenceError(
        f"power iteration did not reach tol={tol} in {max_iter} steps",
        last_iterate=v,
        estimate=estimate,
    )


def kazhdan_ratio(G, f):
    """``sum_k ||f o sigma_k - f||^2 / ||f||^2`` under the normalized inner product."""
    f = check_grid_field(f, G.vertex_count)
    scale = float(np.max(np.abs(f)))
    if scale == 0.0:
        raise DomainError("Kazhdan ratio is undefined for the zero field")
    if abs(f.mean()) > 1e-10 * scale:
        raise DomainError("Kazhdan ratio requires a mean-zero field")
    energy = np.mean((f[G.permutations] - f) ** 2, axis=1).sum()
    return float(energy / np.mean(f**2))


def displacement_identity_gap(G, f):
    """``|sum_k ||f o sigma_k - f||^2 - 2K(<f,f> - <O f, f>)|``."""
    f = check_grid_field(f, G.vertex_count)
    lhs = np.mean((f[G.permutations] - f) ** 2, axis=1).sum()
    rhs = 2 * G.K * (np.mean(f * f) - np.mean(G.adjacency_apply(f) * f))
    return float(abs(lhs - rhs))


@dataclass
class OrbitGraph:
    """Breadth-first piece of a dual orbit inside the sup-norm ball of radius R.

    ``edges`` holds index pairs ``(i, j)`` with ``vertices[j] = T^t vertices[i]``
    for both endpoints inside the ball; ``stubs[i]`` counts images that left it.
    """

    seed: tuple
    radius: int
    vertices: list
    edges: np.ndarray
    stubs: np.ndarray

    @property
    def size(self):
        return len(self.vertices)

    def transition_matrix(self):
        """Sparse P with rows divided by 4 and boundary stubs dropped."""
        n = self.size
        data = np.full(len(self.edges), 1.0 / len(DUAL_MAPS))
        rows, cols = (self.edges[:, 0], self.edges[:, 1]) if len(self.edges) else ([], [])
        return coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    def out_degree(self):
        return np.bincount(self.edges[:, 0], minlength=self.size) if len(self.edges) else np.zeros(self.size, int)


def build_orbit_graph(m0, R):
    m0 = tuple(int(x) for x in m0)
    if len(m0) != 2 or m0 == (0, 0):
        raise DomainError("orbit seed must be a nonzero integer 2-vector")
    R = int(R)
    if R < max(abs(m0[0]), abs(m0[1])):
        raise DomainError(f"radius {R} does not contain the seed {m0}")
    index = {m0: 0}
    vertices = [m0]
    queue = deque([m0])
    edges = []
    stubs = [0]
    while queue:
        m = queue.popleft()
        i = index[m]
        for (p, q), (r, s) in DUAL_MAPS:
            w = (p * m[0] + q * m[1], r * m[0] + s * m[1])
            if max(abs(w[0]), abs(w[1])) > R:
                stubs[i] += 1
                continue
            if w not in index:
                index[w] = len(vertices)
                vertices.append(w)
                stubs.append(0)
                queue.append(w)
            edges.append((i, index[w]))
    return OrbitGraph(
        seed=m0,
        radius=R,
        vertices=vertices,
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        stubs=np.array(stubs, dtype=np.int64),
    )


def orbit_spectral_radius(og, tol=1e-12, max_iter=200_000):
    """Perron root of the truncated transition operator by power iteration.

    Iterates the lazy operator ``(I + P) / 2`` from the all-ones vector and
    returns the Rayleigh quotient of P, which never exceeds the true root.
    """
    if og.size == 0:
        raise DomainError("empty orbit graph")
    P = og.transition_matrix()
    v = np.ones(og.size) / math.sqrt(og.size)
    estimate = float(v @ (P @ v))
    for _ in range(max_iter):
        w = 0.5 * (v + P @ v)
        v = w / np.linalg.norm(w)
        new = float(v @ (P @ v))
        if abs(new - estimate) < tol:
            return new
        estimate = new
    raise ConvergenceError(
        f"orbit power iteration did not reach tol={tol} in {max_iter} steps",
        last_iterate=v,
        estimate=estimate,
    )
