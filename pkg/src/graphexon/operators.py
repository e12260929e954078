"""Discrete-to-continuum operator pipeline on the flat torus.

Projection ``P_N`` (cell averages), extension ``E_N`` (piecewise constants),
the step operator ``G_N = E_N O_N P_N``, the limit operator ``G`` built from
the four linear maps T1, T2 and their inverses, and the empirical and limit
edge measures on the torus squared.

The limit edge measure is supported on the graphs of measure-preserving
bijections, so it has no absolutely continuous part; every integral against
it reduces to an integral over one copy of the torus.

Torus functions are vectorized callables taking points of shape ``(..., 2)``
and returning values of shape ``(...)``. Test functions on the product space
take two such arrays ``(x, y)``.
"""
import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from ._validation import check_grid_field, check_increasing, check_points, check_resolution
from .margulis import T1, T1_INV, T2, T2_INV, MargulisGraph, locate


@dataclass(frozen=True)
class TorusFunction:
    """A periodic function on [0, 1)^2 with an optional Lipschitz constant."""

    func: object
    lipschitz: float = None

    def __post_init__(self):
        if self.lipschitz is not None and self.lipschitz < 0:
            raise ValueError("Lipschitz constant must be non-negative")

    def __call__(self, x):
        pts = np.mod(check_points(x), 1.0)
        return np.asarray(self.func(pts), dtype=float) * np.ones(pts.shape[:-1])


def as_torus_function(f):
    if isinstance(f, TorusFunction):
        return f
    if np.isscalar(f):
        c = float(f)
        return TorusFunction(lambda x: np.full(x.shape[:-1], c), lipschitz=0.0)
    return TorusFunction(f)


@dataclass(frozen=True)
class LimitGenerators:
    """Limit maps of the eight discrete generators; shifts vanish in the limit.

    Each of the four distinct matrices appears twice, matching the discrete
    generator order.
    """

    matrices: tuple = (T1, T1, T2, T2, T1_INV, T1_INV, T2_INV, T2_INV)

    def __post_init__(self):
        for m in self.matrices:
            a = np.array(m)
            if abs(round(np.linalg.det(a))) != 1:
                raise ValueError(f"limit map {m} is not measure preserving")

    @property
    def K(self):
        return len(self.matrices)

    @property
    def distinct(self):
        return tuple(dict.fromkeys(self.matrices))

    def apply(self, k, x):
        return np.mod(check_points(x) @ np.array(self.matrices[k], dtype=float).T, 1.0)

    @property
    def lipschitz(self):
        """Largest operator 2-norm among the limit maps."""
        return max(float(np.linalg.norm(np.array(m, dtype=float), 2)) for m in self.matrices)


@dataclass(frozen=True)
class QuadratureGrid:
    """Midpoint rule on a uniform ``resolution x resolution`` grid of the torus."""

    resolution: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        M = check_resolution(self.resolution)
        c = (np.arange(M) + 0.5) / M
        nodes = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", np.full(M * M, 1.0 / (M * M)))

    def integrate(self, values):
        return float(np.sum(np.asarray(values) * self.weights))

    def norm(self, values):
        return math.sqrt(self.integrate(np.asarray(values) ** 2))

    def inner(self, u, v):
        return self.integrate(np.asarray(u) * np.asarray(v))


def _cell_points(N, sub):
    """Subgrid midpoints of every cell, shape ``(N*N, sub*sub, 2)``."""
    offs = (np.arange(sub) + 0.5) / sub
    local = np.stack(np.meshgrid(offs, offs, indexing="ij"), axis=-1).reshape(-1, 2)
    corners = np.stack(np.meshgrid(np.arange(N), np.arange(N), indexing="ij"), axis=-1).reshape(-1, 2)
    return (corners[:, None, :] + local[None, :, :]) / N


def project(f, N, sub=4):
    """Cell averages of ``f`` by midpoint quadrature on a ``sub x sub`` subgrid."""
    N = check_resolution(N)
    sub = check_resolution(sub)
    f = as_torus_function(f)
    return f(_cell_points(N, sub)).mean(axis=1)


def extend(phi, N):
    """Piecewise-constant torus function taking value ``phi[v]`` on cell v."""
    N = check_resolution(N)
    phi = check_grid_field(phi, N * N).copy()

    def step(x):
        idx = locate(x, N)
        return phi[idx[..., 0] * N + idx[..., 1]]

    return TorusFunction(step, lipschitz=None)


def step_operator(G, f, sub=4):
    """The torus function ``G_N f = E_N O_N P_N f``."""
    return extend(G.adjacency_apply(project(f, G.N, sub)), G.N)


def step_operator_apply(G, f, x, sub=4):
    """``(1/K) sum_k [P_N f](sigma_k(i_N(x)))`` at the point(s) ``x``."""
    pf = project(f, G.N, sub)
    idx = locate(x, G.N)
    flat = idx[..., 0] * G.N + idx[..., 1]
    return pf[G.permutations[:, flat]].mean(axis=0)


def limit_operator_apply(f, x, limit=None):
    """``[G f](x) = (1/K) sum_k f(sigma_inf_k(x))``; with the default maps this
    is the quarter-sum over T1, T1^-1, T2, T2^-1."""
    limit = LimitGenerators() if limit is None else limit
    f = as_torus_function(f)
    x = check_points(x)
    return np.mean([f(limit.apply(k, x)) for k in range(limit.K)], axis=0)


def limit_operator(f, limit=None):
    f = as_torus_function(f)
    return TorusFunction(lambda x: limit_operator_apply(f, x, limit), lipschitz=f.lipschitz)


def empirical_measure_integral(G, psi):
    """Integral of ``psi(x, y)`` against the empirical edge measure of G."""
    x = G.coords / G.N
    total = 0.0
    for k in range(G.K):
        y = G.coords[G.permutations[k]] / G.N
        total += np.sum(np.asarray(psi(x, y), dtype=float) * np.ones(G.vertex_count))
    return float(total / (G.K * G.vertex_count))


def limit_measure_integral(psi, quad=None, limit=None):
    """Integral of ``psi(x, y)`` against the limit edge measure."""
    quad = QuadratureGrid(64) if quad is None else quad
    limit = LimitGenerators() if limit is None else limit
    x = quad.nodes
    vals = [quad.integrate(np.asarray(psi(x, limit.apply(k, x)), dtype=float) * np.ones(len(x)))
            for k in range(limit.K)]
    return float(np.sum(vals) / limit.K)


def weak_convergence_gap(psi, N_list, quad=None, limit=None):
    """``|int psi dW_N - int psi dW|`` for each resolution in ``N_list``.

    Expected to decrease toward the quadrature error as N grows.
    """
    N_list = check_increasing(N_list)
    target = limit_measure_integral(psi, quad, limit)
    return [abs(empirical_measure_integral(MargulisGraph(N), psi) - target) for N in N_list]


def default_quadrature(N_list, per_cell=4, cap=2048):
    """A midpoint grid whose cells nest inside every partition in ``N_list``."""
    N_list = [int(n) for n in N_list]
    L = reduce(math.lcm, N_list)
    target = per_cell * max(N_list)
    M = L * max(1, -(-target // L))
    if M > cap:
        M = target
    return QuadratureGrid(M)


def strong_convergence_gap(f, N_list, quad=None, sub=4, limit=None):
    """``||G_N f - G f||_{L^2}`` under quadrature for each N in ``N_list``."""
    N_list = check_increasing(N_list)
    quad = default_quadrature(N_list) if quad is None else quad
    f = as_torus_function(f)
    target = limit_operator_apply(f, quad.nodes, limit)
    gaps = []
    for N in N_list:
        G = MargulisGraph(N)
        approx = step_operator_apply(G, f, quad.nodes, sub)
        gaps.append(quad.norm(approx - target))
    return gaps


def torus_distance(x, y):
    d = np.abs(np.mod(check_points(x) - check_points(y) + 0.5, 1.0) - 0.5)
    return np.sqrt(np.sum(d**2, axis=-1))


def discretization_error(G, limit=None):
    """Per-generator ``max_v d(sigma_inf_k(iota(v)), iota(sigma_N_k(v)))``."""
    limit = LimitGenerators() if limit is None else limit
    x = G.coords / G.N
    return np.array([
        float(np.max(torus_distance(limit.apply(k, x), G.coords[G.permutations[k]] / G.N)))
        for k in range(G.K)
    ])


def strong_convergence_bound(lipschitz, G, limit=None):
    """The a-priori bound ``L_f ((1 + L_tau) delta_N + eps_N)`` with ``delta_N = sqrt(2)/N``."""
    limit = LimitGenerators() if limit is None else limit
    delta = math.sqrt(2.0) / G.N
    eps = float(np.max(discretization_error(G, limit)))
    return lipschitz * ((1.0 + limit.lipschitz) * delta + eps)


def edge_character(m, n):
    """``psi(x, y) = cos(2 pi (m.y - n.x))`` on the torus squared.

    Against the limit measure this integrates to ``#{k: T_k^t m = n} / K``;
    it picks up a shift-dependent error on finite grids whenever some
    ``T_k^t m = n``.
    """
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    return lambda x, y: np.cos(2 * np.pi * (y @ m - x @ n))


def _sin_sum(x):
    return np.sin(2 * np.pi * x[..., 0]) + np.sin(2 * np.pi * x[..., 1])


TORUS_TEST_FUNCTIONS = {
    "sin_sum": TorusFunction(_sin_sum, lipschitz=2 * math.sqrt(2) * math.pi),
    "cos_x1": TorusFunction(lambda x: np.cos(2 * np.pi * x[..., 0]), lipschitz=2 * math.pi),
    "sin_product": TorusFunction(
        lambda x: np.sin(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1]), lipschitz=2 * math.sqrt(2) * math.pi
    ),
    "constant": as_torus_function(1.0),
}

_char_t1 = edge_character((1, 0), (1, 2))
_char_t2 = edge_character((0, 1), (2, 1))

EDGE_TEST_FUNCTIONS = {
    "one": lambda x, y: np.ones(x.shape[:-1]),
    "char_t1": _char_t1,
    "char_t2": _char_t2,
    "char_t1_inv": edge_character((1, 0), (1, -2)),
    "char_diag": edge_character((1, 1), (1, 3)),
    "char_mixed": lambda x, y: 0.5 * _char_t1(x, y) + edge_character((0, 1), (-2, 1))(x, y),
    "cos_product": lambda x, y: np.cos(2 * np.pi * x[..., 0]) * np.cos(2 * np.pi * y[..., 1]),
}
