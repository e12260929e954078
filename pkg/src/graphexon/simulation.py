"""Closed-loop mean field and N-agent simulation on a finite Margulis graph.

The mean field is propagated exactly in the eigenbasis of O_N: mode ``i``
evolves as ``exp(A_cl(lambda_i) t)``. Agents are integrated with
Euler-Maruyama against that exact mean field.
"""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from ._validation import check_grid_field
from .exceptions import ConfigurationError, DomainError, NoRealSolutionError, SizeError
from .margulis import MargulisGraph
from .mfg import REFERENCE_PARAMETERS, MfgParameters, closed_loop_rate, sare_discriminant, sare_solution, solve_riccati
from .spectral import DENSE_LIMIT

MEANFIELD = "meanfield"
AGENTS = "agents"


@dataclass(frozen=True)
class InitialCondition:
    """``amplitude * sin(2 pi n1 x1) sin(2 pi n2 x2)`` plus i.i.d. Gaussian noise."""

    wave: tuple = (1, 1)
    amplitude: float = 1.0
    noise_std: float = 0.1

    def sample(self, N, seed):
        x = np.indices((N, N)).reshape(2, -1) / N
        n1, n2 = self.wave
        m0 = self.amplitude * np.sin(2 * np.pi * n1 * x[0]) * np.sin(2 * np.pi * n2 * x[1])
        if self.noise_std > 0:
            m0 = m0 + self.noise_std * noise_stream(seed, 0).standard_normal(N * N)
        return m0


def noise_stream(seed, stream):
    """Counter-based generator for ``stream`` (0 = initial condition, 1 + agent index)."""
    return np.random.Generator(np.random.Philox(key=(int(stream) << 64) | (int(seed) % 2**64)))


@dataclass(frozen=True)
class SimulationConfig:
    N: int = 40
    params: MfgParameters = REFERENCE_PARAMETERS
    c: float = -1.28
    t_end: float = 3.0
    dt: float = 1e-3
    seed: int = 0
    init: InitialCondition = InitialCondition()
    mode: str = MEANFIELD

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)

    def validate(self, rd=None):
        if self.N < 2:
            raise ConfigurationError("N must be at least 2")
        if self.mode not in (MEANFIELD, AGENTS):
            raise ConfigurationError(f"mode must be {MEANFIELD!r} or {AGENTS!r}, got {self.mode!r}")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.t_end < self.dt:
            raise ConfigurationError("t_end must be at least dt")
        if abs(self.n_steps * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ConfigurationError("t_end must be an integer multiple of dt")
        rd = solve_riccati(self.params) if rd is None else rd
        scale = abs(rd.a_c + abs(self.c))
        limit = 1e-2 * max(1.0, 1.0 / scale if scale > 0 else math.inf)
        if self.dt > limit:
            raise ConfigurationError(f"dt={self.dt} exceeds the stability guard {limit:.3g}")
        return self

    def to_dict(self):
        d = asdict(self)
        d["init"]["wave"] = list(self.init.wave)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "params" in d:
            d["params"] = MfgParameters(**d["params"])
        if "init" in d:
            init = dict(d["init"])
            init["wave"] = tuple(init.get("wave", (1, 1)))
            d["init"] = InitialCondition(**init)
        return cls(**d)


@dataclass
class ModalDecomposition:
    """Eigenpairs of O_N with eigenvectors orthonormal in the normalized inner product."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    principal: int

    @property
    def size(self):
        return len(self.eigenvalues)

    def coefficients(self, f):
        f = np.asarray(f, dtype=float)
        return f @ self.eigenvectors / self.size

    def reconstruct(self, coef):
        return np.asarray(coef) @ self.eigenvectors.T

    def nonprincipal(self):
        return np.delete(np.arange(self.size), self.principal)


def decompose(G, max_vertices=DENSE_LIMIT):
    if G.vertex_count > max_vertices:
        raise SizeError(f"M_N={G.vertex_count} exceeds the dense limit {max_vertices}")
    lam, vec = np.linalg.eigh(G.dense_matrix())
    M = G.vertex_count
    vec *= math.sqrt(M)
    i = int(np.argmin(np.abs(lam - 1.0)))
    col = vec[:, i]
    if np.ptp(col) < 1e-8:
        # simple principal eigenvalue: pin its eigenvector to the exact constant
        vec[:, i] = 1.0
    return ModalDecomposition(lam, vec, i)


@dataclass
class Trajectory:
    times: np.ndarray
    mean_bar: np.ndarray
    deviation_norm: np.ndarray
    snapshots: dict = field(default_factory=dict)
    test_inner_products: np.ndarray = None
    label: str = MEANFIELD
    coefficients: np.ndarray = field(default=None, repr=False)
    basis: ModalDecomposition = field(default=None, repr=False)
    states: np.ndarray = field(default=None, repr=False)

    def field_at(self, index):
        if self.states is not None:
            return self.states[index]
        return self.basis.reconstruct(self.coefficients[index])

    def index_of(self, t):
        return int(np.argmin(np.abs(self.times - t)))

    def deviation_inner_products(self, test_fns, floor=1e-14):
        """``<e_t / ||e_t||, phi>`` per step and test function; NaN where ``||e_t|| <= floor``."""
        phis = np.atleast_2d(np.asarray(test_fns, dtype=float))
        if self.states is not None:
            dev = self.states - self.states.mean(axis=1, keepdims=True)
            raw = dev @ phis.T / dev.shape[1]
        else:
            md = self.basis
            rest = md.nonprincipal()
            proj = md.eigenvectors[:, rest].T @ phis.T / md.size
            raw = self.coefficients[:, rest] @ proj
        with np.errstate(divide="ignore", invalid="ignore"):
            out = raw / self.deviation_norm[:, None]
        out[self.deviation_norm <= floor] = np.nan
        return out

    def to_frame(self):
        df = pd.DataFrame({"t": self.times, "mean_bar": self.mean_bar, "deviation_norm": self.deviation_norm})
        if self.test_inner_products is not None:
            for j in range(self.test_inner_products.shape[1]):
                df[f"ip_{j}"] = self.test_inner_products[:, j]
        return df

    def write_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g", na_rep="")


def _check_modes(rd, c, md):
    delta = sare_discriminant(rd, c, md.eigenvalues)
    bad = np.flatnonzero(delta < 0)
    if bad.size:
        i = int(bad[np.argmin(delta[bad])])
        raise NoRealSolutionError(
            f"mode {i} (lambda={md.eigenvalues[i]:.6g}) has Delta={delta[i]:.6g} < 0",
            mode=i,
            discriminant=float(delta[i]),
        )


def modal_rates(rd, c, md):
    _check_modes(rd, c, md)
    return closed_loop_rate(rd, c, md.eigenvalues)


def evolve_mean_field(md, rd, c, m0, t_grid, snapshot_times=(), test_fns=None):
    """Exact modal solution ``m_hat_i(t) = exp(A_cl(lambda_i) t) m_hat_i(0)``."""
    m0 = check_grid_field(m0, md.size, "m0")
    t = np.asarray(t_grid, dtype=float)
    rates = modal_rates(rd, c, md)
    coef = md.coefficients(m0)[None, :] * np.exp(np.outer(t, rates))
    rest = md.nonprincipal()
    traj = Trajectory(
        times=t,
        mean_bar=coef[:, md.principal].copy(),
        deviation_norm=np.sqrt(np.sum(coef[:, rest] ** 2, axis=1)),
        label=MEANFIELD,
        coefficients=coef,
        basis=md,
    )
    for ts in snapshot_times:
        traj.snapshots[float(ts)] = traj.field_at(traj.index_of(ts))
    if test_fns is not None:
        traj.test_inner_products = traj.deviation_inner_products(test_fns)
    return traj


def adjoint_coefficients(md, rd, c, coef):
    """Modal coefficients of the decoupled adjoint ``S = P(O_N) m``."""
    return sare_solution(rd, c, md.eigenvalues) * coef


def adjoint_field(md, rd, c, coef):
    return md.reconstruct(adjoint_coefficients(md, rd, c, coef))


def adjoint_residual(md, rd, c, m0, t, h=1e-5):
    """Normalized l2 norm of ``-dS/dt - (a_c - gamma) S - psi O_N m`` at time ``t``.

    The derivative is a central difference of the closed-form adjoint.
    """
    rates = modal_rates(rd, c, md)
    c0 = md.coefficients(check_grid_field(m0, md.size, "m0"))

    def S(s):
        return adjoint_coefficients(md, rd, c, c0 * np.exp(rates * s))

    coef_t = c0 * np.exp(rates * t)
    dS = (S(t + h) - S(t - h)) / (2 * h)
    res = -dS - (rd.a_c - rd.params.gamma) * S(t) - rd.psi_at(c) * md.eigenvalues * coef_t
    # Parseval in the normalized basis
    return float(np.sqrt(np.sum(res**2)))


def simulate_agents(G, rd, c, config, md=None, x0=None, store=True):
    """Euler-Maruyama for ``dx = (a x + b u + c [O_N m](alpha)) dt + sigma dW``
    with ``u = -(b/r)(Pi x + S_t(alpha))`` and the exact modal mean field.

    Returns ``(trajectory, states)`` where ``states`` has shape ``(steps + 1, M)``.
    """
    config.validate(rd)
    md = decompose(G) if md is None else md
    rates = modal_rates(rd, c, md)
    M = G.vertex_count
    m0 = config.init.sample(G.N, config.seed)
    x = m0.copy() if x0 is None else check_grid_field(x0, M, "x0").copy()
    coef0 = md.coefficients(m0)
    # cO_N m - kS in modal form is (A_cl - a_c) per mode
    gain = (rates - rd.a_c) * coef0
    dt, n = config.dt, config.n_steps
    sigma = rd.params.sigma
    noise = None
    if sigma > 0:
        noise = np.empty((n, M))
        for agent in range(M):
            noise[:, agent] = noise_stream(config.seed, agent + 1).standard_normal(n)
        noise *= sigma * math.sqrt(dt)
    times = config.times
    states = np.empty((n + 1, M)) if store else None
    mean_bar = np.empty(n + 1)
    dev = np.empty(n + 1)
    chunk = 256
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        forcing = md.reconstruct(gain[None, :] * np.exp(np.outer(times[start:stop], rates)))
        for j, step in enumerate(range(start, stop)):
            if store:
                states[step] = x
            mean_bar[step] = x.mean()
            dev[step] = math.sqrt(np.mean((x - mean_bar[step]) ** 2))
            x = x + (rd.a_c * x + forcing[j]) * dt
            if noise is not None:
                x += noise[step]
    if store:
        states[n] = x
    mean_bar[n] = x.mean()
    dev[n] = math.sqrt(np.mean((x - mean_bar[n]) ** 2))
    traj = Trajectory(times=times, mean_bar=mean_bar, deviation_norm=dev, label=AGENTS, states=states)
    return traj, (states if store else x[None, :])


def deviation_diagnostics(traj, test_fns):
    """Per-step table of ``||e_t||``, the spatial mean and ``<e~_t, phi>`` per test function."""
    ips = traj.deviation_inner_products(test_fns)
    traj.test_inner_products = ips
    return traj.to_frame()


def fourier_test_functions(N, modes=((1, 0), (0, 1), (1, 1))):
    """Low-order sine modes ``sin(2 pi (n . alpha))`` sampled on the grid."""
    x = np.indices((N, N)).reshape(2, -1) / N
    return np.array([np.sin(2 * np.pi * (n1 * x[0] + n2 * x[1])) for n1, n2 in modes])


def product_sine(N, wave=(1, 1)):
    x = np.indices((N, N)).reshape(2, -1) / N
    return np.sin(2 * np.pi * wave[0] * x[0]) * np.sin(2 * np.pi * wave[1] * x[1])


def run_mean_field(config):
    """Build the graph, decompose it and evolve the mean field for ``config``."""
    rd = solve_riccati(config.params)
    config.validate(rd)
    G = MargulisGraph(config.N)
    md = decompose(G)
    m0 = config.init.sample(config.N, config.seed)
    return evolve_mean_field(md, rd, config.c, m0, config.times, snapshot_times=(0.0, config.t_end)), md, rd


def write_matrix_csv(field_values, N, path):
    grid = np.asarray(field_values, dtype=float).reshape(N, N)
    np.savetxt(path, grid, delimiter=",", fmt="%.17g")


def write_pgm(field_values, N, path):
    """8-bit binary PGM plus a ``.json`` sidecar recording the value range."""
    grid = np.asarray(field_values, dtype=float).reshape(N, N)
    lo, hi = float(grid.min()), float(grid.max())
    if hi > lo:
        pix = np.rint((grid - lo) / (hi - lo) * 255)
    else:
        pix = np.zeros_like(grid)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{N} {N}\n255\n".encode("ascii"))
        fh.write(pix.astype(np.uint8).tobytes())
    with open(str(path) + ".json", "w") as fh:
        json.dump({"min": lo, "max": hi, "width": N, "height": N}, fh)


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise DomainError("not a binary PGM file")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
