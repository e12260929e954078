"""Closed-form linear-quadratic mean field game on the graphexon operator.

Every spectral mode ``lambda`` of the coupling operator carries a scalar
Riccati equation

    -k p^2 + (2 a_c - gamma + lambda c) p + lambda psi = 0,

whose stabilizing root gives the closed-loop rate

    A_cl(lambda) = (gamma + lambda c - sqrt(Delta(lambda))) / 2.

Stability and Turing-type instability regions in the coupling ``c`` are
computed from exact interval formulas; no root finding is used.
"""
import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DomainError, NoRealSolutionError, NoStabilizingSolutionError
from .spectral import KESTEN_RADIUS


@dataclass(frozen=True)
class MfgParameters:
    """Scalar model data: drift ``a``, control gain ``b``, state weight ``q``,
    control weight ``r``, discount ``gamma``, target coupling ``eta``, noise
    ``sigma`` and network coupling ``c``."""

    a: float
    b: float
    q: float
    r: float
    gamma: float
    eta: float
    sigma: float = 0.1
    c: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "q", "r", "gamma", "eta", "sigma", "c"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, float(value))
        if self.r <= 0:
            raise DomainError("control weight r must be positive")
        if self.gamma <= 0:
            raise DomainError("discount rate gamma must be positive")
        if self.q < 0:
            raise DomainError("state weight q must be non-negative")
        if self.sigma < 0:
            raise DomainError("noise amplitude sigma must be non-negative")

    def replace(self, **changes):
        return MfgParameters(**{**asdict(self), **changes})

    def to_dict(self):
        return asdict(self)


# a=-1, b=1, q=2, r=1, gamma=0.5 from the 40x40 experiment; eta=2 and sigma=0.1
# are documented choices (see README).
REFERENCE_PARAMETERS = MfgParameters(a=-1.0, b=1.0, q=2.0, r=1.0, gamma=0.5, eta=2.0, sigma=0.1)


@dataclass(frozen=True)
class RiccatiData:
    params: MfgParameters
    k: float
    Pi: float
    a_c: float
    a_gamma: float
    theta: float

    @property
    def psi(self):
        return self.psi_at(self.params.c)

    def psi_at(self, c):
        return c * self.Pi - self.params.q * self.params.eta

    @property
    def kq_eta(self):
        return self.k * self.params.q * self.params.eta

    def residual(self):
        p = self.params
        return 2 * self.Pi * (p.a - p.gamma / 2) - self.k * self.Pi**2 + p.q


def solve_riccati(p):
    """Stabilizing root of ``2 Pi (a - gamma/2) - k Pi^2 + q = 0`` and derived data."""
    k = p.b**2 / p.r
    alpha = p.a - p.gamma / 2
    if k == 0.0:
        if p.gamma <= 2 * p.a:
            raise NoStabilizingSolutionError(
                "b = 0 and gamma <= 2a: the discounted Riccati equation has no stabilizing root"
            )
        Pi = p.q / (p.gamma - 2 * p.a)
    else:
        root = math.sqrt(alpha * alpha + k * p.q)
        # rationalized form avoids cancellation when alpha < 0
        Pi = p.q / (root - alpha) if alpha < 0 else (alpha + root) / k
        slope = 2 * alpha - 2 * k * Pi
        if slope != 0.0:
            Pi -= (2 * Pi * alpha - k * Pi * Pi + p.q) / slope
    a_c = p.a - k * Pi
    return RiccatiData(
        params=p,
        k=k,
        Pi=Pi,
        a_c=a_c,
        a_gamma=a_c - p.gamma / 2,
        theta=a_c * (a_c - p.gamma),
    )


def sare_discriminant(rd, c, lam):
    """``Delta(lambda) = c^2 lambda^2 + 4 (a_gamma c + k psi) lambda + 4 a_gamma^2``."""
    lam = np.asarray(lam, dtype=float)
    B = rd.a_gamma * c + rd.k * rd.psi_at(c)
    out = c * c * lam * lam + 4 * B * lam + 4 * rd.a_gamma**2
    return float(out) if out.ndim == 0 else out


def _require_real(rd, c, lam):
    delta = np.asarray(sare_discriminant(rd, c, lam))
    if np.any(delta < 0):
        bad = np.atleast_1d(lam)[np.argmin(np.atleast_1d(delta))] if np.ndim(lam) else float(lam)
        raise NoRealSolutionError(
            f"Delta({float(bad):.6g}) = {float(np.min(delta)):.6g} < 0: no real Riccati solution",
            mode=float(bad),
            discriminant=float(np.min(delta)),
        )
    return delta


def sare_solution(rd, c, lam):
    """Positive branch ``p(lambda) = (2 a_gamma + lambda c + sqrt(Delta)) / (2k)``.

    With ``k = 0`` the equation is linear and ``p = -lambda psi / (2 a_gamma + lambda c)``.
    """
    lam = np.asarray(lam, dtype=float)
    psi = rd.psi_at(c)
    lin = 2 * rd.a_gamma + lam * c
    if rd.k == 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -lam * psi / lin
    else:
        sq = np.sqrt(_require_real(rd, c, lam))
        with np.errstate(divide="ignore", invalid="ignore"):
            # product of the roots is -lambda psi / k; use it where the
            # direct formula would cancel
            small = -2 * lam * psi / (lin - sq)
        out = np.where(lin >= 0, (lin + sq) / (2 * rd.k), small)
    return float(out) if out.ndim == 0 else out


def sare_residual(rd, c, lam, p):
    lam = np.asarray(lam, dtype=float)
    return -rd.k * p**2 + (2 * rd.a_c - rd.params.gamma + lam * c) * p + lam * rd.psi_at(c)


def closed_loop_rate(rd, c, lam):
    """``A_cl(lambda) = (gamma + lambda c - sqrt(Delta(lambda))) / 2``."""
    lam = np.asarray(lam, dtype=float)
    sq = np.sqrt(_require_real(rd, c, lam))
    out = 0.5 * (rd.params.gamma + lam * c - sq)
    return float(out) if out.ndim == 0 else out


def rate_indicator(rd, c, lam):
    """``L(lambda) = ((gamma - a) c + k q eta) lambda - a_c (a_c - gamma)``.

    Where ``gamma + lambda c >= 0`` its sign equals the sign of ``A_cl(lambda)``.
    """
    lam = np.asarray(lam, dtype=float)
    out = coupling_gain(rd, c) * lam - rd.theta
    return float(out) if out.ndim == 0 else out


def coupling_gain(rd, c):
    """``Phi(c) = (gamma - a) c + k q eta``."""
    return (rd.params.gamma - rd.params.a) * c + rd.kq_eta


@dataclass(frozen=True)
class ExistenceReport:
    ok: bool
    range_clause: bool
    vertex_clause: bool
    lambda_star: float
    vertex_inside: bool
    failed_at: float = None
    delta_at_failure: float = None

    def __bool__(self):
        return self.ok


def existence_check(rd, c, rho, atol=1e-12):
    """Whether the per-mode equation has real roots for every ``|lambda| <= rho``.

    Two clauses: the discriminant is non-negative at ``+-rho``, and, when the
    parabola's vertex ``lambda*`` lies inside, ``k psi (2 a_gamma c + k psi) <= 0``.
    """
    if c == 0:
        raise DomainError("existence conditions assume c != 0")
    if not 0 < rho <= 1:
        raise DomainError(f"rho must lie in (0, 1], got {rho}")
    ag, k, psi = rd.a_gamma, rd.k, rd.psi_at(c)
    B = ag * c + k * psi
    range_ok = c * c * rho * rho + 4 * ag * ag - 4 * rho * abs(B) >= -atol
    lam_star = -2 * B / (c * c)
    inside = abs(lam_star) <= rho
    vertex_ok = (not inside) or (k * psi * (2 * ag * c + k * psi) <= atol)
    failed_at = None
    if not range_ok:
        failed_at = -rho if sare_discriminant(rd, c, -rho) < sare_discriminant(rd, c, rho) else rho
    elif not vertex_ok:
        failed_at = lam_star
    return ExistenceReport(
        ok=bool(range_ok and vertex_ok),
        range_clause=bool(range_ok),
        vertex_clause=bool(vertex_ok),
        lambda_star=lam_star,
        vertex_inside=bool(inside),
        failed_at=failed_at,
        delta_at_failure=None if failed_at is None else sare_discriminant(rd, c, failed_at),
    )


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    a_c: float
    extreme_points: tuple
    """Pairs ``(lambda_e, L(lambda_e))`` over the extreme points of Omega."""

    def __bool__(self):
        return self.stable


def extreme_points(rd, c, rho):
    """``{1, -rho, rho, -gamma/c}`` intersected with ``{gamma + lambda c >= 0}``."""
    g = rd.params.gamma
    pts = [1.0, -rho, rho]
    if c != 0 and abs(g / c) <= rho:
        pts.append(-g / c)
    return [lam for lam in pts if g + lam * c >= 0]


def stability_check(rd, c, rho):
    """Global asymptotic stability of the mean field over the spectrum ``[-rho, rho] u {1}``."""
    if c == 0:
        return StabilityReport(rd.a_c < 0, rd.a_c, ((0.0, rate_indicator(rd, 0.0, 0.0)),))
    pts = tuple((lam, rate_indicator(rd, c, lam)) for lam in extreme_points(rd, c, rho))
    stable = rd.a_c < 0 and all(val < 0 for _, val in pts)
    return StabilityReport(bool(stable), rd.a_c, pts)


INF = math.inf


@dataclass(frozen=True)
class IntervalSet:
    """Finite union of disjoint open intervals on the real line."""

    intervals: tuple = ()

    @classmethod
    def of(cls, *pairs):
        spans = sorted((float(lo), float(hi)) for lo, hi in pairs if lo < hi)
        merged = []
        for lo, hi in spans:
            if merged and lo < merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        return cls(tuple(merged))

    def __contains__(self, c):
        return any(lo < c < hi for lo, hi in self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    @property
    def is_empty(self):
        return not self.intervals

    def endpoints(self):
        return [e for span in self.intervals for e in span if math.isfinite(e)]

    def distance_to_boundary(self, c):
        ends = self.endpoints()
        return min((abs(c - e) for e in ends), default=INF)

    def to_list(self):
        return [[_encode(lo), _encode(hi)] for lo, hi in self.intervals]


def _encode(x):
    if x == INF:
        return "inf"
    if x == -INF:
        return "-inf"
    return x


def _case(rd):
    g, a = rd.params.gamma, rd.params.a
    if g > a:
        return "gamma>a"
    if g < a:
        return "gamma<a"
    return "gamma=a"


def bifurcation_thresholds(rd, rho):
    """``(c_plus, c_minus, c_star)``; all ``None`` when ``gamma = a``."""
    denom = rd.params.gamma - rd.params.a
    if denom == 0:
        return None, None, None
    c_plus = (rd.theta / rho - rd.kq_eta) / denom
    c_minus = (-rd.theta / rho - rd.kq_eta) / denom
    return c_plus, c_minus, mean_threshold(rd)


def mean_threshold(rd):
    """``c_star = (Theta - k q eta) / (gamma - a)``; ``None`` when ``gamma = a``."""
    denom = rd.params.gamma - rd.params.a
    return None if denom == 0 else (rd.theta - rd.kq_eta) / denom


def turing_region(rd, rho):
    """The set of couplings with ``max(A_cl(rho), A_cl(-rho)) > 0``."""
    if not 0 < rho < 1:
        raise DomainError(f"rho must lie in (0, 1), got {rho}")
    g = rd.params.gamma
    c_plus, c_minus, _ = bifurcation_thresholds(rd, rho)
    case = _case(rd)
    if case == "gamma>a":
        return IntervalSet.of((-INF, min(g / rho, c_minus)), (max(-g / rho, c_plus), INF))
    if case == "gamma<a":
        return IntervalSet.of((-g / rho, c_plus), (c_minus, g / rho))
    drive = rho * rd.kq_eta
    if abs(drive) <= rd.theta:
        return IntervalSet()
    if drive > rd.theta:
        return IntervalSet.of((-g / rho, INF))
    return IntervalSet.of((-INF, g / rho))


def mean_stability_region(rd):
    """The set of couplings with ``A_cl(1) < 0``."""
    g = rd.params.gamma
    c_star = mean_threshold(rd)
    case = _case(rd)
    if case == "gamma>a":
        return IntervalSet.of((-INF, max(-g, c_star)))
    if case == "gamma<a":
        return IntervalSet.of((-INF, -g), (c_star, INF))
    if rd.kq_eta < rd.theta:
        return IntervalSet.of((-INF, INF))
    return IntervalSet.of((-INF, -g))


@dataclass(frozen=True)
class StabilityAtlas:
    rho: float
    theta: float
    c_plus: float
    c_minus: float
    c_star: float
    I0: IntervalSet
    S1: IntervalSet
    case: str

    def in_instability_manifold(self, c):
        return c != 0 and c in self.I0

    def to_dict(self):
        return {
            "rho": self.rho,
            "theta": self.theta,
            "c_plus": self.c_plus,
            "c_minus": self.c_minus,
            "c_star": self.c_star,
            "I0": self.I0.to_list(),
            "S1": self.S1.to_list(),
            "case": self.case,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def stability_atlas(rd, rho=KESTEN_RADIUS):
    c_plus, c_minus, c_star = bifurcation_thresholds(rd, rho)
    return StabilityAtlas(
        rho=float(rho),
        theta=rd.theta,
        c_plus=c_plus,
        c_minus=c_minus,
        c_star=c_star,
        I0=turing_region(rd, rho),
        S1=mean_stability_region(rd),
        case=_case(rd),
    )


class Coupling(str, enum.Enum):
    STABLE = "Stable"
    TURING = "TuringUnstable"
    MEAN_UNSTABLE = "MeanUnstable"
    NO_REAL = "NoRealSolution"
    UNCOUPLED = "Uncoupled"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class CouplingDiagnostics:
    label: Coupling
    rate_rho: float = None
    rate_neg_rho: float = None
    rate_one: float = None
    marginal: bool = False
    notes: list = field(default_factory=list)


def diagnose_coupling(rd, c, rho=KESTEN_RADIUS, atlas=None, margin=1e-9):
    """Label a coupling and report the closed-loop rates at ``rho``, ``-rho`` and 1.

    The principal mode must also admit a real solution; couplings where
    ``Delta(1) < 0`` are labelled ``NoRealSolution``.
    """
    c = float(c)
    if c == 0:
        return CouplingDiagnostics(Coupling.UNCOUPLED, notes=[f"a_c={rd.a_c:.6g}"])
    exist = existence_check(rd, c, rho)
    if not exist.ok:
        return CouplingDiagnostics(Coupling.NO_REAL, notes=[f"existence failed at lambda={exist.failed_at}"])
    if sare_discriminant(rd, c, 1.0) < 0:
        return CouplingDiagnostics(Coupling.NO_REAL, notes=["Delta(1) < 0 for the principal mode"])
    atlas = stability_atlas(rd, rho) if atlas is None else atlas
    r_pos = closed_loop_rate(rd, c, rho)
    r_neg = closed_loop_rate(rd, c, -rho)
    r_one = closed_loop_rate(rd, c, 1.0)
    marginal = min(abs(r_pos), abs(r_neg), abs(r_one)) <= margin or min(
        atlas.I0.distance_to_boundary(c), atlas.S1.distance_to_boundary(c)) <= margin
    if rd.a_c < 0 and c in atlas.S1 and atlas.in_instability_manifold(c):
        label = Coupling.TURING
    elif stability_check(rd, c, rho).stable:
        label = Coupling.STABLE
    else:
        label = Coupling.MEAN_UNSTABLE
    return CouplingDiagnostics(label, r_pos, r_neg, r_one, bool(marginal))


def classify_coupling(rd, c, rho=KESTEN_RADIUS, atlas=None):
    return diagnose_coupling(rd, c, rho, atlas).label


def finite_turing_unstable(rd, c, eigenvalues, principal_index=None):
    """Finite-N test: is some non-constant mode's closed-loop rate positive?"""
    lam = np.asarray(eigenvalues, dtype=float)
    if principal_index is None:
        principal_index = int(np.argmin(np.abs(lam - 1.0)))
    rest = np.delete(lam, principal_index)
    return bool(np.max(closed_loop_rate(rd, c, rest)) > 0)


def representative_couplings(rd, rhos=(KESTEN_RADIUS,), span=20.0, samples=4001):
    """Pick one strictly stable and one Turing-unstable coupling.

    ``c_stable`` minimizes the worst closed-loop rate over ``{-rho, rho, 1}``
    for every rho supplied. ``c_turing`` lies past the outermost I0 threshold
    by ``max(1, |threshold| / 4)`` and is Turing for every rho. Either is
    ``None`` when no such coupling exists in ``[-span, span]``.
    """
    atlases = {float(r): stability_atlas(rd, float(r)) for r in rhos}
    rhos = list(atlases)
    grid = np.linspace(-span, span, samples)
    best, c_stable = INF, None
    for c in grid:
        if c == 0:
            continue
        labels = [classify_coupling(rd, c, r, atlases[r]) for r in rhos]
        if all(lbl is Coupling.STABLE for lbl in labels):
            worst = max(max(closed_loop_rate(rd, c, np.array([r, -r, 1.0]))) for r in rhos)
            if worst < best:
                best, c_stable = worst, float(c)

    candidates = []
    for r in rhos:
        for lo, hi in atlases[r].I0:
            if lo == -INF and math.isfinite(hi):
                candidates.append(hi - max(1.0, abs(hi) / 4))
            if hi == INF and math.isfinite(lo):
                candidates.append(lo + max(1.0, abs(lo) / 4))
    # outermost first, so the pick is Turing at every rho
    candidates.sort(key=abs, reverse=True)
    candidates += [float(c) for c in grid if c != 0]
    c_turing = next(
        (float(c) for c in candidates
         if all(classify_coupling(rd, c, r, atlases[r]) is Coupling.TURING for r in rhos)),
        None,
    )
    return c_stable, c_turing
