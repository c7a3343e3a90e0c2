"""Carleman weights, numerical checks of the weighted estimates, and the
elliptic-parabolic lift of resolvent data with its interpolation inequalities.

Everything lives on a 1D spatial grid times an s-axis.  Space-time fields are
complex arrays of shape ``(m, n)``: ``m`` interior s-nodes, ``n`` interior
x-nodes.  Integrals are tensor trapezoid sums over interior nodes (the test
functions vanish on the space-time boundary).

The weight ``theta^2 = exp(2 lam phi)`` overflows for realistic parameters,
so every weighted integral is computed with ``theta^2`` divided by its
global maximum.  Both sides of an inequality carry the same factor, so ratios
and empirical constants are unaffected.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from .geometry import Box, CutoffSet, Grid, SubdomainChain, WeightBase, box_mask
from .operators import Generator, StateVector
from .report import format_kv, rows_to_csv
from .spectral import ResolventSolveRecord

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Space-time grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceTimeGrid:
    """Interior nodes of ``(-b, b) x Omega`` for a 1D spatial grid."""

    grid: Grid
    m: int
    b: float
    observation_box: Optional[Box] = None

    def __post_init__(self):
        if self.grid.dimension != 1:
            raise ValueError("space-time grids use a 1D spatial grid")
        if self.m < 3:
            raise ValueError("need at least 3 s-nodes")
        if not 0 < self.b <= 2:
            raise ValueError("need 0 < b <= 2")

    @property
    def ds(self) -> float:
        return 2.0 * self.b / (self.m + 1)

    @property
    def hx(self) -> float:
        return self.grid.h

    @property
    def shape(self) -> tuple:
        return (self.m, self.grid.size)

    @property
    def s(self) -> np.ndarray:
        return -self.b + self.ds * np.arange(1, self.m + 1)

    @property
    def s_full(self) -> np.ndarray:
        """s-nodes including the two endpoints."""
        return -self.b + self.ds * np.arange(self.m + 2)

    @property
    def x(self) -> np.ndarray:
        return self.grid.axis(0)

    def mesh(self):
        return np.meshgrid(self.s, self.x, indexing="ij")

    def integrate(self, f) -> float:
        return float(self.ds * self.hx * np.sum(f))

    # -- named regions ---------------------------------------------------
    def region_X(self) -> np.ndarray:
        S, _ = self.mesh()
        return np.abs(S) < 2.0

    def region_Y(self) -> np.ndarray:
        S, _ = self.mesh()
        return np.abs(S) < 1.0

    def region_X_star(self, box: Optional[Box] = None) -> np.ndarray:
        box = box if box is not None else self.observation_box
        if box is None:
            raise ValueError("no observation box (omega_c & omega_d) given")
        return self.region_X() & box_mask(self.grid, box)[None, :]

    def region_Sigma(self) -> np.ndarray:
        """Lateral boundary on the node grid padded with the two x-endpoints."""
        mask = np.zeros((self.m, self.grid.size + 2), dtype=bool)
        mask[:, 0] = mask[:, -1] = True
        return mask

    def space_mask(self, box: Box) -> np.ndarray:
        return np.broadcast_to(box_mask(self.grid, box)[None, :], self.shape)


def weight_parameters(mu: float) -> tuple:
    """``(b, b0)`` with ``b^2 = 1 + ln(2 + e^mu)/mu`` and ``b0^2 = b^2 - ln((1 + e^mu)/e^mu)/mu``."""
    if mu <= math.log(2.0):
        raise ValueError("mu must exceed ln 2")
    b2 = 1.0 + math.log(2.0 + math.exp(mu)) / mu
    b02 = b2 - math.log1p(math.exp(-mu)) / mu
    return math.sqrt(b2), math.sqrt(b02)


def space_time_grid_for(grid: Grid, mu: float, m: int, observation_box=None) -> SpaceTimeGrid:
    b, _ = weight_parameters(mu)
    return SpaceTimeGrid(grid, m, b, observation_box)


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

@dataclass
class CarlemanWeightSet:
    stgrid: SpaceTimeGrid
    mu: float
    lam: float
    b: float
    b0: float
    psi: np.ndarray
    phi: np.ndarray
    ell: np.ndarray
    ell_s: np.ndarray
    ell_x: np.ndarray
    ell_ss: np.ndarray
    ell_xx: np.ndarray
    ell_xs: np.ndarray
    log_theta2_max: float

    @property
    def band_floor(self) -> float:
        """``2 + e^mu``, the lower bound of ``phi`` on ``|s| <= 1``."""
        return 2.0 + math.exp(self.mu)

    @property
    def log_theta2(self) -> np.ndarray:
        return 2.0 * self.ell

    def theta2_scaled(self) -> np.ndarray:
        return np.exp(2.0 * self.ell - self.log_theta2_max)

    def band_check(self, rtol: float = 1e-12) -> tuple:
        """Pointwise ``phi >= 2+e^mu`` on ``|s| <= 1`` and ``phi <= 1+e^mu`` on ``b0 <= |s| <= b``."""
        S, _ = self.stgrid.mesh()
        inner = np.abs(S) <= 1.0
        outer = np.abs(S) >= self.b0
        lo = bool(np.all(self.phi[inner] >= self.band_floor * (1 - rtol)))
        hi = bool(np.all(self.phi[outer] <= (1.0 + math.exp(self.mu)) * (1 + rtol)))
        return lo, hi


def build_weights(stgrid: SpaceTimeGrid, base: WeightBase, mu: float, lam: float) -> CarlemanWeightSet:
    """Sample psi, phi, ell and the closed-form first and second derivatives of ell."""
    b, b0 = weight_parameters(mu)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if abs(stgrid.b - b) > 1e-12:
        raise ValueError(f"space-time grid spans (-{stgrid.b}, {stgrid.b}), weights need b = {b}")
    if base.grid != stgrid.grid:
        raise ValueError("weight base lives on a different grid")
    sup = base.sup
    S, X = stgrid.mesh()
    psi = base.evaluate(X) / sup + b * b - S * S
    psi_s, psi_ss = -2.0 * S, -2.0
    psi_x = base.evaluate(X, 1) / sup
    psi_xx = base.evaluate(X, 2) / sup
    phi = np.exp(mu * psi)
    ell = lam * phi
    lm = lam * mu * phi
    lm2 = lam * mu * mu * phi
    return CarlemanWeightSet(
        stgrid, float(mu), float(lam), b, b0, psi, phi, ell,
        ell_s=lm * psi_s, ell_x=lm * psi_x,
        ell_ss=lm2 * psi_s**2 + lm * psi_ss,
        ell_xx=lm2 * psi_x**2 + lm * psi_xx,
        ell_xs=lm2 * psi_s * psi_x,
        log_theta2_max=float(np.max(2.0 * ell)),
    )


# ---------------------------------------------------------------------------
# Test functions and discrete calculus
# ---------------------------------------------------------------------------

def h1_norm(stgrid: SpaceTimeGrid, p: np.ndarray, backend=None) -> float:
    gs, gx = K.node_gradients(p, stgrid.ds, stgrid.hx, backend=backend)
    return math.sqrt(stgrid.integrate(np.abs(p) ** 2 + gs + gx))


def random_test_function(stgrid: SpaceTimeGrid, seed: int, modes: int = 6) -> np.ndarray:
    """Seeded double sine series vanishing at ``s = +-b`` and on the x-boundary, unit H^1 norm."""
    if modes < 1:
        raise ValueError("need at least one mode")
    rng = np.random.default_rng(seed)
    j = np.arange(1, modes + 1)
    decay = 1.0 / (1.0 + j[:, None] ** 2 + j[None, :] ** 2)
    coef = (rng.standard_normal((modes, modes)) + 1j * rng.standard_normal((modes, modes))) * decay
    b, L = stgrid.b, stgrid.grid.extents[0]
    Bs = np.sin(np.outer(stgrid.s + b, j) * (np.pi / (2.0 * b)))
    Bx = np.sin(np.outer(stgrid.x, j) * (np.pi / L))
    p = Bs @ coef @ Bx.T
    return p / h1_norm(stgrid, p)


@dataclass
class _Calculus:
    """Derivative fields of one test function, shared by all (mu, lam) cells."""

    p: np.ndarray
    abs2: np.ndarray
    gs: np.ndarray  # |p_s|^2 on nodes
    gx: np.ndarray  # |p_x|^2 on nodes
    f1: np.ndarray  # p_ss + Lap p
    p_s: np.ndarray
    lap: np.ndarray

    @classmethod
    def of(cls, stgrid: SpaceTimeGrid, p, gamma: float = 0.0, backend=None) -> "_Calculus":
        ds, hx = stgrid.ds, stgrid.hx
        gs, gx = K.node_gradients(p, ds, hx, backend=backend)
        return cls(p, np.abs(p) ** 2, gs, gx,
                   K.st_operator(p, ds, hx, a_ss=1.0, a_xx=1.0, backend=backend),
                   K.st_operator(p, ds, hx, a_s=1.0, backend=backend),
                   K.st_operator(p, ds, hx, a_xx=1.0, backend=backend))


def _wsum(weights: CarlemanWeightSet, integrand, backend=None) -> float:
    st = weights.stgrid
    return st.ds * st.hx * K.weighted_sum(weights.log_theta2, weights.log_theta2_max,
                                          np.ascontiguousarray(integrand, dtype=float), backend=backend)


# ---------------------------------------------------------------------------
# Inequality reports
# ---------------------------------------------------------------------------

@dataclass
class InequalityReport:
    kind: str
    rows: list = field(default_factory=list)
    passed: bool = True
    summary: dict = field(default_factory=dict)

    @property
    def c_max(self) -> float:
        vals = [r["c_emp"] for r in self.rows if np.isfinite(r["c_emp"])]
        return max(vals) if vals else float("nan")

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)

    def summary_text(self) -> str:
        return format_kv(dict(kind=self.kind, passed=self.passed, **self.summary))


def _ratio(num, den):
    if den > 0:
        return num / den
    return 0.0 if num == 0 else float("inf")


def _check_nondegenerate(stgrid, p):
    if h1_norm(stgrid, p) < 1e-14:
        raise ValueError("degenerate test function (H^1 norm below 1e-14)")


def verify_elliptic_carleman(p, weights: CarlemanWeightSet, omega0: Box, backend=None,
                             _calc: Optional[_Calculus] = None) -> dict:
    """Both sides of the elliptic Carleman estimate for ``p_ss + Lap p = f1``.

    ``c_emp = LHS / (RHS_source + RHS_obs)``.
    """
    st = weights.stgrid
    calc = _calc or _Calculus.of(st, p, backend=backend)
    if _calc is None:
        _check_nondegenerate(st, p)
    lam, mu, phi = weights.lam, weights.mu, weights.phi
    dens = phi * (calc.gx + calc.gs + (lam * mu * phi) ** 2 * calc.abs2)
    lhs = lam * mu**2 * _wsum(weights, dens, backend)
    rhs1 = _wsum(weights, np.abs(calc.f1) ** 2, backend)
    rhs2 = lam * mu**2 * _wsum(weights, dens * st.space_mask(omega0), backend)
    return dict(mu=mu, lam=lam, lhs=lhs, rhs_source=rhs1, rhs_obs=rhs2, c_emp=_ratio(lhs, rhs1 + rhs2))


def verify_local_energy(q, weights: CarlemanWeightSet, cfg: "VerifierConfig", cutoffs: CutoffSet,
                        backend=None, _calc: Optional[_Calculus] = None) -> dict:
    """Both sides of the local weighted energy estimate.

    The estimate has the form ``LHS <= RHS_source + C * RHS_local`` so the
    empirical constant is ``max(LHS - RHS_source, 0) / RHS_local``.
    """
    st = weights.stgrid
    lam, mu, phi = weights.lam, weights.mu, weights.phi
    lm = lam * mu
    row = dict(mu=mu, lam=lam, beta=cfg.beta, j=cfg.j, k=cfg.k)
    if not np.any(q):
        return dict(row, lhs=0.0, rhs_source=0.0, rhs_local=0.0, c_emp=0.0, vacuous=True)
    calc = _calc or _Calculus.of(st, q, backend=backend)
    if _calc is None:
        _check_nondegenerate(st, q)
    eta2 = cutoffs.eta[cfg.j].values[None, :] ** 2
    f2 = cfg.gamma * calc.p_s + calc.lap
    lhs = _wsum(weights, eta2 * phi**cfg.k * calc.gx, backend)
    rhs1 = lm ** (-cfg.beta) * _wsum(weights, np.abs(f2) ** 2, backend)
    rhs2 = lm**cfg.beta * _wsum(weights, eta2 * phi ** (cfg.k + 2) * calc.abs2, backend)
    return dict(row, lhs=lhs, rhs_source=rhs1, rhs_local=rhs2, c_emp=_ratio(max(lhs - rhs1, 0.0), rhs2),
                vacuous=False)


def verify_parabolic_carleman(q, weights: CarlemanWeightSet, gamma: float, omega1: Box, backend=None,
                              _calc: Optional[_Calculus] = None) -> dict:
    """Both sides of the parabolic Carleman estimate for ``gamma q_s + Lap q = f2``.

    The left side carries the ``(lam phi)^-1`` second-order block and the
    ``lam mu^2 phi`` first-order block.
    """
    st = weights.stgrid
    calc = _calc or _Calculus.of(st, q, backend=backend)
    if _calc is None:
        _check_nondegenerate(st, q)
    lam, mu, phi = weights.lam, weights.mu, weights.phi
    f2 = gamma * calc.p_s + calc.lap
    second = _wsum(weights, (np.abs(calc.lap) ** 2 + np.abs(gamma * calc.p_s) ** 2) / (lam * phi), backend)
    first = lam * mu**2 * _wsum(weights, phi * (calc.gx + (lam * mu * phi) ** 2 * calc.abs2), backend)
    lhs = second + first
    rhs1 = _wsum(weights, np.abs(f2) ** 2, backend)
    rhs2 = lam**3 * mu**4 * _wsum(weights, phi**3 * calc.abs2 * st.space_mask(omega1), backend)
    return dict(mu=mu, lam=lam, gamma=gamma, lhs=lhs, lhs_second=second, lhs_first=first,
                rhs_source=rhs1, rhs_obs=rhs2, c_emp=_ratio(lhs, rhs1 + rhs2))


@dataclass
class VerifierConfig:
    gamma: float = 1.0
    beta: float = 2.0
    j: int = 0
    k: int = 1
    eps_grid: Sequence[float] = tuple(np.geomspace(0.05, 5.0, 12))
    seed: int = 0
    n_seeds: int = 50
    modes: int = 6
    s_points: int = 101
    mu_grid: Sequence[float] = (2.0, 3.0)
    lam_grid: Sequence[float] = (8.0, 16.0, 32.0, 64.0)
    stability_factor: float = 2.0
    scale_tol: float = 1e-12

    def __post_init__(self):
        if self.beta < 2:
            raise ValueError("beta must be >= 2")
        if any(e <= 0 for e in self.eps_grid):
            raise ValueError("eps grid must be positive")
        if any(b <= a for a, b in zip(self.lam_grid, self.lam_grid[1:])):
            raise ValueError("lambda grid must be increasing")
        if not 0 <= self.j <= 4:
            raise ValueError("j must be in 0..4")
        if self.n_seeds < 1 or self.s_points < 3:
            raise ValueError("need at least one seed and three s-points")


def upper_half_stable(values: Sequence[float], factor: float = 2.0) -> tuple:
    """Stability over the upper half of a parameter grid.

    Returns ``(ok, ratio)`` where ``ratio = max(upper) / upper[0]``; values
    may decrease freely, growth beyond ``factor`` fails.
    """
    vals = np.asarray(values, dtype=float)
    upper = vals[len(vals) // 2:]
    if not np.all(np.isfinite(upper)):
        return False, float("inf")
    if upper[0] <= 0:
        return bool(np.all(upper <= 0)), float("nan")
    ratio = float(np.max(upper) / upper[0])
    return ratio <= factor, ratio


def carleman_sweep(kind: str, base: WeightBase, chain: SubdomainChain, cfg: VerifierConfig,
                   backend=None) -> InequalityReport:
    """Evaluate one of the three weighted estimates over seeds x mu x lambda.

    ``kind`` is ``"elliptic"``, ``"local-energy"`` or ``"parabolic"``.  The
    empirical constant per (mu, lam) is the maximum over seeds; it must be
    finite everywhere and stable within ``cfg.stability_factor`` over the
    upper half of the lambda grid.  Every cell is also re-evaluated on the
    data scaled by 10 to confirm homogeneity.
    """
    if kind not in ("elliptic", "local-energy", "parabolic"):
        raise ValueError(f"unknown estimate {kind!r}")
    grid = base.grid
    rows = []
    ok = True
    stability = {}
    worst_scale = 0.0
    for mu in cfg.mu_grid:
        b, b0 = weight_parameters(mu)
        st = SpaceTimeGrid(grid, cfg.s_points, b)
        weights = [build_weights(st, base, mu, lam) for lam in cfg.lam_grid]
        cutoffs = None
        if kind == "local-energy":
            from .geometry import build_cutoffs
            cutoffs = build_cutoffs(grid, chain, b, b0)
        cmax = np.zeros(len(cfg.lam_grid))
        for i in range(cfg.n_seeds):
            seed = cfg.seed + i
            p = random_test_function(st, seed, cfg.modes)
            calc = _Calculus.of(st, p, backend=backend)
            calc10 = _Calculus.of(st, 10.0 * p, backend=backend)
            for li, w in enumerate(weights):
                if kind == "elliptic":
                    r = verify_elliptic_carleman(p, w, chain[0], backend, calc)
                    r10 = verify_elliptic_carleman(10 * p, w, chain[0], backend, calc10)
                elif kind == "local-energy":
                    r = verify_local_energy(p, w, cfg, cutoffs, backend, calc)
                    r10 = verify_local_energy(10 * p, w, cfg, cutoffs, backend, calc10)
                else:
                    r = verify_parabolic_carleman(p, w, cfg.gamma, chain[1], backend, calc)
                    r10 = verify_parabolic_carleman(10 * p, w, cfg.gamma, chain[1], backend, calc10)
                dev = abs(r10["c_emp"] - r["c_emp"]) / max(abs(r["c_emp"]), 1e-300)
                worst_scale = max(worst_scale, dev)
                r = dict(seed=seed, **r, scale_dev=dev)
                rows.append(r)
                if not np.isfinite(r["c_emp"]):
                    ok = False
                cmax[li] = max(cmax[li], r["c_emp"])
        stable, ratio = upper_half_stable(cmax, cfg.stability_factor)
        stability[f"mu={mu:g}"] = dict(c_max=cmax.tolist(), stable=stable, ratio=ratio)
        ok = ok and stable
    ok = ok and worst_scale <= cfg.scale_tol
    summary = dict(scale_dev_max=worst_scale)
    for key, v in stability.items():
        summary[f"{key} stable"] = v["stable"]
        summary[f"{key} upper_ratio"] = v["ratio"]
        for lam, c in zip(cfg.lam_grid, v["c_max"]):
            summary[f"{key} lam={lam:g} c_max"] = c
    return InequalityReport(kind, rows, ok, summary)


# ---------------------------------------------------------------------------
# Lifting resolvent data
# ---------------------------------------------------------------------------

@dataclass
class EPSystemData:
    """Lifted fields ``p = e^{i lam s} y0``, ``q = e^{i lam s} z0``, ``w = q_s - Lap q`` and sources."""

    stgrid: SpaceTimeGrid
    lam: complex
    alpha: int
    c: np.ndarray
    d: np.ndarray
    p: np.ndarray
    q: np.ndarray
    w: np.ndarray
    p0: np.ndarray
    w0: np.ndarray
    residuals: dict = field(default_factory=dict)
    fd_residuals: dict = field(default_factory=dict)

    @property
    def p_s(self):
        return 1j * self.lam * self.p

    @property
    def q_s(self):
        return 1j * self.lam * self.q

    def scaled(self, a: float) -> "EPSystemData":
        return replace(self, p=a * self.p, q=a * self.q, w=a * self.w, p0=a * self.p0, w0=a * self.w0)


def _lap_x(arr, L):
    """Apply the spatial Laplacian row by row: ``arr @ L^T``."""
    return (L @ arr.T).T


def _rel(res, *terms):
    scale = sum(float(np.linalg.norm(t)) for t in terms)
    r = float(np.linalg.norm(res))
    return r / scale if scale > 0 else r


def lift_resolvent_data(record: ResolventSolveRecord, stgrid: SpaceTimeGrid, gen: Generator,
                        tol: float = 1e-8, check: bool = True) -> EPSystemData:
    """Lift a resolvent solve into the elliptic-parabolic system on ``stgrid``.

    Sources are ``p0 = ((lam + alpha d) f0 + f1) e^{i lam s}`` and
    ``w0 = ((lam + (1 - alpha) d) g0 + g1) e^{i lam s}``.  Residuals of the
    three equations are recorded twice: with exact s-derivatives
    (``residuals``, checked against ``tol``) and with centred differences in
    s (``fd_residuals``, O(ds^2)).
    """
    if record.solution.grid != stgrid.grid or gen.grid != stgrid.grid:
        raise ValueError("record, generator and space-time grid disagree")
    lam = complex(record.lam)
    a = gen.alpha
    c, d = gen.c, gen.d
    L = gen.lap.matrix
    U, F = record.solution, record.rhs
    y0, z0 = U.y, U.z
    m0 = gen.lap_of(U)
    src_p = (lam + a * d) * F.y + F.u
    src_w = (lam + (1 - a) * d) * F.z + F.v
    e = np.exp(1j * lam * stgrid.s)[:, None]
    p, q = e * y0[None, :], e * z0[None, :]
    lap_q = e * m0[None, :]
    w = 1j * lam * q - lap_q
    p0, w0 = e * src_p[None, :], e * src_w[None, :]
    data = EPSystemData(stgrid, lam, a, c, d, p, q, w, p0, w0)

    # exact s-derivatives
    p_s, p_ss = 1j * lam * p, -(lam**2) * p
    lap_p = _lap_x(p, L)
    lap_w = 1j * lam * lap_q - e * (L @ m0)[None, :]
    t1 = (p_ss, lap_p, 1j * a * d * p_s, c * q, p0)
    r1 = p_ss + lap_p + 1j * a * d * p_s - c * q - p0
    w_s = 1j * lam * w
    t2 = (w_s, lap_w, 1j * (1 - a) * d * 1j * lam * q, c * p, w0)
    r2 = w_s + lap_w + 1j * (1 - a) * d * (1j * lam * q) - c * p - w0
    r3 = 1j * lam * q - lap_q - w
    data.residuals = dict(eq1=_rel(r1, *t1), eq2=_rel(r2, *t2), eq3=_rel(r3, 1j * lam * q, lap_q, w))

    # centred differences in s, analytic values at the two s-endpoints
    ef = np.exp(1j * lam * stgrid.s_full)[:, None]
    ds = stgrid.ds

    def d1(full):
        return (full[2:] - full[:-2]) / (2 * ds)

    def d2(full):
        return (full[2:] - 2 * full[1:-1] + full[:-2]) / ds**2

    P, Q = ef * y0[None, :], ef * z0[None, :]
    W = 1j * lam * Q - ef * m0[None, :]
    f1 = d2(P) + lap_p + 1j * a * d * d1(P) - c * q - p0
    f2 = d1(W) + lap_w + 1j * (1 - a) * d * d1(Q) - c * p - w0
    f3 = d1(Q) - lap_q - w
    data.fd_residuals = dict(eq1=_rel(f1, *t1), eq2=_rel(f2, *t2), eq3=_rel(f3, 1j * lam * q, lap_q, w))
    if check and max(data.residuals.values()) > tol:
        raise ValueError("lifted system violates its equations: "
                         + ", ".join(f"{k}={v:.3e}" for k, v in data.residuals.items()))
    return data


# ---------------------------------------------------------------------------
# Interpolation inequalities
# ---------------------------------------------------------------------------

def _grad_x_sq(arr, hx):
    P = np.zeros((arr.shape[0], arr.shape[1] + 2), dtype=arr.dtype)
    P[:, 1:-1] = arr
    e = np.abs(np.diff(P, axis=1)) ** 2 / hx**2
    return 0.5 * (e[:, 1:] + e[:, :-1])


def _norm(st, arr, mask=None):
    v = np.abs(arr) ** 2
    if mask is not None:
        v = v * mask
    return math.sqrt(st.integrate(v))


def interpolation_terms(data: EPSystemData) -> dict:
    """LHS over Y, observation/source group over X and X*, global group over X."""
    st = data.stgrid
    X, Y, Xs = st.region_X(), st.region_Y(), st.region_X_star()
    gx = _grad_x_sq(data.p, st.hx)
    h1_Y = math.sqrt(st.integrate((np.abs(data.p) ** 2 + np.abs(data.p_s) ** 2 + gx) * Y))
    lhs = h1_Y + _norm(st, data.w, Y) + _norm(st, data.q, Y)
    if data.alpha == 1:
        obs = _norm(st, data.p, Xs) + _norm(st, data.p_s, Xs)
    else:
        obs = _norm(st, data.q, Xs) + _norm(st, data.q_s, Xs)
    g1 = _norm(st, data.p0, X) + _norm(st, data.w0, X) + obs
    g2 = _norm(st, data.p, X) + _norm(st, data.p_s, X) + _norm(st, data.w, X) + _norm(st, data.q, X)
    return dict(lhs=lhs, group_obs=g1, group_global=g2, observation=obs)


def minimal_constant(lhs: float, g1: float, g2: float, eps: float) -> float:
    """Smallest ``C > 0`` with ``lhs <= C e^{C/eps} g1 + C e^{-2/eps} g2``."""
    if lhs <= 0:
        return 0.0
    if g1 <= 0 and g2 <= 0:
        return float("inf")
    lg1 = math.log(g1) if g1 > 0 else -math.inf
    lg2 = math.log(g2) if g2 > 0 else -math.inf
    target = math.log(lhs)

    def f(lc):
        C = math.exp(lc)
        return lc + np.logaddexp(C / eps + lg1, -2.0 / eps + lg2) - target

    lo, hi = -50.0, 5.0
    while f(hi) < 0:
        hi += 5.0
        if hi > 700:
            return float("inf")
    while f(lo) > 0:
        lo -= 50.0
        if lo < -700:
            return 0.0
    return math.exp(brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def verify_interpolation(data: EPSystemData, cfg: VerifierConfig, tol: float = 1e-12) -> InequalityReport:
    """Minimal constants ``C(eps)`` of the interpolation inequality on the eps-grid.

    Passes when ``C_star = min C(eps)`` is finite and the required
    multipliers trade off: ``C e^{C/eps}`` non-increasing and ``C e^{-2/eps}``
    non-decreasing in eps.
    """
    terms = interpolation_terms(data)
    lhs, g1, g2 = terms["lhs"], terms["group_obs"], terms["group_global"]
    kind = "interpolation-alpha1" if data.alpha == 1 else "interpolation-alpha0"
    if lhs == 0:
        return InequalityReport(kind, [], True, dict(vacuous=True))
    eps = np.sort(np.asarray(cfg.eps_grid, dtype=float))
    rows = []
    for e in eps:
        C = minimal_constant(lhs, g1, g2, e)
        m1 = C * math.exp(min(C / e, 700.0))
        m2 = C * math.exp(-2.0 / e)
        rows.append(dict(eps=e, lam_re=data.lam.real, lam_im=data.lam.imag, lhs=lhs, group_obs=g1,
                         group_global=g2, c_eps=C, mult_obs=m1, mult_global=m2))
    m1 = np.array([r["mult_obs"] for r in rows])
    m2 = np.array([r["mult_global"] for r in rows])
    dec = bool(np.all(np.diff(m1) <= tol * np.abs(m1[:-1])))
    inc = bool(np.all(np.diff(m2) >= -tol * np.abs(m2[:-1])))
    cs = np.array([r["c_eps"] for r in rows])
    c_star = float(np.min(cs))
    ok = bool(np.isfinite(c_star) and dec and inc)
    for r in rows:
        r["pass"] = ok
    return InequalityReport(kind, rows, ok, dict(c_star=c_star, eps_star=float(eps[np.argmin(cs)]),
                                                 obs_multiplier_nonincreasing=dec,
                                                 global_multiplier_nondecreasing=inc))


def check_imaginary_part_estimate(record: ResolventSolveRecord, gen: Generator) -> dict:
    """Both sides of the imaginary-part estimate and the coupling identity.

    The sources are ``(lam + alpha d) f0 + f1`` and ``(lam + (1-alpha) d) g0 + g1``;
    the minimal constant is ``LHS / (T1 + T2 + T3 + T4)``.
    """
    lam = complex(record.lam)
    a, d, c = gen.alpha, gen.d, gen.c
    U, F = record.solution, record.rhs
    y0, z0 = U.y, U.z
    w = gen.weight

    def nrm(v):
        return math.sqrt(w * float(np.sum(np.abs(v) ** 2)))

    im, re = abs(lam.imag), abs(lam.real)
    lhs = 2 * a * im * w * float(np.sum(d * np.abs(y0) ** 2)) + 2 * (1 - a) * im * w * float(np.sum(d * np.abs(z0) ** 2))
    t1 = nrm((lam + a * d) * F.y + F.u) * nrm(y0)
    t2 = im * re * nrm(y0) ** 2
    t3 = nrm((lam + (1 - a) * d) * F.z + F.v) * nrm(z0)
    t4 = im * re * nrm(z0) ** 2
    coupling = w * np.sum(c * (z0 * np.conj(y0) + y0 * np.conj(z0)))
    scale = w * float(np.sum(c * np.abs(y0) * np.abs(z0))) or 1.0
    rhs = t1 + t2 + t3 + t4
    return dict(lam_re=lam.real, lam_im=lam.imag, lhs=lhs, t1=t1, t2=t2, t3=t3, t4=t4,
                c_min=_ratio(lhs, rhs), coupling_im=float(abs(coupling.imag)),
                coupling_im_rel=float(abs(coupling.imag)) / scale)


def smooth_rhs(grid: Grid, seed: int, modes: int = 4, alpha: int = 1, dtype=complex) -> StateVector:
    """Seeded right-hand side with a few low sine modes in every block."""
    rng = np.random.default_rng(seed)
    x = grid.axis(0)
    L = grid.extents[0]
    k = np.arange(1, modes + 1)
    B = np.sin(np.outer(x, k) * np.pi / L)
    blocks = []
    for _ in range(4):
        coef = rng.standard_normal(modes) / k**2
        if np.dtype(dtype).kind == "c":
            coef = coef + 1j * rng.standard_normal(modes) / k**2
        blocks.append(B @ coef)
    return StateVector(grid, *blocks, alpha=alpha)
