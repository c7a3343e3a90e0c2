"""Eigenpairs, resolvent norms, resolvent solves and the exclusion-region fit.

All norms are H norms.  Computations run in the energy coordinates of
:class:`~waveplate.operators.Generator`, where the H norm is Euclidean and
no O(1/h^4) matrix entry is ever touched.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .operators import Generator, StateVector
from .report import format_csv, format_kv

log = logging.getLogger(__name__)


@dataclass
class EigenPair:
    value: complex
    vector: np.ndarray  # energy coordinates, unit Euclidean norm
    residual: float
    converged: bool

    def state(self, gen: Generator) -> StateVector:
        return gen.from_energy(self.vector)


@dataclass
class SpectrumReport:
    pairs: list = field(default_factory=list)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.value for p in self.pairs], dtype=complex)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([p.residual for p in self.pairs])

    @property
    def spectral_abscissa(self) -> float:
        return float(np.max(self.eigenvalues.real))

    def sorted(self) -> "SpectrumReport":
        return SpectrumReport(sorted(self.pairs, key=lambda p: (p.value.imag, p.value.real)))

    def to_csv(self) -> str:
        ev = self.eigenvalues
        return format_csv(["re", "im", "residual", "converged"],
                          [ev.real, ev.imag, self.residuals, [p.converged for p in self.pairs]])


def _arnoldi(op, v0, m):
    N = v0.size
    V = np.zeros((N, m + 1), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    V[:, 0] = v0 / np.linalg.norm(v0)
    for j in range(m):
        w = op(V[:, j])
        for _ in range(2):  # classical Gram-Schmidt, repeated once
            coef = V[:, :j + 1].conj().T @ w
            w = w - V[:, :j + 1] @ coef
            H[:j + 1, j] += coef
        beta = np.linalg.norm(w)
        H[j + 1, j] = beta
        if beta < 1e-300:
            return V[:, :j + 1], H[:j + 1, :j + 1]
        V[:, j + 1] = w / beta
    return V[:, :m], H[:m, :m]


def _residual(gen, x, lam):
    return float(np.linalg.norm(gen.apply_energy(x) - lam * x))


def eigenpairs_near(gen: Generator, sigma: complex, k: int = 6, tol: float = 1e-8,
                    krylov_dim: Optional[int] = None, max_restarts: int = 8,
                    polish_steps: int = 3, seed: int = 0) -> list:
    """The ``k`` eigenpairs of the generator closest to ``sigma``.

    Shift-invert Arnoldi with re-orthogonalised basis and explicit restarts,
    followed by a few steps of inverse iteration at each Ritz value.  The
    residual ``||(A - lam) v||_H / ||v||_H`` of every returned pair is
    compared with ``tol``; pairs that miss it come back with
    ``converged=False``.
    """
    try:
        solver = gen.shifted_solver(1.0, -complex(sigma))
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"shift {sigma} is (numerically) an eigenvalue") from exc
    N = 4 * gen.n
    k = min(k, N - 2)
    m = min(N - 1, krylov_dim or max(2 * k + 20, 40))
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    for restart in range(max_restarts + 1):
        V, H = _arnoldi(solver.solve_energy, v0, m)
        theta, S = np.linalg.eig(H)
        order = np.argsort(-np.abs(theta))[:k]
        X = V @ S[:, order]
        X /= np.linalg.norm(X, axis=0)
        lam = sigma + 1.0 / theta[order]
        res = np.array([_residual(gen, X[:, i], lam[i]) for i in range(len(order))])
        if np.all(res <= tol) or restart == max_restarts:
            break
        # ritz values are usually accurate long before the vectors; polishing
        # handles the vectors, so restart only when values are still poor
        if np.all(res <= 1e-3 * max(1.0, np.max(np.abs(lam)))):
            break
        v0 = X.sum(axis=1)
    pairs = []
    for i in range(len(order)):
        x, val, r = X[:, i], lam[i], res[i]
        if polish_steps > 0:
            # near-degenerate clusters (wave k^2 = plate k) can hand back a Ritz
            # vector belonging to the neighbour; restart from a random vector
            start = rng.standard_normal(N) + 1j * rng.standard_normal(N)
            px, pval, pr = _polish(gen, start, val, polish_steps, tol)
            if pr < r:
                x, val, r = px, pval, pr
        pairs.append(EigenPair(complex(val), x, float(r), bool(r <= tol)))
    pairs.sort(key=lambda p: abs(p.value - sigma))
    return pairs


def _polish(gen, x, lam, steps, tol=0.0):
    """Inverse iteration at the fixed shift ``lam``; returns the best iterate."""
    # a shift exactly on the eigenvalue defeats iterative refinement, so
    # step off by a relative 1e-8 (well inside every observed cluster gap)
    shift = lam + 1e-8 * max(1.0, abs(lam))
    try:
        solver = gen.shifted_solver(1.0, -shift, check=False)
    except np.linalg.LinAlgError:
        return x, lam, _residual(gen, x, lam)
    x = x / np.linalg.norm(x)
    best = (x, lam, np.inf)
    for _ in range(steps):
        x = solver.solve_energy(x, refine=2)
        nrm = np.linalg.norm(x)
        if not np.isfinite(nrm) or nrm == 0:
            break
        x = x / nrm
        val = np.vdot(x, gen.apply_energy(x))
        r = _residual(gen, x, val)
        if r < best[2]:
            best = (x, val, r)
        if r <= 0.1 * tol:
            break
    return best


def default_targets(wave_modes: int = 20, plate_modes: int = 6, count: int = 14) -> np.ndarray:
    """Geometric grid of imaginary-axis magnitudes covering both branches."""
    top = max(wave_modes, plate_modes**2) + 0.5
    return np.geomspace(0.8, top, count)


def spectrum_sweep(gen: Generator, taus: Sequence[float] = None, k: int = 8, both_signs: bool = True,
                   tol: float = 1e-8, threads: int = 1) -> SpectrumReport:
    """Eigenpairs near ``i*tau`` for every target, merged and sorted by (Im, Re)."""
    taus = default_targets() if taus is None else taus
    sigmas = [1j * t for t in taus] + ([-1j * t for t in taus] if both_signs else [])
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            chunks = list(ex.map(lambda s: eigenpairs_near(gen, s, k, tol), sigmas))
    else:
        chunks = [eigenpairs_near(gen, s, k, tol) for s in sigmas]
    merged = []
    for chunk in chunks:
        for p in chunk:
            dup = [q for q in merged if abs(q.value - p.value) <= 1e-8 * max(1.0, abs(p.value))]
            if dup:
                if p.residual < dup[0].residual:
                    merged[merged.index(dup[0])] = p
            else:
                merged.append(p)
    return SpectrumReport(merged).sorted()


def dense_spectrum(gen: Generator) -> np.ndarray:
    """Every eigenvalue of the discrete generator (small grids only)."""
    return np.linalg.eigvals(gen.dense_energy_matrix())


# ---------------------------------------------------------------------------
# Resolvent
# ---------------------------------------------------------------------------

def resolvent_norm(gen: Generator, lam: complex, tol: float = 1e-10, block: int = 6,
                   max_iter: int = 400, seed: int = 1) -> float:
    """``||(A - lam)^-1||`` in L(H); ``inf`` when ``lam`` hits the spectrum.

    Block inverse iteration on the normal system ``B^-H B^-1`` in energy
    coordinates, reusing one factorisation for all solves.
    """
    try:
        solver = gen.shifted_solver(1.0, -complex(lam))
    except np.linalg.LinAlgError:
        return float("inf")
    N = 4 * gen.n
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((N, block)) + 1j * rng.standard_normal((N, block)))
    prev = 0.0
    for _ in range(max_iter):
        Z = np.column_stack([solver.solve_energy(Q[:, j]) for j in range(Q.shape[1])])
        smax = np.linalg.svd(Z, compute_uv=False)[0]
        if not np.isfinite(smax):
            return float("inf")
        if abs(smax - prev) <= tol * smax:
            return float(smax)
        prev = smax
        W = np.column_stack([solver.solve_energy_adjoint(Z[:, j]) for j in range(Z.shape[1])])
        Q, _ = np.linalg.qr(W)
    log.info("resolvent norm at %s did not settle in %d iterations", lam, max_iter)
    return float(prev)


@dataclass
class ResolventSolveRecord:
    lam: complex
    rhs: StateVector
    solution: StateVector
    residual: float
    reconstruction_error: float
    norm_estimate: float


def resolvent_solve(gen: Generator, lam: complex, rhs: StateVector) -> ResolventSolveRecord:
    """Solve ``(A - lam) U0 = F`` and cross-check ``y1 = f0 + lam y0``, ``z1 = g0 + lam z0``."""
    L = gen.lap.matrix
    if rhs.lap_z is None:
        rhs = StateVector(rhs.grid, rhs.y, rhs.u, rhs.z, rhs.v, rhs.alpha, L @ rhs.z)
    try:
        solver = gen.shifted_solver(1.0, -complex(lam))
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"lambda = {lam} is (numerically) in the spectrum") from exc
    U0 = solver.solve(rhs)
    AU = gen.apply(U0)
    r = AU.combine(1.0, U0, -lam).combine(1.0, rhs, -1.0)
    fn = gen.h_norm(rhs)
    un = gen.h_norm(U0)
    residual = gen.h_norm(r) / fn if fn > 0 else gen.h_norm(r)
    y1 = rhs.y + lam * U0.y
    z1 = rhs.z + lam * U0.z
    scale = max(np.linalg.norm(U0.u), np.linalg.norm(U0.v), 1e-300)
    recon = max(np.linalg.norm(y1 - U0.u), np.linalg.norm(z1 - U0.v)) / scale
    if fn == 0:
        recon = 0.0 if un == 0 else recon
    return ResolventSolveRecord(complex(lam), rhs, U0, float(residual), float(recon),
                                un / fn if fn > 0 else 0.0)


def resolvent_sweep(gen: Generator, lams: Sequence[complex], threads: int = 1, **kw) -> list:
    """Rows (re, im, norm) for a list of spectral parameters."""
    fn = lambda l: resolvent_norm(gen, l, **kw)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            norms = list(ex.map(fn, lams))
    else:
        norms = [fn(l) for l in lams]
    return [dict(re=complex(l).real, im=complex(l).imag, norm=nv) for l, nv in zip(lams, norms)]


# ---------------------------------------------------------------------------
# Exclusion region
# ---------------------------------------------------------------------------

@dataclass
class ExclusionFit:
    ok: bool
    flag: str
    c_excl: float = float("nan")
    slope: float = float("nan")
    intercept: float = float("nan")
    fit_residual: float = float("nan")
    c_fit: float = float("nan")
    c_contain: float = float("nan")
    count: int = 0

    def summary(self) -> str:
        return format_kv(dict(ok=self.ok, flag=self.flag, c_excl=self.c_excl, slope=self.slope,
                              intercept=self.intercept, fit_residual=self.fit_residual,
                              c_fit=self.c_fit, c_contain=self.c_contain, count=self.count))


def excludes(eigenvalues, C: float) -> bool:
    """True when no eigenvalue lies in ``{-exp(-C|Im|)/C <= Re <= 0}``."""
    ev = np.asarray(eigenvalues, dtype=complex)
    inside = (ev.real <= 0) & (ev.real >= -np.exp(-C * np.abs(ev.imag)) / C)
    return not np.any(inside)


def _containment_root(re, im):
    """Smallest C with C * (-re) * exp(C*|im|) = 1."""
    g = lambda lc: lc + np.exp(lc) * abs(im) + np.log(-re)  # noqa: E731
    lo, hi = -50.0, 50.0
    if g(lo) > 0:
        return np.exp(lo)
    return float(np.exp(brentq(g, lo, hi, xtol=1e-14, rtol=1e-15)))


def scan_exclusion_region(spectrum, min_count: int = 10, decay_tol: float = 1e-10,
                          margin: float = 1e-6) -> ExclusionFit:
    """Fit ``log(-Re lam) = a - b |Im lam|`` and pick a region free of eigenvalues.

    ``spectrum`` is a :class:`SpectrumReport` or an array of eigenvalues.
    Only eigenvalues with ``|lam| > 1`` take part.
    """
    ev = spectrum.eigenvalues if isinstance(spectrum, SpectrumReport) else np.asarray(spectrum, complex)
    ev = ev[np.abs(ev) > 1]
    decaying = ev.real < -decay_tol * np.maximum(1.0, np.abs(ev))
    if not np.any(decaying):
        return ExclusionFit(False, "no decay", count=0)
    if np.any(~decaying):
        return ExclusionFit(False, "undamped eigenvalues present", count=int(decaying.sum()))
    if ev.size < min_count:
        return ExclusionFit(False, "too few eigenvalues", count=int(ev.size))
    im = np.abs(ev.imag)
    lr = np.log(-ev.real)
    A = np.column_stack([np.ones_like(im), -im])
    (a, b), *_ = np.linalg.lstsq(A, lr, rcond=None)
    rms = float(np.sqrt(np.mean((A @ np.array([a, b]) - lr) ** 2)))
    c_fit = max(b, np.exp(-a))
    c_contain = max(_containment_root(r, i) for r, i in zip(ev.real, ev.imag))
    c_excl = max(c_fit, c_contain) * (1.0 + margin)
    ok = excludes(ev, c_excl)
    return ExclusionFit(ok, "ok" if ok else "containment failed", float(c_excl), float(-b), float(a), rms,
                        float(c_fit), float(c_contain), int(ev.size))
