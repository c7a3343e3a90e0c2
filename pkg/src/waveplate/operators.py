"""Discrete Laplacian, hinged bilaplacian and the block generator.

The generator acts on states ``U = (y, u, z, v)`` as

    A U = (u, Lap y - c z - alpha d u, v, -Lap^2 z - c y - (1 - alpha) d v).

``Lap^2`` has entries of size 1/h^4, so evaluating ``Lap^2 z`` on a computed
vector loses about ``eps/h^4`` absolute accuracy.  Every solver here therefore
works with the split (mixed) form: the plate block carries ``m = Lap z`` as an
extra unknown, so no matrix entry exceeds O(1/h^2).  A state may cache its
``m`` in :attr:`StateVector.lap_z`; all energies and norms use it when present.

Norms are measured in the discrete H inner product.  "Energy coordinates"
``xi = sqrt(w) (S y, u, -m, v)`` with ``S = (-Lap)^(1/2)`` make that norm
Euclidean; ``S`` is applied exactly through the type-I sine transform, which
diagonalises the Dirichlet Laplacian on boxes.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Field, Grid, SubdomainChain, box_mask


class SparseOperator:
    """Immutable sparse matrix with an optional, lock-guarded LU cache."""

    def __init__(self, matrix, symmetric: bool = False, label: str = ""):
        self.matrix = sp.csr_matrix(matrix)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("operator must be square")
        if not np.all(np.isfinite(self.matrix.data)):
            raise ValueError("operator entries must be finite")
        self.symmetric = symmetric
        self.label = label
        self._lu = None
        self._lock = threading.Lock()

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x):
        return self.matrix @ x

    __matmul__ = matvec

    def solve(self, b):
        with self._lock:
            if self._lu is None:
                self._lu = spla.splu(self.matrix.tocsc())
            lu = self._lu
        return lu.solve(np.asarray(b))

    def to_coo_text(self, path=None) -> str:
        """Coordinate export, one ``row col re im`` line per stored entry."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        vals = coo.data.astype(complex)[order]
        lines = ["row col re im"]
        for r, c, v in zip(coo.row[order], coo.col[order], vals):
            lines.append(f"{r} {c} {v.real:.17e} {v.imag:.17e}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _lap1d(n: int, h: float):
    e = np.ones(n)
    return sp.diags([e[:-1], -2.0 * e, e[:-1]], [-1, 0, 1]) / h**2


def assemble_laplacian(grid: Grid) -> SparseOperator:
    """3-point (1D) or 5-point (2D) Dirichlet Laplacian on interior points."""
    mats = [_lap1d(n, h) for n, h in zip(grid.shape, grid.spacing)]
    if grid.dimension == 1:
        L = mats[0]
    else:
        nx, ny = grid.shape
        L = sp.kron(mats[0], sp.identity(ny)) + sp.kron(sp.identity(nx), mats[1])
    return SparseOperator(L, symmetric=True, label="laplacian")


def assemble_bilaplacian(grid: Grid, laplacian: Optional[SparseOperator] = None) -> SparseOperator:
    """Hinged bilaplacian: the square of the Dirichlet Laplacian."""
    L = (laplacian or assemble_laplacian(grid)).matrix
    return SparseOperator(L @ L, symmetric=True, label="bilaplacian")


def difference_matrices(grid: Grid) -> list:
    """Forward differences onto edges, one matrix per axis, with zero boundary values.

    ``sum_k |D_k y|^2 * w == -w <y, Lap y>`` exactly (summation by parts).
    """
    out = []
    for k, (n, h) in enumerate(zip(grid.shape, grid.spacing)):
        e = np.ones(n + 1)
        D = sp.diags([e, -e], [0, -1], shape=(n + 1, n)) / h
        if grid.dimension == 2:
            other = grid.shape[1 - k]
            D = sp.kron(D, sp.identity(other)) if k == 0 else sp.kron(sp.identity(other), D)
        out.append(sp.csr_matrix(D))
    return out


# ---------------------------------------------------------------------------
# Sine-transform functional calculus of -Lap
# ---------------------------------------------------------------------------

def laplacian_symbol(grid: Grid) -> np.ndarray:
    """Eigenvalues of -Lap_h arranged on the sine-transform index grid."""
    parts = []
    for n, h, L in zip(grid.shape, grid.spacing, grid.extents):
        k = np.arange(1, n + 1)
        parts.append((4.0 / h**2) * np.sin(k * np.pi / (2.0 * (n + 1))) ** 2)
    if grid.dimension == 1:
        return parts[0]
    return parts[0][:, None] + parts[1][None, :]


def apply_power(grid: Grid, x: np.ndarray, power: float, symbol=None) -> np.ndarray:
    """Apply ``(-Lap_h)^power`` to a (real or complex) vector via DST-I."""
    sym = laplacian_symbol(grid) if symbol is None else symbol
    X = np.asarray(x).reshape(grid.shape)
    Xh = scipy.fft.dstn(X, type=1, norm="ortho")
    Y = scipy.fft.idstn(Xh * sym**power, type=1, norm="ortho")
    return Y.ravel()


# ---------------------------------------------------------------------------
# States and the problem configuration
# ---------------------------------------------------------------------------

@dataclass
class StateVector:
    """State (y, u, z, v); ``lap_z`` optionally caches Lap z computed in mixed form."""

    grid: Grid
    y: np.ndarray
    u: np.ndarray
    z: np.ndarray
    v: np.ndarray
    alpha: int = 1
    lap_z: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.grid.size
        for name in ("y", "u", "z", "v"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (n,):
                raise ValueError(f"block {name} has shape {arr.shape}, expected ({n},)")
            setattr(self, name, arr)
        if self.alpha not in (0, 1):
            raise ValueError("alpha must be 0 or 1")

    @classmethod
    def zeros(cls, grid: Grid, alpha: int = 1, dtype=float):
        z = np.zeros(grid.size, dtype=dtype)
        return cls(grid, z, z.copy(), z.copy(), z.copy(), alpha, z.copy())

    @classmethod
    def from_array(cls, grid: Grid, arr, alpha: int = 1, lap_z=None):
        n = grid.size
        arr = np.asarray(arr)
        return cls(grid, arr[:n], arr[n:2 * n], arr[2 * n:3 * n], arr[3 * n:4 * n], alpha, lap_z)

    def stack(self) -> np.ndarray:
        return np.concatenate([self.y, self.u, self.z, self.v])

    def blocks(self) -> tuple:
        return self.y, self.u, self.z, self.v

    def field(self, name: str) -> Field:
        return Field(self.grid, getattr(self, name))

    def scaled(self, a) -> "StateVector":
        lz = None if self.lap_z is None else a * self.lap_z
        return replace(self, y=a * self.y, u=a * self.u, z=a * self.z, v=a * self.v, lap_z=lz)

    def combine(self, a, other: "StateVector", b) -> "StateVector":
        """a*self + b*other."""
        lz = None
        if self.lap_z is not None and other.lap_z is not None:
            lz = a * self.lap_z + b * other.lap_z
        return replace(self, y=a * self.y + b * other.y, u=a * self.u + b * other.u,
                       z=a * self.z + b * other.z, v=a * self.v + b * other.v, lap_z=lz)


@dataclass
class ProblemConfig:
    grid: Grid
    c: Field
    d: Field
    alpha: int = 1
    c0: float = 0.0
    d0: float = 0.0
    chain: Optional[SubdomainChain] = None

    def __post_init__(self):
        if self.alpha not in (0, 1):
            raise ValueError("alpha must be 0 or 1")
        for f in (self.c, self.d):
            if f.grid != self.grid:
                raise ValueError("coefficient lives on a different grid")
            if np.iscomplexobj(f.values) or np.any(f.values < 0):
                raise ValueError("coefficients must be real and nonnegative")
        if self.chain is not None:
            if self.c0 > 0 and np.min(self.c.values[box_mask(self.grid, self.chain.omega_c)]) < self.c0:
                raise ValueError("c falls below its floor on omega_c")
            if self.d0 > 0 and np.min(self.d.values[box_mask(self.grid, self.chain.omega_d)]) < self.d0:
                raise ValueError("d falls below its floor on omega_d")


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

class Generator(SparseOperator):
    """The 4n x 4n block generator plus mixed-form solvers and energy coordinates."""

    def __init__(self, config: ProblemConfig, laplacian: Optional[SparseOperator] = None):
        grid = config.grid
        lap = laplacian or assemble_laplacian(grid)
        if lap.dim != grid.size:
            raise ValueError("laplacian does not match the grid")
        n = grid.size
        self.config = config
        self.grid = grid
        self.alpha = config.alpha
        self.lap = lap
        self.c = np.asarray(config.c.values, dtype=float)
        self.d = np.asarray(config.d.values, dtype=float)
        L = lap.matrix
        I = sp.identity(n, format="csr")
        C = sp.diags(self.c)
        Dw = sp.diags(self.alpha * self.d)
        Dp = sp.diags((1 - self.alpha) * self.d)
        Z = None
        A = sp.bmat([[Z, I, Z, Z],
                     [L, -Dw, -C, Z],
                     [Z, Z, Z, I],
                     [-C, Z, -(L @ L), -Dp]], format="csr")
        super().__init__(A, symmetric=False, label="generator")
        self._blocks = dict(L=L, I=I, C=C, Dw=Dw, Dp=Dp)
        self._symbol = laplacian_symbol(grid)
        self._diffs = difference_matrices(grid)
        self.weight = grid.cell_volume

    @property
    def n(self) -> int:
        return self.grid.size

    # -- application -------------------------------------------------------

    def lap_of(self, state: StateVector) -> np.ndarray:
        return state.lap_z if state.lap_z is not None else self.lap.matrix @ state.z

    def apply(self, state: StateVector) -> StateVector:
        """A U, with the plate term evaluated as -Lap(m) and Lap of the result cached."""
        L = self.lap.matrix
        y, u, z, v = state.blocks()
        m = self.lap_of(state)
        a = self.alpha
        r2 = L @ y - self.c * z - a * self.d * u
        r4 = -(L @ m) - self.c * y - (1 - a) * self.d * v
        return StateVector(self.grid, u, r2, v, r4, a, L @ v)

    # -- mixed form --------------------------------------------------------

    def augmented(self, a, b) -> sp.csr_matrix:
        """5n x 5n matrix of ``a*A + b*I`` with the auxiliary unknown m = Lap z."""
        B = self._blocks
        L, I, C, Dw, Dp = B["L"], B["I"], B["C"], B["Dw"], B["Dp"]
        Z = None
        K = sp.bmat([[b * I, a * I, Z, Z, Z],
                     [a * L, -a * Dw + b * I, -a * C, Z, Z],
                     [Z, Z, b * I, a * I, Z],
                     [-a * C, Z, Z, -a * Dp + b * I, -a * L],
                     [Z, Z, L, Z, -I]], format="csc")
        return K

    def shifted_solver(self, a, b, check: bool = True) -> "ShiftedSolver":
        """Factorisation of ``a*A + b*I`` in mixed form."""
        return ShiftedSolver(self, a, b, check)

    # -- quadratures -------------------------------------------------------

    def integral(self, f) -> complex:
        return self.weight * np.sum(f)

    def grad_sq(self, y) -> float:
        return self.weight * sum(float(np.sum(np.abs(D @ y) ** 2)) for D in self._diffs)

    def dissipation_rate(self, state: StateVector) -> float:
        a = self.alpha
        return float(self.weight * np.sum(self.d * (a * np.abs(state.u) ** 2
                                                    + (1 - a) * np.abs(state.v) ** 2)))

    def energy(self, state: StateVector) -> float:
        m = self.lap_of(state)
        kin = np.sum(np.abs(state.u) ** 2) + np.sum(np.abs(m) ** 2) + np.sum(np.abs(state.v) ** 2)
        coup = np.sum(self.c * np.real(state.y * np.conj(state.z)))
        return 0.5 * self.grad_sq(state.y) + 0.5 * self.weight * float(kin) + self.weight * float(coup)

    def energy_form(self, U: StateVector, W: StateVector) -> complex:
        """Sesquilinear form with ``energy_form(U, U) = 2 E(U)`` and ``Re energy_form(AU, U) = -dissipation``."""
        w = self.weight
        L = self.lap.matrix
        mu, mw = self.lap_of(U), self.lap_of(W)
        val = (-np.vdot(W.y, L @ U.y) + np.vdot(W.u, U.u) + np.vdot(mw, mu) + np.vdot(W.v, U.v)
               + np.vdot(W.y, self.c * U.z) + np.vdot(W.z, self.c * U.y))
        return complex(w * val)

    def h_norm(self, state: StateVector) -> float:
        m = self.lap_of(state)
        rest = np.sum(np.abs(state.u) ** 2) + np.sum(np.abs(m) ** 2) + np.sum(np.abs(state.v) ** 2)
        return float(np.sqrt(self.grad_sq(state.y) + self.weight * rest))

    def graph_norm(self, state: StateVector) -> float:
        return self.h_norm(state) + self.h_norm(self.apply(state))

    # -- energy coordinates ------------------------------------------------

    def to_energy(self, state: StateVector) -> np.ndarray:
        sw = np.sqrt(self.weight)
        sy = apply_power(self.grid, state.y, 0.5, self._symbol)
        return sw * np.concatenate([sy, state.u, -self.lap_of(state), state.v])

    def from_energy(self, xi: np.ndarray) -> StateVector:
        n, sw = self.n, np.sqrt(self.weight)
        x1, x2, x3, x4 = (xi[k * n:(k + 1) * n] / sw for k in range(4))
        y = apply_power(self.grid, x1, -0.5, self._symbol)
        m = -x3
        z = -apply_power(self.grid, m, -1.0, self._symbol)
        return StateVector(self.grid, y, x2, z, x4, self.alpha, m)

    def apply_energy(self, xi: np.ndarray) -> np.ndarray:
        """Generator in energy coordinates, evaluated without forming Lap^2."""
        n, sw = self.n, np.sqrt(self.weight)
        L = self.lap.matrix
        x1, x2, x3, x4 = (xi[k * n:(k + 1) * n] / sw for k in range(4))
        y = apply_power(self.grid, x1, -0.5, self._symbol)
        lap_y = -apply_power(self.grid, x1, 0.5, self._symbol)
        m = -x3
        z = -apply_power(self.grid, m, -1.0, self._symbol)
        a = self.alpha
        b1 = apply_power(self.grid, x2, 0.5, self._symbol)
        b2 = lap_y - self.c * z - a * self.d * x2
        b3 = -(L @ x4)
        b4 = -(L @ m) - self.c * y - (1 - a) * self.d * x4
        return sw * np.concatenate([b1, b2, b3, b4])

    def dense_energy_matrix(self) -> np.ndarray:
        """Dense generator in energy coordinates (small grids only)."""
        N = 4 * self.n
        if N > 8000:
            raise ValueError("grid too large for a dense spectrum")
        eye = np.eye(N)
        return np.column_stack([self.apply_energy(eye[:, k]) for k in range(N)])


class ShiftedSolver:
    """LU of ``a*A + b*I`` in mixed form; solves in original and energy coordinates."""

    def __init__(self, gen: Generator, a, b, check: bool = True):
        self.gen = gen
        self.a, self.b = a, b
        K = gen.augmented(a, b)
        if np.iscomplexobj(np.asarray([a, b])):
            K = K.astype(complex)
        self.dtype = K.dtype
        try:
            self.lu = spla.splu(K)
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"factorisation failed: {exc}") from exc
        if check:
            diag = np.abs(self.lu.U.diagonal())
            if not np.all(np.isfinite(diag)) or diag.min() <= 1e-14 * diag.max():
                raise np.linalg.LinAlgError("shifted operator is numerically singular")

    def _pad(self, rhs: StateVector):
        n = self.gen.n
        dt = np.result_type(self.dtype, rhs.y, rhs.u, rhs.z, rhs.v)
        return np.concatenate([rhs.y, rhs.u, rhs.z, rhs.v, np.zeros(n)]).astype(dt, copy=False)

    def solve(self, rhs: StateVector) -> StateVector:
        n = self.gen.n
        x = self.lu.solve(self._pad(rhs))
        return StateVector(self.gen.grid, x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n:4 * n],
                           self.gen.alpha, x[4 * n:])

    def solve_adjoint(self, rhs: np.ndarray) -> np.ndarray:
        """Conjugate-transpose solve for a 4n vector in original coordinates."""
        n = self.gen.n
        dt = np.result_type(self.dtype, rhs)
        x = self.lu.solve(np.concatenate([rhs, np.zeros(n)]).astype(dt, copy=False), trans="H")
        return x[:4 * n]

    def solve_energy(self, xi: np.ndarray, refine: int = 0) -> np.ndarray:
        """Solve in energy coordinates, with optional iterative-refinement sweeps.

        The LU leaves high-frequency noise of relative size ~eps*|K| in the
        plate block; refinement against :meth:`Generator.apply_energy` removes
        most of it, which matters when the result feeds an eigen-residual.
        """
        gen = self.gen
        x = gen.to_energy(self.solve(gen.from_energy(xi)))
        for _ in range(refine):
            r = xi - (self.a * gen.apply_energy(x) + self.b * x)
            x = x + gen.to_energy(self.solve(gen.from_energy(r)))
        return x

    def solve_energy_adjoint(self, xi: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`solve_energy` in the Euclidean product of energy coordinates."""
        # (R X R^-1)^H = R^-1 X^H R with R = sqrt(w) diag(S, I, -Lap, I)
        gen, n = self.gen, self.gen.n
        sw = np.sqrt(gen.weight)
        sym = gen._symbol
        x1, x2, x3, x4 = (xi[k * n:(k + 1) * n] for k in range(4))
        r = sw * np.concatenate([apply_power(gen.grid, x1, 0.5, sym), x2,
                                 apply_power(gen.grid, x3, 1.0, sym), x4])
        g = self.solve_adjoint(r)
        g1, g2, g3, g4 = (g[k * n:(k + 1) * n] for k in range(4))
        return np.concatenate([apply_power(gen.grid, g1, -0.5, sym), g2,
                               apply_power(gen.grid, g3, -1.0, sym), g4]) / sw


def assemble_generator(config: ProblemConfig, laplacian: Optional[SparseOperator] = None) -> Generator:
    return Generator(config, laplacian)


def energy(state: StateVector, gen: Generator) -> float:
    return gen.energy(state)


def h_norm(state: StateVector, gen: Generator) -> float:
    return gen.h_norm(state)


def graph_norm(state: StateVector, gen: Generator) -> float:
    return gen.graph_norm(state)
