"""Grids, subdomain chains, coefficient fields, weight base and cut-offs.

Domains are boxes: an interval ``(0, L)`` in 1D or a rectangle in 2D.  All
fields live on interior grid points; Dirichlet data on the boundary is
implicit (zero).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Box = tuple  # ((lo, hi),) in 1D or ((lo, hi), (lo, hi)) in 2D


def smoothstep(t):
    """Quintic ramp 6t^5 - 15t^4 + 10t^3, clipped to [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    # the polynomial can land a few ulps above 1 just below t = 1
    return np.minimum(t**3 * (t * (6.0 * t - 15.0) + 10.0), 1.0)


def smoothstep_d1(t):
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 30.0 * t**2 * (t - 1.0) ** 2, 0.0)


def smoothstep_d2(t):
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 60.0 * t * (t - 1.0) * (2.0 * t - 1.0), 0.0)


@dataclass(frozen=True)
class Grid:
    """Tensor-product grid of interior points of ``[0, L_1] x ... x [0, L_d]``."""

    dimension: int
    extents: tuple
    counts: tuple

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if len(self.extents) != self.dimension or len(self.counts) != self.dimension:
            raise ValueError("extents and counts must have one entry per axis")
        for L in self.extents:
            if not L > 0:
                raise ValueError(f"extent must be positive, got {L}")
        for n in self.counts:
            if int(n) != n or n < 3:
                raise ValueError(f"need at least 3 interior points per axis, got {n}")

    @property
    def spacing(self) -> tuple:
        return tuple(L / (n + 1) for L, n in zip(self.extents, self.counts))

    @property
    def h(self) -> float:
        """Spacing of the first axis (the only one in 1D)."""
        return self.spacing[0]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def shape(self) -> tuple:
        return tuple(int(n) for n in self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def axis(self, k: int) -> np.ndarray:
        """Interior coordinates ``i*h`` for ``i = 1..n`` along axis ``k``."""
        h = self.spacing[k]
        return h * np.arange(1, self.counts[k] + 1)

    def full_axis(self, k: int) -> np.ndarray:
        """Coordinates including the two boundary points."""
        h = self.spacing[k]
        return h * np.arange(0, self.counts[k] + 2)

    def coords(self) -> tuple:
        """Flattened interior coordinates, one array per axis (C ordering)."""
        mesh = np.meshgrid(*[self.axis(k) for k in range(self.dimension)], indexing="ij")
        return tuple(m.ravel() for m in mesh)

    def boundary_mask(self) -> np.ndarray:
        """Mask over the full grid (interior plus boundary) marking points on the boundary."""
        shape = tuple(n + 2 for n in self.shape)
        mask = np.zeros(shape, dtype=bool)
        for k in range(self.dimension):
            idx = [slice(None)] * self.dimension
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask

    def domain_box(self) -> Box:
        return tuple((0.0, L) for L in self.extents)


def build_grid(dimension: int, extents: Sequence[float], counts: Sequence[int]) -> Grid:
    return Grid(int(dimension), tuple(float(L) for L in extents), tuple(int(n) for n in counts))


@dataclass
class Field:
    """Scalar samples on the interior points of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.size,):
            raise ValueError(f"field has {self.values.shape} samples, grid has {self.grid.size}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def kind(self) -> str:
        return "complex" if np.iscomplexobj(self.values) else "real"

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def to_csv(self, path=None) -> str:
        """Coordinate columns then value (real, or Re/Im for complex)."""
        names = ["x", "y"][: self.grid.dimension]
        cols = list(self.grid.coords())
        if self.kind == "complex":
            names += ["re", "im"]
            cols += [self.values.real, self.values.imag]
        else:
            names += ["value"]
            cols += [self.values]
        from .report import format_csv

        text = format_csv(names, cols)
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def box_mask(grid: Grid, box: Box, closed: bool = True) -> np.ndarray:
    """Interior points lying in ``box`` (closed by default)."""
    mask = np.ones(grid.size, dtype=bool)
    for k, x in enumerate(grid.coords()):
        lo, hi = box[k]
        mask &= (x >= lo) & (x <= hi) if closed else (x > lo) & (x < hi)
    return mask


def _check_box(box, dimension):
    if len(box) != dimension:
        raise ValueError(f"box {box} does not match dimension {dimension}")
    for lo, hi in box:
        if not hi > lo:
            raise ValueError(f"empty box side ({lo}, {hi})")


def intersect(a: Box, b: Box) -> Optional[Box]:
    out = tuple((max(a[k][0], b[k][0]), min(a[k][1], b[k][1])) for k in range(len(a)))
    if any(hi <= lo for lo, hi in out):
        return None
    return out


@dataclass(frozen=True)
class SubdomainChain:
    """Nested boxes omega_0 < omega_1 < omega_2 < omega_3 < omega_4 = omega_c & omega_d."""

    boxes: tuple
    omega_c: Box
    omega_d: Box

    def __getitem__(self, j: int) -> Box:
        return self.boxes[j]

    @property
    def observation(self) -> Box:
        return self.boxes[4]


def build_chain(grid: Grid, omega_c: Box, omega_d: Box, margins=None) -> SubdomainChain:
    """Shrink ``omega_c & omega_d`` four times to get the nested chain.

    ``margins`` is a scalar or four numbers (gap between omega_{j+1} and
    omega_j on every side, for j = 3, 2, 1, 0).  The default is ``3h``.
    """
    omega_c = tuple(tuple(map(float, side)) for side in omega_c)
    omega_d = tuple(tuple(map(float, side)) for side in omega_d)
    for box in (omega_c, omega_d):
        _check_box(box, grid.dimension)
        for k, (lo, hi) in enumerate(box):
            if lo < 0 or hi > grid.extents[k]:
                raise ValueError(f"subdomain {box} leaves the domain")
    top = intersect(omega_c, omega_d)
    if top is None:
        raise ValueError("omega_c and omega_d do not intersect")
    if margins is None:
        margins = [3.0 * max(grid.spacing)] * 4
    elif np.isscalar(margins):
        margins = [float(margins)] * 4
    if len(margins) != 4:
        raise ValueError("need four margins")
    boxes = [top]
    for gap in margins:
        outer = boxes[-1]
        boxes.append(tuple((lo + gap, hi - gap) for lo, hi in outer))
    boxes = tuple(reversed(boxes))
    chain = SubdomainChain(boxes, omega_c, omega_d)
    validate_chain(grid, chain)
    return chain


def validate_chain(grid: Grid, chain: SubdomainChain):
    for j in range(4):
        inner, outer = chain.boxes[j], chain.boxes[j + 1]
        _check_box(inner, grid.dimension)
        for k in range(grid.dimension):
            h2 = 2.0 * grid.spacing[k] * (1 - 1e-12)
            if inner[k][0] - outer[k][0] < h2 or outer[k][1] - inner[k][1] < h2:
                raise ValueError(f"omega_{j} is not nested in omega_{j + 1} with margin >= 2h")
        if not box_mask(grid, inner, closed=False).any():
            raise ValueError(f"omega_{j} contains no grid point")


# ---------------------------------------------------------------------------
# Weight base function
# ---------------------------------------------------------------------------

@dataclass
class WeightBase(Field):
    """Samples of x^p (L - x)^q together with its closed-form derivatives."""

    p: float = 1.0
    q: float = 1.0
    length: float = 1.0

    @property
    def critical_point(self) -> float:
        return self.p * self.length / (self.p + self.q)

    @property
    def sup(self) -> float:
        """Exact maximum of the continuum function (attained at the critical point)."""
        return float(self.evaluate(np.array([self.critical_point]))[0])

    def evaluate(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        p, q, L = self.p, self.q, self.length
        a, b = x, L - x
        if order == 0:
            return a**p * b**q
        if order == 1:
            return a ** (p - 1) * b ** (q - 1) * (p * b - q * a)
        if order == 2:
            # d/dx [a^(p-1) b^(q-1) (p b - q a)]
            t1 = (p - 1) * a ** (p - 2) * b ** (q - 1) * (p * b - q * a) if p != 1 else 0.0 * x
            t2 = -(q - 1) * a ** (p - 1) * b ** (q - 2) * (p * b - q * a) if q != 1 else 0.0 * x
            t3 = -(p + q) * a ** (p - 1) * b ** (q - 1)
            return t1 + t2 + t3
        raise ValueError("order must be 0, 1 or 2")


def exponents_for(critical_point: float, length: float) -> tuple:
    """Exponents (p, q), the smaller one equal to 1, placing the critical point."""
    r = critical_point / length
    if not 0.0 < r < 1.0:
        raise ValueError("critical point must be interior")
    if r >= 0.5:
        return r / (1.0 - r), 1.0
    return 1.0, (1.0 - r) / r


def build_weight_base(grid: Grid, critical_point=None, exponents=None, omega0: Optional[Box] = None) -> WeightBase:
    """Sample psi_hat(x) = x^p (L - x)^q on a 1D grid.

    Either ``exponents`` or ``critical_point`` (or both, consistently) must
    be given.  If ``omega0`` is given the critical point must lie inside it,
    otherwise the gradient of psi_hat would vanish outside omega0.
    """
    if grid.dimension != 1:
        raise ValueError("the weight base is defined on 1D grids only")
    L = grid.extents[0]
    if exponents is None:
        if critical_point is None:
            raise ValueError("give exponents or a critical point")
        exponents = exponents_for(critical_point, L)
    p, q = map(float, exponents)
    if p < 1 or q < 1:
        raise ValueError("exponents must be >= 1")
    xc = p * L / (p + q)
    if critical_point is not None and abs(xc - critical_point) > 1e-12 * L:
        raise ValueError(f"exponents put the critical point at {xc}, not {critical_point}")
    if omega0 is not None:
        lo, hi = omega0[0]
        if not lo < xc < hi:
            raise ValueError(f"critical point {xc} lies outside omega_0 = ({lo}, {hi})")
    x = grid.axis(0)
    return WeightBase(grid, x**p * (L - x) ** q, p=p, q=q, length=L)


def gradient_floor(base: Field, box: Box) -> tuple:
    """Smallest |first difference| of ``base`` over edges outside ``box``.

    Returns ``(value, edge_midpoint)``.
    """
    grid = base.grid
    if grid.dimension != 1:
        raise ValueError("1D only")
    full = np.concatenate([[0.0], base.values, [0.0]])
    diffs = np.abs(np.diff(full)) / grid.h
    mids = grid.full_axis(0)[:-1] + 0.5 * grid.h
    lo, hi = box[0]
    outside = (mids <= lo) | (mids >= hi)
    k = np.argmin(np.where(outside, diffs, np.inf))
    return float(diffs[k]), float(mids[k])


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

def _plateau(x, lo, hi, skirt):
    """1 on [lo, hi], smoothstep down to 0 at lo - skirt and hi + skirt."""
    left = smoothstep((x - (lo - skirt)) / skirt)
    right = smoothstep(((hi + skirt) - x) / skirt)
    return np.minimum(left, right)


def build_coefficient(grid: Grid, support_box: Optional[Box], floor_value: float,
                      profile: str = "plateau") -> Field:
    """Nonnegative coefficient field that equals ``floor_value`` on ``support_box``.

    ``profile`` is ``"plateau"`` (smooth skirt of width 2h outside the box) or
    ``"constant"`` (the floor value everywhere).  A zero floor gives the zero
    field, which marks the undamped/uncoupled regime.
    """
    if floor_value < 0:
        raise ValueError("floor value must be nonnegative")
    if profile == "constant":
        return Field(grid, np.full(grid.size, float(floor_value)))
    if profile != "plateau":
        raise ValueError(f"unknown profile {profile!r}")
    if support_box is None:
        raise ValueError("plateau profile needs a support box")
    _check_box(support_box, grid.dimension)
    vals = np.full(grid.size, float(floor_value))
    for k, x in enumerate(grid.coords()):
        lo, hi = support_box[k]
        vals *= _plateau(x, lo, hi, 2.0 * grid.spacing[k])
    return Field(grid, vals)


# ---------------------------------------------------------------------------
# Cut-off functions
# ---------------------------------------------------------------------------

def _ramp_profile(x, inner, outer):
    """Product over axes of 1 on ``inner``, 0 outside ``outer``, smooth between."""
    val = np.ones_like(np.asarray(x[0], dtype=float))
    for k, xk in enumerate(x):
        (ilo, ihi), (olo, ohi) = inner[k], outer[k]
        left = smoothstep((xk - olo) / (ilo - olo))
        right = smoothstep((ohi - xk) / (ohi - ihi))
        val = val * np.minimum(left, right)
    return val


@dataclass
class CutoffSet:
    """Spatial cut-offs eta_1..eta_5 and the temporal cut-off in s.

    ``eta[j]`` is eta_{j+1}: equal to one on omega_j and supported in
    omega_{j+1}; omega_5 is the whole domain.
    """

    grid: Grid
    chain: SubdomainChain
    b: float
    b0: float
    eta: list = field(default_factory=list)
    ramp_end: float = 0.0

    def eta_at(self, j: int, *x):
        """Evaluate eta_{j+1} at arbitrary coordinates."""
        inner = self.chain.boxes[j]
        outer = self.chain.boxes[j + 1] if j < 4 else self.grid.domain_box()
        return _ramp_profile(x, inner, outer)

    def temporal(self, s, order: int = 0):
        """phi(s): 1 for |s| <= b0, 0 for |s| >= ramp_end (< b), C^2 in between."""
        s = np.asarray(s, dtype=float)
        w = self.ramp_end - self.b0
        t = (self.ramp_end - np.abs(s)) / w
        if order == 0:
            return smoothstep(t)
        sgn = -np.sign(s) / w
        if order == 1:
            return smoothstep_d1(t) * sgn
        if order == 2:
            return smoothstep_d2(t) / w**2
        raise ValueError("order must be 0, 1 or 2")


def build_cutoffs(grid: Grid, chain: SubdomainChain, b: float, b0: float) -> CutoffSet:
    if not b0 < b:
        raise ValueError("need b0 < b")
    if b > 2:
        raise ValueError("need b <= 2")
    if not b0 > 1:
        raise ValueError("need b0 > 1")
    validate_chain(grid, chain)
    cs = CutoffSet(grid, chain, float(b), float(b0), ramp_end=float(b0 + 0.8 * (b - b0)))
    x = grid.coords()
    cs.eta = [Field(grid, cs.eta_at(j, *x)) for j in range(5)]
    return cs


def sample(grid: Grid, fn: Callable) -> Field:
    """Field from a callable of the coordinate arrays."""
    return Field(grid, np.asarray(fn(*grid.coords())))
