"""Discrete Dirichlet domains and grid functions.

A Grid is a uniform tensor grid of interior nodes on an interval or a
rectangle.  Boundary values are implicit zeros and never stored.  The
negative Laplacian is the standard second-order centered stencil; it is
applied via first differences of first differences, which keeps the
floating-point evaluation error at the level of the gradient rather than
of the function values (this matters when residuals are driven toward
machine precision on fine grids).

All integral quantities use the product quadrature weight h^N per node,
so the discrete integration-by-parts identity <A u, v> = "grad" pairing
holds exactly and the norms entering the variational identities are
mutually consistent to machine precision.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GridMismatch, InvalidSpec


@dataclass(frozen=True)
class DomainSpec:
    """An open interval (a,b) or open rectangle (ax,bx) x (ay,by).

    `star_center` is the reference point for boundary-weighted integrals
    (x . nu measured from it); it defaults to the centroid and must lie
    strictly inside the domain.
    """

    dimension: int
    bounds: tuple  # ((a, b),) in 1D, ((ax, bx), (ay, by)) in 2D
    star_center: tuple = field(default=())

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise InvalidSpec(f"dimension must be 1 or 2, got {self.dimension}")
        bounds = tuple(tuple(float(v) for v in ax) for ax in self.bounds)
        if len(bounds) != self.dimension or any(len(ax) != 2 for ax in bounds):
            raise InvalidSpec(f"bounds {self.bounds!r} do not match dimension {self.dimension}")
        for lo, hi in bounds:
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise InvalidSpec("bounds must be finite")
            if not lo < hi:
                raise InvalidSpec(f"degenerate axis [{lo}, {hi}]")
        object.__setattr__(self, "bounds", bounds)
        if not self.star_center:
            center = tuple((lo + hi) / 2.0 for lo, hi in bounds)
        else:
            center = tuple(float(c) for c in self.star_center)
        if len(center) != self.dimension:
            raise InvalidSpec("star_center does not match dimension")
        for c, (lo, hi) in zip(center, bounds):
            if not (lo < c < hi):
                raise InvalidSpec(f"star_center {center} not strictly inside the domain")
        object.__setattr__(self, "star_center", center)

    @classmethod
    def interval(cls, a: float, b: float, star_center: float | None = None) -> "DomainSpec":
        sc = () if star_center is None else (star_center,)
        return cls(1, ((a, b),), sc)

    @classmethod
    def rectangle(cls, ax: float, bx: float, ay: float, by: float,
                  star_center: tuple | None = None) -> "DomainSpec":
        return cls(2, ((ax, bx), (ay, by)), star_center or ())

    @property
    def lengths(self) -> tuple:
        return tuple(hi - lo for lo, hi in self.bounds)

    def volume(self) -> float:
        out = 1.0
        for length in self.lengths:
            out *= length
        return out


class Grid:
    """Uniform interior grid with spacing h = (b - a)/(n + 1) per axis."""

    def __init__(self, spec: DomainSpec, n: int):
        if n < 3:
            raise InvalidSpec(f"need at least 3 interior nodes per axis, got {n}")
        self.spec = spec
        self.n = int(n)
        self.shape = (self.n,) * spec.dimension
        self.h = tuple(length / (self.n + 1) for length in spec.lengths)
        self.weight = float(np.prod(self.h))
        self.coords = tuple(
            lo + hx * np.arange(1, self.n + 1)
            for (lo, _), hx in zip(spec.bounds, self.h)
        )
        self.size = self.n ** spec.dimension

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    def key(self):
        return (self.spec, self.n)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Grid({self.spec.bounds}, n={self.n})"

    # -- node geometry -------------------------------------------------

    def meshes(self):
        """Coordinate arrays shaped like the (reshaped) value array."""
        if self.dimension == 1:
            return (self.coords[0],)
        return np.meshgrid(self.coords[0], self.coords[1], indexing="ij")

    def sample(self, fn) -> "Field":
        """Field with values fn(x) (1D) or fn(x, y) (2D) at the nodes."""
        vals = np.asarray(fn(*self.meshes()), dtype=float)
        return Field(self, vals.reshape(-1))

    # -- the Dirichlet Laplacian ----------------------------------------

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        """Apply the negative Laplacian stencil, flat array in and out.

        First differences are formed before the second difference so that
        rounding happens at the scale of the increments, not of the values.
        """
        if self.dimension == 1:
            return self._lap_axis(values, self.h[0] * self.h[0])
        u = values.reshape(self.shape)
        hx2 = self.h[0] * self.h[0]
        hy2 = self.h[1] * self.h[1]
        gx = np.empty((self.n + 1, self.n), dtype=values.dtype)
        gx[0] = u[0]
        gx[-1] = -u[-1]
        np.subtract(u[1:], u[:-1], out=gx[1:-1])
        out = (gx[:-1] - gx[1:]) / hx2
        gy = np.empty((self.n, self.n + 1), dtype=values.dtype)
        gy[:, 0] = u[:, 0]
        gy[:, -1] = -u[:, -1]
        np.subtract(u[:, 1:], u[:, :-1], out=gy[:, 1:-1])
        out += (gy[:, :-1] - gy[:, 1:]) / hy2
        return out.reshape(-1)

    @staticmethod
    def _lap_axis(values: np.ndarray, h2: float) -> np.ndarray:
        g = np.empty(values.size + 1, dtype=values.dtype)
        g[0] = values[0]
        g[-1] = -values[-1]
        np.subtract(values[1:], values[:-1], out=g[1:-1])
        return (g[:-1] - g[1:]) / h2

    # -- quadrature ------------------------------------------------------

    def integrate(self, values: np.ndarray) -> float:
        return self.weight * float(np.sum(values))

    def l2_sq(self, values: np.ndarray) -> float:
        return self.weight * float(values @ values)

    def lp_p(self, values: np.ndarray, p: float) -> float:
        return self.weight * float(np.sum(np.abs(values) ** p))

    def grad_sq(self, values: np.ndarray) -> float:
        """Dirichlet energy <A u, u> with the quadrature weight."""
        return self.weight * float(values @ self.laplacian(values))

    def l2_norm(self, values: np.ndarray) -> float:
        return float(np.sqrt(self.l2_sq(values)))


def build_grid(spec: DomainSpec, n: int) -> Grid:
    """Grid with n interior nodes per axis on the given domain."""
    return Grid(spec, n)


class Field:
    """Real grid function on the interior nodes of one Grid.

    Values are stored flat in row-major order and frozen after creation;
    combining fields from different grids raises GridMismatch.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.array(values, dtype=float, copy=True).reshape(-1)
        if values.size != grid.size:
            raise GridMismatch(
                f"field has {values.size} values, grid has {grid.size} nodes")
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    def __repr__(self):
        return f"Field(grid={self.grid!r}, max|u|={np.max(np.abs(self.values)):.4g})"


def apply_laplacian(grid: Grid, u: Field) -> Field:
    """A u for the symmetric finite-difference negative Laplacian."""
    if u.grid != grid:
        raise GridMismatch("field does not live on the given grid")
    return Field(grid, grid.laplacian(u.values))


def norms(u: Field, p: float) -> tuple[float, float, float]:
    """(l2_sq, lp_p, grad_sq) of a field, all with the same quadrature.

    grad_sq is <A u, u>, so discrete integration by parts is exact and the
    variational identities close at machine precision.
    """
    if p <= 2:
        raise InvalidSpec(f"exponent p must exceed 2, got {p}")
    g = u.grid
    return g.l2_sq(u.values), g.lp_p(u.values, p), g.grad_sq(u.values)


def split(u: Field) -> tuple[Field, Field]:
    """Positive and negative parts: u = u_plus + u_minus pointwise."""
    plus = np.maximum(u.values, 0.0)
    minus = np.minimum(u.values, 0.0)
    return Field(u.grid, plus), Field(u.grid, minus)


def node_count(u: Field, rel_tol: float = 1e-9) -> int:
    """Number of sign interfaces: nodal domains minus one.

    Values below rel_tol * max|u| count as zero.  A single-signed field
    has count 0, the zero field has count 0.
    """
    vals = u.values
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    if scale == 0.0:
        return 0
    thr = rel_tol * scale
    if u.grid.dimension == 1:
        signs = np.sign(vals) * (np.abs(vals) > thr)
        signs = signs[signs != 0]
        if signs.size == 0:
            return 0
        return int(np.sum(signs[1:] != signs[:-1]))
    return max(_count_components_2d(vals.reshape(u.grid.shape), thr) - 1, 0)


def _count_components_2d(u: np.ndarray, thr: float) -> int:
    """Connected components (4-neighborhood) of {u > thr} and {u < -thr}."""
    count = 0
    for mask in (u > thr, u < -thr):
        seen = np.zeros_like(mask, dtype=bool)
        nx, ny = mask.shape
        for i in range(nx):
            for j in np.flatnonzero(mask[i]):
                if seen[i, j]:
                    continue
                count += 1
                queue = deque([(i, int(j))])
                seen[i, j] = True
                while queue:
                    a, b = queue.popleft()
                    for c, d in ((a - 1, b), (a + 1, b), (a, b - 1), (a, b + 1)):
                        if 0 <= c < nx and 0 <= d < ny and mask[c, d] and not seen[c, d]:
                            seen[c, d] = True
                            queue.append((c, d))
    return count


# -- field dump format -------------------------------------------------
#
# Plain-text record, one value per line using repr(float), which
# round-trips IEEE doubles exactly.

_DUMP_HEADER = "nlsground-field 1"


def save_field(u: Field, path) -> None:
    spec = u.grid.spec
    lines = [_DUMP_HEADER,
             f"dimension {spec.dimension}",
             "bounds " + " ".join(repr(v) for ax in spec.bounds for v in ax),
             "star_center " + " ".join(repr(v) for v in spec.star_center),
             f"n {u.grid.n}",
             f"values {u.values.size}"]
    lines.extend(repr(float(v)) for v in u.values)
    Path(path).write_text("\n".join(lines) + "\n")


def load_field(path) -> Field:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _DUMP_HEADER:
        raise InvalidSpec(f"{path}: not a field dump")
    meta = {}
    for row in lines[1:6]:
        key, _, rest = row.partition(" ")
        meta[key] = rest
    dim = int(meta["dimension"])
    flat = [float(v) for v in meta["bounds"].split()]
    bounds = tuple((flat[2 * i], flat[2 * i + 1]) for i in range(dim))
    center = tuple(float(v) for v in meta["star_center"].split())
    spec = DomainSpec(dim, bounds, center)
    grid = build_grid(spec, int(meta["n"]))
    count = int(meta["values"])
    values = np.array([float(v) for v in lines[6:6 + count]], dtype=float)
    if values.size != count:
        raise InvalidSpec(f"{path}: truncated value block")
    return Field(grid, values)
