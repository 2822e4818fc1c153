"""Grids, scalar fields, and the pointwise operator algebra.

Coordinates are (t, x_2, ..., x_n) on a box; grid axis 0 is always the
distinguished ``t`` direction.  For a symmetric matrix H the scalar operator
of interest is

    sigma2_tilde(H) = H[0,0] * (H[1,1] + ... + H[n-1,n-1]) - H[0,1]**2 - ... - H[0,n-1]**2,

i.e. the sum of the 2x2 principal minors that involve row/column 0.  It is
invariant under rotations of the transverse block and quadratic in H, and
its derivative at H is contraction with the matrix returned by
``sigma2_linearization``.

All finite differences are second-order central stencils on uniform grids.
Fields are serialized as a JSON header plus a raw little-endian float64
payload (extension pair ``.fld.json`` / ``.fld.bin``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BoundaryNode, ConfigError

__all__ = [
    "Grid",
    "ScalarField",
    "SymMatrix",
    "sigma2_tilde",
    "sigma2_linearization",
    "fd_gradient",
    "fd_hessian",
    "shifted",
    "second_diff",
    "cross_diff",
    "sigma2_interior",
]


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on a box in R^n, n in {2, 3}.

    ``bounds[k] = (lo_k, hi_k)`` and ``shape[k]`` is the node count along
    axis k (at least 5 so that every second-order stencil has room).
    """

    bounds: tuple[tuple[float, float], ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        shape = tuple(int(m) for m in self.shape)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "shape", shape)
        if len(bounds) != len(shape):
            raise ConfigError("bounds and shape must have the same length")
        if len(shape) not in (2, 3):
            raise ConfigError(f"grid dimension must be 2 or 3, got {len(shape)}")
        for (lo, hi), m in zip(bounds, shape):
            if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
                raise ConfigError(f"invalid axis bounds ({lo}, {hi})")
            if m < 5:
                raise ConfigError(f"need at least 5 nodes per axis, got {m}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (m - 1) for (lo, hi), m in zip(self.bounds, self.shape))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def interior_shape(self) -> tuple[int, ...]:
        return tuple(m - 2 for m in self.shape)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, m) for (lo, hi), m in zip(self.bounds, self.shape)]

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def points(self) -> np.ndarray:
        """All node coordinates, shape (n_nodes, dim), C node order."""
        mesh = self.meshgrid()
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def coords(self, node: tuple[int, ...]) -> np.ndarray:
        if len(node) != self.dim:
            raise ConfigError(f"node {node} has wrong length for a {self.dim}-d grid")
        return np.array(
            [lo + i * h for (lo, _), i, h in zip(self.bounds, node, self.spacing)]
        )

    def is_interior(self, node: tuple[int, ...]) -> bool:
        return all(0 < i < m - 1 for i, m in zip(node, self.shape))

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[axis] = 0
            mask[tuple(sl)] = True
            sl[axis] = -1
            mask[tuple(sl)] = True
        return mask


@dataclass
class ScalarField:
    """Node values of a scalar function on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ConfigError(
                f"values shape {values.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigError("field values must be finite")
        self.values = values

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "ScalarField":
        return cls(grid, np.asarray(fn(*grid.meshgrid()), dtype=float))

    @classmethod
    def sample(cls, grid: Grid, candidate, index: tuple[int, ...] | None = None) -> "ScalarField":
        """Sample a candidate solution (or any object with ``eval_many``)."""
        if index is None:
            index = (0,) * grid.dim
        vals = candidate.eval_many(grid.points(), index)
        return cls(grid, vals.reshape(grid.shape))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def save(self, path: str | Path) -> tuple[Path, Path]:
        """Write ``<base>.fld.json`` + ``<base>.fld.bin``; returns both paths."""
        base = _strip_field_suffix(path)
        meta = {
            "dim": self.grid.dim,
            "bounds": [list(b) for b in self.grid.bounds],
            "resolution": list(self.grid.shape),
            "byte_order": "little",
        }
        json_path = Path(str(base) + ".fld.json")
        bin_path = Path(str(base) + ".fld.bin")
        json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        bin_path.write_bytes(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return json_path, bin_path

    @classmethod
    def load(cls, path: str | Path) -> "ScalarField":
        base = _strip_field_suffix(path)
        json_path = Path(str(base) + ".fld.json")
        bin_path = Path(str(base) + ".fld.bin")
        try:
            meta = json.loads(json_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read field header {json_path}: {exc}") from exc
        if meta.get("byte_order") != "little":
            raise ConfigError(f"unsupported byte order {meta.get('byte_order')!r}")
        grid = Grid(tuple(tuple(b) for b in meta["bounds"]), tuple(meta["resolution"]))
        raw = np.frombuffer(bin_path.read_bytes(), dtype="<f8")
        if raw.size != grid.n_nodes:
            raise ConfigError(
                f"payload has {raw.size} values, header promises {grid.n_nodes}"
            )
        return cls(grid, raw.reshape(grid.shape).astype(float))


def _strip_field_suffix(path: str | Path) -> Path:
    s = str(path)
    for suffix in (".fld.json", ".fld.bin"):
        if s.endswith(suffix):
            s = s[: -len(suffix)]
            break
    return Path(s)


class SymMatrix:
    """Symmetric n x n matrix stored as its packed upper triangle."""

    __slots__ = ("_n", "_packed")

    def __init__(self, packed, dim: int):
        packed = np.asarray(packed, dtype=float)
        if packed.shape != (dim * (dim + 1) // 2,):
            raise ConfigError("packed data has wrong length")
        self._n = dim
        self._packed = packed

    @classmethod
    def from_full(cls, full, atol: float = 1e-10) -> "SymMatrix":
        a = np.asarray(full, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ConfigError(f"expected a square matrix, got shape {a.shape}")
        if not np.allclose(a, a.T, atol=atol, rtol=0.0):
            raise ConfigError("matrix is not symmetric")
        n = a.shape[0]
        sym = 0.5 * (a + a.T)
        packed = sym[np.triu_indices(n)]
        return cls(packed, n)

    @classmethod
    def diag(cls, values) -> "SymMatrix":
        return cls.from_full(np.diag(np.asarray(values, dtype=float)))

    @property
    def dim(self) -> int:
        return self._n

    def full(self) -> np.ndarray:
        a = np.zeros((self._n, self._n))
        iu = np.triu_indices(self._n)
        a[iu] = self._packed
        a = a + np.triu(a, 1).T
        return a

    def __getitem__(self, key: tuple[int, int]) -> float:
        i, j = key
        return float(self.full()[i, j])

    def __repr__(self) -> str:
        return f"SymMatrix({self.full().tolist()})"


def _as_matrix(H) -> np.ndarray:
    if isinstance(H, SymMatrix):
        return H.full()
    a = np.asarray(H, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
        raise ConfigError(f"expected a square matrix of dimension >= 2, got shape {a.shape}")
    return a


def sigma2_tilde(H) -> float:
    """Sum of the 2x2 principal minors of H that involve index 0."""
    a = _as_matrix(H)
    return float(a[0, 0] * np.trace(a[1:, 1:]) - np.sum(a[0, 1:] ** 2))


def sigma2_linearization(H) -> SymMatrix:
    """Matrix C with d/ds sigma2_tilde(H + sV)|_{s=0} = sum_ij C_ij V_ij.

    C is positive definite exactly when H[0,0] > 0 and sigma2_tilde(H) > 0,
    which is the ellipticity statement for the operator on its solution cone.
    """
    a = _as_matrix(H)
    n = a.shape[0]
    c = np.zeros((n, n))
    c[0, 0] = np.trace(a[1:, 1:])
    for i in range(1, n):
        c[i, i] = a[0, 0]
        c[0, i] = c[i, 0] = -a[0, i]
    return SymMatrix.from_full(c)


def _require_interior(field: ScalarField, node: tuple[int, ...]) -> None:
    if len(node) != field.grid.dim:
        raise ConfigError(f"node {node} has wrong length for a {field.grid.dim}-d grid")
    if not all(0 <= i < m for i, m in zip(node, field.grid.shape)):
        raise ConfigError(f"node {node} is outside the grid")
    if not field.grid.is_interior(node):
        raise BoundaryNode(f"node {node} is on the boundary")


def fd_gradient(field: ScalarField, node: tuple[int, ...]) -> np.ndarray:
    """Central-difference gradient at an interior node."""
    _require_interior(field, node)
    u = field.values
    h = field.grid.spacing
    node = tuple(node)
    out = np.empty(field.grid.dim)
    for axis in range(field.grid.dim):
        plus = list(node)
        minus = list(node)
        plus[axis] += 1
        minus[axis] -= 1
        out[axis] = (u[tuple(plus)] - u[tuple(minus)]) / (2.0 * h[axis])
    return out


def fd_hessian(field: ScalarField, node: tuple[int, ...]) -> SymMatrix:
    """Central-difference Hessian at an interior node (exact on quadratics)."""
    _require_interior(field, node)
    u = field.values
    h = field.grid.spacing
    node = tuple(node)
    n = field.grid.dim
    out = np.zeros((n, n))
    for a in range(n):
        plus = list(node)
        minus = list(node)
        plus[a] += 1
        minus[a] -= 1
        out[a, a] = (u[tuple(plus)] - 2.0 * u[node] + u[tuple(minus)]) / h[a] ** 2
        for b in range(a + 1, n):
            pp = list(node)
            pm = list(node)
            mp = list(node)
            mm = list(node)
            pp[a] += 1
            pp[b] += 1
            pm[a] += 1
            pm[b] -= 1
            mp[a] -= 1
            mp[b] += 1
            mm[a] -= 1
            mm[b] -= 1
            out[a, b] = out[b, a] = (
                u[tuple(pp)] - u[tuple(pm)] - u[tuple(mp)] + u[tuple(mm)]
            ) / (4.0 * h[a] * h[b])
    return SymMatrix.from_full(out)


def shifted(values: np.ndarray, offset: tuple[int, ...]) -> np.ndarray:
    """View of ``values`` at interior nodes displaced by ``offset``.

    The result always has the interior-box shape; offsets must have entries
    in {-1, 0, 1}.
    """
    sl = []
    for o, m in zip(offset, values.shape):
        if o not in (-1, 0, 1):
            raise ConfigError("offsets must be -1, 0, or 1")
        sl.append(slice(1 + o, m - 1 + o))
    return values[tuple(sl)]


def second_diff(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second difference along ``axis`` over the interior box."""
    ndim = values.ndim
    e = tuple(1 if a == axis else 0 for a in range(ndim))
    me = tuple(-v for v in e)
    zero = (0,) * ndim
    return (shifted(values, e) - 2.0 * shifted(values, zero) + shifted(values, me)) / h**2


def cross_diff(values: np.ndarray, axis_a: int, axis_b: int, ha: float, hb: float) -> np.ndarray:
    """Mixed second difference over the interior box (4-point stencil)."""
    ndim = values.ndim

    def off(sa: int, sb: int) -> tuple[int, ...]:
        o = [0] * ndim
        o[axis_a] = sa
        o[axis_b] = sb
        return tuple(o)

    return (
        shifted(values, off(1, 1))
        - shifted(values, off(1, -1))
        - shifted(values, off(-1, 1))
        + shifted(values, off(-1, -1))
    ) / (4.0 * ha * hb)


def sigma2_interior(values: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """sigma2_tilde of the discrete Hessian at every interior node.

    Returns an array of interior-box shape.  Only the Hessian entries the
    operator actually reads are formed: u_tt, the transverse diagonal, and
    the mixed t-row.
    """
    utt = second_diff(values, 0, spacing[0])
    acc = np.zeros_like(utt)
    for axis in range(1, values.ndim):
        acc += second_diff(values, axis, spacing[axis])
    out = utt * acc
    for axis in range(1, values.ndim):
        out -= cross_diff(values, 0, axis, spacing[0], spacing[axis]) ** 2
    return out
