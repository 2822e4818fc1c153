"""Exact candidate solutions of u_tt * Lap_x(u) - |grad_x u_t|^2 = 1.

Three closed families are provided, all with exact derivative evaluation up
to total order 4 and a compensated residual path that reports
sigma2_tilde(D^2 u) - 1 at the 1e-16 level even where e^|t| amplification
would wreck a naive evaluation:

* ``Quadratic``    u = x^T A x / 2 + b.x + c with the solution constraint
                   sigma2_tilde(A) = 1 enforced at construction;
* ``Counterexample``  u = (x^2 + y^2) e^t + kappa e^{-t} on R^3, an entire
                   solution exactly when kappa = 1/4 (its u_tt is wildly
                   non-constant, so it is not of separated type);
* ``HeForm``       u = a t^2 + t b(x) + g(x) with b harmonic and
                   2a * Lap(g) = 1 + |grad b|^2, the general shape of any
                   solution whose u_tt is a (positive) constant.

``make_he_form`` solves the Poisson constraint for g in closed form,
``is_he_form`` probes whether a candidate has constant u_tt.
"""

from __future__ import annotations

import json
from typing import Iterable

import numpy as np

from . import _ddouble as dd
from .core_ops import SymMatrix, sigma2_tilde
from .errors import ConfigError, DegreeTooHigh, UnsupportedOrder

__all__ = [
    "Poly",
    "HarmonicPoly",
    "CandidateSolution",
    "Quadratic",
    "Counterexample",
    "HeForm",
    "make_he_form",
    "is_he_form",
    "candidate_to_json",
    "candidate_from_json",
    "candidate_from_dict",
]

_MAX_ORDER = 4


# ---------------------------------------------------------------------------
# polynomials in the transverse variables
# ---------------------------------------------------------------------------


class Poly:
    """Polynomial in ``nvars`` variables as a {exponent tuple: coefficient} map."""

    __slots__ = ("nvars", "coeffs")

    def __init__(self, nvars: int, coeffs: dict[tuple[int, ...], float] | None = None):
        if nvars < 1:
            raise ConfigError("a polynomial needs at least one variable")
        self.nvars = int(nvars)
        clean: dict[tuple[int, ...], float] = {}
        for expo, c in (coeffs or {}).items():
            expo = tuple(int(e) for e in expo)
            if len(expo) != nvars or any(e < 0 for e in expo):
                raise ConfigError(f"bad exponent tuple {expo} for {nvars} variables")
            c = float(c)
            if c != 0.0:
                clean[expo] = clean.get(expo, 0.0) + c
        self.coeffs = {e: c for e, c in clean.items() if c != 0.0}

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls(nvars, {})

    @classmethod
    def constant(cls, nvars: int, c: float) -> "Poly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def monomial(cls, nvars: int, expo: tuple[int, ...], c: float = 1.0) -> "Poly":
        return cls(nvars, {tuple(expo): c})

    # -- algebra -----------------------------------------------------------
    def __add__(self, other: "Poly") -> "Poly":
        self._check_peer(other)
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0.0) + c
        return Poly(self.nvars, out)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-1.0) * other

    def __neg__(self) -> "Poly":
        return (-1.0) * self

    def __mul__(self, other):
        if isinstance(other, Poly):
            self._check_peer(other)
            out: dict[tuple[int, ...], float] = {}
            for e1, c1 in self.coeffs.items():
                for e2, c2 in other.coeffs.items():
                    e = tuple(a + b for a, b in zip(e1, e2))
                    out[e] = out.get(e, 0.0) + c1 * c2
            return Poly(self.nvars, out)
        return Poly(self.nvars, {e: c * float(other) for e, c in self.coeffs.items()})

    __rmul__ = __mul__

    def _check_peer(self, other: "Poly") -> None:
        if other.nvars != self.nvars:
            raise ConfigError("polynomials have different variable counts")

    # -- calculus ----------------------------------------------------------
    def deriv(self, var: int) -> "Poly":
        out: dict[tuple[int, ...], float] = {}
        for e, c in self.coeffs.items():
            if e[var] > 0:
                ne = list(e)
                ne[var] -= 1
                out[tuple(ne)] = out.get(tuple(ne), 0.0) + c * e[var]
        return Poly(self.nvars, out)

    def partial(self, index: Iterable[int]) -> "Poly":
        p = self
        for var, k in enumerate(index):
            for _ in range(int(k)):
                p = p.deriv(var)
        return p

    def laplacian(self) -> "Poly":
        out = Poly.zero(self.nvars)
        for var in range(self.nvars):
            out = out + self.deriv(var).deriv(var)
        return out

    def grad_sq(self) -> "Poly":
        out = Poly.zero(self.nvars)
        for var in range(self.nvars):
            d = self.deriv(var)
            out = out + d * d
        return out

    # -- queries -----------------------------------------------------------
    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.coeffs), default=0)

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def is_harmonic(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, self.max_abs_coeff())
        return self.laplacian().max_abs_coeff() <= tol * scale

    # -- evaluation --------------------------------------------------------
    def eval_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.nvars:
            raise ConfigError(f"expected points of shape (N, {self.nvars})")
        out = np.zeros(X.shape[0])
        for e, c in self.coeffs.items():
            term = np.full(X.shape[0], c)
            for var, k in enumerate(e):
                if k:
                    term = term * X[:, var] ** k
            out += term
        return out

    def eval_many_dd(self, X: np.ndarray):
        """Compensated evaluation; returns a double-double pair of arrays."""
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        acc = (np.zeros(n), np.zeros(n))
        for e, c in self.coeffs.items():
            term = (np.ones(n), np.zeros(n))
            for var, k in enumerate(e):
                if k:
                    term = dd.dd_mul(term, dd.dd_pow_int(X[:, var], k))
            acc = dd.dd_add(acc, dd.dd_mul_d(term, c))
        return acc

    def eval(self, x) -> float:
        return float(self.eval_many(np.asarray(x, dtype=float).reshape(1, -1))[0])

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict[str, float]:
        return {",".join(str(v) for v in e): c for e, c in sorted(self.coeffs.items())}

    @classmethod
    def from_dict(cls, nvars: int, data: dict[str, float]) -> "Poly":
        coeffs = {tuple(int(v) for v in key.split(",")): float(c) for key, c in data.items()}
        return cls(nvars, coeffs)

    def __repr__(self) -> str:
        return f"Poly({self.nvars}, {self.coeffs!r})"


class HarmonicPoly(Poly):
    """A :class:`Poly` whose Laplacian vanishes identically (checked)."""

    def __init__(self, nvars: int, coeffs: dict[tuple[int, ...], float] | None = None):
        super().__init__(nvars, coeffs)
        if self.degree > _MAX_ORDER:
            raise DegreeTooHigh(f"degree {self.degree} exceeds the supported bound {_MAX_ORDER}")
        if not self.is_harmonic():
            raise ConfigError("polynomial is not harmonic")


# ---------------------------------------------------------------------------
# candidate families
# ---------------------------------------------------------------------------


def _check_index(index, dim: int) -> tuple[int, ...]:
    index = tuple(int(k) for k in index)
    if len(index) != dim:
        raise ConfigError(f"derivative index {index} has wrong length for dimension {dim}")
    if any(k < 0 for k in index):
        raise ConfigError(f"derivative index {index} has negative entries")
    if sum(index) > _MAX_ORDER:
        raise UnsupportedOrder(f"total derivative order {sum(index)} exceeds {_MAX_ORDER}")
    return index


def _check_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ConfigError(f"expected points of shape (N, {dim}), got {pts.shape}")
    return pts


def _sigma2_parts_dd(utt, diag, cross):
    """sigma2_tilde from double-double Hessian parts (utt, [u_ii], [u_ti])."""
    trace = diag[0]
    for d in diag[1:]:
        trace = dd.dd_add(trace, d)
    out = dd.dd_mul(utt, trace)
    for c in cross:
        out = dd.dd_sub(out, dd.dd_sq(c))
    return out


class CandidateSolution:
    """Shared interface of the exact candidate families."""

    variant: str = "abstract"
    dim: int

    # subclasses implement _eval_many(points, index) and _residual_parts_dd(points)

    def eval(self, point, index=None) -> float:
        return float(self.eval_many(np.asarray(point, dtype=float).reshape(1, -1), index)[0])

    def eval_many(self, points, index=None) -> np.ndarray:
        if index is None:
            index = (0,) * self.dim
        index = _check_index(index, self.dim)
        pts = _check_points(points, self.dim)
        return self._eval_many(pts, index)

    def gradient(self, point) -> np.ndarray:
        pts = _check_points(point, self.dim)
        out = np.empty(self.dim)
        for i in range(self.dim):
            e = [0] * self.dim
            e[i] = 1
            out[i] = self._eval_many(pts, tuple(e))[0]
        return out

    def hessian(self, point) -> SymMatrix:
        return SymMatrix.from_full(self.hessian_many(point)[0])

    def hessian_many(self, points) -> np.ndarray:
        pts = _check_points(points, self.dim)
        n = self.dim
        out = np.empty((pts.shape[0], n, n))
        for i in range(n):
            for j in range(i, n):
                e = [0] * n
                e[i] += 1
                e[j] += 1
                vals = self._eval_many(pts, tuple(e))
                out[:, i, j] = vals
                out[:, j, i] = vals
        return out

    def residual(self, point) -> float:
        return float(self.residual_many(point)[0])

    def residual_many(self, points) -> np.ndarray:
        """sigma2_tilde(D^2 u) - 1, evaluated in compensated arithmetic."""
        pts = _check_points(points, self.dim)
        sigma = _sigma2_parts_dd(*self._residual_parts_dd(pts))
        return dd.dd_to_float(dd.dd_add_d(sigma, -1.0))

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_dict()!r})"


class Quadratic(CandidateSolution):
    """u = x^T A x / 2 + b.x + c with sigma2_tilde(A) = 1 (A is the Hessian)."""

    variant = "quadratic"

    def __init__(self, A, b=None, c: float = 0.0):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] not in (2, 3):
            raise ConfigError(f"Hessian must be 2x2 or 3x3, got shape {A.shape}")
        if not np.allclose(A, A.T, atol=1e-12, rtol=0.0):
            raise ConfigError("Hessian must be symmetric")
        self.dim = A.shape[0]
        self.A = 0.5 * (A + A.T)
        self.b = np.zeros(self.dim) if b is None else np.asarray(b, dtype=float)
        if self.b.shape != (self.dim,):
            raise ConfigError(f"linear part must have shape ({self.dim},)")
        self.c = float(c)
        s = sigma2_tilde(self.A)
        if abs(s - 1.0) > 1e-10:
            raise ConfigError(
                f"sigma2_tilde(A) = {s!r} but a quadratic solution requires the value 1"
            )

    @classmethod
    def standard(cls, dim: int = 3) -> "Quadratic":
        """The rotationally symmetric solution t^2/2 + |x|^2/(2(n-1))."""
        if dim not in (2, 3):
            raise ConfigError("dimension must be 2 or 3")
        diag = [1.0] + [1.0 / (dim - 1)] * (dim - 1)
        return cls(np.diag(diag))

    def _eval_many(self, pts: np.ndarray, index: tuple[int, ...]) -> np.ndarray:
        order = sum(index)
        if order == 0:
            return 0.5 * np.einsum("ni,ij,nj->n", pts, self.A, pts) + pts @ self.b + self.c
        if order == 1:
            i = index.index(1)
            return pts @ self.A[i] + self.b[i]
        if order == 2:
            pair = [v for v, k in enumerate(index) for _ in range(k)]
            return np.full(pts.shape[0], self.A[pair[0], pair[1]])
        return np.zeros(pts.shape[0])

    def _residual_parts_dd(self, pts: np.ndarray):
        n_pts = pts.shape[0]

        def const(v):
            return (np.full(n_pts, v), np.zeros(n_pts))

        utt = const(self.A[0, 0])
        diag = [const(self.A[i, i]) for i in range(1, self.dim)]
        cross = [const(self.A[0, i]) for i in range(1, self.dim)]
        return utt, diag, cross

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "c": self.c,
        }


class Counterexample(CandidateSolution):
    """u = (x^2 + y^2) e^t + kappa e^{-t} on R^3.

    sigma2_tilde(D^2 u) = 4 kappa e^t e^{-t} identically, so this is an
    entire solution exactly when kappa = 1/4 -- convex nowhere near that,
    with u_tt unbounded in every direction of the (t, x, y) slab.
    """

    variant = "counterexample"
    dim = 3

    def __init__(self, kappa: float = 0.25):
        kappa = float(kappa)
        if not (kappa > 0.0 and np.isfinite(kappa)):
            raise ConfigError(f"kappa must be positive and finite, got {kappa}")
        self.kappa = kappa

    def is_solution(self) -> bool:
        return self.kappa == 0.25

    @staticmethod
    def _transverse_factor(p: int, q: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        # d^p/dx^p d^q/dy^q of (x^2 + y^2)
        if (p, q) == (0, 0):
            return x**2 + y**2
        if (p, q) == (1, 0):
            return 2.0 * x
        if (p, q) == (0, 1):
            return 2.0 * y
        if (p, q) in ((2, 0), (0, 2)):
            return np.full_like(x, 2.0)
        return np.zeros_like(x)

    def _eval_many(self, pts: np.ndarray, index: tuple[int, ...]) -> np.ndarray:
        k, p, q = index
        t, x, y = pts[:, 0], pts[:, 1], pts[:, 2]
        out = self._transverse_factor(p, q, x, y) * np.exp(t)
        if p == 0 and q == 0:
            out = out + ((-1.0) ** k) * self.kappa * np.exp(-t)
        return out

    def _residual_parts_dd(self, pts: np.ndarray):
        t, x, y = pts[:, 0], pts[:, 1], pts[:, 2]
        ep = np.exp(t)
        em = np.exp(-t)
        r2 = dd.dd_add(dd.two_prod(x, x), dd.two_prod(y, y))
        utt = dd.dd_add(dd.dd_mul_d(r2, ep), dd.two_prod(np.full_like(t, self.kappa), em))
        two_ep = (2.0 * ep, np.zeros_like(ep))
        diag = [two_ep, two_ep]
        cross = [dd.two_prod(2.0 * x, ep), dd.two_prod(2.0 * y, ep)]
        return utt, diag, cross

    def to_dict(self) -> dict:
        return {"variant": self.variant, "kappa": self.kappa}


class HeForm(CandidateSolution):
    """u = a t^2 + t b(x) + g(x) with b harmonic and 2a Lap(g) = 1 + |grad b|^2.

    This is exactly the family of solutions with constant u_tt (= 2a > 0).
    The Poisson constraint on g is verified coefficient-wise at construction.
    """

    variant = "he_form"

    def __init__(self, a: float, b: Poly, g: Poly):
        a = float(a)
        if not (a > 0.0 and np.isfinite(a)):
            raise ConfigError(f"the t^2 coefficient a must be positive, got {a}")
        if b.nvars != g.nvars or b.nvars not in (1, 2):
            raise ConfigError("b and g must share 1 or 2 transverse variables")
        if not b.is_harmonic():
            raise ConfigError("b must be harmonic")
        if b.degree > _MAX_ORDER or g.degree > _MAX_ORDER:
            raise DegreeTooHigh(f"polynomial degree exceeds the supported bound {_MAX_ORDER}")
        rhs = (1.0 / (2.0 * a)) * (Poly.constant(b.nvars, 1.0) + b.grad_sq())
        defect = g.laplacian() - rhs
        scale = max(1.0, rhs.max_abs_coeff(), g.max_abs_coeff())
        if defect.max_abs_coeff() > 1e-10 * scale:
            raise ConfigError(
                "g does not satisfy 2a Lap(g) = 1 + |grad b|^2 "
                f"(coefficient defect {defect.max_abs_coeff():.3e})"
            )
        self.a = a
        self.b = b
        self.g = g
        self.dim = 1 + b.nvars
        nv = b.nvars
        self._b_d1 = [b.deriv(i) for i in range(nv)]
        self._b_d2 = [b.deriv(i).deriv(i) for i in range(nv)]
        self._g_d2 = [g.deriv(i).deriv(i) for i in range(nv)]

    def _eval_many(self, pts: np.ndarray, index: tuple[int, ...]) -> np.ndarray:
        k, alpha = index[0], index[1:]
        t, X = pts[:, 0], pts[:, 1:]
        pure = all(v == 0 for v in alpha)
        if k == 0:
            out = t * self.b.partial(alpha).eval_many(X) + self.g.partial(alpha).eval_many(X)
            if pure:
                out = out + self.a * t**2
            return out
        if k == 1:
            out = self.b.partial(alpha).eval_many(X)
            if pure:
                out = out + 2.0 * self.a * t
            return out
        if k == 2 and pure:
            return np.full(pts.shape[0], 2.0 * self.a)
        return np.zeros(pts.shape[0])

    def _residual_parts_dd(self, pts: np.ndarray):
        t, X = pts[:, 0], pts[:, 1:]
        n_pts = pts.shape[0]
        utt = (np.full(n_pts, 2.0 * self.a), np.zeros(n_pts))
        t_dd = (t, np.zeros_like(t))
        diag = [
            dd.dd_add(dd.dd_mul(self._b_d2[i].eval_many_dd(X), t_dd), self._g_d2[i].eval_many_dd(X))
            for i in range(self.b.nvars)
        ]
        cross = [self._b_d1[i].eval_many_dd(X) for i in range(self.b.nvars)]
        return utt, diag, cross

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "a": self.a,
            "nvars": self.b.nvars,
            "b": self.b.to_dict(),
            "g": self.g.to_dict(),
        }


# ---------------------------------------------------------------------------
# constructors / classifiers
# ---------------------------------------------------------------------------


def make_he_form(a: float, b: Poly) -> HeForm:
    """Build the separated solution with harmonic b: solves 2a Lap(g) = 1 + |grad b|^2.

    The right-hand side must be a polynomial of degree at most 2 (so b of
    degree at most 2); a particular radial-flavoured g is returned:

        constant  c        ->  c rho^2 / (2 nu)
        linear    x_i      ->  x_i rho^2 / (2 nu + 4)
        harmonic quadratic ->  P2 rho^2 / (2 nu + 8)
        rho^2              ->  rho^4 / (4 nu + 8)

    with rho^2 = |x|^2 and nu the number of transverse variables.
    """
    a = float(a)
    if not (a > 0.0 and np.isfinite(a)):
        raise ConfigError(f"the t^2 coefficient a must be positive, got {a}")
    if not b.is_harmonic():
        raise ConfigError("b must be harmonic")
    rhs = (1.0 / (2.0 * a)) * (Poly.constant(b.nvars, 1.0) + b.grad_sq())
    if rhs.degree > 2:
        raise DegreeTooHigh(
            f"1 + |grad b|^2 has degree {rhs.degree}; the closed-form solve needs degree <= 2"
        )
    nu = b.nvars
    rho2 = Poly.zero(nu)
    for i in range(nu):
        e = [0] * nu
        e[i] = 2
        rho2 = rho2 + Poly.monomial(nu, tuple(e))

    c0 = rhs.coeffs.get((0,) * nu, 0.0)
    g = (c0 / (2.0 * nu)) * rho2
    quad = Poly.zero(nu)
    trace = 0.0
    for expo, coeff in rhs.coeffs.items():
        deg = sum(expo)
        if deg == 0:
            continue
        if deg == 1:
            i = expo.index(1)
            g = g + (coeff / (2.0 * nu + 4.0)) * (Poly.monomial(nu, expo) * rho2)
        else:  # deg == 2
            quad = quad + Poly.monomial(nu, expo, coeff)
            if 2 in expo:
                trace += 2.0 * coeff
    if quad.coeffs:
        harm = quad - (trace / (2.0 * nu)) * rho2
        if harm.coeffs:
            g = g + (1.0 / (2.0 * nu + 8.0)) * (harm * rho2)
        if trace != 0.0:
            g = g + (trace / (2.0 * nu) / (4.0 * nu + 8.0)) * (rho2 * rho2)
    return HeForm(a, b, g)


def is_he_form(candidate: CandidateSolution, box=None, samples_per_axis: int = 33,
               tol: float = 1e-10) -> tuple[bool, dict]:
    """Probe whether u_tt is constant; returns (verdict, report).

    The report carries the u_tt oscillation (max - min) over a dense grid on
    the probe box (default [-2, 2]^n) plus the structural answer when the
    family makes it exact.
    """
    n = candidate.dim
    if box is None:
        box = [(-2.0, 2.0)] * n
    axes = [np.linspace(lo, hi, samples_per_axis) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    index = (2,) + (0,) * (n - 1)
    utt = candidate.eval_many(pts, index)
    osc = float(utt.max() - utt.min())
    structural = isinstance(candidate, (HeForm, Quadratic))
    verdict = structural or osc <= tol
    report = {
        "u_tt_oscillation": osc,
        "u_tt_min": float(utt.min()),
        "u_tt_max": float(utt.max()),
        "probe_box": [list(map(float, b)) for b in box],
        "samples": int(pts.shape[0]),
        "structurally_constant": structural,
        "is_he_form": bool(verdict),
    }
    return bool(verdict), report


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def candidate_from_dict(data: dict) -> CandidateSolution:
    try:
        variant = data["variant"]
    except (TypeError, KeyError) as exc:
        raise ConfigError("candidate description lacks a 'variant' key") from exc
    if variant == "quadratic":
        return Quadratic(np.asarray(data["A"], dtype=float),
                         np.asarray(data.get("b", [0.0] * len(data["A"])), dtype=float),
                         float(data.get("c", 0.0)))
    if variant == "counterexample":
        return Counterexample(float(data.get("kappa", 0.25)))
    if variant == "he_form":
        nvars = int(data["nvars"])
        b = Poly.from_dict(nvars, data["b"])
        g = Poly.from_dict(nvars, data["g"])
        return HeForm(float(data["a"]), b, g)
    raise ConfigError(f"unknown candidate variant {variant!r}")


def candidate_to_json(candidate: CandidateSolution) -> str:
    return json.dumps(candidate.to_dict(), indent=2, sort_keys=True)


def candidate_from_json(text: str) -> CandidateSolution:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid candidate JSON: {exc}") from exc
    return candidate_from_dict(data)
