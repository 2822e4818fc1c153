"""Structural probes: inscribed-ellipsoid barrier, partial Legendre transform,
and the reduction test for the form u = a*t^2 + t*b(x) + g(x).

The barrier chain mirrors the convexity argument: normalize a convex function
so its minimum is 0, take the sublevel set K_h = {u <= h}, inscribe an
ellipsoid |M(x-c)| <= 1, and check sigma2_tilde(M^2) >= 1/(4 h^2).  The
partial Legendre transform swaps t for z = u_t along each x-line; for true
solutions with u_tt > 0 the resulting theta(z, x) is harmonic, which
``harmonicity_test`` measures with a discrete Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq

from .core_ops import Grid, ScalarField, SymMatrix, second_diff, sigma2_tilde
from .errors import (
    ConfigError,
    NoInteriorPoint,
    NotConvex,
    NotMonotone,
    NotPositiveDefinite,
    ZOutOfRange,
)

__all__ = [
    "EllipsoidMap",
    "SublevelSet",
    "inscribe_ellipsoid",
    "barrier_check",
    "partial_legendre",
    "harmonicity_test",
    "he_reduction_report",
]

_CONTAIN_SAMPLES = 1000
_CONTAIN_SEED = 20230915


@dataclass(frozen=True)
class EllipsoidMap:
    """Affine map A(x) = M(x - center) with M symmetric positive definite.

    Represents the ellipsoid E = {x : |M(x - center)| <= 1}; M^2 is the shape
    matrix entering the barrier bound.
    """

    M: SymMatrix
    center: np.ndarray

    def __post_init__(self):
        full = self.M.full()
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.center.shape != (self.M.dim,):
            raise ConfigError(
                f"center has shape {self.center.shape}, expected ({self.M.dim},)"
            )
        if not np.all(np.isfinite(self.center)):
            raise ConfigError("ellipsoid center must be finite")
        eigs = np.linalg.eigvalsh(full)
        if eigs.min() <= 0.0:
            raise NotPositiveDefinite(
                f"ellipsoid matrix has eigenvalue {eigs.min():.6g} <= 0"
            )

    @property
    def dim(self) -> int:
        return self.M.dim

    def shape_matrix(self) -> SymMatrix:
        full = self.M.full()
        return SymMatrix.from_full(full @ full)

    def boundary_points(self, count: int = _CONTAIN_SAMPLES, seed: int = _CONTAIN_SEED) -> np.ndarray:
        """Deterministic sample of E's boundary: x = center + M^{-1} s, |s| = 1."""
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((count, self.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return self.center + np.linalg.solve(self.M.full(), dirs.T).T

    def scaled(self, s: float) -> "EllipsoidMap":
        return EllipsoidMap(SymMatrix.from_full(s * self.M.full()), self.center)


def _minimize_candidate(candidate, x0: np.ndarray) -> np.ndarray:
    """Damped Newton on the gradient, tolerance 1e-10 on its sup-norm."""
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(100):
        g = candidate.gradient(x)
        if np.abs(g).max() <= 1e-10:
            return x
        H = candidate.hessian(x).full()
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = -g
        alpha = 1.0
        gn = np.linalg.norm(g)
        for _ in range(40):
            trial = x + alpha * step
            if np.linalg.norm(candidate.gradient(trial)) < gn:
                x = trial
                break
            alpha *= 0.5
        else:
            raise NoInteriorPoint("minimizer search stalled; no descent step found")
    g = candidate.gradient(x)
    if np.abs(g).max() > 1e-8:
        raise NoInteriorPoint(
            f"minimizer search did not converge (|grad| = {np.abs(g).max():.3e})"
        )
    return x


def _axis_crossing(value_along, h: float, axis_label: str) -> float:
    """Smallest s > 0 with value_along(s) = h for a convex profile, via brentq."""
    s_hi = 1.0
    for _ in range(80):
        if value_along(s_hi) > h:
            break
        s_hi *= 2.0
    else:
        raise ConfigError(
            f"sublevel set appears unbounded along {axis_label}; no crossing below u = h"
        )
    # machine-level xtol: the barrier value is quartic in 1/intercept, so a
    # sloppy crossing inflates sigma2(M^2) errors past the check's 1e-12 slack
    return brentq(lambda s: value_along(s) - h, 0.0, s_hi, xtol=1e-15, rtol=8.9e-16)


@dataclass
class SublevelSet:
    """K_h = {u <= h} for a normalized convex u (min u = 0 at ``minimizer``).

    ``value`` evaluates the normalized function at (N, dim) points; axis
    intercepts are the distances from the minimizer to the boundary of K_h
    along each coordinate axis (the smaller of the two directions).
    """

    h: float
    dim: int
    minimizer: np.ndarray
    intercepts: np.ndarray
    boundary_samples: np.ndarray
    value: object  # callable (N, dim) -> (N,)

    @classmethod
    def from_candidate(cls, candidate, h: float, convexity_box: float = 2.0) -> "SublevelSet":
        if h <= 0.0:
            raise NoInteriorPoint(f"level h = {h} admits no interior point (min u = 0)")
        dim = candidate.dim
        axes = [np.linspace(-convexity_box, convexity_box, 5)] * dim
        probe = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
        eigs = np.linalg.eigvalsh(candidate.hessian_many(probe))
        if eigs.min() < -1e-8:
            raise NotConvex(
                f"Hessian eigenvalue {eigs.min():.3e} < 0 at a probe point; "
                "sublevel machinery requires a convex source"
            )
        xstar = _minimize_candidate(candidate, np.zeros(dim))
        u0 = candidate.eval(xstar)
        g0 = candidate.gradient(xstar)

        def value(pts: np.ndarray) -> np.ndarray:
            pts = np.asarray(pts, dtype=float)
            return candidate.eval_many(pts) - u0 - (pts - xstar) @ g0

        crossings = []
        samples = []
        for k in range(dim):
            per_dir = []
            for sign in (1.0, -1.0):
                e = np.zeros(dim)
                e[k] = sign

                def along(s, e=e):
                    return float(value((xstar + s * e)[None, :])[0])

                s = _axis_crossing(along, h, f"axis {k} ({'+' if sign > 0 else '-'})")
                per_dir.append(s)
                samples.append(xstar + s * e)
            crossings.append(min(per_dir))
        return cls(
            h=float(h),
            dim=dim,
            minimizer=xstar,
            intercepts=np.array(crossings),
            boundary_samples=np.array(samples),
            value=value,
        )

    @classmethod
    def from_field(cls, fld: ScalarField, h: float) -> "SublevelSet":
        if h <= 0.0:
            raise NoInteriorPoint(f"level h = {h} admits no interior point (min u = 0)")
        grid = fld.grid
        dim = grid.dim
        from .core_ops import fd_hessian

        idx_min = np.unravel_index(np.argmin(fld.values), grid.shape)
        if any(i == 0 or i == m - 1 for i, m in zip(idx_min, grid.shape)):
            raise NoInteriorPoint("discrete minimizer sits on the boundary of the grid")
        eigs = np.linalg.eigvalsh(fd_hessian(fld, idx_min).full())
        if eigs.min() < -1e-8:
            raise NotConvex(
                f"fd Hessian eigenvalue {eigs.min():.3e} < 0 at the discrete minimizer"
            )
        axes = grid.axes()
        xstar = np.array([ax[i] for ax, i in zip(axes, idx_min)])
        vals = fld.values - fld.values[idx_min]
        interp = RegularGridInterpolator(axes, vals, method="linear", bounds_error=True)

        def value(pts: np.ndarray) -> np.ndarray:
            pts = np.asarray(pts, dtype=float)
            out = np.full(pts.shape[0], np.inf)
            inside = np.all(
                (pts >= [b[0] for b in grid.bounds]) & (pts <= [b[1] for b in grid.bounds]),
                axis=1,
            )
            if inside.any():
                out[inside] = interp(pts[inside])
            return out

        crossings = []
        samples = []
        for k in range(dim):
            per_dir = []
            for sign in (1.0, -1.0):
                e = np.zeros(dim)
                e[k] = sign

                def along(s, e=e):
                    return float(value((xstar + s * e)[None, :])[0])

                s = _axis_crossing(along, h, f"axis {k} ({'+' if sign > 0 else '-'})")
                per_dir.append(s)
                samples.append(xstar + s * e)
            crossings.append(min(per_dir))
        return cls(
            h=float(h),
            dim=dim,
            minimizer=xstar,
            intercepts=np.array(crossings),
            boundary_samples=np.array(samples),
            value=value,
        )


def inscribe_ellipsoid(K: SublevelSet, samples: int = _CONTAIN_SAMPLES) -> EllipsoidMap:
    """Ellipsoid inside K_h: diagonal seed from the axis intercepts, then the
    smallest uniform shrink factor s >= 1 certified on sampled boundary points."""
    if np.any(K.intercepts <= 0.0) or not np.all(np.isfinite(K.intercepts)):
        raise NoInteriorPoint("degenerate axis intercepts; K_h has empty interior")
    m0 = SymMatrix.from_full(np.diag(1.0 / K.intercepts))
    seed = EllipsoidMap(m0, K.minimizer)
    tol = 1e-12 * max(1.0, abs(K.h))

    def contained(s: float) -> bool:
        pts = seed.scaled(s).boundary_points(samples)
        return bool(np.all(K.value(pts) <= K.h + tol))

    if contained(1.0):
        return seed
    s_hi = 2.0
    for _ in range(60):
        if contained(s_hi):
            break
        s_hi *= 2.0
    else:
        raise ConfigError("inscribed-ellipsoid shrink did not certify containment")
    s_lo = s_hi / 2.0
    while s_hi - s_lo > 1e-6:
        mid = 0.5 * (s_lo + s_hi)
        if contained(mid):
            s_hi = mid
        else:
            s_lo = mid
    return seed.scaled(s_hi)


def barrier_check(E: EllipsoidMap, h: float) -> dict:
    """value = sigma2_tilde(M^2) against bound = 1/(4 h^2)."""
    value = float(sigma2_tilde(E.shape_matrix()))
    bound = 1.0 / (4.0 * h * h)
    return {
        "value": value,
        "bound": bound,
        "margin": value - bound,
        "pass": bool(value >= bound - 1e-12),
    }


def _legendre_from_field(fld: ScalarField, z_span, z_count):
    grid = fld.grid
    h0 = grid.spacing[0]
    u1 = (fld.values[2:] - fld.values[:-2]) / (2.0 * h0)
    if np.any(np.diff(u1, axis=0) <= 0.0):
        raise NotMonotone("discrete u_t is not strictly increasing along every t-line")
    flat = u1.reshape(u1.shape[0], -1)
    attained_lo = float(flat[0].max())
    attained_hi = float(flat[-1].min())
    if attained_hi <= attained_lo:
        raise ZOutOfRange(
            "the x-lines share no common attained range of u_t; "
            "narrow the transverse box"
        )
    if z_span is None:
        width = attained_hi - attained_lo
        z_span = (attained_lo + 0.05 * width, attained_hi - 0.05 * width)
    else:
        if z_span[0] < attained_lo or z_span[1] > attained_hi:
            raise ZOutOfRange(
                f"requested z-range {z_span} exceeds the attained range "
                f"({attained_lo:.6g}, {attained_hi:.6g})"
            )
    if z_count is None:
        z_count = u1.shape[0]
    z = np.linspace(z_span[0], z_span[1], z_count)
    t_int = grid.axes()[0][1:-1]
    theta = np.empty((z_count, flat.shape[1]))
    for j in range(flat.shape[1]):
        theta[:, j] = np.interp(z, flat[:, j], t_int)
    out_grid = Grid((tuple(z_span), *grid.bounds[1:]), (z_count, *grid.shape[1:]))
    return ScalarField(out_grid, theta.reshape(out_grid.shape))


def _legendre_from_candidate(cand, t_span, x_spans, shape, z_span, z_count):
    dim = cand.dim
    if x_spans is None:
        x_spans = ((-1.0, 1.0),) * (dim - 1)
    if shape is None:
        shape = (17,) * (dim - 1)
    x_axes = [np.linspace(lo, hi, m) for (lo, hi), m in zip(x_spans, shape)]
    x_mesh = np.meshgrid(*x_axes, indexing="ij")
    x_pts = np.stack([g.ravel() for g in x_mesh], axis=-1)
    n_lines = x_pts.shape[0]
    d1 = (1,) + (0,) * (dim - 1)
    d2 = (2,) + (0,) * (dim - 1)

    t_probe = np.linspace(t_span[0], t_span[1], 33)
    probe = np.concatenate(
        [np.column_stack([np.full(n_lines, t), x_pts]) for t in t_probe]
    )
    u11 = cand.eval_many(probe, d2)
    if u11.min() <= 0.0:
        raise NotMonotone(
            f"u_tt reaches {u11.min():.3e} <= 0 on the probe box; u_t is not invertible in t"
        )
    lo_pts = np.column_stack([np.full(n_lines, t_span[0]), x_pts])
    hi_pts = np.column_stack([np.full(n_lines, t_span[1]), x_pts])
    attained_lo = float(cand.eval_many(lo_pts, d1).max())
    attained_hi = float(cand.eval_many(hi_pts, d1).min())
    if attained_hi <= attained_lo:
        raise ZOutOfRange(
            "the x-lines share no common attained range of u_t; "
            "narrow the transverse box"
        )
    if z_span is None:
        width = attained_hi - attained_lo
        z_span = (attained_lo + 0.05 * width, attained_hi - 0.05 * width)
    else:
        if z_span[0] < attained_lo or z_span[1] > attained_hi:
            raise ZOutOfRange(
                f"requested z-range {z_span} exceeds the attained range "
                f"({attained_lo:.6g}, {attained_hi:.6g})"
            )
    if z_count is None:
        z_count = 33

    z = np.linspace(z_span[0], z_span[1], z_count)
    zz = np.repeat(z, n_lines)
    xx = np.tile(x_pts, (z_count, 1))
    lo = np.full(zz.size, float(t_span[0]))
    hi = np.full(zz.size, float(t_span[1]))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fmid = cand.eval_many(np.column_stack([mid, xx]), d1) - zz
        above = fmid > 0.0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    t = 0.5 * (lo + hi)
    pts = np.column_stack([t, xx])
    t = t - (cand.eval_many(pts, d1) - zz) / cand.eval_many(pts, d2)
    out_grid = Grid((tuple(z_span), *tuple(tuple(s) for s in x_spans)), (z_count, *shape))
    return ScalarField(out_grid, t.reshape(out_grid.shape))


def partial_legendre(
    source,
    t_span=(-1.0, 1.0),
    x_spans=None,
    shape=None,
    z_span=None,
    z_count=None,
) -> ScalarField:
    """theta(z, x) = the t with u_t(t, x) = z, on a uniform (z, x) grid.

    ScalarField sources use their own grid (t_span/x_spans/shape are ignored)
    and per-line monotone interpolation of the central-difference u_t;
    candidate sources use vectorized bisection on [t_span] plus one Newton
    polish.  The default z-range is the intersection of the attained ranges
    over all x-lines, shrunk 5% per side.
    """
    if isinstance(source, ScalarField):
        return _legendre_from_field(source, z_span, z_count)
    return _legendre_from_candidate(source, t_span, x_spans, shape, z_span, z_count)


def harmonicity_test(theta: ScalarField) -> float:
    """Max absolute discrete Laplacian (over all variables) at interior nodes."""
    lap = second_diff(theta.values, 0, theta.grid.spacing[0])
    for a in range(1, theta.grid.dim):
        lap = lap + second_diff(theta.values, a, theta.grid.spacing[a])
    return float(np.abs(lap).max())


def _he_extract_candidate(cand, box, samples_per_axis):
    dim = cand.dim
    nt = dim - 1
    x_axes = [np.linspace(lo, hi, samples_per_axis) for lo, hi in box[1:]]
    x_mesh = np.meshgrid(*x_axes, indexing="ij")
    x_pts = np.stack([g.ravel() for g in x_mesh], axis=-1)
    zero_t = np.column_stack([np.zeros(x_pts.shape[0]), x_pts])

    def dcount(t_order, x_orders):
        return (t_order, *x_orders)

    a = float(cand.eval(np.zeros(dim), dcount(2, (0,) * nt))) / 2.0
    b_vals = cand.eval_many(zero_t, dcount(1, (0,) * nt))
    g_vals = cand.eval_many(zero_t, dcount(0, (0,) * nt))
    lap_b = np.zeros(x_pts.shape[0])
    lap_g = np.zeros(x_pts.shape[0])
    grad_b_sq = np.zeros(x_pts.shape[0])
    for k in range(nt):
        two = [0] * nt
        two[k] = 2
        one = [0] * nt
        one[k] = 1
        lap_b += cand.eval_many(zero_t, dcount(1, tuple(two)))
        lap_g += cand.eval_many(zero_t, dcount(0, tuple(two)))
        grad_b_sq += cand.eval_many(zero_t, dcount(1, tuple(one))) ** 2
    poisson = lap_g - (1.0 + grad_b_sq) / (2.0 * a)
    t_samples = np.linspace(box[0][0], box[0][1], 9)
    round_trip = 0.0
    for t in t_samples:
        pts = np.column_stack([np.full(x_pts.shape[0], t), x_pts])
        model = a * t * t + t * b_vals + g_vals
        round_trip = max(round_trip, float(np.abs(cand.eval_many(pts) - model).max()))
    return {
        "a": a,
        "x_axes": [ax.tolist() for ax in x_axes],
        "b_values": b_vals.reshape([samples_per_axis] * nt),
        "g_values": g_vals.reshape([samples_per_axis] * nt),
        "lap_b_max": float(np.abs(lap_b).max()),
        "poisson_residual_max": float(np.abs(poisson).max()),
        "round_trip_max_error": round_trip,
    }


def _he_extract_field(fld: ScalarField):
    grid = fld.grid
    axes = grid.axes()
    t_idx = int(np.argmin(np.abs(axes[0])))
    if t_idx == 0 or t_idx == grid.shape[0] - 1:
        raise ConfigError(
            "field t-range must contain 0 strictly inside; the reduction is anchored at t = 0"
        )
    h0 = grid.spacing[0]
    utt = second_diff(fld.values, 0, h0)
    a = float(utt.mean()) / 2.0
    b_vals = (fld.values[t_idx + 1] - fld.values[t_idx - 1]) / (2.0 * h0)
    g_vals = fld.values[t_idx].copy()
    inner = tuple(slice(1, -1) for _ in range(grid.dim - 1))
    lap_b = np.zeros_like(b_vals[inner])
    lap_g = np.zeros_like(g_vals[inner])
    grad_b_sq = np.zeros_like(b_vals[inner])
    for k in range(grid.dim - 1):
        h = grid.spacing[k + 1]
        lap_b += second_diff(b_vals, k, h)
        lap_g += second_diff(g_vals, k, h)
        up = [slice(1, -1)] * (grid.dim - 1)
        dn = [slice(1, -1)] * (grid.dim - 1)
        up[k] = slice(2, None)
        dn[k] = slice(None, -2)
        grad_b_sq += ((b_vals[tuple(up)] - b_vals[tuple(dn)]) / (2.0 * h)) ** 2
    poisson = lap_g - (1.0 + grad_b_sq) / (2.0 * a)
    tt = axes[0].reshape((-1,) + (1,) * (grid.dim - 1)) - axes[0][t_idx]
    model = a * tt * tt + tt * b_vals[None] + g_vals[None]
    round_trip = float(np.abs(fld.values - model).max())
    return {
        "a": a,
        "x_axes": [ax.tolist() for ax in axes[1:]],
        "b_values": b_vals,
        "g_values": g_vals,
        "lap_b_max": float(np.abs(lap_b).max()),
        "poisson_residual_max": float(np.abs(poisson).max()),
        "round_trip_max_error": round_trip,
    }


def he_reduction_report(source, box=None, samples_per_axis=17, tol=1e-8, theta=True) -> dict:
    """Oscillation of u_tt, verdict, extracted (a, b, g) with identity residuals,
    and the harmonicity level of the transformed theta."""
    from .candidates import is_he_form

    if isinstance(source, ScalarField):
        grid = source.grid
        box = [tuple(b) for b in grid.bounds]
        utt = second_diff(source.values, 0, grid.spacing[0])
        osc = float(utt.max() - utt.min())
        report = {
            "source": "field",
            "probe_box": [list(b) for b in box],
            "u11_min": float(utt.min()),
            "u11_max": float(utt.max()),
            "osc_u11": osc,
            "tolerance": tol,
            "is_he_form": bool(osc <= tol),
        }
    else:
        if box is None:
            box = [(-2.0, 2.0)] * source.dim
        flag, probe = is_he_form(source, box=box, tol=tol)
        report = {
            "source": "candidate",
            "probe_box": [list(b) for b in box],
            "u11_min": probe["u_tt_min"],
            "u11_max": probe["u_tt_max"],
            "osc_u11": probe["u_tt_oscillation"],
            "tolerance": tol,
            "is_he_form": flag,
        }
    if report["is_he_form"]:
        if isinstance(source, ScalarField):
            report.update(_he_extract_field(source))
        else:
            report.update(_he_extract_candidate(source, box, samples_per_axis))
    else:
        report.update(
            a=None,
            lap_b_max=None,
            poisson_residual_max=None,
            round_trip_max_error=None,
        )
    if theta:
        try:
            if isinstance(source, ScalarField):
                th = partial_legendre(source)
            else:
                th = partial_legendre(source, t_span=box[0], x_spans=tuple(box[1:]))
            report["theta_harmonicity"] = harmonicity_test(th)
            report["theta_note"] = None
        except (NotMonotone, ZOutOfRange) as exc:
            report["theta_harmonicity"] = None
            report["theta_note"] = f"{type(exc).__name__}: {exc}"
    else:
        report["theta_harmonicity"] = None
        report["theta_note"] = "skipped"
    return report
