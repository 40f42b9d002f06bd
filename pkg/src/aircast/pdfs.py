"""Exact algebra on one-dimensional densities stored as piecewise polynomials.

Every random travel/overflight time in the model is a ``PiecewisePdf``:
strictly increasing breakpoints and, per interval, polynomial coefficients
in a local basis ``u = t - left_breakpoint`` (ascending powers).  Dirac
masses are first-class via the ``point`` field.  All values are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Global numeric tolerance for normalization / moment identities.
TOL = 1e-9
# Negative density below this magnitude is round-off and clamped to zero.
NEG_CLAMP = 1e-12
# Breakpoints closer than this are merged when building convolution grids.
BREAK_MERGE = 1e-9
# Default cap on pieces per PDF before exact convolution refuses to grow.
DEFAULT_PIECE_CAP = 512


class DensityError(ValueError):
    """The data does not describe a valid probability density."""


class PieceCountError(RuntimeError):
    """Exact result would exceed the piece cap; discretization required."""


@dataclass(frozen=True)
class UniformSpec:
    """Bounds of a uniform density, in minutes."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise DensityError("uniform bounds must be finite")
        if not self.upper > self.lower:
            raise DensityError(
                f"degenerate uniform interval [{self.lower}, {self.upper}]"
            )


def _poly_shift(coeffs: np.ndarray, d: float) -> np.ndarray:
    """Coefficients of p(u + d) given coefficients of p(u) (ascending)."""
    c = np.asarray(coeffs, dtype=float)
    n = len(c)
    if n == 0 or d == 0.0:
        return c.copy()
    out = np.zeros(n)
    for i in range(n):
        ci = c[i]
        if ci == 0.0:
            continue
        for j in range(i + 1):
            out[j] += ci * math.comb(i, j) * d ** (i - j)
    return out


def _poly_int(coeffs: np.ndarray) -> np.ndarray:
    """Antiderivative coefficients with zero constant term."""
    c = np.asarray(coeffs, dtype=float)
    out = np.zeros(len(c) + 1)
    out[1:] = c / np.arange(1, len(c) + 1)
    return out


def _poly_val(coeffs: np.ndarray, x) -> np.ndarray:
    return np.polynomial.polynomial.polyval(x, coeffs)


def _trim(coeffs: np.ndarray) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    nz = np.nonzero(np.abs(c) > 0.0)[0]
    if len(nz) == 0:
        return np.zeros(1)
    return c[: nz[-1] + 1]


class PiecewisePdf:
    """A normalized density over a bounded support, or a point mass.

    ``breakpoints`` has length ``n+1`` for ``n`` pieces; ``pieces[k]`` are the
    ascending coefficients of the density on
    ``[breakpoints[k], breakpoints[k+1]]`` in the local variable
    ``u = t - breakpoints[k]``.
    """

    __slots__ = (
        "breakpoints",
        "pieces",
        "point",
        "_int_polys",
        "_cum",
        "_mean",
        "_second",
    )

    def __init__(self, breakpoints, pieces, point=None, _validate=True):
        if point is not None:
            if not math.isfinite(point):
                raise DensityError("point mass location must be finite")
            if len(pieces) != 0:
                raise DensityError("point mass must have no pieces")
            self.point = float(point)
            self.breakpoints = np.empty(0)
            self.pieces = ()
            self._int_polys = ()
            self._cum = np.empty(0)
            self._mean = self.point
            self._second = self.point * self.point
            return

        bp = np.asarray(breakpoints, dtype=float)
        if len(bp) < 2 or len(pieces) != len(bp) - 1:
            raise DensityError("need n+1 breakpoints for n >= 1 pieces")
        if not np.all(np.diff(bp) > 0):
            raise DensityError("breakpoints must be strictly increasing")
        pc = tuple(_trim(p) for p in pieces)
        bp.setflags(write=False)
        self.point = None
        self.breakpoints = bp
        self.pieces = pc

        widths = np.diff(bp)
        int_polys = tuple(_poly_int(p) for p in pc)
        masses = np.array(
            [_poly_val(ip, w) for ip, w in zip(int_polys, widths)]
        )
        total = masses.sum()
        if _validate:
            if abs(total - 1.0) > 1e-6:
                raise DensityError(f"total mass {total} is not 1")
            self._check_nonnegative(widths)
        cum = np.zeros(len(bp))
        np.cumsum(masses, out=cum[1:])
        cum.setflags(write=False)
        self._int_polys = int_polys
        self._cum = cum
        self._mean = None
        self._second = None

    # ---------- basic queries ----------

    @property
    def lo(self) -> float:
        return self.point if self.point is not None else self.breakpoints[0]

    @property
    def hi(self) -> float:
        return self.point if self.point is not None else self.breakpoints[-1]

    @property
    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def piece_count(self) -> int:
        return len(self.pieces)

    @property
    def is_point_mass(self) -> bool:
        return self.point is not None

    def _check_nonnegative(self, widths):
        for p, w in zip(self.pieces, widths):
            u = np.linspace(0.0, w, 9)
            v = _poly_val(p, u)
            worst = v.min()
            if worst < -TOL:
                raise DensityError(f"negative density {worst} on a piece")

    def validate_extrema(self):
        """Exact nonnegativity check: endpoints plus interior extrema."""
        for k, p in enumerate(self.pieces):
            w = self.breakpoints[k + 1] - self.breakpoints[k]
            pts = [0.0, w]
            if len(p) > 2:
                dcoef = p[1:] * np.arange(1, len(p))
                roots = np.roots(dcoef[::-1])
                for r in roots:
                    if abs(r.imag) < 1e-9 and 0.0 < r.real < w:
                        pts.append(r.real)
            v = _poly_val(p, np.asarray(pts))
            if v.min() < -TOL:
                raise DensityError(f"negative density at extremum of piece {k}")

    def pdf(self, t) -> np.ndarray:
        """Density at t (vectorized); small negative round-off clamped."""
        t = np.asarray(t, dtype=float)
        if self.is_point_mass:
            return np.where(t == self.point, np.inf, 0.0)
        out = np.zeros(t.shape if t.shape else (1,))
        tt = np.atleast_1d(t)
        idx = np.searchsorted(self.breakpoints, tt, side="right") - 1
        inside = (tt >= self.lo) & (tt <= self.hi)
        idx = np.clip(idx, 0, self.piece_count - 1)
        for k in np.unique(idx[inside]):
            m = inside & (idx == k)
            out[m] = _poly_val(self.pieces[k], tt[m] - self.breakpoints[k])
        out[(out < 0) & (out > -NEG_CLAMP)] = 0.0
        return out if t.shape else out[0]

    def cdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.is_point_mass:
            res = (t >= self.point).astype(float)
            return res if t.shape else float(res)
        tt = np.atleast_1d(t)
        out = np.zeros(tt.shape)
        out[tt >= self.hi] = 1.0
        mid = (tt > self.lo) & (tt < self.hi)
        if mid.any():
            idx = np.searchsorted(self.breakpoints, tt[mid], side="right") - 1
            idx = np.clip(idx, 0, self.piece_count - 1)
            vals = np.empty(idx.shape)
            for k in np.unique(idx):
                m = idx == k
                u = tt[mid][m] - self.breakpoints[k]
                vals[m] = self._cum[k] + _poly_val(self._int_polys[k], u)
            out[mid] = np.clip(vals, 0.0, 1.0)
        return out if t.shape else float(out[0])

    def mean(self) -> float:
        if self._mean is None:
            m = 0.0
            s = 0.0
            for k, p in enumerate(self.pieces):
                b = self.breakpoints[k]
                w = self.breakpoints[k + 1] - b
                # moments of the local polynomial about u = 0
                i0 = _poly_val(_poly_int(p), w)
                i1 = _poly_val(_poly_int(np.concatenate(([0.0], p))), w)
                i2 = _poly_val(
                    _poly_int(np.concatenate(([0.0, 0.0], p))), w
                )
                m += i1 + b * i0
                s += i2 + 2.0 * b * i1 + b * b * i0
            self._mean = m
            self._second = s
        return self._mean

    def variance(self) -> float:
        m = self.mean()
        return max(self._second - m * m, 0.0)

    def ppf(self, q) -> np.ndarray:
        """Inverse CDF, vectorized; bisection within the located piece."""
        q = np.asarray(q, dtype=float)
        if self.is_point_mass:
            return np.full(q.shape, self.point) if q.shape else self.point
        qq = np.atleast_1d(np.clip(q, 0.0, 1.0))
        out = np.empty(qq.shape)
        total = self._cum[-1]
        idx = np.searchsorted(self._cum[1:], qq * total, side="left")
        idx = np.clip(idx, 0, self.piece_count - 1)
        for k in np.unique(idx):
            m = idx == k
            target = qq[m] * total - self._cum[k]
            w = self.breakpoints[k + 1] - self.breakpoints[k]
            p = self.pieces[k]
            if len(p) == 1:
                u = np.clip(target / p[0], 0.0, w) if p[0] > 0 else np.zeros(
                    target.shape
                )
            else:
                ip = self._int_polys[k]
                lo = np.zeros(target.shape)
                hi = np.full(target.shape, w)
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    below = _poly_val(ip, mid) < target
                    lo = np.where(below, mid, lo)
                    hi = np.where(below, hi, mid)
                u = 0.5 * (lo + hi)
            out[m] = self.breakpoints[k] + u
        return out if q.shape else float(out[0])

    def __repr__(self):
        if self.is_point_mass:
            return f"PiecewisePdf(point={self.point})"
        return (
            f"PiecewisePdf(support=[{self.lo:g}, {self.hi:g}], "
            f"pieces={self.piece_count})"
        )


# ---------- constructors ----------


def uniform_pdf(spec: UniformSpec) -> PiecewisePdf:
    """Constant density 1/(upper-lower) on [lower, upper]."""
    h = 1.0 / (spec.upper - spec.lower)
    return PiecewisePdf([spec.lower, spec.upper], [np.array([h])])


def uniform(lower: float, upper: float) -> PiecewisePdf:
    return uniform_pdf(UniformSpec(lower, upper))


def point_mass(t: float) -> PiecewisePdf:
    """Dirac mass at t: expectation t, variance 0."""
    return PiecewisePdf([], [], point=t)


# ---------- operations ----------


def shift(f: PiecewisePdf, delta: float) -> PiecewisePdf:
    """Translate the density by delta minutes; shape-preserving."""
    if delta == 0.0:
        return f
    if f.is_point_mass:
        return point_mass(f.point + delta)
    # local-basis pieces are translation-invariant: reuse cached integrals
    out = object.__new__(PiecewisePdf)
    bp = f.breakpoints + delta
    bp.setflags(write=False)
    out.breakpoints = bp
    out.pieces = f.pieces
    out.point = None
    out._int_polys = f._int_polys
    out._cum = f._cum
    if f._mean is not None:
        out._mean = f._mean + delta
        out._second = f._second + 2.0 * delta * f._mean + delta * delta
    else:
        out._mean = None
        out._second = None
    return out


def _merged_sums(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sums = np.unique((a[:, None] + b[None, :]).ravel())
    keep = [sums[0]]
    for s in sums[1:]:
        if s - keep[-1] > BREAK_MERGE:
            keep.append(s)
    return np.asarray(keep)


def _convolve_with_box(a: PiecewisePdf, lo: float, hi: float, height: float,
                       piece_cap: int) -> PiecewisePdf:
    """Fast path: convolve a with a single constant piece on [lo, hi].

    h(t) = height * (F_a(t - lo) - F_a(t - hi)) with F_a the piecewise CDF.
    """
    grid = _merged_sums(a.breakpoints, np.array([lo, hi]))
    if len(grid) - 1 > piece_cap:
        raise PieceCountError(
            f"{len(grid) - 1} pieces exceed cap {piece_cap}; "
            "discretization required"
        )
    pieces = []
    for k in range(len(grid) - 1):
        m0, m1 = grid[k], grid[k + 1]
        tm = 0.5 * (m0 + m1)
        acc = np.zeros(1)
        for offset, sign in ((lo, 1.0), (hi, -1.0)):
            x_mid = tm - offset
            if x_mid <= a.lo:
                continue
            if x_mid >= a.hi:
                term = np.array([1.0])
            else:
                j = int(
                    np.searchsorted(a.breakpoints, x_mid, side="right") - 1
                )
                j = min(max(j, 0), a.piece_count - 1)
                # local CDF poly in u = t - m0 via x = u + m0 - offset
                term = _poly_shift(
                    a._int_polys[j], m0 - offset - a.breakpoints[j]
                )
                term[0] += a._cum[j]
            if len(term) > len(acc):
                acc = np.concatenate((acc, np.zeros(len(term) - len(acc))))
            acc[: len(term)] += sign * term
        pieces.append(height * acc)
    return _finalize_pieces(grid, pieces)


def _pair_antiderivative(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """H[i, j]: coefficient of t^i x^j of the x-antiderivative of f(x)g(t-x)."""
    df, dg = len(f) - 1, len(g) - 1
    G = np.zeros((dg + 1, dg + 1))
    for k in range(dg + 1):
        gk = g[k]
        if gk == 0.0:
            continue
        for j in range(k + 1):
            G[k - j, j] += gk * math.comb(k, j) * (-1.0) ** j
    P = np.zeros((dg + 1, df + dg + 1))
    for j2 in range(df + 1):
        if f[j2] != 0.0:
            P[:, j2 : j2 + dg + 1] += G * f[j2]
    H = np.zeros((dg + 1, df + dg + 2))
    H[:, 1:] = P / np.arange(1, df + dg + 2)
    return H


def _subst_const(H: np.ndarray, c: float) -> np.ndarray:
    powers = c ** np.arange(H.shape[1])
    return H @ powers


def _subst_t_minus(H: np.ndarray, c: float) -> np.ndarray:
    nt, nx = H.shape
    out = np.zeros(nt + nx - 1)
    for j in range(nx):
        col = H[:, j]
        if not np.any(col):
            continue
        for l in range(j + 1):
            w = math.comb(j, l) * (-c) ** (j - l)
            out[l : l + nt] += col * w
    return out


def convolve(a: PiecewisePdf, b: PiecewisePdf,
             piece_cap: int = DEFAULT_PIECE_CAP) -> PiecewisePdf:
    """Exact density of the sum of two independent variables.

    Support endpoints add elementwise; degree grows by deg(a)+deg(b)+1.
    Raises PieceCountError when the result would exceed ``piece_cap``.
    """
    if a.is_point_mass and b.is_point_mass:
        return point_mass(a.point + b.point)
    if a.is_point_mass:
        return shift(b, a.point)
    if b.is_point_mass:
        return shift(a, b.point)

    # work in frames starting at zero to keep coefficients well-scaled
    off = a.lo + b.lo
    a0 = shift(a, -a.lo)
    b0 = shift(b, -b.lo)

    if b0.piece_count == 1 and len(b0.pieces[0]) == 1:
        res = _convolve_with_box(
            a0, b0.breakpoints[0], b0.breakpoints[1], b0.pieces[0][0],
            piece_cap,
        )
        return shift(res, off)
    if a0.piece_count == 1 and len(a0.pieces[0]) == 1:
        res = _convolve_with_box(
            b0, a0.breakpoints[0], a0.breakpoints[1], a0.pieces[0][0],
            piece_cap,
        )
        return shift(res, off)

    grid = _merged_sums(a0.breakpoints, b0.breakpoints)
    if len(grid) - 1 > piece_cap:
        raise PieceCountError(
            f"{len(grid) - 1} pieces exceed cap {piece_cap}; "
            "discretization required"
        )

    # global-basis polynomials and pairwise antiderivatives
    fa = [
        _poly_shift(p, -a0.breakpoints[k]) for k, p in enumerate(a0.pieces)
    ]
    gb = [
        _poly_shift(p, -b0.breakpoints[k]) for k, p in enumerate(b0.pieces)
    ]
    pairs = []
    for i, f in enumerate(fa):
        p, q = a0.breakpoints[i], a0.breakpoints[i + 1]
        for j, g in enumerate(gb):
            r, s = b0.breakpoints[j], b0.breakpoints[j + 1]
            pairs.append((p, q, r, s, _pair_antiderivative(f, g)))

    pieces = []
    for k in range(len(grid) - 1):
        m0, m1 = grid[k], grid[k + 1]
        tm = 0.5 * (m0 + m1)
        acc = np.zeros(1)
        for p, q, r, s, H in pairs:
            lo_lim = max(p, tm - s)
            hi_lim = min(q, tm - r)
            if hi_lim <= lo_lim:
                continue
            upper = (
                _subst_const(H, q) if q <= tm - r else _subst_t_minus(H, r)
            )
            lower = (
                _subst_const(H, p) if p >= tm - s else _subst_t_minus(H, s)
            )
            n = max(len(upper), len(lower))
            term = np.zeros(n)
            term[: len(upper)] += upper
            term[: len(lower)] -= lower
            if len(term) > len(acc):
                acc = np.concatenate((acc, np.zeros(len(term) - len(acc))))
            acc[: len(term)] += term
        pieces.append(_poly_shift(acc, m0))
    res = _finalize_pieces(grid, pieces)
    return shift(res, off)


def _finalize_pieces(grid: np.ndarray, pieces: list) -> PiecewisePdf:
    """Renormalize accumulated convolution pieces and build the PDF."""
    widths = np.diff(grid)
    pieces = [_trim(p) for p in pieces]
    int_polys = [_poly_int(p) for p in pieces]
    masses = np.array(
        [_poly_val(ip, w) for ip, w in zip(int_polys, widths)]
    )
    total = masses.sum()
    if abs(total - 1.0) > 1e-6:
        raise DensityError(f"convolution mass {total} is not 1")
    scale = 1.0 / total
    # cheap nonnegativity screen on a 5-point grid per piece
    for p, w in zip(pieces, widths):
        v = _poly_val(p, w * np.array([0.0, 0.25, 0.5, 0.75, 1.0]))
        if v.min() < -TOL:
            raise DensityError(f"negative density {v.min()} in convolution")
    out = object.__new__(PiecewisePdf)
    bp = np.asarray(grid, dtype=float)
    bp.setflags(write=False)
    out.breakpoints = bp
    out.pieces = tuple(p * scale for p in pieces)
    out.point = None
    out._int_polys = tuple(ip * scale for ip in int_polys)
    cum = np.zeros(len(bp))
    np.cumsum(masses * scale, out=cum[1:])
    cum.setflags(write=False)
    out._cum = cum
    out._mean = None
    out._second = None
    return out


def cdf(f: PiecewisePdf, t: float):
    return f.cdf(t)


def expectation(f: PiecewisePdf) -> float:
    return f.mean()


def variance(f: PiecewisePdf) -> float:
    return f.variance()


def sample(f: PiecewisePdf, rng: np.random.Generator, size=None):
    """Inverse-CDF sampling; deterministic given the generator state."""
    if size is None:
        return float(f.ppf(rng.random()))
    return f.ppf(rng.random(size))


def discretize(f: PiecewisePdf, grid_step: float):
    """Piecewise-constant approximation on a uniform grid.

    Returns (pdf, max_cdf_deviation); the approximation is renormalized.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if f.is_point_mass:
        return f, 0.0
    n = max(1, int(math.ceil((f.hi - f.lo) / grid_step - 1e-12)))
    grid = f.lo + grid_step * np.arange(n + 1)
    grid[-1] = max(grid[-1], f.hi)
    masses = np.diff(f.cdf(grid))
    masses = np.clip(masses, 0.0, None)
    masses /= masses.sum()
    widths = np.diff(grid)
    approx = PiecewisePdf(
        grid, [np.array([m / w]) for m, w in zip(masses, widths)]
    )
    fine = np.linspace(f.lo, f.hi, 4 * n + 1)
    dev = float(np.max(np.abs(approx.cdf(fine) - f.cdf(fine))))
    return approx, dev


def max_cdf_distance(a: PiecewisePdf, b: PiecewisePdf, n: int = 2001) -> float:
    """Max |CDF_a - CDF_b| on a grid spanning both supports."""
    lo = min(a.lo, b.lo) - 1.0
    hi = max(a.hi, b.hi) + 1.0
    ts = np.linspace(lo, hi, n)
    return float(np.max(np.abs(a.cdf(ts) - b.cdf(ts))))
